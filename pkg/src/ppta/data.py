"""Dataset container, run configuration records and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MIN_PER_ARM = 2


class DataError(ValueError):
    """Raised when input data violate the dataset contract."""


class ConfigError(ValueError):
    """Raised with the aggregated list of configuration violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatment and outcome for ``n`` units.

    Arrays are copied and made read-only on construction.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.array(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(self.treatment), 0)
        a_raw = np.asarray(self.treatment)
        y = np.array(self.outcome, dtype=float)
        if a_raw.ndim != 1 or y.ndim != 1 or x.ndim != 2:
            raise DataError("treatment and outcome must be vectors, covariates a matrix")
        n = a_raw.shape[0]
        if y.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: treatment {n}, outcome {y.shape[0]}, covariates {x.shape[0]}"
            )
        if n < 2 * MIN_PER_ARM:
            raise DataError(f"need at least {2 * MIN_PER_ARM} units, got {n}")
        bad = ~np.isin(a_raw, (0, 1))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"treatment must be 0/1; row {i} has {a_raw[i]!r}")
        a = a_raw.astype(np.int8)
        if not np.isfinite(y).all():
            i = int(np.flatnonzero(~np.isfinite(y))[0])
            raise DataError(f"non-finite outcome at row {i}")
        if not np.isfinite(x).all():
            i, j = (int(v) for v in np.argwhere(~np.isfinite(x))[0])
            raise DataError(f"non-finite covariate at row {i}, column {j}")
        n_treated = int(a.sum())
        if n_treated < MIN_PER_ARM or n - n_treated < MIN_PER_ARM:
            raise DataError(
                f"too few units per group: {n_treated} treated, {n - n_treated} control "
                f"(need at least {MIN_PER_ARM} in each)"
            )
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} covariate names for {x.shape[1]} columns")
        for arr in (x, a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "treatment", a)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.treatment.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def with_outcome(self, outcome) -> "Dataset":
        return Dataset(self.covariates, self.treatment, outcome, self.covariate_names)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.covariates[rows], self.treatment[rows], self.outcome[rows], self.covariate_names
        )

    def standardized(self) -> "Dataset":
        """Copy with each covariate centred and scaled to unit sample SD."""
        x = self.covariates
        sd = x.std(axis=0, ddof=1)
        sd = np.where(sd > 0, sd, 1.0)
        return Dataset((x - x.mean(axis=0)) / sd, self.treatment, self.outcome, self.covariate_names)


@dataclass(frozen=True)
class McmcConfig:
    m1: int = 1500
    burn1: int = 1000
    m2: int = 1500
    burn2: int = 1000
    seed: int = 0
    proposal_target_accept: float = 0.234
    max_subset_redraws: int = 100

    @property
    def kept1(self) -> int:
        return self.m1 - self.burn1

    @property
    def kept2(self) -> int:
        return self.m2 - self.burn2


@dataclass(frozen=True)
class PriorConfig:
    gamma_prior_sd: float = 10.0
    beta_prior_sd: float = 100.0
    sigma2_shape: float = 0.001
    sigma2_rate: float = 0.001


def _config_violations(mcmc: McmcConfig, prior: PriorConfig) -> list[str]:
    out = []
    for name, chain, burn in (("m1", mcmc.m1, mcmc.burn1), ("m2", mcmc.m2, mcmc.burn2)):
        burn_name = "burn" + name[1]
        if not isinstance(chain, (int, np.integer)) or chain <= 0:
            out.append(f"{name} must be a positive integer, got {chain!r}")
            continue
        if not isinstance(burn, (int, np.integer)) or burn < 0:
            out.append(f"{burn_name} must be a non-negative integer, got {burn!r}")
        elif burn >= chain:
            out.append(f"{burn_name}={burn}: burn-in consumes entire chain ({name}={chain})")
    if not 0 <= int(mcmc.seed) < 2**64:
        out.append(f"seed must be a 64-bit unsigned integer, got {mcmc.seed!r}")
    if not 0.0 < mcmc.proposal_target_accept < 1.0:
        out.append("proposal_target_accept must lie in (0, 1)")
    if mcmc.max_subset_redraws < 1:
        out.append("max_subset_redraws must be positive")
    for name in ("gamma_prior_sd", "beta_prior_sd", "sigma2_shape", "sigma2_rate"):
        value = getattr(prior, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            out.append(f"{name} must be positive and finite, got {value!r}")
    return out


def validate_config(mcmc: McmcConfig, prior: PriorConfig) -> tuple[McmcConfig, PriorConfig]:
    """Return the configuration unchanged, or raise ConfigError listing every violation."""
    violations = _config_violations(mcmc, prior)
    if violations:
        raise ConfigError(violations)
    return mcmc, prior


def load_dataset(
    path: str | Path,
    treatment_col: str,
    outcome_col: str,
    covariate_cols: Sequence[str],
) -> Dataset:
    """Read a headed, comma-separated numeric CSV into a validated Dataset."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        wanted = [treatment_col, outcome_col, *covariate_cols]
        for col in wanted:
            if col not in header:
                raise DataError(f"column {col!r} not found in header of {path}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, record in enumerate(reader):
            if not record or all(not c.strip() for c in record):
                continue
            values = []
            for col, j in zip(wanted, idx):
                cell = record[j].strip() if j < len(record) else ""
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"row {lineno}, column {col!r}: cannot parse {cell!r}") from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    a = table[:, 0]
    bad = ~np.isin(a, (0.0, 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"treatment column {treatment_col!r} must be 0/1; row {i} has {a[i]:g}")
    finite = np.isfinite(table)
    if not finite.all():
        i, j = (int(v) for v in np.argwhere(~finite)[0])
        raise DataError(f"non-finite value at row {i}, column {wanted[j]!r}")
    return Dataset(
        covariates=table[:, 2:].reshape(len(rows), len(covariate_cols)),
        treatment=a.astype(np.int8),
        outcome=table[:, 1],
        covariate_names=tuple(covariate_cols),
    )


def write_dataset(
    data: Dataset, path: str | Path, treatment_col: str = "a", outcome_col: str = "y"
) -> None:
    """Write ``data`` as CSV; floats use ``repr`` so a reload is exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([treatment_col, outcome_col, *data.covariate_names])
        for a, y, x in zip(data.treatment, data.outcome, data.covariates):
            writer.writerow([int(a), repr(float(y)), *(repr(float(v)) for v in x)])
