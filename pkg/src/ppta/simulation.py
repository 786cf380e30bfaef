"""Simulation study: single-index confounding DGP, replicate runner and summaries."""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import rng as rngmod
from .comparators import estimate, parse_method
from .data import MIN_PER_ARM, Dataset, McmcConfig, PriorConfig
from .outcome import ppta_causal_posterior
from .propensity import fit_propensity_mle

log = logging.getLogger(__name__)

DEFAULT_METHODS = (
    "ppta",
    "iptw",
    "iptw-trunc:100",
    "iptw-trunc:50",
    "iptw-trunc:10",
    "crump",
    "overlap",
)
BASELINE_LOGIT = float(np.log(0.3 / 0.7))
MAX_TREATMENT_ATTEMPTS = 100


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int = 500
    p: int = 5
    b_grid: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    reps: int = 500
    true_ate: float = 0.2
    methods: tuple[str, ...] = DEFAULT_METHODS
    seed: int = 0
    parallelism: int = 1

    def violations(self) -> list[str]:
        out = []
        if self.n < 10:
            out.append(f"n must be at least 10, got {self.n}")
        if self.p < 1:
            out.append(f"p must be at least 1, got {self.p}")
        if self.reps < 1:
            out.append(f"reps must be at least 1, got {self.reps}")
        for b in self.b_grid:
            if not (np.isfinite(b) and b >= 0):
                out.append(f"b grid values must be non-negative, got {b}")
        for m in self.methods:
            try:
                parse_method(m)
            except ValueError as exc:
                out.append(str(exc))
        return out


@dataclass(frozen=True)
class SimResultRow:
    b: float
    rep: int
    method: str
    estimate: float
    subset_or_ess: float
    runtime_ms: float = field(default=0.0, compare=False)


def leading_eigenvector(x: np.ndarray) -> np.ndarray:
    """Unit-norm leading eigenvector of the sample covariance, first nonzero entry positive."""
    _, vecs = np.linalg.eigh(np.atleast_2d(np.cov(x, rowvar=False)))
    v = vecs[:, -1]
    nz = np.flatnonzero(v != 0)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v / np.linalg.norm(v)


def generate_dataset(
    n: int, p: int, b: float, gen: np.random.Generator, true_ate: float = 0.2
) -> tuple[Dataset, np.ndarray]:
    """Draw one dataset whose confounder is the first principal-component score.

    X is n x p standard normal, ``U = X v1``, ``A ~ Bernoulli(expit(log(3/7) + b U))``
    and ``Y ~ N(true_ate * A - U, 1)``. The treatment vector is redrawn when an
    arm has fewer than two units.
    """
    if n < 10:
        raise ValueError(f"n must be at least 10, got {n}")
    x = gen.standard_normal((n, p))
    u = x @ leading_eigenvector(x)
    prob = expit(BASELINE_LOGIT + b * u)
    for _ in range(MAX_TREATMENT_ATTEMPTS):
        a = (gen.random(n) < prob).astype(np.int8)
        n1 = int(a.sum())
        if n1 >= MIN_PER_ARM and n - n1 >= MIN_PER_ARM:
            break
    else:
        raise SimulationError(
            f"could not draw {MIN_PER_ARM} units per arm in {MAX_TREATMENT_ATTEMPTS} attempts (b={b})"
        )
    y = gen.normal(true_ate * a - u, 1.0)
    names = tuple(f"x{j + 1}" for j in range(p))
    return Dataset(x, a, y, names), u


def item_seed(seed: int, b: float, rep: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(rngmod.METHOD, rngmod.grid_key(b), rep))
    return int(ss.generate_state(1, np.uint64)[0])


def run_replicate(
    cfg: SimConfig, mcmc: McmcConfig, prior: PriorConfig, b: float, rep: int
) -> tuple[list[SimResultRow], list[str]]:
    """All requested methods on dataset (b, rep); returns rows and failure messages."""
    gen = rngmod.stream(cfg.seed, rngmod.DATA, rngmod.grid_key(b), rep)
    data, _ = generate_dataset(cfg.n, cfg.p, b, gen, cfg.true_ate)
    methods = [parse_method(m) for m in cfg.methods]
    rows, failures = [], []
    mle_scores = None
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method.name == "ppta":
                post = ppta_causal_posterior(data, replace(mcmc, seed=item_seed(cfg.seed, b, rep)), prior)
                est, size = post.posterior_mean, post.mean_subset_size
            else:
                if mle_scores is None:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        mle_scores = fit_propensity_mle(data).scores
                est, w = estimate(data, method, mle_scores)
                size = w.effective_sample_size()
            if not np.isfinite(est):
                raise SimulationError("non-finite estimate")
        except Exception as exc:  # noqa: BLE001 -- any per-row failure is recorded, run continues
            msg = f"b={b:g} rep={rep} method={method.label}: {type(exc).__name__}: {exc}"
            log.warning(msg)
            failures.append(msg)
            continue
        rows.append(
            SimResultRow(float(b), rep, method.label, float(est), float(size),
                         (time.perf_counter() - t0) * 1e3)
        )
    return rows, failures


def _run_item(args):
    return run_replicate(*args)


def sort_key(row: SimResultRow):
    return (row.b, row.rep, row.method)


def run_study(
    cfg: SimConfig,
    mcmc: McmcConfig,
    prior: PriorConfig,
    failures: list[str] | None = None,
    progress=None,
) -> list[SimResultRow]:
    """Run every (b, rep) work item; rows come back sorted by (b, rep, method).

    Each item's randomness is keyed on (seed, b, rep), so the output does not
    depend on ``cfg.parallelism`` or on which other grid points are present.
    """
    items = [(cfg, mcmc, prior, float(b), rep) for b in cfg.b_grid for rep in range(cfg.reps)]
    rows: list[SimResultRow] = []
    errs: list[str] = []
    if cfg.parallelism > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = pool.map(_run_item, items, chunksize=max(1, len(items) // (4 * cfg.parallelism)))
            for r, e in results:
                rows.extend(r)
                errs.extend(e)
                if progress:
                    progress()
    else:
        for item in items:
            r, e = run_replicate(*item)
            rows.extend(r)
            errs.extend(e)
            if progress:
                progress()
    if failures is not None:
        failures.extend(errs)
    return sorted(rows, key=sort_key)


@dataclass(frozen=True)
class GroupSummary:
    b: float
    method: str
    count: int
    mean: float
    bias: float
    sd: float
    rmse: float
    mc_se: float
    sd_defined: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize_study(rows, true_ate: float = 0.2) -> list[GroupSummary]:
    """Mean, bias, SD, RMSE and Monte Carlo SE of the mean per (b, method)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to summarize")
    groups: dict[tuple[float, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r.b, r.method), []).append(r.estimate)
    out = []
    for (b, method), ests in sorted(groups.items()):
        x = np.asarray(ests)
        k = x.size
        sd = float(x.std(ddof=1)) if k > 1 else 0.0
        mean = float(x.mean())
        out.append(
            GroupSummary(
                b=b,
                method=method,
                count=k,
                mean=mean,
                bias=mean - true_ate,
                sd=sd,
                rmse=float(np.sqrt(np.mean((x - true_ate) ** 2))),
                mc_se=sd / np.sqrt(k),
                sd_defined=k > 1,
            )
        )
    return out


def method_labels(methods) -> list[str]:
    return [parse_method(m).label for m in methods]

