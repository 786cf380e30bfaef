"""Fixed-score weighting estimators: IPTW (optionally truncated), Crump trimming, overlap weights."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .data import MIN_PER_ARM, DataError, Dataset
from .propensity import SeparationWarning, SingularDesignError, fit_propensity_mle

METHODS = ("ppta", "iptw", "iptw_trunc", "crump", "overlap")
MAX_FAILED_FRACTION = 0.10


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """A parsed method label such as ``iptw-trunc:50``."""

    name: str
    cap: float | None = None

    @property
    def label(self) -> str:
        if self.name == "iptw_trunc":
            return f"iptw_trunc{self.cap:g}"
        return self.name

    @property
    def cli_label(self) -> str:
        if self.name == "iptw_trunc":
            return f"iptw-trunc:{self.cap:g}"
        return self.name


_TRUNC = re.compile(r"^iptw[-_]?trunc(?:ated)?[:_-]?([0-9.eE+]+)$")


def parse_method(label: str) -> MethodSpec:
    """Accepts ``ppta``, ``iptw``, ``crump``, ``overlap`` and ``iptw-trunc:<cap>`` (or ``iptw_trunc<cap>``)."""
    text = label.strip().lower()
    if text in ("ppta", "iptw", "crump", "overlap"):
        return MethodSpec(text)
    m = _TRUNC.match(text)
    if m:
        try:
            cap = float(m.group(1))
        except ValueError:
            cap = float("nan")
        if not np.isfinite(cap) or cap <= 0:
            raise ValueError(f"truncation cap must be a positive number in {label!r}")
        return MethodSpec("iptw_trunc", cap)
    raise ValueError(
        f"unknown method {label!r}; expected ppta, iptw, iptw-trunc:<cap>, crump or overlap"
    )


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    method: str
    truncation_cap: float | None = None
    kept: np.ndarray | None = None

    def __post_init__(self):
        w = self.weights
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and non-negative")
        if self.kept is not None and np.any(w[~self.kept.astype(bool)] != 0):
            raise ValueError("weights must be zero exactly where units are trimmed")

    def effective_sample_size(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w))


def _scores(scores) -> np.ndarray:
    e = np.asarray(scores, dtype=float)
    if not np.all((e > 0.0) & (e < 1.0)):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    return e


def iptw_weights(scores, treatment, cap: float | None = None) -> WeightVector:
    e = _scores(scores)
    a = np.asarray(treatment)
    w = np.where(a == 1, 1.0 / e, 1.0 / (1.0 - e))
    if cap is None:
        return WeightVector(w, "iptw")
    return WeightVector(np.minimum(w, cap), f"iptw_trunc{cap:g}", truncation_cap=float(cap))


def overlap_weights(scores, treatment) -> WeightVector:
    e = _scores(scores)
    a = np.asarray(treatment)
    return WeightVector(np.where(a == 1, 1.0 - e, e), "overlap")


def crump_trim(scores) -> tuple[float, np.ndarray]:
    """Minimum-variance trimming threshold.

    With ``h_i = 1 / (e_i (1 - e_i))``, picks the largest candidate
    ``lam`` in ``{h_i}`` with ``lam <= 2 * mean{h_j : h_j <= lam}`` and keeps
    units with ``h_i <= lam``. Returns ``alpha = 0.5 - sqrt(0.25 - 1/lam)``
    and the kept mask; kept units are exactly those with
    ``alpha <= e_i <= 1 - alpha``.
    """
    e = _scores(scores)
    h = 1.0 / (e * (1.0 - e))
    hs = np.sort(h)
    cum_mean = np.cumsum(hs) / np.arange(1, hs.size + 1)
    ok = hs <= 2.0 * cum_mean
    # ties: a candidate's mean must include every unit with the same h
    last_of_tie = np.r_[hs[1:] != hs[:-1], True]
    ok &= last_of_tie
    if not ok.any():
        return float(np.min(np.minimum(e, 1 - e))), np.ones(e.shape[0], dtype=bool)
    lam = hs[np.flatnonzero(ok)[-1]]
    kept = h <= lam
    alpha = 0.5 - np.sqrt(max(0.25 - 1.0 / lam, 0.0))
    return float(alpha), kept


def crump_weights(scores, treatment) -> WeightVector:
    """IPTW weights restricted to the Crump-trimmed units."""
    _, kept = crump_trim(scores)
    w = iptw_weights(scores, treatment).weights
    return WeightVector(np.where(kept, w, 0.0), "crump", kept=kept)


def weights_for(method: MethodSpec, scores, treatment) -> WeightVector:
    if method.name == "iptw":
        return iptw_weights(scores, treatment)
    if method.name == "iptw_trunc":
        return iptw_weights(scores, treatment, cap=method.cap)
    if method.name == "overlap":
        return overlap_weights(scores, treatment)
    if method.name == "crump":
        return crump_weights(scores, treatment)
    raise ValueError(f"{method.label} is not a weighting method")


def weighted_difference(data: Dataset, w: WeightVector | np.ndarray) -> float:
    """Hajek difference of weighted arm means (treated minus control)."""
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    a = data.treatment == 1
    y = data.outcome
    w1, w0 = weights[a], weights[~a]
    if not w1.sum() > 0:
        raise EstimationError("treated arm has zero total weight")
    if not w0.sum() > 0:
        raise EstimationError("control arm has zero total weight")
    return float(w1 @ y[a] / w1.sum() - w0 @ y[~a] / w0.sum())


def estimate(data: Dataset, method: MethodSpec, scores=None) -> tuple[float, WeightVector]:
    """Point estimate with MLE propensity scores (fitted unless supplied)."""
    if scores is None:
        scores = fit_propensity_mle(data).scores
    w = weights_for(method, scores, data.treatment)
    return weighted_difference(data, w), w


def bootstrap_interval(
    data: Dataset,
    method: MethodSpec,
    reps: int = 1000,
    gen: np.random.Generator | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile (2.5%, 97.5%) interval from a nonparametric row bootstrap.

    Every replicate refits the propensity MLE. Resamples with fewer than two
    units in an arm are redrawn; replicates whose fit or estimate fails are
    counted, and more than 10% failures is an error.
    """
    if reps < 100:
        raise ValueError("bootstrap needs at least 100 replicates")
    if gen is None:
        gen = rngmod.stream(seed, rngmod.BOOTSTRAP)
    n = data.n
    a = data.treatment
    estimates = []
    failed = 0
    max_failed = MAX_FAILED_FRACTION * reps
    while len(estimates) < reps:
        idx = gen.integers(0, n, n)
        n1 = int(a[idx].sum())
        if n1 < MIN_PER_ARM or n - n1 < MIN_PER_ARM:
            failed += 1
        else:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", SeparationWarning)
                    est, _ = estimate(data.subset(idx), method)
                estimates.append(est)
                continue
            except (SeparationWarning, SingularDesignError, EstimationError, DataError, ValueError):
                failed += 1
        if failed > max_failed:
            raise EstimationError(f"bootstrap failed: {failed} failed replicates out of {reps}")
    lo, hi = np.quantile(np.asarray(estimates), [0.025, 0.975])
    return float(lo), float(hi)
