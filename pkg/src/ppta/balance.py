"""Covariate balance: standardized mean differences, plain, weighted and PPTA-averaged."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .design import DesignDraw


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class BalanceReport:
    per_covariate: dict[str, float]
    method: str
    n_designs_averaged: int = 1
    skipped_designs: int = 0
    max_abs: float = field(init=False)

    def __post_init__(self):
        vals = [abs(v) for v in self.per_covariate.values()]
        object.__setattr__(self, "max_abs", max(vals) if vals else 0.0)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "per_covariate": dict(self.per_covariate),
            "max_abs": self.max_abs,
            "n_designs_averaged": self.n_designs_averaged,
            "skipped_designs": self.skipped_designs,
        }


def standardized_difference(x, treatment, weights=None) -> float:
    """Treated-minus-control mean difference over the pooled arm SD.

    With ``weights`` the means are weighted but the denominator stays
    ``sqrt((s2_T + s2_C) / 2)`` from the unweighted arms (ddof=1).
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(treatment) == 1
    xt, xc = x[a], x[~a]
    if xt.size == 0 or xc.size == 0:
        raise BalanceError("both arms must be non-empty")
    if weights is None:
        diff = xt.mean() - xc.mean()
    else:
        w = np.asarray(weights, dtype=float)
        wt, wc = w[a], w[~a]
        if not (wt.sum() > 0 and wc.sum() > 0):
            raise BalanceError("each arm needs positive total weight")
        diff = wt @ xt / wt.sum() - wc @ xc / wc.sum()
    var_t = xt.var(ddof=1) if xt.size > 1 else 0.0
    var_c = xc.var(ddof=1) if xc.size > 1 else 0.0
    denom = np.sqrt((var_t + var_c) / 2.0)
    if denom == 0.0:
        if diff == 0.0:
            return 0.0
        raise BalanceError("both arms are constant with different values")
    return float(diff / denom)


def balance_report(
    data: Dataset,
    treatment=None,
    weights=None,
    kept=None,
    method: str = "unweighted",
) -> BalanceReport:
    """Standardized differences for every covariate.

    ``kept`` zeroes out trimmed units in the means; the denominator always
    comes from the full unweighted arms.
    """
    a = data.treatment if treatment is None else np.asarray(treatment)
    w = None if weights is None else np.asarray(weights, dtype=float)
    if kept is not None:
        k = np.asarray(kept, dtype=float)
        w = k if w is None else w * k
    per = {
        name: standardized_difference(data.covariates[:, j], a, w)
        for j, name in enumerate(data.covariate_names)
    }
    return BalanceReport(per, method)


def ppta_balance(data: Dataset, design_draws: Sequence[DesignDraw]) -> BalanceReport:
    """Average each covariate's standardized difference over design draws, then take max |.|.

    Each draw's difference is computed on its included units only. Draws on
    which some covariate is undefined (both arms constant, unequal) are
    skipped and counted.
    """
    if len(design_draws) == 0:
        raise BalanceError("need at least one design draw")
    a = data.treatment
    x = data.covariates
    sums = np.zeros(data.p)
    used = 0
    skipped = 0
    for d in design_draws:
        s = np.asarray(d.s, dtype=bool)
        try:
            vals = [standardized_difference(x[s, j], a[s]) for j in range(data.p)]
        except BalanceError:
            skipped += 1
            continue
        sums += vals
        used += 1
    if used == 0:
        raise BalanceError("no design draw produced defined standardized differences")
    avg = sums / used
    per = {name: float(v) for name, v in zip(data.covariate_names, avg)}
    return BalanceReport(per, "ppta", n_designs_averaged=used, skipped_designs=skipped)
