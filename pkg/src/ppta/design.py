"""Design stage: posterior-predictive treatment assignments and subset draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MIN_PER_ARM


class DegenerateDesignError(RuntimeError):
    """No valid subset could be drawn for one propensity draw."""

    def __init__(self, gamma_index: int, attempts: int):
        self.gamma_index = gamma_index
        self.attempts = attempts
        super().__init__(
            f"design draw for propensity draw {gamma_index} left fewer than {MIN_PER_ARM} "
            f"units in an arm after {attempts} attempts"
        )


@dataclass(frozen=True)
class DesignDraw:
    s: np.ndarray  # bool inclusion vector
    gamma_index: int
    n_treated_in: int
    n_control_in: int
    redraws_used: int

    @property
    def size(self) -> int:
        return self.n_treated_in + self.n_control_in


def _check_scores(scores) -> np.ndarray:
    e = np.asarray(scores, dtype=float)
    if not np.all((e > 0.0) & (e < 1.0)):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    return e


def inclusion_probabilities(scores, treatment) -> np.ndarray:
    """Probability that the predictive assignment differs from the observed one.

    ``q_i = 1 - e_i`` for treated units and ``q_i = e_i`` for controls.
    """
    e = _check_scores(scores)
    a = np.asarray(treatment)
    return np.where(a == 1, 1.0 - e, e)


def draw_ppta(scores, gen: np.random.Generator) -> np.ndarray:
    """One Bernoulli(e_i) predictive treatment assignment per unit."""
    e = _check_scores(scores)
    return (gen.random(e.shape[0]) < e).astype(np.int8)


def draw_design_subset(
    scores,
    treatment,
    gen: np.random.Generator,
    max_redraws: int = 100,
    gamma_index: int = 0,
) -> DesignDraw:
    """Draw the inclusion vector S from Bernoulli(q_i), redrawing degenerate subsets.

    ``S_i = 1`` is the event that unit i's predictive assignment comes out
    opposite to its observed treatment, drawn directly with probability
    ``q_i`` from :func:`inclusion_probabilities`. A subset with fewer than
    two included units in either arm is discarded and redrawn, at most
    ``max_redraws`` times.
    """
    q = inclusion_probabilities(scores, treatment)
    treated = np.asarray(treatment) == 1
    for attempt in range(max_redraws + 1):
        s = gen.random(q.shape[0]) < q
        n1 = int(np.count_nonzero(s & treated))
        n0 = int(np.count_nonzero(s)) - n1
        if n1 >= MIN_PER_ARM and n0 >= MIN_PER_ARM:
            s.setflags(write=False)
            return DesignDraw(s, gamma_index, n1, n0, attempt)
    raise DegenerateDesignError(gamma_index, max_redraws + 1)
