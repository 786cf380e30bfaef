"""Analysis stage and the two-stage PPTA posterior.

The analysis model on an included subset is ``y = beta0 + beta1 * a + eps``
with ``eps ~ N(0, sigma2)``, independent N(0, beta_prior_sd^2) priors on the
coefficients and an inverse-gamma prior on ``sigma2``. It is sampled by
two-block Gibbs. Chains for different design draws are independent, so they
are advanced together as vectors; each chain consumes only variates from its
own keyed stream.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .data import Dataset, McmcConfig, PriorConfig
from .design import DegenerateDesignError, DesignDraw, draw_design_subset
from .propensity import PropensityPosterior, fit_propensity_posterior

log = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.10
MIN_SUMMARY_DRAWS = 100


class DesignStageAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class OutcomePosteriorChunk:
    beta0_draws: np.ndarray
    beta1_draws: np.ndarray
    sigma2_draws: np.ndarray
    design_index: int


@dataclass(frozen=True)
class CausalPosterior:
    beta1_pooled: np.ndarray
    posterior_mean: float
    posterior_sd: float
    ci95: tuple[float, float]
    skipped_gamma_draws: int
    mean_subset_size: float
    designs: list[DesignDraw] = field(repr=False, default_factory=list)
    chunks: list[OutcomePosteriorChunk] = field(repr=False, default_factory=list)
    propensity: PropensityPosterior | None = field(repr=False, default=None)

    @property
    def skipped_indices(self) -> list[int]:
        used = {d.gamma_index for d in self.designs}
        total = len(self.designs) + self.skipped_gamma_draws
        return [m for m in range(total) if m not in used]


def summarize_posterior(draws) -> tuple[float, float, tuple[float, float]]:
    """Mean, SD and the (2.5%, 97.5%) linear-interpolation quantiles."""
    x = np.asarray(draws, dtype=float).ravel()
    if x.size < MIN_SUMMARY_DRAWS:
        raise ValueError(f"need at least {MIN_SUMMARY_DRAWS} draws to summarize, got {x.size}")
    lo, hi = np.quantile(x, [0.025, 0.975], method="linear")
    return float(x.mean()), float(x.std(ddof=1)), (float(lo), float(hi))


def _subset_stats(y, a, s):
    """Per-subset arm counts, arm means and within-arm sums of squares.

    ``s`` is a (k, n) boolean matrix. Only included entries are ever read,
    through ``np.where``, so excluded outcomes cannot leak in.
    """
    t = s & (a == 1)[None, :]
    c = s & (a == 0)[None, :]
    k1 = t.sum(axis=1).astype(float)
    k0 = c.sum(axis=1).astype(float)
    ybar1 = np.where(t, y, 0.0).sum(axis=1) / k1
    ybar0 = np.where(c, y, 0.0).sum(axis=1) / k0
    ss1 = np.where(t, (y[None, :] - ybar1[:, None]) ** 2, 0.0).sum(axis=1)
    ss0 = np.where(c, (y[None, :] - ybar0[:, None]) ** 2, 0.0).sum(axis=1)
    return k0, k1, ybar0, ybar1, ss0, ss1


def _gibbs_block(y, a, s, prior: PriorConfig, m2: int, burn2: int, gens):
    k0, k1, ybar0, ybar1, ss0, ss1 = _subset_stats(y, a, s)
    k = k0 + k1
    chains = s.shape[0]
    shape = prior.sigma2_shape + 0.5 * k
    z = np.empty((m2, 2, chains))
    g = np.empty((m2, chains))
    for j, gen in enumerate(gens):
        z[:, :, j] = gen.standard_normal((m2, 2))
        g[:, j] = gen.standard_gamma(shape[j], m2)

    prior_prec = 1.0 / prior.beta_prior_sd**2
    sy = k0 * ybar0 + k1 * ybar1
    sy1 = k1 * ybar1
    sigma2 = np.maximum((ss0 + ss1) / (k - 2.0), 1e-8)
    kept = m2 - burn2
    out_b0 = np.empty((chains, kept))
    out_b1 = np.empty((chains, kept))
    out_s2 = np.empty((chains, kept))
    for t in range(m2):
        # beta | sigma2: bivariate normal
        p00 = k / sigma2 + prior_prec
        p01 = k1 / sigma2
        p11 = k1 / sigma2 + prior_prec
        det = p00 * p11 - p01 * p01
        c00, c01, c11 = p11 / det, -p01 / det, p00 / det
        r0, r1 = sy / sigma2, sy1 / sigma2
        m0 = c00 * r0 + c01 * r1
        m1 = c01 * r0 + c11 * r1
        l00 = np.sqrt(c00)
        l10 = c01 / l00
        l11 = np.sqrt(np.maximum(c11 - l10 * l10, 0.0))
        b0 = m0 + l00 * z[t, 0]
        b1 = m1 + l10 * z[t, 0] + l11 * z[t, 1]
        # sigma2 | beta: inverse gamma
        rss = ss0 + ss1 + k0 * (ybar0 - b0) ** 2 + k1 * (ybar1 - b0 - b1) ** 2
        sigma2 = (prior.sigma2_rate + 0.5 * rss) / g[t]
        if t >= burn2:
            out_b0[:, t - burn2] = b0
            out_b1[:, t - burn2] = b1
            out_s2[:, t - burn2] = sigma2
    return out_b0, out_b1, out_s2


def fit_outcome_chunks(
    data: Dataset,
    designs: Sequence[DesignDraw],
    prior: PriorConfig,
    m2: int,
    burn2: int,
    seed: int,
    threads: int = 1,
) -> list[OutcomePosteriorChunk]:
    """Analysis-stage chains for many design draws.

    The chain for design ``d`` uses the stream keyed by ``d.gamma_index``, so
    its draws do not depend on the other designs or on ``threads``.
    """
    if not designs:
        return []
    y = data.outcome
    a = data.treatment
    gens = [rngmod.stream(seed, rngmod.OUTCOME, d.gamma_index) for d in designs]
    s = np.stack([d.s for d in designs])
    threads = max(1, int(threads))
    bounds = np.linspace(0, len(designs), min(threads, len(designs)) + 1).astype(int)
    blocks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def run(block):
        lo, hi = block
        return _gibbs_block(y, a, s[lo:hi], prior, m2, burn2, gens[lo:hi])

    if len(blocks) == 1:
        results = [run(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            results = list(pool.map(run, blocks))
    b0 = np.concatenate([r[0] for r in results])
    b1 = np.concatenate([r[1] for r in results])
    s2 = np.concatenate([r[2] for r in results])
    return [
        OutcomePosteriorChunk(b0[j], b1[j], s2[j], d.gamma_index) for j, d in enumerate(designs)
    ]


def fit_outcome_posterior(
    data: Dataset,
    s: DesignDraw,
    prior: PriorConfig,
    m2: int,
    burn2: int,
    gen: np.random.Generator,
) -> OutcomePosteriorChunk:
    """Gibbs sampler for the analysis model on the units included by ``s``."""
    if s.n_treated_in < 2 or s.n_control_in < 2:
        raise ValueError("design draw must include at least two units in each arm")
    b0, b1, s2 = _gibbs_block(
        data.outcome, data.treatment, np.asarray(s.s)[None, :], prior, m2, burn2, [gen]
    )
    return OutcomePosteriorChunk(b0[0], b1[0], s2[0], s.gamma_index)


def draw_designs(
    score_draws: np.ndarray,
    treatment: np.ndarray,
    seed: int,
    max_redraws: int,
) -> tuple[list[DesignDraw], list[int]]:
    """One design draw per row of ``score_draws``; returns (designs, skipped indices)."""
    designs, skipped = [], []
    for m, scores in enumerate(score_draws):
        gen = rngmod.stream(seed, rngmod.DESIGN, m)
        try:
            designs.append(draw_design_subset(scores, treatment, gen, max_redraws, gamma_index=m))
        except DegenerateDesignError as exc:
            log.warning("skipping propensity draw %d: %s", m, exc)
            skipped.append(m)
    total = len(score_draws)
    if len(skipped) > MAX_SKIP_FRACTION * total:
        raise DesignStageAbort(
            f"design stage cannot support causal contrast: {len(skipped)} of {total} "
            f"propensity draws produced no subset with at least two units per arm"
        )
    return designs, skipped


def two_stage_from_scores(
    data: Dataset,
    score_draws: np.ndarray,
    mcmc: McmcConfig,
    prior: PriorConfig,
    threads: int = 1,
    propensity: PropensityPosterior | None = None,
) -> CausalPosterior:
    """Design draws from the given score draws, then pooled analysis-stage chains."""
    score_draws = np.atleast_2d(np.asarray(score_draws, dtype=float))
    designs, skipped = draw_designs(
        score_draws, data.treatment, mcmc.seed, mcmc.max_subset_redraws
    )
    chunks = fit_outcome_chunks(data, designs, prior, mcmc.m2, mcmc.burn2, mcmc.seed, threads)
    pooled = np.concatenate([c.beta1_draws for c in chunks])
    mean, sd, ci = summarize_posterior(pooled)
    return CausalPosterior(
        beta1_pooled=pooled,
        posterior_mean=mean,
        posterior_sd=sd,
        ci95=ci,
        skipped_gamma_draws=len(skipped),
        mean_subset_size=float(np.mean([d.size for d in designs])),
        designs=designs,
        chunks=chunks,
        propensity=propensity,
    )


def ppta_causal_posterior(
    data: Dataset,
    mcmc: McmcConfig,
    prior: PriorConfig,
    threads: int = 1,
) -> CausalPosterior:
    """Two-stage posterior of the causal contrast.

    Stage one samples the propensity posterior from (covariates, treatment)
    only; each retained draw yields one design draw. Stage two fits the
    analysis model on every design and pools the ``beta1`` draws. Nothing
    from stage two is fed back into stage one.
    """
    post = fit_propensity_posterior(data, mcmc, prior, rngmod.stream(mcmc.seed, rngmod.PROPENSITY))
    return two_stage_from_scores(data, post.scores, mcmc, prior, threads, propensity=post)
