"""Bayesian and maximum-likelihood logistic propensity models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, log_expit

from . import rng as rngmod
from .data import Dataset, McmcConfig, PriorConfig

# keeps scores strictly inside (0, 1) in double precision
_EPS = 1e-15
_ADAPT_START = 50
_SEPARATION_ETA = 30.0


class SingularDesignError(ValueError):
    pass


class SeparationWarning(UserWarning):
    pass


def design_matrix(x: np.ndarray) -> np.ndarray:
    """Prepend an intercept column."""
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(x.shape[0]), x])


def scores_from_gamma(design: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Propensity scores for one coefficient vector, or a row per vector in a 2-D ``gamma``."""
    return np.clip(expit(np.asarray(gamma) @ design.T), _EPS, 1.0 - _EPS)


def log_likelihood(design: np.ndarray, a: np.ndarray, gamma: np.ndarray) -> float:
    eta = design @ gamma
    return float(a @ eta + log_expit(-eta).sum())


@dataclass(frozen=True)
class MleFit:
    gamma_hat: np.ndarray
    scores: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class PropensityPosterior:
    draws: np.ndarray  # (kept, p + 1), intercept first
    scores: np.ndarray  # (kept, n)
    acceptance_rate: float
    config_echo: McmcConfig

    def __len__(self) -> int:
        return self.draws.shape[0]


def _check_rank(design: np.ndarray, names) -> None:
    if design.shape[1] == 1:
        return
    _, r, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * diag[0] * 1e3
    if diag[-1] <= tol:
        col = int(piv[-1])
        label = "intercept" if col == 0 else names[col - 1]
        raise SingularDesignError(
            f"singular information matrix: covariate {label!r} is collinear with the others"
        )


def fit_propensity_mle(data: Dataset, max_iter: int = 100, tol: float = 1e-8) -> MleFit:
    """Newton-Raphson with step-halving for the logistic log-likelihood.

    Converges when the max-norm of the score (gradient) is at most ``tol``.
    Separated data never converge; the last iterate is returned with
    ``converged=False`` and a :class:`SeparationWarning`.
    """
    X = design_matrix(data.covariates)
    a = data.treatment.astype(float)
    _check_rank(X, data.covariate_names)

    gamma = np.zeros(X.shape[1])
    abar = a.mean()
    gamma[0] = np.log(abar / (1 - abar))
    ll = log_likelihood(X, a, gamma)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        e = expit(X @ gamma)
        grad = X.T @ (a - e)
        if np.max(np.abs(grad)) <= tol:
            converged = True
            it -= 1
            break
        info = (X * (e * (1 - e))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            break
        gnorm = np.max(np.abs(grad))
        t = 1.0
        while t > 1e-10:
            cand = gamma + t * step
            ll_cand = log_likelihood(X, a, cand)
            if ll_cand >= ll:
                break
            # near the optimum the log-likelihood is flat to rounding; judge by the gradient
            if np.max(np.abs(X.T @ (a - expit(X @ cand)))) < gnorm and t == 1.0:
                break
            t *= 0.5
        else:
            break
        gamma, ll = cand, ll_cand
    else:
        e = expit(X @ gamma)
        converged = np.max(np.abs(X.T @ (a - e))) <= tol
    if converged and np.max(np.abs(X @ gamma)) > _SEPARATION_ETA:
        # gradient vanished only because fitted probabilities hit 0 or 1
        converged = False
    if not converged:
        warnings.warn(
            "propensity MLE did not converge; covariates may separate the treatment groups",
            SeparationWarning,
            stacklevel=2,
        )
    return MleFit(gamma, scores_from_gamma(X, gamma), bool(converged), it)


def _log_posterior(X, a, gamma, prior_var):
    return log_likelihood(X, a, gamma) - 0.5 * float(gamma @ gamma) / prior_var


def fit_propensity_posterior(
    data: Dataset,
    mcmc: McmcConfig,
    prior: PriorConfig,
    gen: np.random.Generator | None = None,
) -> PropensityPosterior:
    """Adaptive random-walk Metropolis for the logistic regression posterior.

    The prior on every coefficient (intercept included) is independent
    N(0, gamma_prior_sd^2). The chain starts at the MLE. During burn-in the
    Gaussian proposal covariance tracks the empirical covariance of the chain,
    scaled by 2.38^2 / d, and a global log-scale factor is tuned towards
    ``mcmc.proposal_target_accept``; both are frozen afterwards.
    """
    if gen is None:
        gen = rngmod.stream(mcmc.seed, rngmod.PROPENSITY)
    X = design_matrix(data.covariates)
    a = data.treatment.astype(float)
    d = X.shape[1]
    prior_var = prior.gamma_prior_sd**2

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            mle = fit_propensity_mle(data)
            start = mle.gamma_hat if mle.converged else np.zeros(d)
        except SingularDesignError:
            mle = None
            start = np.zeros(d)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)

    cur = start.copy()
    cur_lp = _log_posterior(X, a, cur, prior_var)
    if not np.isfinite(cur_lp):
        scale = np.abs(data.covariates).max(axis=0) if data.p else np.array([])
        raise ValueError(f"non-finite log-posterior at initial value; covariate max |x|: {scale}")

    # initial proposal from the Laplace approximation at the start value
    e = expit(X @ cur)
    info = (X * (e * (1 - e))[:, None]).T @ X + np.eye(d) / prior_var
    base_cov = np.linalg.inv(info)
    sd_factor = 2.38**2 / d
    log_scale = 0.0
    chol = np.linalg.cholesky(sd_factor * base_cov + 1e-6 * np.eye(d))

    # running moments for the covariance adaptation
    mean = cur.copy()
    m2acc = np.zeros((d, d))
    count = 1

    kept = mcmc.m1 - mcmc.burn1
    draws = np.empty((kept, d))
    accepted_after = 0
    z = gen.standard_normal((mcmc.m1, d))
    logu = np.log(gen.random(mcmc.m1))
    target = mcmc.proposal_target_accept

    for t in range(mcmc.m1):
        prop = cur + np.exp(log_scale) * (chol @ z[t])
        prop_lp = _log_posterior(X, a, prop, prior_var)
        log_alpha = prop_lp - cur_lp
        accept = logu[t] < log_alpha
        if accept:
            cur, cur_lp = prop, prop_lp
        if t < mcmc.burn1:
            alpha = min(1.0, float(np.exp(min(log_alpha, 0.0))))
            log_scale += (alpha - target) / np.sqrt(t + 1.0)
            count += 1
            delta = cur - mean
            mean = mean + delta / count
            m2acc += np.outer(delta, cur - mean)
            if count > _ADAPT_START:
                emp = m2acc / (count - 1)
                chol = np.linalg.cholesky(sd_factor * emp + 1e-6 * np.eye(d))
        else:
            draws[t - mcmc.burn1] = cur
            accepted_after += int(accept)

    scores = scores_from_gamma(X, draws)
    return PropensityPosterior(
        draws=draws,
        scores=scores,
        acceptance_rate=accepted_after / kept,
        config_echo=mcmc,
    )


def posterior_scores(post: PropensityPosterior, m: int, covariates: np.ndarray | None = None) -> np.ndarray:
    """Scores for retained draw ``m``; recomputed from the coefficients when covariates are given."""
    if not 0 <= m < len(post):
        raise IndexError(f"draw index {m} out of range for {len(post)} retained draws")
    if covariates is None:
        return post.scores[m]
    return scores_from_gamma(design_matrix(covariates), post.draws[m])
