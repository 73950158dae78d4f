"""Posterior distributions under independent Gaussian coefficient priors.

Logistic models use a Laplace approximation around the posterior mode.
Linear models use the conjugate Gaussian update with the noise variance
plugged in from the OLS fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .dataset import BoundDataset
from .errors import ArgumentError, DomainError, NonConvergenceError
from .glm import (DEFAULT_MAX_ITER, DEFAULT_TOL, GaussianDist, _spd_inverse,
                  fit_linear_mle, logistic_gradient, logistic_hessian,
                  logistic_loglik, marginals_from, newton_maximize)
from .priors import PriorSet, require_valid

DEFAULT_DRAWS = 1000


@dataclass(frozen=True, eq=False)
class PosteriorFit:
    mode: np.ndarray
    covariance: np.ndarray
    names: list[str]
    method: str  # laplace_logistic | conjugate_linear
    prior_label: str
    noise_variance: float | None = None
    marginals: list[GaussianDist] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "marginals", marginals_from(self.mode, self.covariance))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "method": self.method,
            "prior_label": self.prior_label,
            "mode": self.mode.tolist(),
            "covariance": self.covariance.tolist(),
            "marginals": {n: m.to_dict() for n, m in zip(self.names, self.marginals)},
            "noise_variance": self.noise_variance,
            # linear fits condition on the OLS estimate instead of integrating over sigma^2
            "noise_variance_source": "plug-in RSS/(n-d)" if self.noise_variance is not None else None,
        }


def log_prior(beta, mean, sd) -> float:
    z = (beta - mean) / sd
    return float(-0.5 * z @ z - np.sum(np.log(sd)) - 0.5 * len(beta) * np.log(2 * np.pi))


def logistic_log_posterior(beta, X, y, mean, sd) -> float:
    """Unnormalized log-posterior: log-likelihood plus log-prior."""
    return logistic_loglik(beta, X, y) + log_prior(beta, mean, sd)


def logistic_log_posterior_gradient(beta, X, y, mean, sd) -> np.ndarray:
    return logistic_gradient(beta, X, y) - (beta - mean) / sd**2


def posterior_logistic_laplace(data: BoundDataset, prior: PriorSet,
                               tol: float = DEFAULT_TOL,
                               max_iter: int = DEFAULT_MAX_ITER) -> PosteriorFit:
    if data.spec.response_kind != "binary":
        raise DomainError("Laplace logistic posterior requires a binary response")
    require_valid(prior, data.spec)
    X, y = data.design_matrix, data.response
    names = data.coef_names
    mean, sd = prior.arrays(names)
    prec = 1.0 / sd**2
    try:
        mode, _ = newton_maximize(
            lambda b: logistic_log_posterior(b, X, y, mean, sd),
            lambda b: logistic_log_posterior_gradient(b, X, y, mean, sd),
            lambda b: -logistic_hessian(b, X) + np.diag(prec),
            np.zeros(len(names)), tol, max_iter)
    except NonConvergenceError as exc:
        # the log-posterior is strictly concave, so this indicates a bug or absurd scaling
        raise NonConvergenceError(f"Laplace posterior mode search failed: {exc}",
                                  cause=exc.cause, iterations=exc.iterations) from exc
    cov = _spd_inverse(-logistic_hessian(mode, X) + np.diag(prec))
    return PosteriorFit(mode, cov, names, "laplace_logistic", prior.label)


def posterior_linear_conjugate(data: BoundDataset, prior: PriorSet) -> PosteriorFit:
    """Conjugate update with plug-in noise variance RSS/(n-d).

    Posterior precision is ``diag(1/sd^2) + X'X / s2`` and the mean solves
    ``precision @ m = mean/sd^2 + X'y / s2``.
    """
    if data.spec.response_kind != "continuous":
        raise DomainError("conjugate linear posterior requires a continuous response")
    if data.n <= data.d:
        raise ArgumentError(f"need n > d for a plug-in noise variance (n={data.n}, d={data.d})")
    require_valid(prior, data.spec)
    X, y = data.design_matrix, data.response
    names = data.coef_names
    s2 = fit_linear_mle(data).noise_variance
    mean, sd = prior.arrays(names)
    precision = np.diag(1.0 / sd**2) + (X.T @ X) / s2
    rhs = mean / sd**2 + (X.T @ y) / s2
    cov = _spd_inverse(precision)
    mode = linalg.cho_solve(linalg.cho_factor(precision), rhs)
    return PosteriorFit(mode, cov, names, "conjugate_linear", prior.label, noise_variance=s2)


def posterior(data: BoundDataset, prior: PriorSet, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER) -> PosteriorFit:
    if data.spec.response_kind == "binary":
        return posterior_logistic_laplace(data, prior, tol, max_iter)
    return posterior_linear_conjugate(data, prior)


def _sqrt_cov(cov: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, V = linalg.eigh(cov)
        return V * np.sqrt(np.clip(w, 0, None))


def predictive_binary(fit: PosteriorFit, x, draws: int = DEFAULT_DRAWS,
                      rng: np.random.Generator | int | None = 0):
    """Monte Carlo posterior predictive P(y=1 | x).

    ``x`` is one row or a matrix of rows; all rows share the same coefficient
    draws. Pass a seeded generator (or an int seed) for reproducibility.
    """
    if fit.method != "laplace_logistic":
        raise DomainError(f"predictive_binary needs a logistic posterior, got {fit.method}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != len(fit.mode):
        raise ArgumentError(f"row has {X.shape[1]} entries, model has {len(fit.mode)}")
    rng = np.random.default_rng(rng)
    z = rng.standard_normal((draws, len(fit.mode)))
    betas = fit.mode + z @ _sqrt_cov(fit.covariance).T
    p = expit(X @ betas.T).mean(axis=1)
    return float(p[0]) if single else p


def predictive_gaussian(fit: PosteriorFit, x):
    """Posterior predictive N(x'mode, x'Cx + noise_variance).

    Returns a GaussianDist for one row, a list of them for a matrix.
    """
    if fit.method != "conjugate_linear":
        raise DomainError(f"predictive_gaussian needs a linear posterior, got {fit.method}")
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    if X.shape[1] != len(fit.mode):
        raise ArgumentError(f"row has {X.shape[1]} entries, model has {len(fit.mode)}")
    mu = X @ fit.mode
    var = np.einsum("ij,jk,ik->i", X, fit.covariance, X) + fit.noise_variance
    out = [GaussianDist(float(m), float(np.sqrt(v))) for m, v in zip(mu, var)]
    return out[0] if x.ndim == 1 else out
