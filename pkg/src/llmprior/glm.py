"""Maximum-likelihood fits for logistic and linear regression.

The sampling distribution of the MLE is approximated by a Gaussian with the
inverse observed Fisher information as covariance. A case-resampling
bootstrap is available as a nonparametric alternative.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from .dataset import BoundDataset
from .errors import (ArgumentError, BootstrapFailureError, DegenerateDataError,
                     DomainError, NonConvergenceError, NumericError,
                     SingularMatrixError)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
# max |beta| above this is taken as quasi-complete separation
DIVERGENCE_BOUND = 1e4


@dataclass(frozen=True)
class GaussianDist:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise ArgumentError(f"non-finite Gaussian parameters ({self.mean}, {self.sd})")
        if self.sd <= 0:
            raise ArgumentError(f"standard deviation must be positive, got {self.sd}")

    @property
    def var(self) -> float:
        return self.sd * self.sd

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd}


def marginals_from(mean: np.ndarray, cov: np.ndarray) -> list[GaussianDist]:
    return [GaussianDist(float(m), float(math.sqrt(v))) for m, v in zip(mean, np.diag(cov))]


@dataclass(frozen=True, eq=False)
class MLEFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    names: list[str]
    loglik: float
    iterations: int
    converged: bool
    noise_variance: float | None = None
    marginals: list[GaussianDist] = field(init=False)

    # KL reports record where the marginals came from
    mle_source = "fisher"

    def __post_init__(self):
        object.__setattr__(self, "marginals",
                           marginals_from(self.coefficients, self.covariance))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "coefficients": self.coefficients.tolist(),
            "covariance": self.covariance.tolist(),
            "marginals": {n: m.to_dict() for n, m in zip(self.names, self.marginals)},
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "noise_variance": self.noise_variance,
            "mle_source": self.mle_source,
        }


# -- log-likelihoods ---------------------------------------------------------

def logistic_loglik(beta, X, y) -> float:
    eta = X @ beta
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def logistic_gradient(beta, X, y) -> np.ndarray:
    return X.T @ (y - expit(X @ beta))


def logistic_hessian(beta, X) -> np.ndarray:
    p = expit(X @ beta)
    return -(X.T * (p * (1 - p))) @ X


def linear_loglik(beta, X, y, noise_variance) -> float:
    r = y - X @ beta
    n = len(y)
    return float(-0.5 * n * math.log(2 * math.pi * noise_variance)
                 - 0.5 * (r @ r) / noise_variance)


def linear_gradient(beta, X, y, noise_variance) -> np.ndarray:
    return X.T @ (y - X @ beta) / noise_variance


# -- fitting -----------------------------------------------------------------

def _check_rank(X: np.ndarray):
    n, d = X.shape
    if n < d or np.linalg.matrix_rank(X) < d:
        raise SingularMatrixError(f"design matrix ({n}x{d}) is not of full column rank")


def _spd_inverse(H: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    try:
        c = linalg.cho_factor(H)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError("information matrix is not positive definite") from exc
    inv = linalg.cho_solve(c, np.eye(H.shape[0]))
    return 0.5 * (inv + inv.T)


def newton_maximize(objective, gradient, neg_hessian, beta0, tol, max_iter,
                    divergence_bound=None, step_tol=1e-8):
    """Damped Newton ascent for a concave objective.

    Converged means gradient max-norm <= ``tol`` and a Newton step below
    ``step_tol`` relative to the coefficient scale, or a step that no longer
    changes ``beta`` at working precision. Returns ``(beta, iterations)``.
    """
    eps = np.finfo(float).eps
    beta = np.array(beta0, dtype=float)
    f = objective(beta)
    for it in range(1, max_iter + 1):
        g = gradient(beta)
        try:
            with warnings.catch_warnings():
                # near-singular Hessians are diagnosed below as separation / divergence
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                step = linalg.solve(neg_hessian(beta), g, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise SingularMatrixError("Hessian became singular during Newton iterations") from exc
        scale = 1 + np.max(np.abs(beta))
        if np.max(np.abs(g)) <= tol and np.max(np.abs(step)) <= step_tol * scale:
            return beta, it - 1
        t = 1.0
        # near the optimum the predicted gain drops below the objective's
        # rounding noise; take the full Newton step there
        tiny = float(g @ step) <= 64 * eps * (1 + abs(f))
        while not tiny:
            cand = beta + t * step
            fc = objective(cand)
            if fc >= f or t < 1e-10:
                break
            t *= 0.5
        if tiny:
            cand = beta + step
            fc = objective(cand)
        stalled = np.all(np.abs(step) <= 4 * eps * (1 + np.abs(beta)))
        beta, f = cand, fc
        if divergence_bound is not None and np.max(np.abs(beta)) > divergence_bound:
            raise NonConvergenceError(
                f"coefficients diverged past {divergence_bound:g} after {it} iterations "
                "(quasi-complete separation)", cause="separation", iterations=it)
        if stalled:
            return beta, it
    g = gradient(beta)
    raise NonConvergenceError(
        f"no convergence in {max_iter} iterations (gradient max-norm "
        f"{np.max(np.abs(g)):.3g})", cause="max_iter", iterations=max_iter)


def _saturated(beta, X) -> bool:
    """Some fitted probability is numerically 0 or 1."""
    p = expit(X @ beta)
    return bool(np.min(p * (1 - p)) < 1e-12)


def fit_logistic_mle(data: BoundDataset, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> MLEFit:
    """Logistic regression by Newton-Raphson (equivalently IRLS)."""
    if data.spec.response_kind != "binary":
        raise DomainError("logistic fit requires a binary response")
    X, y = data.design_matrix, data.response
    _check_rank(X)
    trace = []

    def objective(b):
        trace.append(b)
        return logistic_loglik(b, X, y)

    try:
        beta, iters = newton_maximize(
            objective,
            lambda b: logistic_gradient(b, X, y),
            lambda b: -logistic_hessian(b, X),
            np.zeros(X.shape[1]), tol, max_iter, divergence_bound=DIVERGENCE_BOUND)
    except (NonConvergenceError, SingularMatrixError) as exc:
        if getattr(exc, "cause", None) != "separation" and _saturated(trace[-1], X):
            raise NonConvergenceError(
                "fitted probabilities saturated at 0/1 while coefficients kept growing "
                "(quasi-complete separation)", cause="separation",
                iterations=getattr(exc, "iterations", 0)) from exc
        raise
    cov = _spd_inverse(-logistic_hessian(beta, X))
    return MLEFit(beta, cov, data.coef_names, logistic_loglik(beta, X, y), iters, True)


def fit_linear_mle(data: BoundDataset) -> MLEFit:
    """Ordinary least squares through a QR factorization.

    ``noise_variance`` is the unbiased RSS/(n-d); the covariance is
    ``noise_variance * inv(X'X)``.
    """
    if data.spec.response_kind != "continuous":
        raise DomainError("linear fit requires a continuous response")
    X, y = data.design_matrix, data.response
    n, d = X.shape
    if n <= d:
        raise SingularMatrixError(f"need more rows than coefficients (n={n}, d={d})")
    Q, R = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= diag.max() * max(n, d) * np.finfo(float).eps:
        raise SingularMatrixError("design matrix is rank deficient")
    beta = linalg.solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    if rss <= (64 * np.finfo(float).eps) ** 2 * max(float(y @ y), 1.0):
        raise DegenerateDataError("residual variance is zero; the fit is exact",
                                  coefficients=beta)
    s2 = rss / (n - d)
    Rinv = linalg.solve_triangular(R, np.eye(d))
    cov = s2 * (Rinv @ Rinv.T)
    cov = 0.5 * (cov + cov.T)
    return MLEFit(beta, cov, data.coef_names, linear_loglik(beta, X, y, s2), 1, True,
                  noise_variance=s2)


def fit_mle(data: BoundDataset, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> MLEFit:
    if data.spec.response_kind == "binary":
        return fit_logistic_mle(data, tol, max_iter)
    return fit_linear_mle(data)


# -- bootstrap ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BootstrapResult:
    replicates: np.ndarray  # (successful reps) x d
    names: list[str]
    marginals: list[GaussianDist]
    failed: int
    seed: int

    mle_source = "bootstrap"


def replicate_rng(seed: int, rep: int) -> np.random.Generator:
    """Generator for one bootstrap replicate; depends only on (seed, rep)."""
    return np.random.default_rng([seed, rep])


def bootstrap_mle(data: BoundDataset, reps: int, seed: int,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BootstrapResult:
    """Case-resampling bootstrap of the MLE.

    Replicates whose refit fails (singular resample, separation, ...) are
    skipped and counted; more than half failing is an error.
    """
    if reps < 2:
        raise ArgumentError(f"bootstrap needs reps >= 2, got {reps}")
    n = data.n
    out, failed = [], 0
    for r in range(reps):
        rows = replicate_rng(seed, r).integers(0, n, size=n)
        try:
            out.append(fit_mle(data.subset(rows), tol, max_iter).coefficients)
        except NumericError:
            failed += 1
    if failed * 2 > reps:
        raise BootstrapFailureError(f"{failed} of {reps} bootstrap replicates failed to fit")
    B = np.array(out)
    sd = B.std(axis=0, ddof=1)
    marg = [GaussianDist(float(m), float(s)) for m, s in zip(B.mean(axis=0), sd)]
    return BootstrapResult(B, data.coef_names, marg, failed, seed)
