"""Cross-validated predictive scores and Nadeau-Bengio corrected t-tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit

from .bayes import DEFAULT_DRAWS, posterior, predictive_binary, predictive_gaussian
from .dataset import BoundDataset, FoldPlan
from .errors import ArgumentError, FoldError, UndefinedMetricError
from .glm import DEFAULT_MAX_ITER, DEFAULT_TOL, GaussianDist, fit_mle
from .priors import PriorCatalog, require_valid

EPS = 1e-12
FREQUENTIST = "Frequentist"


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ArgumentError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ArgumentError("empty input")
    return a, b


def brier(probs, labels) -> float:
    p, y = _pair(probs, labels)
    if np.any((p < 0) | (p > 1)):
        raise ArgumentError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def mnls_binary(probs, labels) -> float:
    """Mean negative log-score; probabilities are clamped to [EPS, 1-EPS]."""
    p, y = _pair(probs, labels)
    p = np.clip(p, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    r = stats.rankdata(s)
    u = r[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def rmse(preds, truth) -> float:
    p, t = _pair(preds, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(preds, truth) -> float:
    p, t = _pair(preds, truth)
    return float(np.mean(np.abs(p - t)))


def mnls_gaussian(pred_dists, truth) -> float:
    """Mean negative Gaussian predictive log-density."""
    t = np.asarray(truth, dtype=float).ravel()
    if len(pred_dists) != t.size:
        raise ArgumentError(f"length mismatch: {len(pred_dists)} vs {t.size}")
    mu = np.array([d.mean for d in pred_dists])
    sd = np.array([d.sd for d in pred_dists])
    z = (t - mu) / sd
    return float(np.mean(0.5 * np.log(2 * np.pi) + np.log(sd) + 0.5 * z * z))


# metric name -> higher is better
BINARY_METRICS = {"brier": False, "mnls": False, "auc": True}
CONTINUOUS_METRICS = {"mnls": False, "rmse": False, "mae": False}
METRIC_TITLES = {"brier": "Brier Score", "mnls": "MNLS", "auc": "AUC",
                 "rmse": "RMSE", "mae": "MAE"}


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    p_value: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"t_stat": self.t_stat, "p_value": self.p_value, "degenerate": self.degenerate}


def nb_ttest(diffs, n_train: float, n_test: float) -> TTestResult:
    """Nadeau-Bengio corrected resampled t-test, one-sided.

    ``diffs`` are per-fold improvements (positive = candidate better). The
    variance of their mean is inflated to ``(1/k + n_test/n_train) * var``.
    Returns the upper-tail p-value of Student t with k-1 degrees of freedom.
    Zero variance gives a flagged result with p = 0.5.
    """
    d = np.asarray(diffs, dtype=float).ravel()
    k = d.size
    if k < 2:
        raise ArgumentError("need at least two folds")
    if n_train <= 0 or n_test <= 0:
        raise ArgumentError("fold sizes must be positive")
    var = d.var(ddof=1)
    if not var > 0:
        return TTestResult(0.0, 0.5, degenerate=True)
    # dividing by the two square roots separately keeps textbook cases exact
    t = d.mean() / math.sqrt(var) / math.sqrt(1 / k + n_test / n_train)
    return TTestResult(float(t), float(stats.t.sf(t, k - 1)))


@dataclass(frozen=True)
class CVConfig:
    seed: int = 0
    mc_draws: int = DEFAULT_DRAWS
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER


@dataclass
class CVReport:
    metrics: dict[str, dict[str, dict]]  # model -> metric -> {"per_fold": [...], "mean": x}
    comparisons: dict[tuple[str, str], TTestResult]
    fold_plan: FoldPlan
    seed: int
    models: list[str] = field(default_factory=list)
    metric_names: list[str] = field(default_factory=list)

    def mean(self, model: str, metric: str) -> float:
        return self.metrics[model][metric]["mean"]

    def per_fold(self, model: str, metric: str) -> np.ndarray:
        return np.asarray(self.metrics[model][metric]["per_fold"])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "models": self.models,
            "metric_names": self.metric_names,
            "metrics": self.metrics,
            "comparisons": {f"{m}|{k}": r.to_dict() for (m, k), r in self.comparisons.items()},
            "fold_plan": self.fold_plan.to_dict(),
        }

    def to_text(self) -> str:
        """Models as rows, metrics as columns, one-sided p-values in parentheses."""
        arrows = {m: "(higher better)" if BINARY_METRICS.get(m) else "(lower better)"
                  for m in self.metric_names}
        head = ["Model"] + [f"{METRIC_TITLES.get(m, m)} {arrows[m]}" for m in self.metric_names]
        rows = [head]
        for model in self.models:
            cells = [model]
            for m in self.metric_names:
                cell = f"{self.mean(model, m):.4f}"
                if (model, m) in self.comparisons:
                    cell += f" (p={self.comparisons[(model, m)].p_value:.3f})"
                cells.append(cell)
            rows.append(cells)
        widths = [max(len(r[j]) for r in rows) for j in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-" * max(len(l) for l in lines))
        return "\n".join(lines) + "\n"


def _score(kind: str, truth, probs=None, dists=None) -> dict[str, float]:
    if kind == "binary":
        return {"brier": brier(probs, truth), "mnls": mnls_binary(probs, truth),
                "auc": auc(probs, truth)}
    means = np.array([d.mean for d in dists])
    return {"mnls": mnls_gaussian(dists, truth), "rmse": rmse(means, truth),
            "mae": mae(means, truth)}


def _frequentist_predict(data: BoundDataset, train: BoundDataset, X_test, config):
    fit = fit_mle(train, config.tol, config.max_iter)
    if data.spec.response_kind == "binary":
        return {"probs": expit(X_test @ fit.coefficients)}
    # plug-in predictive with parameter uncertainty: N(x'b, s2 + x'Cov x)
    mu = X_test @ fit.coefficients
    var = fit.noise_variance + np.einsum("ij,jk,ik->i", X_test, fit.covariance, X_test)
    return {"dists": [GaussianDist(float(m), float(np.sqrt(v))) for m, v in zip(mu, var)]}


def run_cv(data: BoundDataset, catalog: PriorCatalog | None, folds: FoldPlan,
           config: CVConfig | None = None) -> CVReport:
    """k-fold CV of the frequentist MLE and one Bayesian model per prior set.

    Every fold uses the same Monte Carlo generator seed for all Bayesian
    models, so identical prior sets produce identical scores.
    """
    config = config or CVConfig(seed=folds.seed)
    kind = data.spec.response_kind
    if folds.assignments.shape[0] != data.n:
        raise ArgumentError(f"fold plan covers {folds.assignments.shape[0]} rows, data has {data.n}")
    sets = list(catalog.sets) if catalog is not None else []
    for s in sets:
        require_valid(s, data.spec)
    metric_names = list(BINARY_METRICS if kind == "binary" else CONTINUOUS_METRICS)
    models = [FREQUENTIST] + [s.label for s in sets]
    per_fold = {m: {k: np.empty(folds.k) for k in metric_names} for m in models}

    for fold, (tr, te) in enumerate(folds.splits()):
        train, test = data.subset(tr), data.subset(te)
        if kind == "binary":
            if np.unique(train.response).size < 2:
                raise FoldError("training labels contain a single class", fold)
            if np.unique(test.response).size < 2:
                raise FoldError("test labels contain a single class (AUC undefined)", fold)
        scores = {FREQUENTIST: _score(kind, test.response,
                                      **_frequentist_predict(data, train, test.design_matrix, config))}
        for s in sets:
            post = posterior(train, s, config.tol, config.max_iter)
            if kind == "binary":
                rng = np.random.default_rng([config.seed, fold])
                probs = predictive_binary(post, test.design_matrix, config.mc_draws, rng)
                scores[s.label] = _score(kind, test.response, probs=probs)
            else:
                scores[s.label] = _score(kind, test.response,
                                         dists=predictive_gaussian(post, test.design_matrix))
        for m in models:
            for k in metric_names:
                per_fold[m][k][fold] = scores[m][k]

    metrics = {m: {k: {"per_fold": v.tolist(), "mean": float(np.mean(v))}
                   for k, v in per_fold[m].items()} for m in models}
    sizes = folds.sizes()
    n_test = float(np.mean(sizes))
    n_train = float(np.mean(data.n - sizes))
    comparisons = {}
    for label in models[1:]:
        for k in metric_names:
            higher = (BINARY_METRICS if kind == "binary" else CONTINUOUS_METRICS)[k]
            diff = per_fold[label][k] - per_fold[FREQUENTIST][k]
            comparisons[(label, k)] = nb_ttest(diff if higher else -diff, n_train, n_test)
    return CVReport(metrics, comparisons, folds, config.seed, models, metric_names)
