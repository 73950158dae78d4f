"""Scoring prior sets against the data.

The main score is the KL divergence from the Gaussian MLE distribution to a
prior, integrated under the MLE density:

    KL = integral p_mle(t) log(p_mle(t) / p_prior(t)) dt

A prior that puts little mass where the MLE distribution concentrates is
penalized heavily; a wide prior that merely contains the MLE is penalized
lightly. Values are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .dataset import ModelSpec
from .errors import ArgumentError, ValidationError
from .glm import GaussianDist
from .priors import INFORMATIVENESS, PriorCatalog, PriorSet, validate_prior_set

PERCENTILES = (2.5, 25.0, 50.0, 75.0, 97.5)


def kl_gaussian(mle: GaussianDist, prior: GaussianDist) -> float:
    """KL(mle || prior) for two univariate normals, in nats."""
    vals = (mle.mean, mle.sd, prior.mean, prior.sd)
    if not all(math.isfinite(v) for v in vals):
        raise ArgumentError(f"non-finite Gaussian parameters: {vals}")
    if mle.sd <= 0 or prior.sd <= 0:
        raise ArgumentError("standard deviations must be positive")
    d = mle.mean - prior.mean
    return (math.log(prior.sd / mle.sd)
            + (mle.sd**2 + d * d) / (2 * prior.sd**2) - 0.5)


def column_order(sets) -> list[PriorSet]:
    """Most informative first (moderate, weak, custom), then source, then label."""
    return sorted(sets, key=lambda s: (INFORMATIVENESS.index(s.informativeness)
                                       if s.informativeness in INFORMATIVENESS else 99,
                                       s.source, s.label))


@dataclass(frozen=True)
class KLReport:
    labels: list[str]
    coefficients: list[str]
    rows: dict[str, dict[str, float]]
    averages: dict[str, float]
    avg_ranks: dict[str, float]
    mle_source: str = "fisher"
    sources: dict[str, str] | None = None
    informativeness: dict[str, str] | None = None

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "coefficients": self.coefficients,
            "rows": self.rows,
            "averages": self.averages,
            "avg_ranks": self.avg_ranks,
            "mle_source": self.mle_source,
            "sources": self.sources,
            "informativeness": self.informativeness,
        }

    def to_text(self, digits: int = 2) -> str:
        """Aligned table: coefficients as rows, prior sets as columns."""
        sources = self.sources or {}
        infos = self.informativeness or {}
        head = [["Prior set"] + self.labels]
        if sources:
            head.append(["Source"] + [sources.get(l, "") for l in self.labels])
        if infos:
            head.append(["Informative"] + [infos.get(l, "") for l in self.labels])
        body = [[c] + [f"{self.rows[c][l]:.{digits}f}" for l in self.labels]
                for c in self.coefficients]
        foot = [["Avg KL Div."] + [f"{self.averages[l]:.{digits}f}" for l in self.labels],
                ["Avg Rank"] + [f"{self.avg_ranks[l]:.2f}" for l in self.labels]]
        table = head + body + foot
        widths = [max(len(r[j]) for r in table) for j in range(len(table[0]))]

        def fmt(r):
            return "  ".join([r[0].ljust(widths[0])] +
                             [c.rjust(w) for c, w in zip(r[1:], widths[1:])])

        rule = "-" * len(fmt(table[0]))
        lines = [fmt(r) for r in head] + [rule] + [fmt(r) for r in body] + [rule]
        lines += [fmt(r) for r in foot]
        return "\n".join(lines) + "\n" + f"(MLE distribution: {self.mle_source})\n"


def kl_table(mle_fit, catalog: PriorCatalog, spec: ModelSpec) -> KLReport:
    """Per-predictor KL of every prior set against the MLE marginals.

    ``mle_fit`` is anything with ``names``, ``marginals`` and ``mle_source``
    (an MLEFit or a BootstrapResult). The intercept is left out.
    """
    problems = [f.message for s in catalog.sets for f in validate_prior_set(s, spec)]
    if problems:
        raise ValidationError("catalog does not match the model spec: " + "; ".join(problems))
    if not catalog.sets:
        raise ValidationError("catalog has no prior sets")
    marg = dict(zip(mle_fit.names, mle_fit.marginals))
    coefs = spec.predictor_names
    sets = column_order(catalog.sets)
    labels = [s.label for s in sets]
    rows = {c: {s.label: kl_gaussian(marg[c], s.entries[c].dist) for s in sets} for c in coefs}
    M = np.array([[rows[c][l] for l in labels] for c in coefs])
    ranks = np.vstack([rankdata(r, method="average") for r in M])
    return KLReport(
        labels=labels,
        coefficients=coefs,
        rows=rows,
        averages={l: float(v) for l, v in zip(labels, M.mean(axis=0))},
        avg_ranks={l: float(v) for l, v in zip(labels, ranks.mean(axis=0))},
        mle_source=getattr(mle_fit, "mle_source", "fisher"),
        sources={s.label: s.source for s in sets},
        informativeness={s.label: s.informativeness for s in sets},
    )


def summarize(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float).ravel()
    out = {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0}
    for q, val in zip(PERCENTILES, np.percentile(v, PERCENTILES)):
        out[f"q{q:g}"] = float(val)
    return out


@dataclass(frozen=True, eq=False)
class PriorPredictive:
    samples: np.ndarray  # reps x n simulated responses
    coefficients: np.ndarray  # reps x d coefficient draws
    summary: dict[str, float]  # pooled over every simulated response
    replicate_stats: dict[str, np.ndarray]  # per replicated dataset: mean, sd

    def tail_probabilities(self, observed) -> dict[str, float]:
        """Fraction of replicated datasets whose mean / sd is at most the observed one."""
        y = np.asarray(observed, dtype=float)
        obs = {"mean": y.mean(), "sd": y.std(ddof=1)}
        return {k: float(np.mean(self.replicate_stats[k] <= v)) for k, v in obs.items()}


def prior_predictive_sample(spec: ModelSpec, prior: PriorSet, design, reps: int,
                            seed: int, noise_sd: float | None = None) -> PriorPredictive:
    """Simulate datasets from the prior predictive distribution.

    Each replicate draws coefficients from the prior, then a response vector
    on ``design`` (full design matrix, intercept column included) from the
    Bernoulli-logit or Gaussian likelihood.
    """
    findings = validate_prior_set(prior, spec)
    if findings:
        raise ValidationError("; ".join(f.message for f in findings))
    if reps < 1:
        raise ArgumentError(f"reps must be >= 1, got {reps}")
    X = np.atleast_2d(np.asarray(design, dtype=float))
    names = spec.coef_names
    if X.shape[1] != len(names):
        raise ArgumentError(f"design has {X.shape[1]} columns, spec has {len(names)} coefficients")
    if spec.response_kind == "continuous" and (noise_sd is None or not noise_sd > 0):
        raise ArgumentError("linear prior predictive needs a positive noise_sd")
    rng = np.random.default_rng(seed)
    mean, sd = prior.arrays(names)
    theta = mean + sd * rng.standard_normal((reps, len(names)))
    eta = theta @ X.T
    if spec.response_kind == "binary":
        y = (rng.random(eta.shape) < expit(eta)).astype(float)
    else:
        y = eta + noise_sd * rng.standard_normal(eta.shape)
    stats = {"mean": y.mean(axis=1),
             "sd": y.std(axis=1, ddof=1) if y.shape[1] > 1 else np.zeros(reps)}
    return PriorPredictive(y, theta, summarize(y), stats)
