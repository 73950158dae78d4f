"""Command-line entry point: ``llmprior {elicit,evaluate,cv,posterior}``.

Exit codes: 0 success, 1 validation, 2 numeric, 3 transport, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bayes, cv, dataset, elicit, evaluation, glm, priors
from .errors import ConfigError, LLMPriorError, ValidationError

log = logging.getLogger("llmprior")

GRID_POINTS = 512
GRID_HALF_WIDTH = 4.0  # in sds of the widest distribution


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str | None = None
    spec_path: str | None = None
    catalog_path: str | None = None
    endpoint_config_path: str | None = None
    seed: int = 0
    folds: int = 5
    output_dir: str = "."
    bootstrap_reps: int = 0
    mc_draws: int = bayes.DEFAULT_DRAWS
    prior_label: str | None = None

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError(f"--folds must be at least 2, got {self.folds}")


# -- helpers -----------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_spec(cfg: RunConfig) -> dataset.ModelSpec:
    if cfg.spec_path:
        return dataset.load_spec(cfg.spec_path)
    if cfg.dataset_path in ("heart", "concrete"):
        return dataset.load_spec(dataset.bundled_path(f"{cfg.dataset_path}_spec.json"))
    raise ConfigError("--spec is required")


def _load_data(cfg: RunConfig) -> dataset.BoundDataset:
    spec = _load_spec(cfg)
    if not cfg.dataset_path:
        raise ConfigError("--data is required")
    path = Path(cfg.dataset_path)
    if cfg.dataset_path in ("heart", "concrete") and not path.exists():
        path = dataset.bundled_path(f"{cfg.dataset_path}.csv")
    data = dataset.load_csv(path, spec)
    if data.dropped:
        log.info("dropped %d incomplete rows", data.dropped)
    return data


def _load_catalog(cfg: RunConfig) -> priors.PriorCatalog:
    if not cfg.catalog_path:
        raise ConfigError("--catalog is required")
    return priors.load_catalog(cfg.catalog_path)


def density_grid(dists, points: int = GRID_POINTS) -> np.ndarray:
    """Shared grid covering every distribution to +-4 sds of the widest one.

    A distribution much narrower than the span would fall between grid
    points, so each one also adds ``points`` nodes across its own +-4 sds.
    """
    widest = max(d.sd for d in dists)
    lo = min(d.mean for d in dists) - GRID_HALF_WIDTH * widest
    hi = max(d.mean for d in dists) + GRID_HALF_WIDTH * widest
    parts = [np.linspace(lo, hi, points)]
    for d in dists:
        if d.sd < widest:
            parts.append(np.linspace(d.mean - GRID_HALF_WIDTH * d.sd,
                                     d.mean + GRID_HALF_WIDTH * d.sd, points))
    return np.unique(np.concatenate(parts))


def _curves(named_dists: dict[str, glm.GaussianDist]) -> dict:
    grid = density_grid(list(named_dists.values()))
    return {"grid": grid.tolist(),
            "curves": {k: {"mean": d.mean, "sd": d.sd, "density": d.pdf(grid).tolist()}
                       for k, d in named_dists.items()}}


# -- commands ----------------------------------------------------------------

def cmd_elicit(cfg: RunConfig) -> int:
    spec = _load_spec(cfg)
    if not cfg.endpoint_config_path:
        raise ConfigError("--endpoint is required")
    endpoint = elicit.load_endpoint_config(cfg.endpoint_config_path)
    endpoint.api_key()  # fail fast on a missing key variable
    out = _out_dir(cfg)
    record = elicit.elicit(spec, endpoint, audit_path=out / "elicitation_audit.jsonl")
    if record.parse_failed:
        raw = out / "raw_response.txt"
        raw.write_text(record.raw_response, encoding="utf-8")
        print(f"error: {record.error}\nraw response saved to {raw}", file=sys.stderr)
        return ValidationError.exit_code
    target = Path(cfg.catalog_path) if cfg.catalog_path else out / "catalog.json"
    priors.save_catalog(elicit.record_catalog(record, spec), target)
    print(f"wrote {len(record.parsed_sets)} prior sets to {target}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    catalog = _load_catalog(cfg)
    out = _out_dir(cfg)
    fit = glm.fit_mle(data)
    mle = fit
    if cfg.bootstrap_reps:
        mle = glm.bootstrap_mle(data, cfg.bootstrap_reps, cfg.seed)
    report = evaluation.kl_table(mle, catalog, data.spec)
    _write_json(out / "mle_fit.json", fit.to_dict())
    _write_json(out / "kl_report.json", report.to_dict())
    (out / "kl_table.txt").write_text(report.to_text(), encoding="utf-8")
    marg = dict(zip(mle.names, mle.marginals))
    curves = {}
    for c in data.spec.predictor_names:
        named = {"MLE": marg[c]}
        named.update({label: catalog.get(label).entries[c].dist for label in report.labels})
        curves[c] = _curves(named)
    _write_json(out / "curves.json", {"mle_source": report.mle_source, "coefficients": curves})
    sys.stdout.write(report.to_text())
    return 0


def cmd_cv(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    catalog = _load_catalog(cfg) if cfg.catalog_path else None
    out = _out_dir(cfg)
    plan = dataset.make_folds(data, cfg.folds, cfg.seed)
    report = cv.run_cv(data, catalog, plan, cv.CVConfig(seed=cfg.seed, mc_draws=cfg.mc_draws))
    _write_json(out / "cv_report.json", report.to_dict())
    (out / "cv_table.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_posterior(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    catalog = _load_catalog(cfg)
    if not cfg.prior_label:
        raise ConfigError(f"--prior-label is required; available: {catalog.labels}")
    try:
        prior = catalog.get(cfg.prior_label)
    except KeyError as exc:
        raise ValidationError(exc.args[0]) from None
    out = _out_dir(cfg)
    fit = glm.fit_mle(data)
    post = bayes.posterior(data, prior)
    coefs = {}
    for name, m, q in zip(data.coef_names, fit.marginals, post.marginals):
        coefs[name] = _curves({"prior": prior.entries[name].dist, "MLE": m, "posterior": q})
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in prior.label)
    target = out / f"posterior_{safe}.json"
    _write_json(target, {"prior_label": prior.label, "method": post.method,
                         "noise_variance": post.noise_variance,
                         "noise_variance_source": post.to_dict()["noise_variance_source"],
                         "coefficients": coefs})
    print(f"wrote {target}")
    return 0


COMMANDS = {"elicit": cmd_elicit, "evaluate": cmd_evaluate, "cv": cmd_cv,
            "posterior": cmd_posterior}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmprior",
        description="Elicit Gaussian coefficient priors from LLMs and score them against data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "elicit": "prompt an LLM endpoint and write a prior catalog",
        "evaluate": "fit the MLE, write the KL table and density curves",
        "cv": "k-fold cross-validation with corrected t-tests",
        "posterior": "prior / MLE / posterior curves for one prior set",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--data", help="CSV path, or 'heart' / 'concrete' for bundled data")
        p.add_argument("--spec", help="model spec JSON")
        p.add_argument("--catalog", help="prior catalog JSON")
        p.add_argument("--endpoint", help="endpoint config JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--bootstrap-reps", type=int, default=0,
                       help="use a bootstrap MLE distribution (0 = Fisher information)")
        p.add_argument("--mc-draws", type=int, default=bayes.DEFAULT_DRAWS)
        p.add_argument("--prior-label")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(
            dataset_path=args.data, spec_path=args.spec, catalog_path=args.catalog,
            endpoint_config_path=args.endpoint, seed=args.seed, folds=args.folds,
            output_dir=args.out, bootstrap_reps=args.bootstrap_reps,
            mc_draws=args.mc_draws, prior_label=args.prior_label)
        return COMMANDS[args.command](cfg)
    except LLMPriorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
