"""Gaussian prior sets with provenance, validation and JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .dataset import ModelSpec
from .errors import CatalogParseError, SchemaError, ValidationError
from .glm import GaussianDist

INFORMATIVENESS = ("moderate", "weak", "custom")

CATALOG_SCHEMA = {
    "type": "object",
    "required": ["model_spec_id", "sets"],
    "properties": {
        "model_spec_id": {"type": "string"},
        "sets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "source", "informativeness", "confidence_weight", "entries"],
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "source": {"type": "string"},
                    "informativeness": {"enum": list(INFORMATIVENESS)},
                    "confidence_weight": {"type": "number"},
                    "entries": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["mean", "sd"],
                            "properties": {
                                "mean": {"type": "number"},
                                "sd": {"type": "number"},
                                "justification": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class PriorEntry:
    """One coefficient's prior. ``dist`` raises if ``sd`` is not positive."""

    mean: float
    sd: float
    justification: str = ""

    @property
    def dist(self) -> GaussianDist:
        return GaussianDist(self.mean, self.sd)


@dataclass(frozen=True)
class PriorSet:
    label: str
    source: str
    informativeness: str
    confidence_weight: float
    entries: dict[str, PriorEntry] = field(hash=False)

    def dists(self, names) -> list[GaussianDist]:
        return [self.entries[n].dist for n in names]

    def arrays(self, names) -> tuple[np.ndarray, np.ndarray]:
        """Prior means and sds in the order of ``names``."""
        return (np.array([self.entries[n].mean for n in names], dtype=float),
                np.array([self.entries[n].sd for n in names], dtype=float))

    def with_label(self, label: str) -> "PriorSet":
        return PriorSet(label, self.source, self.informativeness,
                        self.confidence_weight, dict(self.entries))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "source": self.source,
            "informativeness": self.informativeness,
            "confidence_weight": self.confidence_weight,
            "entries": {k: {"mean": e.mean, "sd": e.sd, "justification": e.justification}
                        for k, e in self.entries.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSet":
        entries = {k: PriorEntry(float(v["mean"]), float(v["sd"]),
                                 str(v.get("justification", "")))
                   for k, v in d["entries"].items()}
        return cls(d["label"], d["source"], d["informativeness"],
                   float(d["confidence_weight"]), entries)


@dataclass(frozen=True)
class Finding:
    kind: str  # missing_coefficient | extra_coefficient | invalid_sd | invalid_mean | weight_out_of_range
    coefficient: str | None
    message: str


def validate_prior_set(prior: PriorSet, spec: ModelSpec) -> list[Finding]:
    """Check a prior set against a spec; an empty list means valid."""
    findings = []
    names = spec.coef_names
    for n in names:
        if n not in prior.entries:
            findings.append(Finding("missing_coefficient", n,
                                    f"{prior.label}: no prior for {n!r}"))
    for n in prior.entries:
        if n not in names:
            findings.append(Finding("extra_coefficient", n,
                                    f"{prior.label}: {n!r} is not a model coefficient"))
    for n, e in prior.entries.items():
        if not math.isfinite(e.mean):
            findings.append(Finding("invalid_mean", n, f"{prior.label}: mean of {n!r} is {e.mean}"))
        if not (math.isfinite(e.sd) and e.sd > 0):
            findings.append(Finding("invalid_sd", n,
                                    f"{prior.label}: sd of {n!r} must be positive, got {e.sd}"))
    w = prior.confidence_weight
    if not (math.isfinite(w) and 0.0 <= w <= 1.0):
        findings.append(Finding("weight_out_of_range", None,
                                f"{prior.label}: confidence_weight {w} outside [0, 1]"))
    return findings


def require_valid(prior: PriorSet, spec: ModelSpec) -> None:
    findings = validate_prior_set(prior, spec)
    if findings:
        raise ValidationError("; ".join(f.message for f in findings))


@dataclass(frozen=True)
class PriorCatalog:
    model_spec_id: str
    sets: tuple[PriorSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        labels = [s.label for s in self.sets]
        dup = sorted({x for x in labels if labels.count(x) > 1})
        if dup:
            raise ValidationError(f"duplicate prior set labels: {dup}")

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.sets]

    def get(self, label: str) -> PriorSet:
        for s in self.sets:
            if s.label == label:
                return s
        raise KeyError(f"no prior set {label!r}; available: {self.labels}")

    def to_dict(self) -> dict:
        return {"model_spec_id": self.model_spec_id, "sets": [s.to_dict() for s in self.sets]}

    @classmethod
    def from_dict(cls, d) -> "PriorCatalog":
        try:
            jsonschema.validate(d, CATALOG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
            raise SchemaError(f"catalog field {path}: {exc.message}", field=path) from None
        return cls(d["model_spec_id"], tuple(PriorSet.from_dict(s) for s in d["sets"]))


def catalog_from_json(text: str) -> PriorCatalog:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogParseError(f"malformed catalog JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return PriorCatalog.from_dict(d)


def load_catalog(path: str | Path) -> PriorCatalog:
    return catalog_from_json(Path(path).read_text(encoding="utf-8"))


def save_catalog(catalog: PriorCatalog, path: str | Path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(catalog.to_dict(), indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")
