"""CSV ingestion, model specifications and fold assignment."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ArgumentError, DomainError, EmptyDataError, SchemaError

INTERCEPT = "intercept"

_RULES = {
    "gt": lambda v, t: v > t,
    "ge": lambda v, t: v >= t,
    "lt": lambda v, t: v < t,
    "le": lambda v, t: v <= t,
    "eq": lambda v, t: v == t,
}


@dataclass(frozen=True)
class Predictor:
    name: str
    description: str = ""
    unit: str = ""


@dataclass(frozen=True)
class ModelSpec:
    """Response, ordered predictors and intercept flag for one regression.

    ``response_rule`` optionally derives a binary response from a raw column,
    e.g. ``{"op": "gt", "threshold": 0}`` maps a severity score to
    disease-present. The remaining free-text fields only feed the prompt.
    """

    response_name: str
    response_kind: str
    predictors: tuple[Predictor, ...]
    intercept: bool = True
    id: str = ""
    response_rule: dict | None = None
    response_description: str = ""
    outcome: str = ""
    persona: str = ""
    domain_knowledge: str = ""
    extra_context: str = ""

    def __post_init__(self):
        if self.response_kind not in ("binary", "continuous"):
            raise SchemaError(f"response_kind must be 'binary' or 'continuous', "
                              f"got {self.response_kind!r}", field="response_kind")
        names = [p.name for p in self.predictors]
        if any(not n for n in names):
            raise SchemaError("predictor names must be non-empty", field="predictors")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate predictor names: {dup}", field="predictors")
        if self.intercept and INTERCEPT in names:
            raise SchemaError(f"{INTERCEPT!r} is reserved for the intercept",
                              field="predictors")
        if self.response_rule is not None and self.response_rule.get("op") not in _RULES:
            raise SchemaError(f"unknown response_rule op {self.response_rule.get('op')!r}",
                              field="response_rule.op")

    @property
    def predictor_names(self) -> list[str]:
        return [p.name for p in self.predictors]

    @property
    def coef_names(self) -> list[str]:
        """Coefficient names in design-matrix column order."""
        return ([INTERCEPT] if self.intercept else []) + self.predictor_names

    @property
    def likelihood(self) -> str:
        return "logistic" if self.response_kind == "binary" else "linear"

    def derive_response(self, value: float) -> float:
        if self.response_rule is None:
            return value
        op = _RULES[self.response_rule["op"]]
        return 1.0 if op(value, float(self.response_rule["threshold"])) else 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        for key in ("response_name", "response_kind", "predictors"):
            if key not in d:
                raise SchemaError(f"model spec is missing {key!r}", field=key)
        preds = []
        for i, p in enumerate(d["predictors"]):
            if isinstance(p, str):
                p = {"name": p}
            if not isinstance(p, dict) or "name" not in p:
                raise SchemaError("each predictor needs a name", field=f"predictors[{i}].name")
            preds.append(Predictor(str(p["name"]), str(p.get("description", "")),
                                   str(p.get("unit", ""))))
        known = {f for f in cls.__dataclass_fields__} - {"predictors"}
        kwargs = {k: v for k, v in d.items() if k in known}
        return cls(predictors=tuple(preds), **kwargs)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "response_name": self.response_name,
            "response_kind": self.response_kind,
            "intercept": self.intercept,
            "predictors": [{"name": p.name, "description": p.description, "unit": p.unit}
                           for p in self.predictors],
        }
        for key in ("response_rule", "response_description", "outcome", "persona",
                    "domain_knowledge", "extra_context"):
            value = getattr(self, key)
            if value:
                d[key] = value
        return d


def load_spec(path: str | Path) -> ModelSpec:
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    return ModelSpec.from_dict(d)


@dataclass(frozen=True, eq=False)
class BoundDataset:
    spec: ModelSpec
    design_matrix: np.ndarray
    response: np.ndarray
    dropped: int = 0
    source_rows: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.design_matrix.setflags(write=False)
        self.response.setflags(write=False)

    @property
    def n(self) -> int:
        return self.response.shape[0]

    @property
    def p(self) -> int:
        return len(self.spec.predictors)

    @property
    def d(self) -> int:
        return self.design_matrix.shape[1]

    @property
    def coef_names(self) -> list[str]:
        return self.spec.coef_names

    def subset(self, rows) -> "BoundDataset":
        rows = np.asarray(rows)
        src = None if self.source_rows is None else self.source_rows[rows]
        return BoundDataset(self.spec, self.design_matrix[rows].copy(),
                            self.response[rows].copy(), 0, src)


def bind(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> BoundDataset:
    """Bind in-memory arrays. ``X`` holds predictor columns only."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[1] != len(spec.predictors):
        raise ArgumentError(f"expected {len(spec.predictors)} predictor columns, "
                            f"got {X.shape[1]}")
    if X.shape[0] != y.shape[0]:
        raise ArgumentError("X and y have different row counts")
    if spec.intercept:
        X = np.column_stack([np.ones(len(y)), X])
    if spec.response_kind == "binary" and not np.isin(y, (0.0, 1.0)).all():
        bad = sorted(set(y[~np.isin(y, (0.0, 1.0))].tolist()))[:5]
        raise DomainError(f"binary response {spec.response_name!r} has values "
                          f"outside {{0, 1}}: {bad}")
    return BoundDataset(spec, X, y, 0, np.arange(len(y)))


def _to_float(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path: str | Path, spec: ModelSpec) -> BoundDataset:
    """Read a comma-separated file and bind the columns named by ``spec``.

    Rows with a missing or non-numeric cell in any used column are dropped
    (complete-case analysis); the count is kept in ``BoundDataset.dropped``.
    Surviving rows keep their file order.
    """
    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        used = [spec.response_name] + spec.predictor_names
        for col in used:
            if col not in header:
                raise SchemaError(f"{path}: column {col!r} not found in header", field=col)
        idx = [header.index(c) for c in used]
        rows, kept, dropped = [], [], 0
        for i, record in enumerate(reader):
            if not record or all(not c.strip() for c in record):
                continue
            vals = [_to_float(record[j]) if j < len(record) else None for j in idx]
            if any(v is None for v in vals):
                dropped += 1
                continue
            rows.append(vals)
            kept.append(i)
    if not rows:
        raise EmptyDataError(f"{path}: no usable rows ({dropped} dropped)")
    arr = np.array(rows, dtype=float)
    y = np.array([spec.derive_response(v) for v in arr[:, 0]])
    data = bind(spec, arr[:, 1:], y)
    return BoundDataset(spec, data.design_matrix, data.response, dropped,
                        np.array(kept))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    stratified: bool

    def __post_init__(self):
        self.assignments.setflags(write=False)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            yield self.train_rows(fold), self.test_rows(fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "stratified": self.stratified,
                "assignments": self.assignments.tolist()}


def make_folds(data: BoundDataset, k: int, seed: int) -> FoldPlan:
    """Assign rows to ``k`` folds, stratified by class for binary responses.

    Rows are shuffled within each stratum, strata are concatenated, and the
    i-th row of that sequence goes to fold ``i % k``. This keeps fold sizes
    within one of each other both overall and inside every stratum.
    """
    n = data.n
    if not 2 <= k <= n:
        raise ArgumentError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    stratified = data.spec.response_kind == "binary"
    if stratified:
        order = np.concatenate([rng.permutation(np.flatnonzero(data.response == c))
                                for c in (0.0, 1.0)])
    else:
        order = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    return FoldPlan(k, assignments, seed, stratified)


def bundled_path(name: str) -> Path:
    """Path of a file shipped in ``llmprior/data`` (datasets, specs, catalogs)."""
    return Path(str(resources.files("llmprior") / "data" / name))


def load_bundled(name: str) -> BoundDataset:
    """Load ``"heart"`` or ``"concrete"`` with its bundled spec."""
    spec = load_spec(bundled_path(f"{name}_spec.json"))
    return load_csv(bundled_path(f"{name}.csv"), spec)
