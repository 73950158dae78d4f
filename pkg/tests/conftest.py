import numpy as np
import pytest

from llmprior.dataset import ModelSpec, Predictor, bind, load_bundled
from llmprior.priors import PriorEntry, PriorSet


@pytest.fixture(scope="session")
def heart():
    return load_bundled("heart")


@pytest.fixture(scope="session")
def concrete():
    return load_bundled("concrete")


def make_spec(names, kind="continuous", intercept=True, **kw):
    return ModelSpec(response_name="y", response_kind=kind,
                     predictors=tuple(Predictor(n, f"{n} description", "unit") for n in names),
                     intercept=intercept, id="test", **kw)


def make_data(X, y, kind="continuous", intercept=True, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    return bind(make_spec(names, kind, intercept), X, y)


def flat_prior(names, sd=1e6, label="flat", mean=0.0):
    return PriorSet(label, "manual", "weak", 1.0,
                    {n: PriorEntry(float(np.broadcast_to(mean, len(names))[i]), sd)
                     for i, n in enumerate(names)})


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
