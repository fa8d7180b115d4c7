"""Shared fixtures and the finite-difference oracle.

Acceptance criteria registered through ``record_criterion`` get one
PASS/FAIL line each in the terminal summary, independent of capture.
"""

from __future__ import annotations

import numpy as np
import pytest

from hrtfgraph.dataset import (
    SyntheticConfig,
    generate_synthetic,
    make_splits,
)

_CRITERIA: list = []


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool, detail: str = ""):
        _CRITERIA.append((name, bool(ok), detail))
        assert ok, f"{name} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok, detail in _CRITERIA:
        status = "PASS" if ok else "FAIL"
        line = f"{name}: {status}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def fd_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, the independent
    oracle every backward pass is checked against."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(got: np.ndarray, want: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(want))), 1e-12)
    return float(np.max(np.abs(got - want))) / scale


@pytest.fixture(scope="session")
def micro_bundle():
    # 10 subjects x 36 directions at K=16: every module exercises in seconds
    return generate_synthetic(
        SyntheticConfig(seed=7, subject_count=10, direction_count=36, K=16)
    )


@pytest.fixture(scope="session")
def micro_split(micro_bundle):
    return make_splits(micro_bundle, (0.6, 0.2, 0.2), measurement_count=3,
                       seed=5)
