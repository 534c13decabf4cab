import os
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memtherm import ModelParams, build_hamiltonian, diagonalize, initial_state_vector
from memtherm.diagnostics import analyze

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ROOT = Path(__file__).resolve().parents[1]
CACHE_DIR = Path(os.environ.get("MEMTHERM_TEST_CACHE", ROOT / ".cache" / "spectra"))


@lru_cache(maxsize=None)
def small_system(N: int):
    params = ModelParams.from_size(N)
    m = build_hamiltonian(params)
    s = diagonalize(m)
    vec = initial_state_vector(params, m.basis)
    return m, s, vec


@lru_cache(maxsize=None)
def small_report(N: int):
    m, s, vec = small_system(N)
    return analyze(s, m.basis, vec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


# acceptance bookkeeping: one summary line per criterion
CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(k: int, ok: bool, detail: str = ""):
        CRITERIA.setdefault(k, []).append((bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok = all(o for o, _ in CRITERIA[k])
        details = "; ".join(d for _, d in CRITERIA[k] if d)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {details}")
