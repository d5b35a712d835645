import functools

import numpy as np
import pytest

from hybrid_afem.experiments import run_amr, run_sweep
from hybrid_afem.mesh import build_initial_mesh

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def sweep_rows():
    return tuple(run_sweep())


@functools.lru_cache(maxsize=None)
def amr_run(problem, estimator):
    tol = {"2": 0.1, "3": 0.01}[problem]
    return run_amr(problem, estimator, tol=tol, check_properties=True)


@pytest.fixture
def mesh4():
    return build_initial_mesh(4, 4)


@pytest.fixture
def mesh10():
    return build_initial_mesh(10, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
