import os
import subprocess
import sys

import numpy as np
import pytest

from hybrid_afem import kernels
from hybrid_afem._accel import HAS_NUMBA
from hybrid_afem.mesh import bisect, build_initial_mesh

pytestmark = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def random_inputs(seed=0):
    rng = np.random.default_rng(seed)
    m = build_initial_mesh(5, 5)
    m = bisect(m, rng.choice(m.n_triangles, 12, replace=False))
    nt = m.n_triangles
    c = np.ascontiguousarray(m.coords)
    return m, rng, c, nt


def assert_same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(x).max()))


def test_local_blocks_agree():
    m, rng, c, nt = random_inputs()
    args = (np.ascontiguousarray(m.grad_lambda), np.ascontiguousarray(m.areas),
            rng.random(nt) + 0.1, rng.normal(size=(nt, 2)), rng.random(nt), rng.random(nt) * 0.1)
    assert_same(kernels.p1_local_blocks_numpy(*args), kernels.p1_local_blocks_numba(*args))


def test_small_terms_agree():
    m, rng, c, nt = random_inputs(1)
    args = (c, np.ascontiguousarray(m.areas), np.ascontiguousarray(m.local_edge_lengths),
            rng.normal(size=nt), rng.normal(size=(nt, 2)), rng.normal(size=(nt, 3)))
    assert_same(kernels.small_terms_numpy(*args), kernels.small_terms_numba(*args))


def test_large_terms_agree():
    m, rng, c, nt = random_inputs(2)
    d = m.inradii * rng.uniform(0.05, 0.95, nt)
    args = (c, d, rng.normal(size=nt), rng.normal(size=(nt, 2)), rng.normal(size=(nt, 3)))
    assert_same(kernels.large_terms_numpy(*args), kernels.large_terms_numba(*args))


SCRIPT = """
import numpy as np
from hybrid_afem import kernels
from hybrid_afem.amr import estimate, solve_on
from hybrid_afem.mesh import build_initial_mesh
from hybrid_afem.problems import define_problem
p = define_problem("1", 1e-4)
m = build_initial_mesh(10, 10)
u = solve_on(m, p.data)
ef, hb = estimate(m, u, p.data)
print(kernels.USE_NUMBA, repr(ef.total), repr(hb.total))
"""


def test_environment_switch_selects_path():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, HYBRID_AFEM_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = res.stdout.split()
    assert out["0"][0] == "False" and out["1"][0] == "True"
    for i in (1, 2):
        assert float(out["0"][i]) == pytest.approx(float(out["1"][i]), rel=1e-12)
