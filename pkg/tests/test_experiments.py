import numpy as np
import pytest

from hybrid_afem import experiments as ex
from hybrid_afem.fem import assemble_galerkin, assemble_supg, solve
from hybrid_afem.mesh import build_initial_mesh
from hybrid_afem.problems import define_problem

from conftest import sweep_rows


def test_sweep_mesh_has_200_triangles():
    rows = sweep_rows()
    assert [r.epsilon for r in rows] == list(ex.SWEEP_EPSILONS)
    # large elements appear once the layer width drops below the inradius
    R = build_initial_mesh(10, 10).inradii[0]
    for r in rows:
        assert r.large_elements == (200 if np.sqrt(r.epsilon) < R else 0)


def test_check_sweep_reports_every_entry():
    checks = ex.check_sweep(sweep_rows())
    assert len(checks) == 2 * len(ex.SWEEP_EPSILONS) + 2


def test_run_amr_defaults_to_published_tolerance():
    res, summ = ex.run_amr("2", "hybrid", max_dofs=None, tol=None, max_iter=1)
    assert summ.problem == "2" and summ.iterations == 2


def test_smoke_convection_properties():
    rep = ex.smoke_convection()
    assert rep.passed, [c for c in rep.checks if not c[1]]
    assert any("gamma == 1" in c[0] for c in rep.checks)


def test_smoke_convection_zero_field_fallback():
    p = define_problem("conv", 1e-3, advection=(0.0, 0.0))
    m = build_initial_mesh(6, 6)
    assert np.allclose(solve(assemble_supg(m, p.data)).values,
                       solve(assemble_galerkin(m, p.data)).values, atol=1e-12)


def test_smoke_interface_properties():
    rep = ex.smoke_interface()
    assert rep.passed, [c for c in rep.checks if not c[1]]


def test_run_smoke_rejects_unknown():
    with pytest.raises(ValueError):
        ex.run_smoke("nope")
