import numpy as np
import pytest

from hybrid_afem.amr import (AmrConfig, AmrError, AmrRecord, AmrTrace, adaptive_solve,
                             count_dofs, dorfler_mark, is_minimal_bulk, patch_ratio)
from hybrid_afem.mesh import build_initial_mesh
from hybrid_afem.problems import define_problem


def test_single_dominant_element():
    ind = np.zeros(10)
    ind[7] = 3.0
    assert dorfler_mark(ind, 0.5).tolist() == [7]


@pytest.mark.parametrize("n", [1, 2, 7, 32])
def test_uniform_indicators_take_lowest_ids(n):
    assert dorfler_mark(np.ones(n), 0.5).tolist() == list(range(int(np.ceil(n / 2))))


def test_greedy_prefix():
    ind = np.sqrt([1, 9, 1, 4, 1])
    assert dorfler_mark(ind, 0.5).tolist() == [1]
    assert dorfler_mark(ind, 0.6).tolist() == [1, 3]
    assert dorfler_mark(ind, 1.0).tolist() == [0, 1, 2, 3, 4]


def test_mark_edge_cases():
    assert len(dorfler_mark(np.zeros(4))) == 0
    for bad in ([-1.0, 2.0], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            dorfler_mark(np.array(bad))
    with pytest.raises(ValueError):
        dorfler_mark(np.ones(3), 0.0)


def test_minimal_bulk_check():
    ind = np.sqrt([1, 9, 1, 4, 1])
    assert is_minimal_bulk(ind, np.array([1]), 0.5)
    assert not is_minimal_bulk(ind, np.array([1, 3]), 0.5)
    assert not is_minimal_bulk(ind, np.array([3]), 0.5)


def test_config_validation():
    for kw in ({"theta_d": 0.0}, {"estimator": "x"}, {"stop_on": "y"}, {"tol": -1.0}):
        with pytest.raises(ValueError):
            AmrConfig(**kw)
    with pytest.raises(ValueError):
        adaptive_solve(define_problem("2"), AmrConfig())


def test_loose_tolerance_stops_immediately():
    res = adaptive_solve(define_problem("2"), AmrConfig(tol=100.0))
    assert res.converged and len(res.trace.records) == 1
    assert res.mesh.n_triangles == 32


def test_dofs_increase_and_meshes_conform():
    cfg = AmrConfig(max_dofs=400, estimator="residual", check_properties=True)
    res = adaptive_solve(define_problem("3"), cfg)
    dofs = res.trace.column("dofs")
    assert np.all(np.diff(dofs) > 0) and dofs[-1] >= 400
    assert res.trace.column("conformity").max() <= 1e-10
    assert count_dofs(res.mesh) == res.mesh.n_vertices


def test_trace_rejects_stalled_dofs():
    tr = AmrTrace("hybrid")
    rec = AmrRecord(0, 10, 8, 1.0, 1.0, 1.0, 1.0, 0.0)
    tr.append(rec)
    with pytest.raises(AmrError):
        tr.append(rec)


def test_decay_slope_of_power_law():
    tr = AmrTrace("hybrid")
    for i, n in enumerate(np.geomspace(50, 50000, 12).astype(int)):
        tr.append(AmrRecord(i, int(n), 2 * int(n), n ** -0.5, 0, 0, 0, 0))
    assert tr.decay_slope() == pytest.approx(-0.5, abs=1e-3)


def test_trace_csv_is_deterministic(tmp_path):
    cfg = AmrConfig(max_dofs=200)
    paths = []
    for i in range(2):
        res = adaptive_solve(define_problem("2"), cfg)
        paths.append(tmp_path / f"t{i}.csv")
        res.trace.write_csv(paths[-1])
    strip = lambda p: [l.rsplit(",", 1)[0] for l in p.read_text().splitlines()]
    assert strip(paths[0]) == strip(paths[1])


def test_patch_ratio_uniform():
    m = build_initial_mesh(4, 4)
    ones = np.ones(m.n_triangles)
    r = patch_ratio(m, ones, ones)
    # smallest patch is a corner element with two neighbours
    assert r == pytest.approx(1 / 2)


def test_estimator_stopping_without_exact_solution():
    p = define_problem("iface", jump=10.0)
    res = adaptive_solve(p, AmrConfig(tol=0.5, stop_on="estimator"))
    assert res.converged
    assert np.isnan(res.trace.last.err)
    assert res.trace.last.xi <= 0.5
