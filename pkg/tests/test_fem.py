import numpy as np
import pytest
import scipy.sparse as sp

from hybrid_afem.fem import (CONVECTION_REACTION, DIFFUSION, DiscreteSolution, ProblemData,
                             SolverError, SparseSystem, assemble_galerkin, assemble_supg,
                             energy_norm_error, interpolate, project_data, solve,
                             supg_parameters)
from hybrid_afem.mesh import Mesh, build_initial_mesh, uniform_refine
from hybrid_afem.problems import define_problem

UNIT = (0.0, 1.0, 0.0, 1.0)


def one_triangle():
    return Mesh([[0, 0], [1, 0], [0, 1]], [[1, 2, 0]])


def dense(system):
    return system.matrix.toarray()


def test_two_triangle_laplacian_by_hand():
    m = build_initial_mesh(1, 1, UNIT)
    K = dense(assemble_galerkin(m, ProblemData()))
    # vertex ids: 0=(0,0) 1=(1,0) 2=(0,1) 3=(1,1)
    assert K[0, 0] == pytest.approx(1.0)     # both acute corners: 1/2 + 1/2
    assert K[1, 1] == pytest.approx(1.0)     # right-angle corner
    assert K[0, 1] == pytest.approx(-0.5)
    assert K[0, 3] == pytest.approx(0.0, abs=1e-15)   # across the hypotenuse
    assert np.allclose(K, K.T)
    assert np.allclose(K.sum(axis=1), 0.0)


def test_mass_block_on_one_element():
    m = one_triangle()
    with_b = dense(assemble_galerkin(m, ProblemData(reaction=1.0)))
    without = dense(assemble_galerkin(m, ProblemData()))
    area = 0.5
    expected = area / 12 * (np.ones((3, 3)) + np.eye(3))
    assert np.allclose(with_b - without, expected, atol=1e-15)


def test_convection_block_exact_for_constant_field():
    m = one_triangle()
    a = (0.3, -1.7)
    conv = dense(assemble_galerkin(m, ProblemData(advection=a))) - dense(
        assemble_galerkin(m, ProblemData()))
    g = m.grad_lambda[0]
    ids = m.triangles[0]
    exact = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            exact[ids[i], ids[j]] = np.dot(a, g[j]) * 0.5 / 3
    assert np.allclose(conv, exact, atol=1e-15)


def test_supg_single_element_by_hand():
    m = one_triangle()
    data = ProblemData(advection=(1.0, 0.0))
    added = dense(assemble_supg(m, data, delta0=1.0)) - dense(assemble_galerkin(m, data))
    h = np.sqrt(2.0)
    gx = np.zeros(3)
    gx[m.triangles[0]] = m.grad_lambda[0, :, 0]
    assert np.allclose(added, h * 0.5 * np.outer(gx, gx), atol=1e-15)


def test_supg_zero_delta_or_zero_field_equals_galerkin(mesh4):
    d1 = ProblemData(source=lambda x, y: x + y, advection=(1.0, 2.0), reaction=1.0)
    assert np.array_equal(dense(assemble_supg(mesh4, d1, 0.0)),
                          dense(assemble_galerkin(mesh4, d1)))
    d0 = ProblemData(source=lambda x, y: x + y, reaction=1.0)
    s, g = assemble_supg(mesh4, d0), assemble_galerkin(mesh4, d0)
    assert np.array_equal(dense(s), dense(g)) and np.array_equal(s.rhs, g.rhs)


def test_supg_parameter_formula(mesh4):
    adv = np.tile([3.0, 4.0], (32, 1))
    assert np.allclose(supg_parameters(mesh4, adv, 0.5), 0.5 * mesh4.diameters / 5.0)
    with pytest.raises(ValueError):
        supg_parameters(mesh4, adv, -1.0)


def test_identity_system():
    m = build_initial_mesh(1, 1)
    b = np.array([1.0, -2.0, 3.0, 4.5])
    system = SparseSystem(m, sp.identity(4, format="csr"), b, np.zeros(0, dtype=int),
                          np.zeros(0))
    assert np.allclose(solve(system).values, b)


@pytest.mark.parametrize("n", [1, 4])
def test_linear_dirichlet_data_reproduced(n):
    m = build_initial_mesh(n, n)
    data = ProblemData(dirichlet=lambda x, y: x + 0 * y)
    u = solve(assemble_galerkin(m, data))
    assert np.allclose(u.values, m.vertices[:, 0], atol=1e-12)


def test_solution_improves_with_mesh():
    p = define_problem("1", 1.0)
    errs = []
    for n in (4, 10):
        m = build_initial_mesh(n, n)
        u = solve(assemble_galerkin(m, p.data))
        errs.append(energy_norm_error(m, p.data, u, p.exact_u, p.exact_grad).energy)
    assert errs[1] < errs[0]


def test_singular_system_reports():
    m = build_initial_mesh(2, 2)
    system = SparseSystem(m, sp.csr_matrix((9, 9)), np.ones(9), np.zeros(0, dtype=int),
                          np.zeros(0))
    with pytest.raises(SolverError):
        solve(system)


def test_projection_of_constant_and_linear(mesh4):
    pc = project_data(mesh4, ProblemData(source=lambda x, y: 3.0 + 0 * x))
    assert np.allclose(pc.fbar, 3.0)
    assert np.allclose(pc.f_vertex, 3.0)
    pl = project_data(mesh4, ProblemData(source=lambda x, y: 2 * x - y + 1))
    c = mesh4.centroids
    assert np.allclose(pl.fbar, 2 * c[:, 0] - c[:, 1] + 1)
    # P1 projection reproduces a linear source at the vertices
    v = mesh4.coords
    assert np.allclose(pl.f_vertex, 2 * v[..., 0] - v[..., 1] + 1)


def test_projection_quadrature_refinement(mesh4):
    f = lambda x, y: np.cos(np.pi * x / 2) * np.cos(np.pi * y / 2)
    a = project_data(mesh4, ProblemData(source=f), quad_order=7).fbar
    b = project_data(mesh4, ProblemData(source=f), quad_order=12).fbar
    assert np.max(np.abs(a - b)) < 1e-10


def test_projection_rejects_unknown_model(mesh4):
    with pytest.raises(ValueError):
        project_data(mesh4, ProblemData(), source_model="p2")


def test_error_zero_for_interpolated_linear(mesh4):
    u = lambda x, y: 1 + 2 * x - y
    grad = lambda x, y: (2 + 0 * x, -1 + 0 * y)
    data = ProblemData(beta=1.0, reaction=1.0)
    e = energy_norm_error(mesh4, data, interpolate(mesh4, u), u, grad)
    assert e.energy < 1e-13


def test_problem1_norm_closed_form():
    eps = 0.3
    p = define_problem("1", eps)
    m = uniform_refine(build_initial_mesh(10, 10), 2)
    zero = DiscreteSolution(m, np.zeros(m.n_vertices))
    e = energy_norm_error(m, p.data, zero, p.exact_u, p.exact_grad)
    assert e.energy == pytest.approx((1 + eps * np.pi ** 2 / 2) ** -0.5, rel=1e-9)
    assert e.reactive == pytest.approx(p.norm_u_l2, rel=1e-9)


def test_error_norm_quadrature_orders_agree(mesh10):
    p = define_problem("1", 1e-2)
    u = solve(assemble_galerkin(mesh10, p.data))
    a = energy_norm_error(mesh10, p.data, u, p.exact_u, p.exact_grad, 7).energy
    b = energy_norm_error(mesh10, p.data, u, p.exact_u, p.exact_grad, 12).energy
    assert a == pytest.approx(b, rel=1e-8)


def test_problem_data_validation():
    with pytest.raises(ValueError):
        ProblemData(beta=-1.0)
    with pytest.raises(ValueError):
        ProblemData(regime="mystery")
    with pytest.raises(ValueError):
        ProblemData(regime=CONVECTION_REACTION, epsilon=-1.0)
    d = ProblemData(regime=CONVECTION_REACTION, epsilon=1e-3, beta=1.0)
    assert d.alpha == 1e-3 and not d.is_diffusion
    assert ProblemData(regime=DIFFUSION).is_diffusion


def test_nonpositive_alpha_rejected(mesh4):
    with pytest.raises(ValueError):
        ProblemData(alpha=lambda x, y: x).coefficients(mesh4)


def test_reaction_diffusion_matrix_is_spd(mesh10):
    p = define_problem("2")
    A, _ = assemble_galerkin(mesh10, p.data).reduced()
    np.linalg.cholesky(A.toarray())


def test_discrete_equations_hold_on_free_nodes(mesh10):
    p = define_problem("3", 1e-2)
    system = assemble_galerkin(mesh10, p.data)
    u = solve(system)
    res = system.rhs - system.matrix @ u.values
    assert np.max(np.abs(res[system.free])) <= 1e-10 * np.max(np.abs(system.rhs))


def test_supg_consistent_for_linear_solution(mesh4):
    uex = lambda x, y: 1 + x + y
    data = ProblemData(source=lambda x, y: 2 * 1.0 + uex(x, y) - 0 * x, advection=(1.0, 1.0),
                       reaction=1.0, dirichlet=uex)
    g = solve(assemble_galerkin(mesh4, data)).values
    s = solve(assemble_supg(mesh4, data)).values
    assert np.allclose(g, s, atol=1e-10) and np.allclose(g, uex(*mesh4.vertices.T), atol=1e-10)
