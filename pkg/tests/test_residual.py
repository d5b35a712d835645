import numpy as np
import pytest

from hybrid_afem.fem import (CONVECTION_REACTION, DIFFUSION, DiscreteSolution, ProblemData,
                             assemble_galerkin, interpolate, project_data, solve)
from hybrid_afem.mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh, build_initial_mesh, uniform_refine
from hybrid_afem.problems import define_problem
from hybrid_afem.residual import (edge_jumps, element_residual, eta, gamma_weight,
                                  oscillation, residual_parts)


def strip_mesh():
    # two triangles sharing the vertical edge x = 1
    return Mesh([[0, 0], [1, 0], [1, 1], [2, 0]], [[0, 1, 2], [1, 3, 2]])


def test_gamma_weight_cases():
    assert gamma_weight(0.3, 1e-4, 1.0, DIFFUSION) == 1.0
    assert gamma_weight(0.3, 1e-4, 0.0, CONVECTION_REACTION) == 1.0
    assert gamma_weight(0.1, 1e-4, 1.0, CONVECTION_REACTION) == pytest.approx(0.1)
    assert gamma_weight(1e-3, 1e-4, 1.0, CONVECTION_REACTION) == 1.0
    with pytest.raises(ValueError):
        gamma_weight(0.0, 1.0, 1.0, DIFFUSION)


def test_gamma_weight_vectorised_range():
    h = np.geomspace(1e-4, 1, 20)
    g = gamma_weight(h, 1e-3, 2.0, CONVECTION_REACTION)
    assert np.all((g > 0) & (g <= 1)) and np.all(np.diff(g) <= 0)


def test_residual_of_zero_solution_is_source(mesh4):
    data = ProblemData(source=lambda x, y: 1 + 0 * x, advection=(2.0, 1.0), reaction=3.0)
    r = element_residual(mesh4, DiscreteSolution(mesh4, np.zeros(25)),
                         project_data(mesh4, data), data)
    assert np.allclose(r, 1.0)


def test_residual_reaction_only_problem(mesh4):
    p = define_problem("2")
    u = solve(assemble_galerkin(mesh4, p.data))
    r = element_residual(mesh4, u, project_data(mesh4, p.data), p.data)
    assert np.allclose(r, -u.values[mesh4.triangles])


def test_residual_vanishes_for_matching_convection(mesh4):
    data = ProblemData(source=lambda x, y: 1 + 0 * x, advection=(1.0, 0.0))
    u = interpolate(mesh4, lambda x, y: x)
    r = element_residual(mesh4, u, project_data(mesh4, data), data)
    assert np.allclose(r, 0.0, atol=1e-14)


def test_jumps_vanish_for_linear_solution(mesh4):
    u = interpolate(mesh4, lambda x, y: 3 * x - 2 * y)
    parts = residual_parts(mesh4, u, ProblemData())
    assert np.allclose(parts.jumps[mesh4.edge_tags == INTERIOR], 0.0, atol=1e-13)
    assert np.all(parts.jumps[mesh4.edge_tags == DIRICHLET] == 0.0)


def test_jump_sign_on_vertical_edge():
    m = strip_mesh()
    u = DiscreteSolution(m, np.array([0.0, 1.0, 1.0, 1.0]))   # grad (1,0) left, 0 right
    parts = residual_parts(m, u, ProblemData())
    e = np.flatnonzero(m.edge_tags == INTERIOR)
    assert len(e) == 1 and parts.jumps[e[0]] == pytest.approx(-1.0)


def test_single_jump_indicator_value():
    m = strip_mesh()
    u = DiscreteSolution(m, np.array([0.0, 1.0, 1.0, 1.0]))
    ef = eta(m, u, ProblemData())
    assert np.allclose(ef.interior_term, 0.0)
    assert np.allclose(ef.indicators ** 2, 0.5)


def test_eta_zero_for_exact_discrete_solution(mesh4):
    uex = lambda x, y: 1 + x + 2 * y
    data = ProblemData(source=lambda x, y: uex(x, y), reaction=1.0, beta=1.0, epsilon=1e-3,
                       dirichlet=uex, regime=CONVECTION_REACTION)
    u = solve(assemble_galerkin(mesh4, data))
    assert np.allclose(u.values, uex(*mesh4.vertices.T), atol=1e-12)
    ef = eta(mesh4, u, data)
    assert ef.total < 1e-12
    assert np.all(ef.oscillation < 1e-12)


def test_oscillation_zero_for_constant_source(mesh4):
    data = ProblemData(source=lambda x, y: 2 + 0 * x)
    assert np.allclose(oscillation(mesh4, data, project_data(mesh4, data)), 0.0)


def test_oscillation_closed_form_on_reference_triangle():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[1, 2, 0]])
    data = ProblemData(source=lambda x, y: x)
    proj = project_data(m, data, source_model="p0")
    # |x - 1/3|^2 over the reference triangle is 1/36; weight h_K^2 = 2
    theta = oscillation(m, data, proj)
    assert theta[0] ** 2 == pytest.approx(2.0 / 36.0, rel=1e-12)


def test_oscillation_is_higher_order(mesh4):
    p = define_problem("1", 1.0)
    m = mesh4
    ratios = []
    for _ in range(3):
        u = solve(assemble_galerkin(m, p.data))
        ef = eta(m, u, p.data)
        ratios.append(np.sqrt(np.sum(ef.oscillation ** 2)) / ef.total)
        m = uniform_refine(m, 2)
    # oscillation of the P1 source projection is O(h^3), eta is O(h)
    assert ratios[1] / ratios[0] < 0.35 and ratios[2] / ratios[1] < 0.3


def test_neumann_edges_carry_data_mismatch():
    spec = lambda x, y: "neumann" if x > 0.999 else "dirichlet"
    m = build_initial_mesh(4, 4, boundary_spec=spec)
    u = lambda x, y: x * x
    data = ProblemData(source=lambda x, y: -2 + 0 * x, dirichlet=u,
                       neumann=lambda x, y: -2 * x)       # sigma.n = -u_x on x = 1
    uh = solve(assemble_galerkin(m, data))
    parts = residual_parts(m, uh, data)
    assert np.any(parts.jumps[m.edge_tags == NEUMANN] != 0)
    assert np.max(np.abs(uh.values - u(*m.vertices.T))) < 0.05
