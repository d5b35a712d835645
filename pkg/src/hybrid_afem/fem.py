"""P1 conforming discretization of -div(alpha grad u) + a.grad u + b u = f.

Coefficients are taken constant per element (evaluated at the centroid
when given as callables).  Dirichlet data is imposed by nodal
interpolation and lifted into the right-hand side.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .mesh import NEUMANN
from .quadrature import line_rule, map_points, triangle_rule

DIFFUSION = "diffusion_dominated"
CONVECTION_REACTION = "convection_reaction_dominated"
_REGIME_ALIASES = {
    "diffusion": DIFFUSION, DIFFUSION: DIFFUSION,
    "convection": CONVECTION_REACTION, "reaction": CONVECTION_REACTION,
    "convection_reaction": CONVECTION_REACTION, CONVECTION_REACTION: CONVECTION_REACTION,
}


class SolverError(RuntimeError):
    """Sparse factorization failed or produced an inaccurate solution."""


def _zero(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


def _per_element(value, centroids, ncomp=None):
    n = len(centroids)
    if callable(value):
        out = value(centroids[:, 0], centroids[:, 1])
        if ncomp is None:
            return np.broadcast_to(np.asarray(out, dtype=float), (n,)).copy()
        out = np.asarray(out, dtype=float)
        if out.shape == (ncomp, n):
            out = out.T
        return np.broadcast_to(out, (n, ncomp)).copy()
    arr = np.asarray(value, dtype=float)
    if ncomp is None:
        return np.broadcast_to(arr, (n,)).copy()
    return np.broadcast_to(arr, (n, ncomp)).copy()


@dataclass
class ProblemData:
    """Coefficients and data of the boundary value problem.

    ``alpha``, ``advection`` and ``reaction`` are constants, per-element
    arrays, or callables ``(x, y) -> value`` sampled at element centroids.
    In the convection/reaction-dominated regime ``alpha`` is the constant
    ``epsilon``.  ``c_b`` and ``C_b`` are recorded for reference only.
    """

    source: Callable = _zero
    alpha: object = 1.0
    advection: object = (0.0, 0.0)
    reaction: object = 0.0
    beta: float = 0.0
    dirichlet: Callable = _zero
    neumann: Optional[Callable] = None
    regime: str = DIFFUSION
    epsilon: Optional[float] = None
    c_b: Optional[float] = None
    C_b: Optional[float] = None

    def __post_init__(self):
        if self.regime not in _REGIME_ALIASES:
            raise ValueError(f"unknown regime {self.regime!r}")
        self.regime = _REGIME_ALIASES[self.regime]
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.regime == CONVECTION_REACTION:
            if self.epsilon is None:
                if callable(self.alpha) or np.ndim(self.alpha) != 0:
                    raise ValueError("convection/reaction regime needs a constant epsilon")
                self.epsilon = float(self.alpha)
            self.alpha = float(self.epsilon)
            if self.epsilon <= 0:
                raise ValueError("epsilon must be positive")

    @property
    def is_diffusion(self):
        return self.regime == DIFFUSION

    def coefficients(self, mesh):
        """Per-element (alpha_K, a_K, b_K)."""
        c = mesh.centroids
        if isinstance(self.alpha, np.ndarray) and self.alpha.shape == (mesh.n_triangles,):
            alpha = self.alpha.astype(float)
        else:
            alpha = _per_element(self.alpha, c)
        if np.any(~(alpha > 0)):
            raise ValueError("alpha must be positive on every element")
        adv = _per_element(self.advection, c, 2)
        react = _per_element(self.reaction, c)
        return alpha, adv, react


SOURCE_MODELS = ("p1", "p0")


@dataclass
class ProjectedData:
    """Projected source and Neumann data.

    ``fbar`` is the element mean of f and ``gbar_n`` the edge mean of g_N
    (zero off Neumann edges).  ``f_vertex`` holds the vertex values of the
    per-element source polynomial entering the element residual: the
    discrete L2 projection of f onto P1 ("p1") or fbar repeated ("p0").
    """
    fbar: np.ndarray
    gbar_n: np.ndarray
    f_vertex: np.ndarray = None
    model: str = "p0"
    source_order: int = None

    def __post_init__(self):
        if self.f_vertex is None:
            self.f_vertex = np.repeat(np.asarray(self.fbar, dtype=float)[:, None], 3, axis=1)

    def source_at(self, bary):
        """Source polynomial at barycentric points, (nt, nq)."""
        return self.f_vertex @ np.asarray(bary).T


@dataclass
class SparseSystem:
    """Assembled full system plus the Dirichlet constraint map."""
    mesh: object
    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    free: np.ndarray = field(init=False)

    def __post_init__(self):
        mask = np.ones(self.mesh.n_vertices, dtype=bool)
        mask[self.fixed] = False
        self.free = np.flatnonzero(mask)

    def reduced(self):
        """(A_ff, b_f - A_fd g_D) restricted to free vertices."""
        A = self.matrix
        Aff = A[self.free][:, self.free]
        lift = A[self.free][:, self.fixed] @ self.fixed_values
        return Aff.tocsc(), self.rhs[self.free] - lift


@dataclass
class DiscreteSolution:
    mesh: object
    values: np.ndarray
    degree: int = 1

    @property
    def gradients(self):
        """(nt, 2) constant gradient per element."""
        u = self.values[self.mesh.triangles]
        return np.einsum("ti,tid->td", u, self.mesh.grad_lambda)

    def at_bary(self, bary):
        """Values at barycentric points, shape (nt, nq)."""
        return self.values[self.mesh.triangles] @ np.asarray(bary).T


def supg_parameters(mesh, adv, delta0):
    """delta_K = delta0 h_K / |a|_K, zero where a vanishes."""
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    anorm = np.hypot(adv[:, 0], adv[:, 1])
    delta = np.zeros(mesh.n_triangles)
    pos = anorm > 0
    delta[pos] = delta0 * mesh.diameters[pos] / anorm[pos]
    return delta


def _assemble(mesh, data, delta, quad_order):
    alpha, adv, react = data.coefficients(mesh)
    grads = np.ascontiguousarray(mesh.grad_lambda)
    areas = np.ascontiguousarray(mesh.areas)
    local = kernels.p1_local_blocks(grads, areas, alpha, adv, react, delta)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    nv = mesh.n_vertices
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(nv, nv))

    bary, w = triangle_rule(quad_order)
    pts = map_points(mesh.coords, bary)
    fq = np.broadcast_to(data.source(pts[..., 0], pts[..., 1]), pts.shape[:2])
    floc = areas[:, None] * ((fq * w) @ bary)              # (f, phi_i)_K
    fint = areas * (fq @ w)
    s = np.einsum("tid,td->ti", grads, adv)
    floc += (delta * fint)[:, None] * s                     # delta_K (f, a.grad phi_i)
    rhs = np.bincount(t.ravel(), weights=floc.ravel(), minlength=nv)

    if data.neumann is not None:
        ne_ids = np.flatnonzero(mesh.edge_tags == NEUMANN)
        if len(ne_ids):
            sq, wq = line_rule(quad_order)
            a = mesh.vertices[mesh.edges[ne_ids, 0]]
            b = mesh.vertices[mesh.edges[ne_ids, 1]]
            x = a[:, None, :] + sq[None, :, None] * (b - a)[:, None, :]
            g = np.broadcast_to(data.neumann(x[..., 0], x[..., 1]), x.shape[:2])
            L = mesh.edge_lengths[ne_ids]
            ga = L * ((g * (1 - sq)) @ wq)
            gb = L * ((g * sq) @ wq)
            np.subtract.at(rhs, mesh.edges[ne_ids, 0], ga)
            np.subtract.at(rhs, mesh.edges[ne_ids, 1], gb)

    fixed = mesh.dirichlet_vertices
    xv = mesh.vertices[fixed]
    gvals = np.broadcast_to(np.asarray(data.dirichlet(xv[:, 0], xv[:, 1]), dtype=float),
                            (len(fixed),)).copy()
    return SparseSystem(mesh, A, rhs, fixed, gvals)


def assemble_galerkin(mesh, data, quad_order=4):
    """Plain Galerkin system B(u, v) = (f, v) - (g_N, v)_{Gamma_N}."""
    return _assemble(mesh, data, np.zeros(mesh.n_triangles), quad_order)


def assemble_supg(mesh, data, delta0=0.5, quad_order=4):
    """Streamline-diffusion stabilized system with delta_K = delta0 h_K / |a|_K."""
    _, adv, _ = data.coefficients(mesh)
    delta = supg_parameters(mesh, adv, delta0)
    return _assemble(mesh, data, delta, quad_order)


def solve(system, rtol=1e-10):
    """Direct sparse LU solve of the reduced system."""
    mesh = system.mesh
    values = np.zeros(mesh.n_vertices)
    values[system.fixed] = system.fixed_values
    if len(system.free) == 0:
        return DiscreteSolution(mesh, values)
    A, b = system.reduced()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        d = np.abs(A.diagonal())
        raise SolverError(f"factorization failed ({exc}); n={A.shape[0]}, "
                          f"min |diag A|={d.min():.3e}, max |diag A|={d.max():.3e}") from exc
    x = lu.solve(b)
    pivots = np.abs(lu.U.diagonal())
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if not np.all(np.isfinite(x)) or res > rtol * bnorm:
        raise SolverError(f"residual {res:.3e} exceeds {rtol:g}*|b|={rtol * bnorm:.3e}; "
                          f"pivot range [{pivots.min():.3e}, {pivots.max():.3e}]")
    values[system.free] = x
    return DiscreteSolution(mesh, values)


def p1_projection(mesh, func, order):
    """Vertex values of the elementwise L2 projection of ``func`` onto P1,
    with integrals evaluated by the triangle rule of the given order.

    With the three-point degree-2 rule this is interpolation at its nodes.
    """
    bary, w = triangle_rule(order)
    if len(w) < 3:
        raise ValueError("P1 projection needs a rule with at least three points")
    pts = map_points(mesh.coords, bary)
    fq = np.broadcast_to(func(pts[..., 0], pts[..., 1]), pts.shape[:2])
    gram = (bary * w[:, None]).T @ bary
    return np.linalg.solve(gram, ((fq * w) @ bary).T).T


def project_data(mesh, data, quad_order=4, source_model="p1", source_order=2):
    """Element means of f, Neumann edge means of g_N and the residual source
    polynomial (see ProjectedData)."""
    if source_model not in SOURCE_MODELS:
        raise ValueError(f"source_model must be one of {SOURCE_MODELS}")
    bary, w = triangle_rule(quad_order)
    pts = map_points(mesh.coords, bary)
    fq = np.broadcast_to(data.source(pts[..., 0], pts[..., 1]), pts.shape[:2])
    fbar = fq @ w
    f_vertex = None
    if source_model == "p1":
        f_vertex = p1_projection(mesh, data.source, source_order)
    gbar = np.zeros(mesh.n_edges)
    if data.neumann is not None:
        ids = np.flatnonzero(mesh.edge_tags == NEUMANN)
        if len(ids):
            sq, wq = line_rule(quad_order)
            a = mesh.vertices[mesh.edges[ids, 0]]
            b = mesh.vertices[mesh.edges[ids, 1]]
            x = a[:, None, :] + sq[None, :, None] * (b - a)[:, None, :]
            g = np.broadcast_to(data.neumann(x[..., 0], x[..., 1]), x.shape[:2])
            gbar[ids] = g @ wq
    return ProjectedData(fbar=fbar, gbar_n=gbar, f_vertex=f_vertex, model=source_model,
                         source_order=source_order if source_model == "p1" else None)


@dataclass
class ErrorNorms:
    energy: float
    diffusive: float       # |alpha^{1/2} grad e|
    reactive: float        # beta^{1/2} |e|
    per_element: np.ndarray  # squared energy contribution of each element


def energy_norm_error(mesh, data, solution, exact_u, exact_grad, quad_order=7):
    """Energy norm (|alpha^{1/2} grad e|^2 + beta |e|^2)^{1/2} of u - u_T."""
    alpha, _, _ = data.coefficients(mesh)
    bary, w = triangle_rule(quad_order)
    pts = map_points(mesh.coords, bary)
    x, y = pts[..., 0], pts[..., 1]
    e = exact_u(x, y) - solution.at_bary(bary)
    gx, gy = exact_grad(x, y)
    g = solution.gradients
    ex = np.broadcast_to(gx, x.shape) - g[:, 0:1]
    ey = np.broadcast_to(gy, x.shape) - g[:, 1:2]
    diff = alpha * mesh.areas * ((ex * ex + ey * ey) @ w)
    reac = data.beta * mesh.areas * ((e * e) @ w)
    per = diff + reac
    return ErrorNorms(energy=float(np.sqrt(per.sum())),
                      diffusive=float(np.sqrt(diff.sum())),
                      reactive=float(np.sqrt(reac.sum())),
                      per_element=per)


def interpolate(mesh, func):
    """Nodal P1 interpolant of ``func``."""
    v = mesh.vertices
    return DiscreteSolution(mesh, np.asarray(func(v[:, 0], v[:, 1]), dtype=float)
                            * np.ones(mesh.n_vertices))
