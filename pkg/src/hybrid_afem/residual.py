"""Explicit residual indicator with regime-dependent weights, and data oscillation."""
from dataclasses import dataclass

import numpy as np

from .fem import DIFFUSION, project_data
from .mesh import DIRICHLET, INTERIOR, NEUMANN
from .quadrature import line_rule, map_points, triangle_rule

# Rule order of the P1 source projection used by the residual indicator.
ETA_SOURCE_ORDER = 2


def gamma_weight(h, alpha, beta, regime):
    """Weight min{1, h^{-1} alpha^{1/2} beta^{-1/2}}; 1 for diffusion or beta = 0.

    Works elementwise on arrays.
    """
    h = np.asarray(h, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h must be positive")
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    shape = np.broadcast(h, alpha).shape
    if regime == DIFFUSION or beta == 0:
        return np.ones(shape)
    with np.errstate(over="ignore"):      # tiny beta: the ratio saturates at 1 anyway
        return np.minimum(1.0, np.sqrt(alpha / beta) / h)


@dataclass
class ResidualParts:
    """Element residuals, flux jumps and weights of one discrete solution.

    r_vertex holds r_K at the three vertices (r_K is linear); r0, rg give
    the same polynomial as r0 + rg . x.
    """
    sigma: np.ndarray
    r_vertex: np.ndarray
    r0: np.ndarray
    rg: np.ndarray
    jumps: np.ndarray
    alpha_k: np.ndarray
    alpha_e: np.ndarray
    gamma_k: np.ndarray
    gamma_e: np.ndarray

    def r_norm2(self, areas):
        """Squared L2 norm of r_K, exact for linear r_K."""
        r = self.r_vertex
        return areas / 12.0 * ((r * r).sum(axis=1) + r.sum(axis=1) ** 2)


def element_residual(mesh, solution, projected, data):
    """r_K = fbar - a.grad u_T - b u_T at the vertices of each element, (nt, 3).

    fbar is the source polynomial of ``projected`` (linear or constant).
    """
    _, adv, react = data.coefficients(mesh)
    g = solution.gradients
    u = solution.values[mesh.triangles]
    conv = np.einsum("td,td->t", adv, g)
    return projected.f_vertex - conv[:, None] - react[:, None] * u


def edge_alpha(mesh, alpha_k):
    """alpha_e = max of alpha_K over the elements adjacent to e."""
    plus, minus = mesh.edge_elems.T
    a = alpha_k[plus].copy()
    inner = minus >= 0
    a[inner] = np.maximum(a[inner], alpha_k[minus[inner]])
    return a


def edge_jumps(mesh, sigma, projected):
    """j_e: normal flux jump on interior edges, sigma.n - gbar_N on Neumann
    edges, zero on Dirichlet edges."""
    plus, minus = mesh.edge_elems.T
    n = mesh.edge_normals
    j = np.einsum("ed,ed->e", sigma[plus], n)
    inner = mesh.edge_tags == INTERIOR
    j[inner] -= np.einsum("ed,ed->e", sigma[minus[inner]], n[inner])
    neu = mesh.edge_tags == NEUMANN
    j[neu] -= projected.gbar_n[neu]
    j[mesh.edge_tags == DIRICHLET] = 0.0
    return j


def residual_parts(mesh, solution, data, projected=None, quad_order=4, h=None):
    """Residual, jumps and weights; ``h`` overrides the element size in gamma_K."""
    if projected is None:
        projected = project_data(mesh, data, quad_order, source_order=ETA_SOURCE_ORDER)
    alpha, _, _ = data.coefficients(mesh)
    sigma = -alpha[:, None] * solution.gradients
    rv = element_residual(mesh, solution, projected, data)
    rg = np.einsum("ti,tid->td", rv, mesh.grad_lambda)
    r0 = rv.mean(axis=1) - np.einsum("td,td->t", rg, mesh.centroids)
    alpha_e = edge_alpha(mesh, alpha)
    gk = gamma_weight(mesh.diameters if h is None else h, alpha, data.beta, data.regime)
    ge = gamma_weight(mesh.edge_lengths, alpha_e, data.beta, data.regime)
    return ResidualParts(sigma=sigma, r_vertex=rv, r0=r0, rg=rg,
                         jumps=edge_jumps(mesh, sigma, projected),
                         alpha_k=alpha, alpha_e=alpha_e, gamma_k=gk, gamma_e=ge)


@dataclass
class EstimatorField:
    """Per-element indicators with their squared term breakdown."""
    indicators: np.ndarray
    interior_term: np.ndarray
    edge_term: np.ndarray
    oscillation: np.ndarray

    @property
    def total(self):
        return float(np.sqrt(np.sum(self.indicators ** 2)))


def eta(mesh, solution, data, projected=None, parts=None, quad_order=4):
    """Residual indicators eta_K.

    The factor 1/2 multiplies every edge term of the element, Neumann edges
    included; Dirichlet edges carry j_e = 0.
    """
    if projected is None:
        projected = project_data(mesh, data, quad_order, source_order=ETA_SOURCE_ORDER)
    if parts is None:
        parts = residual_parts(mesh, solution, data, projected)
    rnorm2 = parts.r_norm2(mesh.areas)
    hk = mesh.diameters
    interior = parts.gamma_k ** 2 * hk ** 2 / parts.alpha_k * rnorm2
    he = mesh.edge_lengths
    w = parts.gamma_e * he / parts.alpha_e * parts.jumps ** 2 * he
    edge = 0.5 * w[mesh.elem_edges].sum(axis=1)
    osc = oscillation(mesh, data, projected, parts, quad_order)
    return EstimatorField(indicators=np.sqrt(interior + edge), interior_term=interior,
                          edge_term=edge, oscillation=osc)


def oscillation(mesh, data, projected, parts=None, quad_order=4):
    """Data oscillation Theta_K per element."""
    alpha, _, _ = data.coefficients(mesh)
    if parts is None:
        alpha_e = edge_alpha(mesh, alpha)
        gk = gamma_weight(mesh.diameters, alpha, data.beta, data.regime)
        ge = gamma_weight(mesh.edge_lengths, alpha_e, data.beta, data.regime)
    else:
        alpha_e, gk, ge = parts.alpha_e, parts.gamma_k, parts.gamma_e
    bary, w = triangle_rule(quad_order)
    pts = map_points(mesh.coords, bary)
    fq = np.broadcast_to(data.source(pts[..., 0], pts[..., 1]), pts.shape[:2])
    dev = fq - projected.source_at(bary)
    fosc = mesh.areas * ((dev * dev) @ w)
    theta2 = gk ** 2 * mesh.diameters ** 2 / alpha * fosc
    if data.neumann is not None:
        ids = np.flatnonzero(mesh.edge_tags == NEUMANN)
        if len(ids):
            sq, wq = line_rule(quad_order)
            a = mesh.vertices[mesh.edges[ids, 0]]
            b = mesh.vertices[mesh.edges[ids, 1]]
            x = a[:, None, :] + sq[None, :, None] * (b - a)[:, None, :]
            g = np.broadcast_to(data.neumann(x[..., 0], x[..., 1]), x.shape[:2])
            L = mesh.edge_lengths[ids]
            gdev = L * (((g - projected.gbar_n[ids, None]) ** 2) @ wq)
            contrib = ge[ids] * L / alpha_e[ids] * gdev
            np.add.at(theta2, mesh.edge_elems[ids, 0], contrib)
    return np.sqrt(theta2)
