"""Hybrid indicator xi_K built on the recovered flux."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fem import project_data
from .recovery import recover_flux
from .residual import residual_parts

# Rule order of the P1 source projection used by the hybrid indicator.
XI_SOURCE_ORDER = 4


def residual_size(mesh):
    """Element size entering the weighted residual term of xi: |K|^{1/2}."""
    return np.sqrt(mesh.areas)


def _tri_area(tri):
    u, v = tri[1] - tri[0], tri[2] - tri[0]
    return 0.5 * abs(u[0] * v[1] - u[1] * v[0])


@dataclass
class HybridBreakdown:
    """Squared flux and residual terms per element, the indicators and the total."""
    flux_term: np.ndarray
    residual_term: np.ndarray
    indicators: np.ndarray
    recovered: object = None
    parts: object = None

    @property
    def total(self):
        return float(np.sqrt(np.sum(self.indicators ** 2)))


@dataclass
class PiecewiseResidual:
    """r_hat on one element: r0 + rg.x + shift[slot] on each region slot."""
    r0: float
    rg: np.ndarray
    shift: np.ndarray
    regions: list

    def __call__(self, slot, x):
        x = np.asarray(x, dtype=float)
        return self.r0 + x @ self.rg + self.shift[slot]

    def integral(self):
        from .kernels import Q4_BARY, Q4_W
        total = 0.0
        for slot, poly in self.regions:
            for j in range(1, len(poly) - 1):
                tri = np.array([poly[0], poly[j], poly[j + 1]])
                area = _tri_area(tri)
                total += area * np.dot(Q4_W, self(slot, Q4_BARY @ tri))
        return total


def modified_residual(recovered, parts, k):
    """r_hat_K = r_K - div(sigma_hat - sigma_T) on element ``k``, region by region."""
    shift = np.array([-np.trace(recovered.A[k, s]) for s in range(recovered.A.shape[1])])
    return PiecewiseResidual(r0=float(parts.r0[k]), rg=parts.rg[k].copy(), shift=shift,
                             regions=recovered.regions(k))


def xi(mesh, solution, data, recovered=None, projected=None, parts=None, quad_order=4):
    """Hybrid indicators xi_K = (|alpha^{-1/2}(sigma_hat - sigma_T)|^2
    + gamma_K^2 h_K^2 alpha_K^{-1} |r_hat|^2)^{1/2}.

    Here h_K = |K|^{1/2} (see ``residual_size``), also inside gamma_K.
    """
    if projected is None:
        projected = project_data(mesh, data, quad_order, source_order=XI_SOURCE_ORDER)
    if parts is None:
        parts = residual_parts(mesh, solution, data, projected, h=residual_size(mesh))
    if recovered is None:
        recovered = recover_flux(mesh, data, parts, projected)
    nt = mesh.n_triangles
    flux = np.zeros(nt)
    res = np.zeros(nt)
    c = recovered.traces.c
    coords = np.ascontiguousarray(mesh.coords)
    small = np.flatnonzero(~recovered.large)
    large = np.flatnonzero(recovered.large)
    if len(small):
        f, r = kernels.small_terms(np.ascontiguousarray(coords[small]),
                                   np.ascontiguousarray(mesh.areas[small]),
                                   np.ascontiguousarray(mesh.local_edge_lengths[small]),
                                   np.ascontiguousarray(parts.r0[small]),
                                   np.ascontiguousarray(parts.rg[small]),
                                   np.ascontiguousarray(c[small]))
        flux[small], res[small] = f, r
    if len(large):
        f, r = kernels.large_terms(np.ascontiguousarray(coords[large]),
                                   np.ascontiguousarray(recovered.d[large]),
                                   np.ascontiguousarray(parts.r0[large]),
                                   np.ascontiguousarray(parts.rg[large]),
                                   np.ascontiguousarray(c[large]))
        flux[large], res[large] = f, r
    flux_term = flux / parts.alpha_k
    residual_term = parts.gamma_k ** 2 * mesh.areas / parts.alpha_k * res
    return HybridBreakdown(flux_term=flux_term, residual_term=residual_term,
                           indicators=np.sqrt(flux_term + residual_term), recovered=recovered,
                           parts=parts)


def xi_by_regions(mesh, data, recovered, parts):
    """Slow reference evaluation of the squared terms from the region fields.

    Used to cross-check the kernels.
    """
    from .kernels import Q4_BARY, Q4_W
    nt = mesh.n_triangles
    flux = np.zeros(nt)
    res = np.zeros(nt)
    for k in range(nt):
        rhat = modified_residual(recovered, parts, k)
        for slot, poly in rhat.regions:
            for j in range(1, len(poly) - 1):
                tri = np.array([poly[0], poly[j], poly[j + 1]])
                area = _tri_area(tri)
                x = Q4_BARY @ tri
                diff = recovered.evaluate(k, slot, x) - recovered.sigma[k]
                flux[k] += area * np.dot(Q4_W, (diff * diff).sum(axis=1))
                res[k] += area * np.dot(Q4_W, rhat(slot, x) ** 2)
    flux_term = flux / parts.alpha_k
    residual_term = parts.gamma_k ** 2 * mesh.areas / parts.alpha_k * res
    return flux_term, residual_term


__all__ = ["HybridBreakdown", "PiecewiseResidual", "modified_residual", "xi",
           "xi_by_regions"]
