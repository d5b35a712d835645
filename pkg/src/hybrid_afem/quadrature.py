"""Quadrature rules on triangles and edges.

Triangle rules are returned in barycentric form: ``bary`` has shape (nq, 3)
and ``weights`` sum to one, so that

    int_K g dx  ~=  |K| * sum_q weights[q] * g(sum_i bary[q, i] * P_i).
"""
from functools import lru_cache

import numpy as np

# Symmetric rules: (multiplicity-orbit form) -> expanded below.
_A4 = 0.445948490915965
_B4 = 0.091576213509771
_W4A = 0.223381589678011
_W4B = 0.109951743655322

_A5 = 0.470142064105115
_B5 = 0.101286507323456
_W5A = 0.132394152788506
_W5B = 0.125939180544827


def _orbit3(a):
    """Points of the 3-orbit (a, a, 1-2a) in barycentric coordinates."""
    c = 1.0 - 2.0 * a
    return [(c, a, a), (a, c, a), (a, a, c)]


def _symmetric_rule(order):
    if order <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if order == 2:
        return np.array(_orbit3(1 / 6)), np.full(3, 1 / 3)
    if order == 3 or order == 4:
        pts = _orbit3(_A4) + _orbit3(_B4)
        w = [_W4A] * 3 + [_W4B] * 3
        return np.array(pts), np.array(w)
    if order == 5:
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _orbit3(_A5) + _orbit3(_B5)
        w = [0.225] + [_W5A] * 3 + [_W5B] * 3
        return np.array(pts), np.array(w)
    return None


def _collapsed_rule(order):
    # Duffy map (u, v) -> (u, v (1 - u)); exact for total degree <= order.
    n = int(np.ceil((order + 2) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    s = U.ravel()
    t = V.ravel() * (1.0 - s)
    weights = (WU * WV).ravel() * (1.0 - s) * 2.0  # reference area is 1/2
    bary = np.column_stack([1.0 - s - t, s, t])
    return bary, weights


@lru_cache(maxsize=None)
def triangle_rule(order=4):
    """Barycentric points and normalized weights exact for degree ``order``.

    Orders up to 5 use fully symmetric rules; higher orders use a collapsed
    Gauss-Legendre product rule.
    """
    if order < 0:
        raise ValueError("quadrature order must be nonnegative")
    rule = _symmetric_rule(order)
    if rule is None:
        rule = _collapsed_rule(order)
    bary, w = rule
    bary = np.ascontiguousarray(bary, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


@lru_cache(maxsize=None)
def line_rule(order=4):
    """Gauss-Legendre points on [0, 1] (as parameter s) with weights summing to 1."""
    n = max(1, int(np.ceil((order + 1) / 2)))
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def map_points(coords, bary):
    """Physical quadrature points for a stack of triangles.

    coords : (nt, 3, 2) vertex coordinates; bary : (nq, 3).
    Returns (nt, nq, 2).
    """
    return np.einsum("qi,tid->tqd", bary, coords)


def integrate(func, coords, areas, order=4):
    """Integrate ``func(x, y)`` over each triangle; returns (nt,) array."""
    bary, w = triangle_rule(order)
    pts = map_points(coords, bary)
    vals = func(pts[..., 0], pts[..., 1])
    vals = np.broadcast_to(vals, pts.shape[:2])
    return areas * (vals @ w)
