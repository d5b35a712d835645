"""Element-loop kernels with a numba path and a vectorized numpy path.

Each kernel exists twice with identical signatures: ``<name>_numpy`` and
``<name>_numba``.  The unsuffixed name dispatches according to
``hybrid_afem._accel.USE_NUMBA``.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# Degree-4 symmetric rule (6 points) used on sub-regions.
_a, _b = 0.445948490915965, 0.091576213509771
Q4_BARY = np.array([
    [1 - 2 * _a, _a, _a], [_a, 1 - 2 * _a, _a], [_a, _a, 1 - 2 * _a],
    [1 - 2 * _b, _b, _b], [_b, 1 - 2 * _b, _b], [_b, _b, 1 - 2 * _b],
])
Q4_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


# ---------------------------------------------------------------------------
# P1 local matrices
# ---------------------------------------------------------------------------
def p1_local_blocks_numpy(grads, areas, alpha, adv, react, delta):
    """Local 3x3 matrices, row = test function, column = trial function.

    Diffusion + Galerkin convection + reaction mass, plus the streamline
    term delta_K (a.grad u + b u, a.grad v)_K.
    """
    G = np.einsum("tid,tjd->tij", grads, grads)
    s = np.einsum("tjd,td->tj", grads, adv)            # a . grad phi_j
    A = (alpha * areas)[:, None, None] * G
    A += (areas / 3.0)[:, None, None] * s[:, None, :]
    mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    A += (react * areas)[:, None, None] * mass[None]
    A += (delta * areas)[:, None, None] * (s[:, :, None] * s[:, None, :])
    A += (delta * react * areas / 3.0)[:, None, None] * np.broadcast_to(
        s[:, :, None], A.shape)
    return A


@njit
def p1_local_blocks_numba(grads, areas, alpha, adv, react, delta):
    nt = areas.shape[0]
    A = np.empty((nt, 3, 3))
    for t in range(nt):
        s = np.empty(3)
        for j in range(3):
            s[j] = grads[t, j, 0] * adv[t, 0] + grads[t, j, 1] * adv[t, 1]
        ar = areas[t]
        for i in range(3):
            for j in range(3):
                g = grads[t, i, 0] * grads[t, j, 0] + grads[t, i, 1] * grads[t, j, 1]
                m = 2.0 / 12.0 if i == j else 1.0 / 12.0
                v = alpha[t] * ar * g + ar / 3.0 * s[j] + react[t] * ar * m
                v += delta[t] * ar * s[i] * s[j] + delta[t] * react[t] * ar / 3.0 * s[i]
                A[t, i, j] = v
    return A


# ---------------------------------------------------------------------------
# Hybrid estimator element terms
# ---------------------------------------------------------------------------
def _tri_quad_sq_numpy(P, r0, rg, shift):
    """Integral of (r0 + rg.x + shift)^2 over stacked triangles P (..., 3, 2)."""
    x = np.einsum("qi,...id->...qd", Q4_BARY, P)
    v = r0[..., None] + np.einsum("...qd,...d->...q", x, rg) + shift[..., None]
    area = 0.5 * np.abs((P[..., 1, 0] - P[..., 0, 0]) * (P[..., 2, 1] - P[..., 0, 1])
                        - (P[..., 2, 0] - P[..., 0, 0]) * (P[..., 1, 1] - P[..., 0, 1]))
    return area * ((v * v) @ Q4_W)


def _tri_second_moment_numpy(P, p):
    """Integral of |x - p|^2 over stacked triangles P (..., 3, 2)."""
    x = np.einsum("qi,...id->...qd", Q4_BARY, P) - p[..., None, :]
    area = 0.5 * np.abs((P[..., 1, 0] - P[..., 0, 0]) * (P[..., 2, 1] - P[..., 0, 1])
                        - (P[..., 2, 0] - P[..., 0, 0]) * (P[..., 1, 1] - P[..., 0, 1]))
    return area * (np.einsum("...qd,...qd->...q", x, x) @ Q4_W)


def small_terms_numpy(coords, areas, lengths, r0, rg, c):
    """Flux-correction and modified-residual integrals on RT0 elements.

    c[t, i] = sigma_T.n - ghat on local edge i.  Returns
    (int |sigma_hat - sigma_T|^2, int rhat^2) per element.
    """
    # sigma_hat - sigma_T = -sum_i c_i |e_i| / (2|K|) (x - P_i)
    coef = -c * lengths / (2.0 * areas[:, None])           # (nt, 3)
    x = np.einsum("qi,tid->tqd", Q4_BARY, coords)           # (nt, q, 2)
    diff = np.einsum("ti,tqid->tqd", coef, x[:, :, None, :] - coords[:, None, :, :])
    flux = areas * (np.einsum("tqd,tqd->tq", diff, diff) @ Q4_W)
    div = 2.0 * coef.sum(axis=1)
    v = r0[:, None] + np.einsum("tqd,td->tq", x, rg) - div[:, None]
    res = areas * ((v * v) @ Q4_W)
    return flux, res


def large_partition_numpy(coords, d):
    """Vectorized partition geometry for stacked triangles.

    Returns (inner, foot_start, foot_end, tangents, normals):
    inner (nt, 3, 2) are the vertices of the shrunken triangle; for local
    edge i (from P_{i+1} to P_{i+2}) foot_start[:, i] / foot_end[:, i] are
    the orthogonal projections of inner_{i+1} / inner_{i+2} onto the edge.
    """
    P = coords
    vec = P[:, [2, 0, 1]] - P[:, [1, 2, 0]]
    lengths = np.hypot(vec[..., 0], vec[..., 1])
    per = lengths.sum(axis=1)
    area = 0.5 * ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                  - (P[:, 2, 0] - P[:, 0, 0]) * (P[:, 1, 1] - P[:, 0, 1]))
    R = 2.0 * area / per
    inc = np.einsum("ti,tid->td", lengths / per[:, None], P)
    rho = (R - d) / R
    inner = inc[:, None, :] + rho[:, None, None] * (P - inc[:, None, :])
    t = vec / lengths[..., None]
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    A = P[:, [1, 2, 0]]
    Ai = inner[:, [1, 2, 0]]
    Bi = inner[:, [2, 0, 1]]
    fs = A + np.einsum("tid,tid->ti", Ai - A, t)[..., None] * t
    fe = A + np.einsum("tid,tid->ti", Bi - A, t)[..., None] * t
    return inner, fs, fe, t, n


def large_terms_numpy(coords, d, r0, rg, c):
    """Flux-correction and modified-residual integrals on partitioned elements.

    ``d`` is the layer width per element.  Returns (int |sigma_hat -
    sigma_T|^2, int rhat^2) per element.
    """
    inner, fs, fe, t, n = large_partition_numpy(coords, d)
    P = coords
    A = P[:, [1, 2, 0]]
    B = P[:, [2, 0, 1]]
    Ai = inner[:, [1, 2, 0]]
    Bi = inner[:, [2, 0, 1]]
    zero = np.zeros(len(P))
    res = _tri_quad_sq_numpy(inner, r0, rg, zero)
    flux = np.zeros(len(P))
    for i in range(3):
        ci = c[:, i]
        L = np.hypot(*(fe[:, i] - fs[:, i]).T)
        # rectangle: correction (y/d - 1) c n, divergence -c/d
        flux += ci * ci * L * d / 3.0
        q1 = np.stack([fs[:, i], fe[:, i], Bi[:, i]], axis=1)
        q2 = np.stack([fs[:, i], Bi[:, i], Ai[:, i]], axis=1)
        res += _tri_quad_sq_numpy(q1, r0, rg, ci / d)
        res += _tri_quad_sq_numpy(q2, r0, rg, ci / d)
        # corner triangles: correction -(c/d)(x - inner vertex), J = -2c/d
        T = np.stack([A[:, i], fs[:, i], Ai[:, i]], axis=1)
        S = np.stack([fe[:, i], B[:, i], Bi[:, i]], axis=1)
        k2 = (ci / d) ** 2
        flux += k2 * (_tri_second_moment_numpy(T, Ai[:, i])
                      + _tri_second_moment_numpy(S, Bi[:, i]))
        res += _tri_quad_sq_numpy(T, r0, rg, 2.0 * ci / d)
        res += _tri_quad_sq_numpy(S, r0, rg, 2.0 * ci / d)
    return flux, res


@njit
def _tri_area(ax, ay, bx, by, cx, cy):
    return 0.5 * abs((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))


@njit
def _quad_sq(ax, ay, bx, by, cx, cy, r0, gx, gy, shift, wq, bq):
    area = _tri_area(ax, ay, bx, by, cx, cy)
    s = 0.0
    for q in range(wq.shape[0]):
        x = bq[q, 0] * ax + bq[q, 1] * bx + bq[q, 2] * cx
        y = bq[q, 0] * ay + bq[q, 1] * by + bq[q, 2] * cy
        v = r0 + gx * x + gy * y + shift
        s += wq[q] * v * v
    return area * s


@njit
def _moment(ax, ay, bx, by, cx, cy, px, py, wq, bq):
    area = _tri_area(ax, ay, bx, by, cx, cy)
    s = 0.0
    for q in range(wq.shape[0]):
        x = bq[q, 0] * ax + bq[q, 1] * bx + bq[q, 2] * cx - px
        y = bq[q, 0] * ay + bq[q, 1] * by + bq[q, 2] * cy - py
        s += wq[q] * (x * x + y * y)
    return area * s


@njit
def small_terms_numba(coords, areas, lengths, r0, rg, c):
    nt = coords.shape[0]
    flux = np.empty(nt)
    res = np.empty(nt)
    wq, bq = Q4_W, Q4_BARY
    for t in range(nt):
        coef = np.empty(3)
        div = 0.0
        for i in range(3):
            coef[i] = -c[t, i] * lengths[t, i] / (2.0 * areas[t])
            div += 2.0 * coef[i]
        fs = 0.0
        rs = 0.0
        for q in range(wq.shape[0]):
            x = bq[q, 0] * coords[t, 0, 0] + bq[q, 1] * coords[t, 1, 0] + bq[q, 2] * coords[t, 2, 0]
            y = bq[q, 0] * coords[t, 0, 1] + bq[q, 1] * coords[t, 1, 1] + bq[q, 2] * coords[t, 2, 1]
            dx = 0.0
            dy = 0.0
            for i in range(3):
                dx += coef[i] * (x - coords[t, i, 0])
                dy += coef[i] * (y - coords[t, i, 1])
            fs += wq[q] * (dx * dx + dy * dy)
            v = r0[t] + rg[t, 0] * x + rg[t, 1] * y - div
            rs += wq[q] * v * v
        flux[t] = areas[t] * fs
        res[t] = areas[t] * rs
    return flux, res


@njit
def large_terms_numba(coords, d, r0, rg, c):
    nt = coords.shape[0]
    flux = np.zeros(nt)
    res = np.zeros(nt)
    wq, bq = Q4_W, Q4_BARY
    inner = np.empty((3, 2))
    for t in range(nt):
        P = coords[t]
        lens = np.empty(3)
        for i in range(3):
            a = (i + 1) % 3
            b = (i + 2) % 3
            lens[i] = np.hypot(P[b, 0] - P[a, 0], P[b, 1] - P[a, 1])
        per = lens[0] + lens[1] + lens[2]
        area = _tri_area(P[0, 0], P[0, 1], P[1, 0], P[1, 1], P[2, 0], P[2, 1])
        R = 2.0 * area / per
        ix = (lens[0] * P[0, 0] + lens[1] * P[1, 0] + lens[2] * P[2, 0]) / per
        iy = (lens[0] * P[0, 1] + lens[1] * P[1, 1] + lens[2] * P[2, 1]) / per
        dt = d[t]
        rho = (R - dt) / R
        for i in range(3):
            inner[i, 0] = ix + rho * (P[i, 0] - ix)
            inner[i, 1] = iy + rho * (P[i, 1] - iy)
        gx, gy = rg[t, 0], rg[t, 1]
        rs = _quad_sq(inner[0, 0], inner[0, 1], inner[1, 0], inner[1, 1],
                      inner[2, 0], inner[2, 1], r0[t], gx, gy, 0.0, wq, bq)
        fl = 0.0
        for i in range(3):
            a = (i + 1) % 3
            b = (i + 2) % 3
            tx = (P[b, 0] - P[a, 0]) / lens[i]
            ty = (P[b, 1] - P[a, 1]) / lens[i]
            sa = (inner[a, 0] - P[a, 0]) * tx + (inner[a, 1] - P[a, 1]) * ty
            sb = (inner[b, 0] - P[a, 0]) * tx + (inner[b, 1] - P[a, 1]) * ty
            fsx, fsy = P[a, 0] + sa * tx, P[a, 1] + sa * ty
            fex, fey = P[a, 0] + sb * tx, P[a, 1] + sb * ty
            ci = c[t, i]
            k = ci / dt
            fl += ci * ci * (sb - sa) * dt / 3.0
            rs += _quad_sq(fsx, fsy, fex, fey, inner[b, 0], inner[b, 1],
                           r0[t], gx, gy, k, wq, bq)
            rs += _quad_sq(fsx, fsy, inner[b, 0], inner[b, 1], inner[a, 0], inner[a, 1],
                           r0[t], gx, gy, k, wq, bq)
            fl += k * k * _moment(P[a, 0], P[a, 1], fsx, fsy, inner[a, 0], inner[a, 1],
                                  inner[a, 0], inner[a, 1], wq, bq)
            fl += k * k * _moment(fex, fey, P[b, 0], P[b, 1], inner[b, 0], inner[b, 1],
                                  inner[b, 0], inner[b, 1], wq, bq)
            rs += _quad_sq(P[a, 0], P[a, 1], fsx, fsy, inner[a, 0], inner[a, 1],
                           r0[t], gx, gy, 2.0 * k, wq, bq)
            rs += _quad_sq(fex, fey, P[b, 0], P[b, 1], inner[b, 0], inner[b, 1],
                           r0[t], gx, gy, 2.0 * k, wq, bq)
        flux[t] = fl
        res[t] = rs
    return flux, res


if USE_NUMBA:
    p1_local_blocks = p1_local_blocks_numba
    small_terms = small_terms_numba
    large_terms = large_terms_numba
else:
    p1_local_blocks = p1_local_blocks_numpy
    small_terms = small_terms_numpy
    large_terms = large_terms_numpy
