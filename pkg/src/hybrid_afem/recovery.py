"""Local H(div) flux recovery for P1 solutions.

Small elements carry a lowest-order Raviart-Thomas field whose normal
traces are the weighted averages ``ghat``.  Large elements (inradius above
the layer width sqrt(eps/beta)) are split into an inner triangle, three
rectangles and six corner triangles; the recovered flux equals the
numerical flux on the inner triangle, a linear-in-depth correction on each
rectangle and an RT0 correction on each corner triangle.

Every region field is affine, ``sigma_hat(x) = A x + b``.  Region slots per
element: 0 = inner triangle (or the whole element when small), 1 + i =
rectangle on local edge i, 4 + i = corner triangle at the start of edge i,
7 + i = corner triangle at its end.
"""
from dataclasses import dataclass

import numpy as np

from .fem import DIFFUSION
from .kernels import large_partition_numpy
from .mesh import DIRICHLET, INTERIOR, NEUMANN, triangle_geometry

N_REGIONS = 10
INNER, RECT, START, END = 0, 1, 4, 7


class RecoveryError(RuntimeError):
    """Inconsistent recovery data (signals an assembly bug)."""


@dataclass
class EdgeTrace:
    """Per element and local edge: averaging weight, recovered normal trace
    (w.r.t. the element's outward normal) and c = sigma_T.n - ghat."""
    lam: np.ndarray
    ghat: np.ndarray
    c: np.ndarray


def averaging_weights(mesh, alpha_k):
    """lambda_{K,e} = (h_K/alpha_K) / (h_K/alpha_K + h_K'/alpha_K'); 1 on boundary edges."""
    s = mesh.diameters / alpha_k
    nb = mesh.neighbors
    lam = np.ones((mesh.n_triangles, 3))
    inner = nb >= 0
    sk = np.broadcast_to(s[:, None], nb.shape)
    lam[inner] = sk[inner] / (sk[inner] + s[nb[inner]])
    return lam


def edge_traces(mesh, sigma, alpha_k, projected):
    """Weighted-average normal traces ghat on every element edge."""
    n = mesh.local_normals
    own = np.einsum("tid,td->ti", n, sigma)
    nb = mesh.neighbors
    lam = averaging_weights(mesh, alpha_k)
    other = np.zeros_like(own)
    inner = nb >= 0
    other[inner] = np.einsum("kd,kd->k", n[inner], sigma[nb[inner]])
    ghat = own.copy()
    ghat[inner] = lam[inner] * own[inner] + (1 - lam[inner]) * other[inner]
    tags = mesh.edge_tags[mesh.elem_edges]
    neu = tags == NEUMANN
    if neu.any():
        ghat[neu] = projected.gbar_n[mesh.elem_edges[neu]]
    return EdgeTrace(lam=lam, ghat=ghat, c=own - ghat)


def layer_width(data):
    """sqrt(eps / beta), infinite for the diffusion regime or beta = 0."""
    if data.regime == DIFFUSION or data.beta == 0:
        return np.inf
    return float(np.sqrt(data.epsilon / data.beta))


def classify(mesh, data):
    """Boolean mask of large elements (R_K > sqrt(eps/beta))."""
    return mesh.inradii > layer_width(data)


@dataclass
class RT0Flux:
    """Lowest-order Raviart-Thomas field on one triangle from its normal traces."""
    vertices: np.ndarray
    traces: np.ndarray

    def __post_init__(self):
        geo = triangle_geometry(self.vertices)
        self.geometry = geo
        w = self.traces * geo.edge_lengths / (2.0 * geo.area)
        self.q = w.sum()
        self.p = -(w[:, None] * self.vertices).sum(axis=0)

    @property
    def divergence(self):
        return 2.0 * self.q

    def __call__(self, x):
        return self.q * np.asarray(x) + self.p

    def flux_integral(self):
        """Sum over edges of the integral of the normal trace."""
        return float(np.dot(self.traces, self.geometry.edge_lengths))


def recover_small(vertices, ghat, prescribed_divergence=None, tol=1e-10):
    """RT0 field with normal traces ``ghat``.

    If ``prescribed_divergence`` is given it is compared with the divergence
    implied by the traces; a mismatch raises RecoveryError.
    """
    flux = RT0Flux(np.asarray(vertices, dtype=float), np.asarray(ghat, dtype=float))
    if prescribed_divergence is not None:
        scale = max(1.0, abs(prescribed_divergence), abs(flux.divergence))
        if abs(flux.divergence - prescribed_divergence) > tol * scale:
            raise RecoveryError(f"divergence {flux.divergence:.16e} does not match "
                                f"prescribed {prescribed_divergence:.16e}")
    return flux


@dataclass
class ElementPartition:
    """Inner triangle, rectangles and corner triangles of one large element."""
    vertices: np.ndarray
    d: float
    inner: np.ndarray
    foot_start: np.ndarray
    foot_end: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray

    def rectangle(self, i):
        return np.array([self.foot_start[i], self.foot_end[i],
                         self.inner[(i + 2) % 3], self.inner[(i + 1) % 3]])

    def start_triangle(self, i):
        """Corner triangle at the start vertex of edge i (shares x_Q with the rectangle)."""
        return np.array([self.vertices[(i + 1) % 3], self.foot_start[i], self.inner[(i + 1) % 3]])

    def end_triangle(self, i):
        return np.array([self.foot_end[i], self.vertices[(i + 2) % 3], self.inner[(i + 2) % 3]])

    def x_q(self, i):
        return self.foot_start[i]

    def polygons(self):
        """All ten region polygons in slot order."""
        out = [self.inner]
        out += [self.rectangle(i) for i in range(3)]
        out += [self.start_triangle(i) for i in range(3)]
        out += [self.end_triangle(i) for i in range(3)]
        return out


def _polygon_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def partition_large(vertices, d):
    """Partition a counterclockwise triangle for layer width ``d`` (0 < d < R_K)."""
    P = np.asarray(vertices, dtype=float).reshape(3, 2)
    geo = triangle_geometry(P)
    if not (0 < d < geo.inradius):
        raise ValueError(f"layer width {d} must lie in (0, R_K={geo.inradius})")
    inner, fs, fe, t, n = large_partition_numpy(P[None], np.array([d]))
    part = ElementPartition(vertices=P, d=float(d), inner=inner[0], foot_start=fs[0],
                            foot_end=fe[0], tangents=t[0], normals=n[0])
    # the inner triangle may shrink to roundoff size as d approaches R_K
    for poly in part.polygons():
        if _polygon_area(poly) < -1e-14 * geo.area:
            raise RecoveryError("partition produced a region with negative area")
    return part


def region_fields(coords, sigma, c, large, d):
    """Affine description of sigma_hat on each region slot.

    sigma_hat(x) = A (x - x_ref) + s_ref.  Referencing each region to one of
    its own points keeps evaluation accurate on thin strips.  Returns A
    (nt, 10, 2, 2), s_ref (nt, 10, 2) and x_ref (nt, 10, 2); unused slots of
    small elements are zero.
    """
    nt = len(coords)
    A = np.zeros((nt, N_REGIONS, 2, 2))
    s_ref = np.zeros((nt, N_REGIONS, 2))
    x_ref = np.zeros((nt, N_REGIONS, 2))
    eye = np.eye(2)
    small = ~large
    if small.any():
        P = coords[small]
        vec = P[:, [2, 0, 1]] - P[:, [1, 2, 0]]
        lengths = np.hypot(vec[..., 0], vec[..., 1])
        area = 0.5 * (vec[:, 2, 0] * (-vec[:, 1, 1]) - (-vec[:, 1, 0]) * vec[:, 2, 1])
        xc = P.mean(axis=1)
        # RT0 difference field -sum_i c_i l_i / (2|K|) (x - P_i), added to sigma_T
        w = -c[small] * lengths / (2.0 * area[:, None])
        A[small, INNER] = w.sum(axis=1)[:, None, None] * eye
        s_ref[small, INNER] = sigma[small] + np.einsum("ti,tid->td", w, xc[:, None, :] - P)
        x_ref[small, INNER] = xc
    if large.any():
        P = coords[large]
        dl = d[large]
        s = sigma[large]
        inner, fs, fe, _, n = large_partition_numpy(P, dl)
        s_ref[large, INNER] = s
        x_ref[large, INNER] = inner.mean(axis=1)
        k = c[large] / dl[:, None]
        for i in range(3):
            ki = k[:, i]
            ni = n[:, i]
            A[large, RECT + i] = -ki[:, None, None] * np.einsum("ta,tb->tab", ni, ni)
            s_ref[large, RECT + i] = s - c[large, i][:, None] * ni
            x_ref[large, RECT + i] = fs[:, i]
            for slot, vert in ((START + i, (i + 1) % 3), (END + i, (i + 2) % 3)):
                A[large, slot] = -ki[:, None, None] * eye
                s_ref[large, slot] = s
                x_ref[large, slot] = inner[:, vert]
    return A, s_ref, x_ref


@dataclass
class RecoveredFlux:
    """Recovered flux on a whole mesh."""
    mesh: object
    sigma: np.ndarray
    traces: EdgeTrace
    large: np.ndarray
    d: np.ndarray
    A: np.ndarray
    s_ref: np.ndarray
    x_ref: np.ndarray

    @property
    def b(self):
        """Constant part of the affine fields, sigma_hat = A x + b."""
        return self.s_ref - np.einsum("tsab,tsb->tsa", self.A, self.x_ref)

    def partition(self, k):
        if not self.large[k]:
            raise ValueError(f"element {k} is not partitioned")
        return partition_large(self.mesh.coords[k], self.d[k])

    def regions(self, k):
        """List of (slot, polygon) pairs of element ``k``."""
        if not self.large[k]:
            return [(INNER, np.array(self.mesh.coords[k]))]
        return list(enumerate(self.partition(k).polygons()))

    def evaluate(self, k, slot, x):
        x = np.asarray(x, dtype=float)
        return (x - self.x_ref[k, slot]) @ self.A[k, slot].T + self.s_ref[k, slot]

    def divergence(self, k, slot):
        return float(np.trace(self.A[k, slot]))

    def boundary_pieces(self, k, i):
        """Pieces of local edge i as (slot, s0, s1), s measured from the edge start."""
        L = self.mesh.local_edge_lengths[k, i]
        if not self.large[k]:
            return [(INNER, 0.0, L)]
        part = self.partition(k)
        a = self.mesh.coords[k, (i + 1) % 3]
        t = part.tangents[i]
        sa = float(np.dot(part.foot_start[i] - a, t))
        sb = float(np.dot(part.foot_end[i] - a, t))
        return [(START + i, 0.0, sa), (RECT + i, sa, sb), (END + i, sb, L)]


def recover_flux(mesh, data, parts, projected):
    """Recovered flux for the whole mesh from precomputed residual parts."""
    traces = edge_traces(mesh, parts.sigma, parts.alpha_k, projected)
    large = classify(mesh, data)
    d = np.full(mesh.n_triangles, layer_width(data))
    A, s_ref, x_ref = region_fields(np.ascontiguousarray(mesh.coords), parts.sigma, traces.c,
                                   large, d)
    return RecoveredFlux(mesh=mesh, sigma=parts.sigma, traces=traces, large=large, d=d, A=A,
                         s_ref=s_ref, x_ref=x_ref)


def recover_large(vertices, partition, ghat, sigma):
    """Region fields (A, s_ref, x_ref) of one partitioned element, in slot order."""
    P = np.asarray(vertices, dtype=float)
    geo = triangle_geometry(P)
    own = geo.normals @ np.asarray(sigma)
    c = own - np.asarray(ghat)
    A, s_ref, x_ref = region_fields(P[None], np.asarray(sigma, dtype=float)[None], c[None],
                                    np.array([True]), np.array([partition.d]))
    return A[0], s_ref[0], x_ref[0]


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------
def _fan(poly):
    return np.array([[poly[0], poly[j], poly[j + 1]] for j in range(1, len(poly) - 1)])


def flux_correction_norms(recovered, k, alpha_k):
    """(|alpha^{-1/2}(sigma_hat - sigma_T)|_K, |div(sigma_hat - sigma_T)|_K) by
    region-wise quadrature."""
    from .kernels import Q4_BARY, Q4_W
    f2 = 0.0
    d2 = 0.0
    s = recovered.sigma[k]
    for slot, poly in recovered.regions(k):
        for tri in _fan(poly):
            area = abs(_polygon_area(tri))
            x = Q4_BARY @ tri
            diff = recovered.evaluate(k, slot, x) - s
            f2 += area * np.dot(Q4_W, (diff * diff).sum(axis=1))
            d2 += area * recovered.divergence(k, slot) ** 2
    return np.sqrt(f2 / alpha_k), np.sqrt(d2)


def _normal(p, q):
    v = q - p
    n = np.stack([v[..., 1], -v[..., 0]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _sample(p, q, taus=(0.25, 0.5, 0.75)):
    return np.stack([p + t * (q - p) for t in taus], axis=-2)


def conformity_defect(recovered, scale=None):
    """Maximum normal-trace mismatch of sigma_hat, relative to ``scale``.

    Checks every interior mesh edge (three points inside every boundary
    piece of either neighbour) and every internal interface of partitioned
    elements (three points per interface).  Returns (edge_defect,
    interface_defect).
    """
    mesh = recovered.mesh
    A, s_ref, x_ref = recovered.A, recovered.s_ref, recovered.x_ref
    if scale is None:
        scale = max(float(np.abs(recovered.sigma).max()), 1e-300)

    def ev(k, slot, x):
        return np.einsum("...ab,...b->...a", A[k, slot], x - x_ref[k, slot]) + s_ref[k, slot]

    # --- mesh edges ----------------------------------------------------
    inner_edges = np.flatnonzero(mesh.edge_tags == INTERIOR)
    kp, km = mesh.edge_elems[inner_edges].T
    ip = np.argmax(mesh.elem_edges[kp] == inner_edges[:, None], axis=1)
    im = np.argmax(mesh.elem_edges[km] == inner_edges[:, None], axis=1)
    ne = len(inner_edges)
    edge_def = 0.0
    if ne:
        pieces_p = _piece_bounds(recovered, kp, ip)          # (ne, 3, 2)
        pieces_m = _piece_bounds(recovered, km, im)
        Lp = mesh.local_edge_lengths[kp, ip]
        n_e = mesh.local_normals[kp, ip]
        a_p = mesh.coords[kp, (ip + 1) % 3]
        t_p = (mesh.coords[kp, (ip + 2) % 3] - a_p) / Lp[:, None]
        # samples in every piece of both sides, as arclength from the + start
        taus = np.array([0.25, 0.5, 0.75])
        sp_ = (pieces_p[..., 0:1] + taus * (pieces_p[..., 1:2] - pieces_p[..., 0:1])).reshape(ne, -1)
        sm_ = (pieces_m[..., 0:1] + taus * (pieces_m[..., 1:2] - pieces_m[..., 0:1])).reshape(ne, -1)
        s_all = np.concatenate([sp_, Lp[:, None] - sm_], axis=1)   # (ne, 18)
        x = a_p[:, None, :] + s_all[..., None] * t_p[:, None, :]
        slot_p = _locate(recovered, kp, ip, pieces_p, s_all)
        slot_m = _locate(recovered, km, im, pieces_m, Lp[:, None] - s_all)
        kpp = np.broadcast_to(kp[:, None], slot_p.shape)
        kmm = np.broadcast_to(km[:, None], slot_m.shape)
        gp = np.einsum("esd,ed->es", ev(kpp, slot_p, x), n_e)
        gm = np.einsum("esd,ed->es", ev(kmm, slot_m, x), n_e)
        edge_def = float(np.abs(gp - gm).max()) / scale

    # --- interfaces inside partitioned elements ------------------------
    iface_def = 0.0
    L = np.flatnonzero(recovered.large)
    if len(L):
        inner, fs, fe, _, _ = large_partition_numpy(np.ascontiguousarray(mesh.coords[L]),
                                                    recovered.d[L])
        P = mesh.coords[L]
        pairs = []
        for i in range(3):
            a1, a2 = (i + 1) % 3, (i + 2) % 3
            pairs.append((INNER, RECT + i, inner[:, a2], inner[:, a1]))
            pairs.append((RECT + i, START + i, fs[:, i], inner[:, a1]))
            pairs.append((RECT + i, END + i, fe[:, i], inner[:, a2]))
            prev = (i + 2) % 3      # edge ending at vertex a1
            pairs.append((START + i, END + prev, P[:, a1], inner[:, a1]))
        for s1, s2, p, q in pairs:
            x = _sample(p, q)
            n = _normal(p, q)
            g1 = np.einsum("esd,ed->es", ev(L[:, None], s1, x), n)
            g2 = np.einsum("esd,ed->es", ev(L[:, None], s2, x), n)
            iface_def = max(iface_def, float(np.abs(g1 - g2).max()) / scale)
    return edge_def, iface_def


def _piece_bounds(recovered, k, i):
    """(n, 3, 2) arclength bounds of the three boundary pieces of local edge i.

    Small elements get three equal thirds of the whole edge.
    """
    mesh = recovered.mesh
    L = mesh.local_edge_lengths[k, i]
    out = np.stack([np.stack([np.zeros_like(L), L / 3], -1),
                    np.stack([L / 3, 2 * L / 3], -1),
                    np.stack([2 * L / 3, L], -1)], axis=1)
    lg = recovered.large[k]
    if lg.any():
        kk, ii = k[lg], i[lg]
        inner, fs, fe, t, _ = large_partition_numpy(np.ascontiguousarray(mesh.coords[kk]),
                                                    recovered.d[kk])
        r = np.arange(len(kk))
        a = mesh.coords[kk, (ii + 1) % 3]
        tt = t[r, ii]
        sa = np.einsum("td,td->t", fs[r, ii] - a, tt)
        sb = np.einsum("td,td->t", fe[r, ii] - a, tt)
        Lk = L[lg]
        out[lg] = np.stack([np.stack([np.zeros_like(sa), sa], -1),
                            np.stack([sa, sb], -1),
                            np.stack([sb, Lk], -1)], axis=1)
    return out


def _locate(recovered, k, i, pieces, s):
    """Region slot of points at arclength s along local edge i of element k."""
    slot = np.zeros(s.shape, dtype=np.int64)
    lg = recovered.large[k]
    if lg.any():
        sa = pieces[lg, 1, 0][:, None]
        sb = pieces[lg, 1, 1][:, None]
        ii = i[lg][:, None]
        ss = s[lg]
        slot[lg] = np.where(ss < sa, START + ii, np.where(ss > sb, END + ii, RECT + ii))
    return slot


def divergence_defect(recovered):
    """Max relative mismatch of |omega| div sigma_hat vs the boundary flux,
    over every region of every element.

    Evaluated for sigma_hat - sigma_T (sigma_T is constant and contributes
    nothing to either side), relative to the summed absolute side fluxes.
    """
    mesh = recovered.mesh
    worst = 0.0
    polys = []
    L = np.flatnonzero(recovered.large)
    S = np.flatnonzero(~recovered.large)
    if len(S):
        polys.append((S, INNER, mesh.coords[S]))
    if len(L):
        inner, fs, fe, _, _ = large_partition_numpy(np.ascontiguousarray(mesh.coords[L]),
                                                    recovered.d[L])
        P = mesh.coords[L]
        polys.append((L, INNER, inner))
        for i in range(3):
            a1, a2 = (i + 1) % 3, (i + 2) % 3
            polys.append((L, RECT + i, np.stack([fs[:, i], fe[:, i], inner[:, a2], inner[:, a1]], 1)))
            polys.append((L, START + i, np.stack([P[:, a1], fs[:, i], inner[:, a1]], 1)))
            polys.append((L, END + i, np.stack([fe[:, i], P[:, a2], inner[:, a2]], 1)))
    for k, slot, poly in polys:
        Ak = recovered.A[k, slot]
        sk = recovered.s_ref[k, slot]
        xk = recovered.x_ref[k, slot]
        q = np.roll(poly, -1, axis=1)
        mid = 0.5 * (poly + q)
        v = q - poly
        nl = np.stack([v[..., 1], -v[..., 0]], axis=-1)    # normal scaled by length
        val = (np.einsum("kab,ksb->ksa", Ak, mid - xk[:, None, :])
               + (sk - recovered.sigma[k])[:, None, :])
        side = np.einsum("ksd,ksd->ks", val, nl)
        bflux = side.sum(axis=1)
        rel = poly - poly[:, :1]
        x, y = rel[..., 0], rel[..., 1]
        area = 0.5 * ((x * np.roll(y, -1, 1)).sum(1) - (y * np.roll(x, -1, 1)).sum(1))
        div = np.trace(Ak, axis1=1, axis2=2) * area
        scale = np.abs(side).sum(axis=1)
        ok = scale > 0
        if ok.any():
            worst = max(worst, float((np.abs(div - bflux)[ok] / scale[ok]).max()))
    return worst


def write_flux_dump(recovered, path):
    """Plain-text dump: per element a variant tag followed by its data."""
    mesh = recovered.mesh
    with open(path, "w") as fh:
        for k in range(mesh.n_triangles):
            if not recovered.large[k]:
                g = " ".join(f"{v:.16e}" for v in recovered.traces.ghat[k])
                fh.write(f"{k} small {g}\n")
            else:
                part = recovered.partition(k)
                pts = np.vstack([part.inner, part.foot_start, part.foot_end])
                corners = " ".join(f"{v:.16e}" for v in pts.ravel())
                g = " ".join(f"{v:.16e}" for v in recovered.traces.ghat[k])
                fh.write(f"{k} large d={part.d:.16e} ghat {g} corners {corners}\n")
