"""Conforming triangulations with edge topology and newest-vertex bisection.

Vertex ordering convention: every triangle is stored counterclockwise with
its *newest vertex* in local slot 0, so the refinement edge is always local
edge 0.  Local edge ``i`` is the edge opposite local vertex ``i`` and runs
from vertex ``i+1`` to vertex ``i+2`` (indices mod 3).
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}

# local edge i = (vertex LOCAL_EDGES[i, 0], vertex LOCAL_EDGES[i, 1])
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Invalid or degenerate mesh input."""


def all_dirichlet(x, y):
    return "dirichlet"


@dataclass(frozen=True)
class TriangleGeometry:
    area: float
    diameter: float
    inradius: float
    edge_lengths: np.ndarray
    normals: np.ndarray
    perimeter: float


def triangle_geometry(points):
    """Area, diameter, inradius, edge lengths and outward normals of a triangle.

    ``points`` is a (3, 2) array.  Clockwise input is accepted; normals are
    always outward.  Raises MeshError for (near) zero area.
    """
    p = np.asarray(points, dtype=float).reshape(3, 2)
    if not np.all(np.isfinite(p)):
        raise MeshError("non-finite vertex coordinates")
    signed = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                    - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    vec = p[LOCAL_EDGES[:, 1]] - p[LOCAL_EDGES[:, 0]]
    lengths = np.hypot(vec[:, 0], vec[:, 1])
    scale = lengths.max() ** 2
    if scale == 0.0 or abs(signed) <= 1e-14 * scale:
        raise MeshError("degenerate triangle (zero area)")
    orient = 1.0 if signed > 0 else -1.0
    normals = orient * np.column_stack([vec[:, 1], -vec[:, 0]]) / lengths[:, None]
    perimeter = lengths.sum()
    area = abs(signed)
    return TriangleGeometry(area=area, diameter=lengths.max(),
                            inradius=2.0 * area / perimeter,
                            edge_lengths=lengths, normals=normals,
                            perimeter=perimeter)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Conforming triangulation of an axis-aligned rectangle.

    Attributes
    ----------
    vertices : (nv, 2) float
    triangles : (nt, 3) int, counterclockwise, newest vertex first
    generation : (nt,) int, number of bisections since the initial mesh
    edges : (ne, 2) int, vertex pairs sorted ascending
    elem_edges : (nt, 3) int, edge id of each local edge
    edge_elems : (ne, 2) int, (K_e^+, K_e^-); K_e^- is -1 on the boundary
    edge_tags : (ne,) int, INTERIOR / DIRICHLET / NEUMANN
    edge_normals : (ne, 2) float, outward normal of K_e^+ on e
    """

    def __init__(self, vertices, triangles, generation=None, domain=None,
                 boundary_spec=None):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError("triangles must have shape (nt, 3), nt >= 1")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle references unknown vertex")
        t = triangles
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex ids")
        if generation is None:
            generation = np.zeros(len(triangles), dtype=np.int64)
        if domain is None:
            lo = vertices.min(axis=0)
            hi = vertices.max(axis=0)
            domain = (lo[0], hi[0], lo[1], hi[1])
        self.vertices = _frozen(vertices)
        self.triangles = _frozen(triangles)
        self.generation = _frozen(np.asarray(generation, dtype=np.int64))
        self.domain = tuple(float(v) for v in domain)
        self.boundary_spec = boundary_spec or all_dirichlet
        if np.any(self.signed_areas <= 0.0):
            bad = int(np.flatnonzero(self.signed_areas <= 0.0)[0])
            raise MeshError(f"triangle {bad} has non-positive signed area")
        self._build_topology()

    @classmethod
    def from_arrays(cls, vertices, triangles, **kwargs):
        """Build a mesh from arbitrary triangles.

        Triangles are reoriented counterclockwise and rotated so that the
        longest edge becomes the refinement edge.
        """
        v = np.asarray(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64)
        p = v[t]
        s = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        t[s < 0] = t[s < 0][:, [0, 2, 1]]
        p = v[t]
        vec = p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]]
        k = np.argmax(np.einsum("tij,tij->ti", vec, vec), axis=1)
        rot = (np.arange(3)[None, :] + k[:, None]) % 3
        t = np.take_along_axis(t, rot, axis=1)
        return cls(v, t, **kwargs)

    def __repr__(self):
        return (f"Mesh(nv={self.n_vertices}, nt={self.n_triangles}, "
                f"ne={self.n_edges})")

    # -- topology -------------------------------------------------------
    def _build_topology(self):
        t = self.triangles
        nt, nv = len(t), len(self.vertices)
        loc = t[:, LOCAL_EDGES]                       # (nt, 3, 2)
        a = np.minimum(loc[..., 0], loc[..., 1]).ravel()
        b = np.maximum(loc[..., 0], loc[..., 1]).ravel()
        key = a * nv + b
        ukey, inv = np.unique(key, return_inverse=True)
        ne = len(ukey)
        counts = np.bincount(inv, minlength=ne)
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        edges = np.column_stack([ukey // nv, ukey % nv])

        flat_t = np.repeat(np.arange(nt), 3)
        flat_i = np.tile(np.arange(3), nt)
        order = np.argsort(inv, kind="stable")
        starts = np.searchsorted(inv[order], np.arange(ne))
        plus = flat_t[order[starts]]
        plus_local = flat_i[order[starts]]
        minus = np.full(ne, -1, dtype=np.int64)
        two = counts == 2
        minus[two] = flat_t[order[starts[two] + 1]]

        normals = self.local_normals[plus, plus_local]
        tags = np.zeros(ne, dtype=np.int64)
        bnd = np.flatnonzero(~two)
        mids = 0.5 * (self.vertices[edges[bnd, 0]] + self.vertices[edges[bnd, 1]])
        for k, (x, y) in zip(bnd, mids):
            tag = self.boundary_spec(x, y)
            code = TAG_CODES.get(tag)
            if code is None or code == INTERIOR:
                raise MeshError(f"boundary_spec returned invalid tag {tag!r}")
            tags[k] = code

        self.edges = _frozen(edges)
        self.elem_edges = _frozen(inv.reshape(nt, 3))
        self.edge_elems = _frozen(np.column_stack([plus, minus]))
        self.edge_tags = _frozen(tags)
        self.edge_normals = _frozen(normals)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def refinement_edge(self):
        """Local index of each triangle's refinement edge (always 0 here)."""
        return np.zeros(self.n_triangles, dtype=np.int64)

    @cached_property
    def dirichlet_vertices(self):
        e = self.edges[self.edge_tags == DIRICHLET]
        return np.unique(e.ravel())

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_tags != INTERIOR)

    # -- geometry -------------------------------------------------------
    @cached_property
    def coords(self):
        """(nt, 3, 2) vertex coordinates per triangle."""
        return _frozen(self.vertices[self.triangles])

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def local_edge_vectors(self):
        p = self.coords
        return p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]]

    @cached_property
    def local_edge_lengths(self):
        v = self.local_edge_vectors
        return np.hypot(v[..., 0], v[..., 1])

    @cached_property
    def local_normals(self):
        """(nt, 3, 2) outward unit normals on each local edge."""
        v = self.local_edge_vectors
        n = np.stack([v[..., 1], -v[..., 0]], axis=-1)
        return n / self.local_edge_lengths[..., None]

    @cached_property
    def diameters(self):
        return self.local_edge_lengths.max(axis=1)

    @cached_property
    def perimeters(self):
        return self.local_edge_lengths.sum(axis=1)

    @cached_property
    def inradii(self):
        return 2.0 * self.areas / self.perimeters

    @cached_property
    def incenters(self):
        w = self.local_edge_lengths / self.perimeters[:, None]
        return np.einsum("ti,tid->td", w, self.coords)

    @cached_property
    def centroids(self):
        return self.coords.mean(axis=1)

    @cached_property
    def grad_lambda(self):
        """(nt, 3, 2) gradients of the barycentric (P1 hat) functions."""
        # grad phi_i = -|e_i| n_i / (2 |K|)
        return -(self.local_edge_lengths[..., None] * self.local_normals
                 / (2.0 * self.areas[:, None, None]))

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def shape_constant(self):
        """Observed C0 = max h_K / R_K."""
        return float(np.max(self.diameters / self.inradii))

    def geometry(self, k):
        """Geometry record of triangle ``k``."""
        return triangle_geometry(self.coords[k])

    @cached_property
    def neighbors(self):
        """(nt, 3) element across each local edge, -1 on the boundary."""
        ee = self.elem_edges
        pm = self.edge_elems[ee]                      # (nt, 3, 2)
        me = np.arange(self.n_triangles)[:, None]
        return np.where(pm[..., 0] == me, pm[..., 1], pm[..., 0])


def build_initial_mesh(nx=4, ny=4, domain=(-1.0, 1.0, -1.0, 1.0), boundary_spec=None):
    """Split-square mesh: nx*ny squares, diagonal bottom-left to top-right.

    The refinement edge of each right triangle is its hypotenuse.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive integers")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate rectangle")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    i, j = i.ravel(), j.ravel()
    bl = j * (nx + 1) + i
    br = bl + 1
    tl = bl + nx + 1
    tr = tl + 1
    lower = np.column_stack([br, tr, bl])   # right angle at br
    upper = np.column_stack([tl, bl, tr])   # right angle at tl
    triangles = np.empty((2 * len(bl), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles, domain=(x0, x1, y0, y1),
                boundary_spec=boundary_spec)


def patches(mesh):
    """Element patches around edges and elements.

    Returns ``(omega_e, omega_K)``: omega_e is (ne, 2) (second entry -1 on
    the boundary); omega_K is (nt, 4) holding K followed by its edge
    neighbours, padded with -1.
    """
    omega_k = np.column_stack([np.arange(mesh.n_triangles), mesh.neighbors])
    return mesh.edge_elems.copy(), omega_k


def bisect(mesh, marked):
    """Refine ``mesh`` by newest-vertex bisection of the ``marked`` elements.

    Closure bisections are added until the result is conforming.  Each
    bisected parent keeps its id for the first child; second children are
    appended in parent order.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked element id out of range")
    ee = mesh.elem_edges
    emark = np.zeros(mesh.n_edges, dtype=bool)
    emark[ee[marked, 0]] = True
    while True:
        need = emark[ee].any(axis=1) & ~emark[ee[:, 0]]
        if not need.any():
            break
        emark[ee[need, 0]] = True

    medges = np.flatnonzero(emark)
    nv = mesh.n_vertices
    mid = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid[medges] = nv + np.arange(len(medges))
    e = mesh.edges[medges]
    vertices = np.vstack([mesh.vertices,
                          0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    tri = mesh.triangles.copy()
    gen = mesh.generation.copy()
    e0 = ee[:, 0].copy()

    # first pass: split through the (marked) refinement edge
    sel = np.flatnonzero(emark[e0])
    tri, gen, e0 = _split(tri, gen, e0, sel, mid, ee[sel, 2], ee[sel, 1])
    # second pass: children whose new refinement edge is marked
    ok = e0 >= 0
    sel = np.flatnonzero(ok & emark[np.where(ok, e0, 0)])
    minus1 = np.full(len(sel), -1, dtype=np.int64)
    tri, gen, e0 = _split(tri, gen, e0, sel, mid, minus1, minus1)

    return Mesh(vertices, tri, generation=gen, domain=mesh.domain,
                boundary_spec=mesh.boundary_spec)


def _split(tri, gen, e0, sel, mid, e0_first, e0_second):
    if len(sel) == 0:
        return tri, gen, np.full(len(tri), -1, dtype=np.int64)
    p0, p1, p2 = tri[sel, 0], tri[sel, 1], tri[sel, 2]
    m = mid[e0[sel]]
    first = np.column_stack([m, p0, p1])
    second = np.column_stack([m, p2, p0])
    tri = tri.copy()
    tri[sel] = first
    tri = np.vstack([tri, second])
    g = gen[sel] + 1
    gen = gen.copy()
    gen[sel] = g
    gen = np.concatenate([gen, g])
    new_e0 = np.full(len(tri), -1, dtype=np.int64)
    new_e0[sel] = e0_first
    new_e0[len(tri) - len(sel):] = e0_second
    return tri, gen, new_e0


def uniform_refine(mesh, times=1):
    """Bisect every element ``times`` times."""
    for _ in range(times):
        mesh = bisect(mesh, np.arange(mesh.n_triangles))
    return mesh


def is_conforming(mesh, tol=1e-12):
    """True if no edge is shared by more than two triangles and every
    single-sided edge lies on the rectangle boundary."""
    bnd = mesh.edge_elems[:, 1] < 0
    x0, x1, y0, y1 = mesh.domain
    p = mesh.vertices[mesh.edges[bnd]]              # (nb, 2, 2)
    scale = tol * max(x1 - x0, y1 - y0)
    on = ((np.abs(p[..., 0] - x0) <= scale).all(1) | (np.abs(p[..., 0] - x1) <= scale).all(1)
          | (np.abs(p[..., 1] - y0) <= scale).all(1) | (np.abs(p[..., 1] - y1) <= scale).all(1))
    return bool(on.all())


def similarity_classes(mesh, decimals=8):
    """Number of distinct triangle shapes up to similarity."""
    lens = np.sort(mesh.local_edge_lengths, axis=1)
    lens = lens / lens[:, 2:3]
    return len(np.unique(np.round(lens, decimals), axis=0))


def write_mesh(mesh, path):
    """Plain-text export: ``nv nt ne`` then vertex, triangle and edge lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}\n")
        for k, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{k} {float(x)!r} {float(y)!r}\n")
        for k, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{k} {a} {b} {c}\n")
        for k, ((a, b), tag) in enumerate(zip(mesh.edges, mesh.edge_tags)):
            fh.write(f"{k} {a} {b} {TAG_NAMES[int(tag)]}\n")


def read_mesh(path):
    """Inverse of :func:`write_mesh`.

    Boundary tags are restored from the file; edges created by later
    refinement default to Dirichlet.
    """
    with open(path) as fh:
        nv, nt, ne = map(int, fh.readline().split())
        verts = np.array([fh.readline().split()[1:] for _ in range(nv)], dtype=float)
        tris = np.array([fh.readline().split()[1:] for _ in range(nt)], dtype=np.int64)
        tagged = {}
        for _ in range(ne):
            _, a, b, tag = fh.readline().split()
            if tag != "interior":
                tagged[(int(a), int(b))] = tag
    mids = {}
    for (a, b), tag in tagged.items():
        m = 0.5 * (verts[a] + verts[b])
        mids[(round(m[0], 12), round(m[1], 12))] = tag

    def spec(x, y):
        return mids.get((round(x, 12), round(y, 12)), "dirichlet")

    return Mesh(verts, tris, boundary_spec=spec)
