"""Unstructured 2D meshes: Delaunay triangulations, barycentric duals,
geometry, quadrature and reconstruction stencils.

A :class:`PolyMesh` stores every cell as a counter-clockwise polygon in
absolute coordinates.  Periodic identification is resolved by wrapping node
coordinates into the domain box: two polygon edges whose wrapped endpoints
coincide form one face, and the translation between the two copies is kept
as an integer lattice shift.  Cells near a periodic seam may therefore extend
outside the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .quadrature import map_segment_rule, map_triangle_rule


class MeshError(ValueError):
    """Invalid input or failed construction of a mesh."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def corners(self) -> np.ndarray:
        return np.array([[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]])

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        s = tol * max(self.width, self.height)
        return (
            (pts[:, 0] >= self.x0 - s) & (pts[:, 0] <= self.x1 + s)
            & (pts[:, 1] >= self.y0 - s) & (pts[:, 1] <= self.y1 + s)
        )


@dataclass
class Triangulation:
    """Vertices, counter-clockwise vertex-index triples and generator flags."""

    vertices: np.ndarray
    triangles: np.ndarray
    generators: np.ndarray
    domain: Rect | None = None

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


# ---------------------------------------------------------------------------
# Bowyer-Watson
# ---------------------------------------------------------------------------

def _circumcircles(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return np.column_stack([ux + a[:, 0], uy + a[:, 1]]), ux * ux + uy * uy


def _incircle(p: np.ndarray, tri_pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Incircle determinant (positive when ``p`` is inside) and its scale."""
    d = tri_pts - p
    ax, ay = d[:, 0, 0], d[:, 0, 1]
    bx, by = d[:, 1, 0], d[:, 1, 1]
    cx, cy = d[:, 2, 0], d[:, 2, 1]
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    det = a2 * (bx * cy - cx * by) - b2 * (ax * cy - cx * ay) + c2 * (ax * by - bx * ay)
    return det, (a2 + b2 + c2) ** 2


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def bowyer_watson(points: np.ndarray) -> np.ndarray:
    """Delaunay triangles (counter-clockwise index triples) of ``points``.

    Incremental insertion into a super-triangle.  Cocircular configurations
    are resolved by treating near-zero incircle tests as "outside", and the
    cavity is grown by adjacency from the triangles containing the new point
    so it stays connected and star-shaped.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    centre = 0.5 * (lo + hi)
    span = max(float(np.max(hi - lo)), 1e-300)
    big = 100.0 * span
    sup = centre + np.array([[-2.0 * big, -big], [2.0 * big, -big], [0.0, 2.0 * big]])
    verts = np.vstack([pts, sup])

    cap = 2 * n + 16
    tris = np.zeros((cap, 3), dtype=np.int64)
    cen = np.zeros((cap, 2))
    rad2 = np.zeros(cap)
    alive = np.zeros(cap, dtype=bool)
    tris[0] = [n, n + 1, n + 2]
    c0, r0 = _circumcircles(verts[tris[:1]])
    cen[0], rad2[0], alive[0] = c0[0], r0[0], True
    count = 1

    for ip in range(n):
        p = verts[ip]
        live = np.flatnonzero(alive[:count])
        d2 = np.sum((cen[live] - p) ** 2, axis=1)
        cand = live[d2 <= rad2[live] * (1.0 + 1e-9)]
        tp = verts[tris[cand]]
        det, scale = _incircle(p, tp)
        bad_mask = det > 1e-11 * scale
        # triangles containing p (on an edge counts)
        o0 = _orient(tp[:, 0], tp[:, 1], p)
        o1 = _orient(tp[:, 1], tp[:, 2], p)
        o2 = _orient(tp[:, 2], tp[:, 0], p)
        tol = -1e-13 * span * span
        inside = (o0 >= tol) & (o1 >= tol) & (o2 >= tol)
        if not inside.any():
            raise MeshError(f"point {ip} could not be located in the triangulation")
        seeds = set(cand[inside].tolist())
        bad = set(cand[bad_mask].tolist()) | seeds

        # connected component of bad triangles reachable from the seeds
        edge_owner: dict[tuple[int, int], int] = {}
        for t in bad:
            a, b, c = tris[t]
            edge_owner[(a, b)] = t
            edge_owner[(b, c)] = t
            edge_owner[(c, a)] = t
        cavity = set(seeds)
        stack = list(seeds)
        while stack:
            t = stack.pop()
            a, b, c = tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = edge_owner.get((v, u))
                if nb is not None and nb not in cavity:
                    cavity.add(nb)
                    stack.append(nb)

        # shrink until every boundary edge sees p on its left
        while True:
            directed = {}
            for t in cavity:
                a, b, c = tris[t]
                directed[(a, b)] = t
                directed[(b, c)] = t
                directed[(c, a)] = t
            boundary = [(e, t) for e, t in directed.items() if (e[1], e[0]) not in directed]
            bad_edges = [t for (u, v), t in boundary
                         if _orient(verts[u], verts[v], p) <= 1e-14 * span * span and t not in seeds]
            if not bad_edges:
                break
            cavity.difference_update(bad_edges)

        for t in cavity:
            alive[t] = False
        new = np.array([[u, v, ip] for (u, v), _ in boundary], dtype=np.int64)
        m = len(new)
        if count + m > cap:
            keep = np.flatnonzero(alive[:count])
            cap = max(2 * cap, len(keep) + m + 16)
            t2 = np.zeros((cap, 3), dtype=np.int64)
            c2 = np.zeros((cap, 2))
            r2 = np.zeros(cap)
            a2 = np.zeros(cap, dtype=bool)
            k = len(keep)
            t2[:k], c2[:k], r2[:k], a2[:k] = tris[keep], cen[keep], rad2[keep], True
            tris, cen, rad2, alive, count = t2, c2, r2, a2, k
        cc, rr = _circumcircles(verts[new])
        tris[count:count + m] = new
        cen[count:count + m] = cc
        rad2[count:count + m] = rr
        alive[count:count + m] = True
        count += m

    out = tris[:count][alive[:count]]
    out = out[np.all(out < n, axis=1)]
    # deterministic order: sort by rotated triple
    rot = np.argmin(out, axis=1)
    out = np.array([np.roll(t, -r) for t, r in zip(out, rot)], dtype=np.int64).reshape(-1, 3)
    order = np.lexsort((out[:, 2], out[:, 1], out[:, 0]))
    return out[order]


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    tree = cKDTree(points)
    keep = np.ones(len(points), dtype=bool)
    for i, j in sorted(tree.query_pairs(tol)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def build_delaunay(points: Sequence[Sequence[float]] | np.ndarray, domain: Rect) -> Triangulation:
    """Delaunay triangulation of ``points`` plus the four corners of ``domain``.

    Raises
    ------
    MeshError
        Fewer than three points, all points collinear, or points outside the domain.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise MeshError("at least three points are required")
    if not np.all(np.isfinite(pts)):
        raise MeshError("non-finite point coordinates")
    centred = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(1.0, float(np.abs(centred).max()))) < 2:
        raise MeshError("all points are collinear")
    if not np.all(domain.contains(pts)):
        raise MeshError("points lie outside the domain")
    size = max(domain.width, domain.height)
    allp = _dedupe(np.vstack([domain.corners, pts]), 1e-10 * size)
    tri = bowyer_watson(allp)
    return Triangulation(allp, tri, np.ones(len(allp), dtype=bool), domain)


# ---------------------------------------------------------------------------
# PolyMesh
# ---------------------------------------------------------------------------

Tagger = Callable[[np.ndarray, np.ndarray], str]


def rectangle_tagger(domain: Rect) -> Tagger:
    """Tag boundary faces ``left/right/bottom/top`` by position, else ``boundary``."""
    tol = 1e-9 * max(domain.width, domain.height)

    def tag(mid: np.ndarray, normal: np.ndarray) -> str:
        if abs(mid[0] - domain.x0) < tol:
            return "left"
        if abs(mid[0] - domain.x1) < tol:
            return "right"
        if abs(mid[1] - domain.y0) < tol:
            return "bottom"
        if abs(mid[1] - domain.y1) < tol:
            return "top"
        return "boundary"

    return tag


def _polygon_area_centroid(poly: np.ndarray) -> tuple[float, np.ndarray]:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def n_basis(degree: int) -> int:
    """Number of bivariate monomials of total degree at most ``degree``."""
    return (degree + 1) * (degree + 2) // 2


@dataclass
class PolyMesh:
    """Polygonal finite-volume mesh.

    Construct with :meth:`PolyMesh.from_cells`; quadrature and stencils are
    attached by :func:`compute_quadrature` and :func:`build_stencils`.
    """

    nodes: np.ndarray
    cells: list[np.ndarray]
    domain: Rect
    periodic: tuple[bool, bool] = (False, False)
    tag_names: list[str] = field(default_factory=list)

    # cell geometry
    nvert: np.ndarray = None
    poly: np.ndarray = None            # (nc, kmax, 2) padded with the last vertex
    area: np.ndarray = None
    barycenter: np.ndarray = None
    perimeter: np.ndarray = None
    radius: np.ndarray = None          # characteristic length h_i
    edge_normal: np.ndarray = None     # (nc, kmax, 2) outward, zero padding
    edge_length: np.ndarray = None     # (nc, kmax)
    cell_face: np.ndarray = None       # (nc, kmax) global face index, -1 padding
    cell_nbr: np.ndarray = None        # (nc, kmax) neighbour cell or -1
    cell_nbr_shift: np.ndarray = None  # (nc, kmax, 2) integer lattice shift of the neighbour

    # faces
    face_cells: np.ndarray = None      # (nf, 2) owner, neighbour (-1 on the boundary)
    face_edges: np.ndarray = None      # (nf, 2) local edge index in owner / neighbour
    face_normal: np.ndarray = None     # unit, owner -> neighbour
    face_length: np.ndarray = None
    face_mid: np.ndarray = None
    face_shift: np.ndarray = None      # (nf, 2) integer lattice shift of the neighbour copy
    face_tag: np.ndarray = None        # (nf,) index into tag_names, -1 interior

    # quadrature
    quad_degree: int | None = None
    cell_qp: np.ndarray = None
    cell_qw: np.ndarray = None
    edge_qp: np.ndarray = None         # (nc, kmax, ng, 2)
    edge_qw: np.ndarray = None         # (nc, kmax, ng)
    face_qp: np.ndarray = None
    face_qw: np.ndarray = None

    # stencils
    stencil_degree: int | None = None
    stencil: np.ndarray = None         # (nc, ne)
    stencil_shift: np.ndarray = None   # (nc, ne, 2) integer
    sectors: np.ndarray = None         # (nc, kmax, 3), -1 for dropped sectors
    sector_shift: np.ndarray = None    # (nc, kmax, 3, 2)

    # ------------------------------------------------------------------
    @classmethod
    def from_cells(
        cls,
        nodes: np.ndarray,
        cells: Sequence[Sequence[int]],
        domain: Rect,
        periodic: tuple[bool, bool] = (False, False),
        tagger: Tagger | None = None,
    ) -> "PolyMesh":
        nodes = np.asarray(nodes, dtype=float)
        cell_list = [np.asarray(c, dtype=np.int64) for c in cells]
        mesh = cls(nodes=nodes, cells=cell_list, domain=domain, periodic=tuple(bool(p) for p in periodic))
        mesh._build_geometry()
        mesh._build_faces(tagger or rectangle_tagger(domain))
        return mesh

    @property
    def ncell(self) -> int:
        return len(self.cells)

    @property
    def nface(self) -> int:
        return len(self.face_cells)

    @property
    def kmax(self) -> int:
        return self.poly.shape[1]

    @property
    def period(self) -> np.ndarray:
        return np.array([self.domain.width, self.domain.height])

    @property
    def h(self) -> float:
        """Characteristic mesh size: mean of sqrt(cell area)."""
        return float(np.mean(np.sqrt(self.area)))

    def shift_vector(self, ishift: np.ndarray) -> np.ndarray:
        return np.asarray(ishift, dtype=float) * self.period

    def boundary_faces(self, tag: str | None = None) -> np.ndarray:
        mask = self.face_cells[:, 1] < 0
        if tag is not None:
            if tag not in self.tag_names:
                return np.zeros(0, dtype=np.int64)
            mask &= self.face_tag == self.tag_names.index(tag)
        return np.flatnonzero(mask)

    # ------------------------------------------------------------------
    def _build_geometry(self):
        nc = len(self.cells)
        if nc == 0:
            raise MeshError("mesh has no cells")
        kmax = max(len(c) for c in self.cells)
        self.nvert = np.array([len(c) for c in self.cells], dtype=np.int64)
        self.poly = np.zeros((nc, kmax, 2))
        self.area = np.zeros(nc)
        self.barycenter = np.zeros((nc, 2))
        for i, c in enumerate(self.cells):
            if len(c) < 3:
                raise MeshError(f"cell {i} has fewer than three vertices")
            p = self.nodes[c]
            a, g = _polygon_area_centroid(p)
            if a < 0:
                c = c[::-1].copy()
                self.cells[i] = c
                p = self.nodes[c]
                a, g = _polygon_area_centroid(p)
            if not a > 0:
                raise MeshError(f"cell {i} has zero area")
            self.poly[i, : len(c)] = p
            self.poly[i, len(c):] = p[-1]
            self.area[i] = a
            self.barycenter[i] = g
        nxt = np.zeros((nc, kmax, 2))
        for i, c in enumerate(self.cells):
            k = len(c)
            nxt[i, :k] = np.roll(self.poly[i, :k], -1, axis=0)
            nxt[i, k:] = self.poly[i, k:]
        d = nxt - self.poly
        self.edge_length = np.hypot(d[..., 0], d[..., 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            nrm = np.stack([d[..., 1], -d[..., 0]], axis=-1) / self.edge_length[..., None]
        self.edge_normal = np.where(self.edge_length[..., None] > 0, nrm, 0.0)
        self.perimeter = self.edge_length.sum(axis=1)
        r = np.hypot(*(self.poly - self.barycenter[:, None, :]).transpose(2, 0, 1))
        self.radius = r.max(axis=1)

    def _canonical_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        dom = self.domain
        lo = np.array([dom.x0, dom.y0])
        period = self.period
        size = max(dom.width, dom.height)
        wrapped = self.nodes.copy()
        for ax in range(2):
            if self.periodic[ax]:
                w = lo[ax] + np.mod(wrapped[:, ax] - lo[ax], period[ax])
                w = np.where(w > lo[ax] + period[ax] - 1e-9 * size, w - period[ax], w)
                w = np.where(np.abs(w - lo[ax]) < 1e-9 * size, lo[ax], w)
                wrapped[:, ax] = w
        ishift = np.zeros_like(self.nodes, dtype=np.int64)
        for ax in range(2):
            if self.periodic[ax]:
                ishift[:, ax] = np.rint((self.nodes[:, ax] - wrapped[:, ax]) / period[ax]).astype(np.int64)
        tree = cKDTree(wrapped)
        canon = np.arange(len(wrapped))
        for i, j in sorted(tree.query_pairs(1e-8 * size)):
            ci, cj = canon[i], canon[j]
            if ci != cj:
                lo_id, hi_id = min(ci, cj), max(ci, cj)
                canon[canon == hi_id] = lo_id
        return canon, ishift

    def _build_faces(self, tagger: Tagger):
        canon, ishift = self._canonical_nodes()
        table: dict[tuple, list[tuple[int, int]]] = {}
        for i, c in enumerate(self.cells):
            k = len(c)
            for j in range(k):
                a, b = c[j], c[(j + 1) % k]
                ca, cb = int(canon[a]), int(canon[b])
                rel = ishift[b] - ishift[a]
                k1 = (ca, cb, int(rel[0]), int(rel[1]))
                k2 = (cb, ca, -int(rel[0]), -int(rel[1]))
                table.setdefault(min(k1, k2), []).append((i, j))
        nc, kmax = self.ncell, self.kmax
        owners, edges, tags, shifts = [], [], [], []
        self.tag_names = []
        for key in sorted(table, key=lambda k: table[k][0]):
            entries = table[key]
            if len(entries) > 2:
                raise MeshError(f"edge shared by {len(entries)} cells: {entries}")
            (ia, ja) = entries[0]
            if len(entries) == 2:
                (ib, jb) = entries[1]
                a_start = self.cells[ia][ja]
                b_end = self.cells[ib][(jb + 1) % len(self.cells[ib])]
                sh = ishift[a_start] - ishift[b_end]
                owners.append((ia, ib))
                edges.append((ja, jb))
                shifts.append(sh)
                tags.append(-1)
            else:
                mid = 0.5 * (self.poly[ia, ja] + self.poly[ia, (ja + 1) % self.nvert[ia]])
                name = tagger(mid, self.edge_normal[ia, ja])
                if name not in self.tag_names:
                    self.tag_names.append(name)
                owners.append((ia, -1))
                edges.append((ja, -1))
                shifts.append(np.zeros(2, dtype=np.int64))
                tags.append(self.tag_names.index(name))
        self.face_cells = np.array(owners, dtype=np.int64).reshape(-1, 2)
        self.face_edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.face_shift = np.array(shifts, dtype=np.int64).reshape(-1, 2)
        self.face_tag = np.array(tags, dtype=np.int64)
        o, jo = self.face_cells[:, 0], self.face_edges[:, 0]
        self.face_normal = self.edge_normal[o, jo]
        self.face_length = self.edge_length[o, jo]
        self.face_mid = 0.5 * (self.poly[o, jo] + self.poly[o, (jo + 1) % self.nvert[o]])

        self.cell_face = -np.ones((nc, kmax), dtype=np.int64)
        self.cell_nbr = -np.ones((nc, kmax), dtype=np.int64)
        self.cell_nbr_shift = np.zeros((nc, kmax, 2), dtype=np.int64)
        for f, ((a, b), (ja, jb)) in enumerate(zip(self.face_cells, self.face_edges)):
            self.cell_face[a, ja] = f
            if b >= 0:
                self.cell_face[b, jb] = f
                self.cell_nbr[a, ja] = b
                self.cell_nbr[b, jb] = a
                self.cell_nbr_shift[a, ja] = self.face_shift[f]
                self.cell_nbr_shift[b, jb] = -self.face_shift[f]
        for ax in range(2):
            if self.periodic[ax]:
                bf = self.face_cells[:, 1] < 0
                n_ax = np.abs(self.face_normal[bf, ax]) > 0.5
                if np.any(n_ax):
                    raise MeshError("unmatched face on a periodic side")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def from_triangulation(
    tri: Triangulation,
    periodic: tuple[bool, bool] = (False, False),
    tagger: Tagger | None = None,
    domain: Rect | None = None,
) -> PolyMesh:
    """Mesh whose cells are the triangles of ``tri``."""
    dom = domain or tri.domain
    if dom is None:
        lo, hi = tri.vertices.min(axis=0), tri.vertices.max(axis=0)
        dom = Rect(lo[0], hi[0], lo[1], hi[1])
    if np.any(tri.signed_areas() <= 0):
        raise MeshError("triangulation has non-positive triangles")
    return PolyMesh.from_cells(tri.vertices, list(tri.triangles), dom, periodic, tagger)


def build_polygonal_dual(tri: Triangulation, tagger: Tagger | None = None) -> PolyMesh:
    """Barycentric dual: one cell per generator, vertices at triangle centroids.

    Cells of generators on the domain boundary are closed by the midpoints of
    their boundary edges (and the generator itself at a corner).
    """
    dom = tri.domain
    if dom is None:
        raise MeshError("dual construction needs the triangulation's domain rectangle")
    verts, tris = tri.vertices, tri.triangles
    nv, nt = len(verts), len(tris)
    centroids = verts[tris].mean(axis=1)
    incident: list[list[int]] = [[] for _ in range(nv)]
    for t, (a, b, c) in enumerate(tris):
        incident[a].append(t)
        incident[b].append(t)
        incident[c].append(t)
    edge_count: dict[tuple[int, int], int] = {}
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            edge_count[key] = edge_count.get(key, 0) + 1
    bnd_edges = [e for e, k in edge_count.items() if k == 1]
    node_list = [centroids]
    mid_index: dict[tuple[int, int], int] = {}
    mids = []
    for e in sorted(bnd_edges):
        mid_index[e] = nt + len(mids)
        mids.append(0.5 * (verts[e[0]] + verts[e[1]]))
    node_list.append(np.array(mids).reshape(-1, 2))
    extra = []
    bnd_of: dict[int, list[tuple[int, int]]] = {}
    for e in bnd_edges:
        bnd_of.setdefault(e[0], []).append(e)
        bnd_of.setdefault(e[1], []).append(e)
    size = max(dom.width, dom.height)
    cells = []
    for g in range(nv):
        if not tri.generators[g]:
            continue
        if not incident[g]:
            raise MeshError(f"generator {g} belongs to no triangle")
        pg = verts[g]
        ids = list(incident[g])
        pts = [centroids[t] for t in ids]
        be = bnd_of.get(g, [])
        if be:
            for e in be:
                ids.append(mid_index[e])
                pts.append(mids[mid_index[e] - nt])
            d0 = verts[be[0][0] if be[0][1] == g else be[0][1]] - pg
            d1 = verts[be[1][0] if be[1][1] == g else be[1][1]] - pg
            corner = abs(d0[0] * d1[1] - d0[1] * d1[0]) > 1e-9 * size * np.hypot(*d0)
            # outward direction: away from the interior centroid mean
            inward = np.mean([centroids[t] for t in incident[g]], axis=0) - pg
            ref = -inward / np.hypot(*inward)
            ang = [math.atan2(ref[0] * (p - pg)[1] - ref[1] * (p - pg)[0], ref @ (p - pg)) % (2 * math.pi)
                   for p in pts]
            order = np.argsort(ang, kind="stable")
            ring = [ids[k] for k in order]
            if corner:
                extra.append(pg)
                ring = ring + [nt + len(mids) + len(extra) - 1]
        else:
            ang = [math.atan2(*(p - pg)[::-1]) for p in pts]
            order = np.argsort(ang, kind="stable")
            ring = [ids[k] for k in order]
        cells.append(ring)
    node_list.append(np.array(extra).reshape(-1, 2))
    nodes = np.vstack(node_list)
    mesh = PolyMesh.from_cells(nodes, cells, dom, (False, False), tagger)
    if not math.isclose(mesh.area.sum(), dom.area, rel_tol=1e-10):
        raise MeshError("dual cells do not partition the domain")
    return mesh


def _periodic_padding(points: np.ndarray, domain: Rect, margin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    L = np.array([domain.width, domain.height])
    lo = np.array([domain.x0, domain.y0])
    allp, orig, shift = [points], [np.arange(len(points))], [np.zeros((len(points), 2), dtype=np.int64)]
    rel = points - lo
    for sx in (-1, 0, 1):
        for sy in (-1, 0, 1):
            if sx == 0 and sy == 0:
                continue
            q = rel + np.array([sx, sy]) * L
            ok = (q[:, 0] > -margin) & (q[:, 0] < L[0] + margin) & (q[:, 1] > -margin) & (q[:, 1] < L[1] + margin)
            allp.append(q[ok] + lo)
            orig.append(np.flatnonzero(ok))
            shift.append(np.tile([sx, sy], (int(ok.sum()), 1)))
    return np.vstack(allp), np.concatenate(orig), np.vstack(shift)


def _tie_breaker(points: np.ndarray, domain: Rect) -> np.ndarray:
    """Tiny per-generator offsets shared by all periodic copies.

    Cocircular generators (regular lattices) make the Delaunay connectivity
    ambiguous; resolving the ties identically in every copy keeps the
    triangulation periodic.  Only the connectivity uses the offsets.
    """
    h = math.sqrt(domain.area / len(points))
    return 1e-7 * h * np.random.default_rng(12345).uniform(-1.0, 1.0, points.shape)


def periodic_triangle_mesh(points: np.ndarray, domain: Rect, margin: float | None = None) -> PolyMesh:
    """Doubly periodic Delaunay triangle mesh of generator points in ``domain``."""
    pts = np.asarray(points, dtype=float)
    if margin is None:
        margin = 4.0 * math.sqrt(domain.area / len(pts))
    padded, orig, _ = _periodic_padding(pts, domain, margin)
    tris = bowyer_watson(padded + _tie_breaker(pts, domain)[orig])
    cen = padded[tris].mean(axis=1)
    own = (cen[:, 0] >= domain.x0) & (cen[:, 0] < domain.x1) & (cen[:, 1] >= domain.y0) & (cen[:, 1] < domain.y1)
    mesh = PolyMesh.from_cells(padded, list(tris[own]), domain, (True, True))
    if not math.isclose(mesh.area.sum(), domain.area, rel_tol=1e-10):
        raise MeshError("periodic triangles do not tile the domain; increase the margin")
    return mesh


def periodic_dual_mesh(points: np.ndarray, domain: Rect, margin: float | None = None) -> PolyMesh:
    """Doubly periodic barycentric dual mesh: one cell per generator point."""
    pts = np.asarray(points, dtype=float)
    if margin is None:
        margin = 5.0 * math.sqrt(domain.area / len(pts))
    padded, orig, _ = _periodic_padding(pts, domain, margin)
    tris = bowyer_watson(padded + _tie_breaker(pts, domain)[orig])
    cen = padded[tris].mean(axis=1)
    incident: list[list[int]] = [[] for _ in range(len(pts))]
    for t, tri in enumerate(tris):
        for v in tri:
            if v < len(pts):
                incident[v].append(t)
    cells = []
    for g in range(len(pts)):
        ids = incident[g]
        d = cen[ids] - pts[g]
        order = np.argsort(np.arctan2(d[:, 1], d[:, 0]), kind="stable")
        cells.append([ids[k] for k in order])
    mesh = PolyMesh.from_cells(cen, cells, domain, (True, True))
    if not math.isclose(mesh.area.sum(), domain.area, rel_tol=1e-10):
        raise MeshError("periodic dual cells do not tile the domain; increase the margin")
    return mesh


def structured_triangulation(domain: Rect, nx: int, ny: int, diagonal: str = "/") -> Triangulation:
    """Split an ``nx`` by ``ny`` rectangle grid into two triangles per rectangle."""
    if nx < 1 or ny < 1:
        raise MeshError("grid dimensions must be positive")
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            if diagonal == "/":
                tris += [(a, b, c), (a, c, d)]
            elif diagonal == "\\":
                tris += [(a, b, d), (b, c, d)]
            else:
                raise MeshError(f"unknown diagonal pattern {diagonal!r}")
    return Triangulation(verts, np.array(tris, dtype=np.int64), np.ones(len(verts), dtype=bool), domain)


def perturbed_lattice(domain: Rect, nx: int, ny: int, amplitude: float = 0.0, seed: int = 0,
                      cell_centred: bool = False) -> np.ndarray:
    """Lattice points with random perturbations of relative size ``amplitude``.

    ``cell_centred=False`` gives the (nx+1) x (ny+1) node lattice; boundary
    points only move along their side and corners stay fixed.
    ``cell_centred=True`` gives nx x ny points at cell centres, all perturbed,
    suited to periodic generator sets.
    """
    rng = np.random.default_rng(seed)
    dx, dy = domain.width / nx, domain.height / ny
    if cell_centred:
        xs = domain.x0 + (np.arange(nx) + 0.5) * dx
        ys = domain.y0 + (np.arange(ny) + 0.5) * dy
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        pts += amplitude * rng.uniform(-1, 1, pts.shape) * np.array([dx, dy])
        return pts
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pert = amplitude * rng.uniform(-1, 1, X.shape + (2,)) * np.array([dx, dy])
    pert[[0, -1], :, 0] = 0.0
    pert[:, [0, -1], 1] = 0.0
    return np.column_stack([(X + pert[..., 0]).ravel(), (Y + pert[..., 1]).ravel()])


def diagonal_symmetric_triangulation(domain: Rect, n: int, amplitude: float = 0.0, seed: int = 0) -> Triangulation:
    """Triangulated square grid invariant under the reflection x <-> y.

    Interior nodes are perturbed with a perturbation field that is itself
    mirror-symmetric, so nearest-neighbour distances are generic apart from
    the mirror pairs.
    """
    if not (math.isclose(domain.width, domain.height) and math.isclose(domain.x0, domain.y0)):
        raise MeshError("a square domain symmetric about y = x is required")
    tri = structured_triangulation(domain, n, n, "/")
    rng = np.random.default_rng(seed)
    h = domain.width / n
    raw = amplitude * h * rng.uniform(-1, 1, (n + 1, n + 1, 2))
    pert = np.zeros_like(raw)
    for i in range(n + 1):
        for j in range(n + 1):
            if i < j:
                pert[i, j] = raw[i, j]
                pert[j, i] = raw[i, j][::-1]
            elif i == j:
                pert[i, i] = raw[i, i, 0]
    pert[[0, -1], :, 0] = 0.0
    pert[:, [0, -1], 1] = 0.0
    verts = tri.vertices + pert.reshape(-1, 2)
    return Triangulation(verts, tri.triangles, tri.generators, domain)


# ---------------------------------------------------------------------------
# quadrature and stencils
# ---------------------------------------------------------------------------

def compute_quadrature(mesh: PolyMesh, degree: int) -> PolyMesh:
    """Attach volume (barycentric fan) and edge Gauss rules exact to ``degree``."""
    nc, kmax = mesh.ncell, mesh.kmax
    nxt = np.zeros_like(mesh.poly)
    for i in range(nc):
        k = mesh.nvert[i]
        nxt[i, :k] = np.roll(mesh.poly[i, :k], -1, axis=0)
        nxt[i, k:] = mesh.poly[i, k:]
    corners = np.stack([np.broadcast_to(mesh.barycenter[:, None, :], mesh.poly.shape), mesh.poly, nxt], axis=2)
    pts, wts = map_triangle_rule(corners, degree)
    pad = np.arange(kmax)[None, :] >= mesh.nvert[:, None]
    wts = np.where(pad[..., None], 0.0, wts)
    nq = pts.shape[2]
    mesh.cell_qp = pts.reshape(nc, kmax * nq, 2)
    mesh.cell_qw = wts.reshape(nc, kmax * nq)
    ep, ew = map_segment_rule(mesh.poly, nxt, degree)
    mesh.edge_qp = ep
    mesh.edge_qw = np.where(pad[..., None], 0.0, ew)
    o, jo = mesh.face_cells[:, 0], mesh.face_edges[:, 0]
    mesh.face_qp = ep[o, jo]
    mesh.face_qw = ew[o, jo]
    mesh.quad_degree = int(degree)
    return mesh


def build_stencils(mesh: PolyMesh, degree: int) -> PolyMesh:
    """Central stencils of size ``2 * n_basis(degree)`` and per-face sector stencils."""
    if degree not in (1, 2, 3):
        raise MeshError(f"unsupported reconstruction degree {degree}")
    ne = 2 * n_basis(degree)
    nc, kmax = mesh.ncell, mesh.kmax
    if nc < ne:
        raise MeshError(f"mesh has {nc} cells, a degree-{degree} stencil needs {ne}")
    L = mesh.period
    xb = mesh.barycenter
    stencil = np.zeros((nc, ne), dtype=np.int64)
    stencil_shift = np.zeros((nc, ne, 2), dtype=np.int64)
    sectors = -np.ones((nc, kmax, 3), dtype=np.int64)
    sector_shift = np.zeros((nc, kmax, 3, 2), dtype=np.int64)
    for i in range(nc):
        seen = {(i, 0, 0)}
        ring = [(i, 0, 0)]
        cands: list[tuple[int, int, int]] = []
        extra_rings = 1
        for _ in range(64):
            nxt_ring = []
            for c, sx, sy in ring:
                for j in range(mesh.nvert[c]):
                    nb = mesh.cell_nbr[c, j]
                    if nb < 0:
                        continue
                    s = mesh.cell_nbr_shift[c, j]
                    key = (int(nb), sx + int(s[0]), sy + int(s[1]))
                    if key not in seen:
                        seen.add(key)
                        nxt_ring.append(key)
            if not nxt_ring:
                break
            cands.extend(nxt_ring)
            ring = nxt_ring
            if len(cands) >= ne - 1:
                if extra_rings == 0:
                    break
                extra_rings -= 1
        if len(cands) < ne - 1:
            raise MeshError(f"cell {i}: only {len(cands)} neighbours reachable, need {ne - 1}")
        arr = np.array(cands, dtype=np.int64)
        pos = xb[arr[:, 0]] + arr[:, 1:] * L
        dist = np.hypot(*(pos - xb[i]).T)
        order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0], dist))
        chosen = arr[order[: ne - 1]]
        stencil[i, 0] = i
        stencil[i, 1:] = chosen[:, 0]
        stencil_shift[i, 1:] = chosen[:, 1:]

        k = mesh.nvert[i]
        hi2 = mesh.radius[i] ** 2
        used: set[frozenset] = set()

        def spread(a, b):
            pa = xb[a[0]] + np.array(a[1:]) * L - xb[i]
            pb = xb[b[0]] + np.array(b[1:]) * L - xb[i]
            return abs(pa[0] * pb[1] - pa[1] * pb[0]) >= 1e-8 * hi2

        # complete face pairs first so truncated sectors cannot claim their pair
        full = [bool(mesh.cell_nbr[i, j] >= 0 and mesh.cell_nbr[i, (j + 1) % k] >= 0) for j in range(k)]
        for j in sorted(range(k), key=lambda j: not full[j]):
            picks = []
            for jj in (j, (j + 1) % k):
                nb = mesh.cell_nbr[i, jj]
                if nb >= 0:
                    picks.append((int(nb), *map(int, mesh.cell_nbr_shift[i, jj])))
            # boundary-truncated sector: fill from the stencil, skipping pairs already used
            while len(picks) < 2:
                # prefer cells adjacent to the available neighbour: the sector then follows the boundary
                pool = list(chosen)
                if picks:
                    a = picks[0][0]
                    adj = {int(c) for c in mesh.cell_nbr[a, : mesh.nvert[a]] if c >= 0}
                    pool.sort(key=lambda r: int(r[0]) not in adj)
                for row in pool:
                    cand = tuple(int(v) for v in row)
                    if cand in picks:
                        continue
                    if picks and (frozenset((picks[0], cand)) in used or not spread(picks[0], cand)):
                        continue
                    picks.append(cand)
                    break
                else:
                    break
            if len(picks) < 2 or picks[0] == picks[1] or not spread(picks[0], picks[1]):
                continue
            pair = frozenset(picks)
            if pair in used:
                continue
            used.add(pair)
            sectors[i, j] = [i, picks[0][0], picks[1][0]]
            sector_shift[i, j, 1] = picks[0][1:]
            sector_shift[i, j, 2] = picks[1][1:]
    mesh.stencil, mesh.stencil_shift = stencil, stencil_shift
    mesh.sectors, mesh.sector_shift = sectors, sector_shift
    mesh.stencil_degree = int(degree)
    return mesh


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_mesh(mesh: PolyMesh, path) -> None:
    """Write ``nodes <N> cells <C>``, node coordinates, then one vertex-index list per cell."""
    with open(path, "w") as fh:
        fh.write(f"nodes {len(mesh.nodes)} cells {mesh.ncell}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(v)) for v in c) + "\n")


def read_mesh(path, domain: Rect | None = None, periodic: tuple[bool, bool] = (False, False),
              tagger: Tagger | None = None) -> PolyMesh:
    """Read the plain-text mesh format written by :func:`write_mesh`."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [(n + 1, ln) for n, ln in enumerate(lines) if ln]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    lineno, head = lines[0]
    tok = head.split()
    if len(tok) != 4 or tok[0] != "nodes" or tok[2] != "cells":
        raise MeshError(f"{path}:{lineno}: expected 'nodes <N> cells <C>'")
    try:
        nn, nc = int(tok[1]), int(tok[3])
    except ValueError as exc:
        raise MeshError(f"{path}:{lineno}: bad counts") from exc
    if len(lines) != 1 + nn + nc:
        raise MeshError(f"{path}: expected {nn} node lines and {nc} cell lines, found {len(lines) - 1} lines")
    nodes = np.zeros((nn, 2))
    for k in range(nn):
        lineno, ln = lines[1 + k]
        parts = ln.split()
        if len(parts) != 2:
            raise MeshError(f"{path}:{lineno}: expected 'x y'")
        nodes[k] = [float(parts[0]), float(parts[1])]
    cells = []
    for k in range(nc):
        lineno, ln = lines[1 + nn + k]
        ids = [int(v) for v in ln.split()]
        if len(ids) < 3 or min(ids) < 0 or max(ids) >= nn:
            raise MeshError(f"{path}:{lineno}: invalid polygon {ids}")
        cells.append(ids)
    if domain is None:
        lo, hi = nodes.min(axis=0), nodes.max(axis=0)
        domain = Rect(lo[0], hi[0], lo[1], hi[1])
    return PolyMesh.from_cells(nodes, cells, domain, periodic, tagger)


def read_generators(path) -> np.ndarray:
    """Read generator points, one ``x y`` pair per line."""
    pts = []
    with open(path) as fh:
        for n, ln in enumerate(fh, 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            parts = ln.split()
            if len(parts) != 2:
                raise MeshError(f"{path}:{n}: expected 'x y'")
            pts.append([float(parts[0]), float(parts[1])])
    return np.array(pts).reshape(-1, 2)
