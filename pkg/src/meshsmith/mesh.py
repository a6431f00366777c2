"""Mesh representation, star polygons, triangle quality and .m2d I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundaryNode, EmptyMesh, MeshFormatError, OpenRing

SQRT3 = math.sqrt(3.0)
AREA_EPS_REL = 1e-12
HIST_BINS = 20


def signed_area(a, b, c) -> float:
    """Half the cross product (b - a) x (c - a); positive when a, b, c run counter-clockwise."""
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def robust_signed_area(a, b, c) -> np.ndarray:
    """Signed area of counter-clockwise (a, b, c), taking the smallest of the three anchorings.

    The value does not depend on which vertex is listed first, so a triangle judged
    safe while one of its nodes moves is judged the same way in a whole-mesh check.
    """
    def anchored(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    return 0.5 * np.minimum(np.minimum(anchored(a, b, c), anchored(b, c, a)), anchored(c, a, b))


def bbox_area(points) -> float:
    pts = np.asarray(points, dtype=float)
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(ext[0] * ext[1])


def area_eps(points) -> float:
    return AREA_EPS_REL * bbox_area(points)


@dataclass
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    fixed: np.ndarray
    _rings: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _incident: list | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.fixed = np.asarray(self.fixed, dtype=bool).reshape(-1)
        if self.fixed.shape[0] != self.nodes.shape[0]:
            raise ValueError("fixed flags must match node count")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes):
                raise ValueError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise ValueError("duplicate index within a triangle")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    def copy(self) -> "Mesh":
        m = Mesh(self.nodes.copy(), self.triangles.copy(), self.fixed.copy())
        # topology is shared; only coordinates change during smoothing
        m._rings = self._rings
        m._incident = self._incident
        return m

    def incident(self) -> list:
        if self._incident is None:
            inc: list = [[] for _ in range(self.n_nodes)]
            for t, tri in enumerate(self.triangles.tolist()):
                for v in tri:
                    inc[v].append(t)
            self._incident = inc
        return self._incident

    def extent(self) -> float:
        ext = self.nodes.max(axis=0) - self.nodes.min(axis=0)
        return float(max(ext[0], ext[1]))

    def ring(self, node: int) -> np.ndarray:
        """Counter-clockwise one-ring of an interior node, starting at the smallest neighbour."""
        cached = self._rings.get(node)
        if cached is not None:
            return cached
        if self.fixed[node]:
            raise BoundaryNode(f"node {node} is fixed")
        succ = {}
        for t in self.incident()[node]:
            a, b, c = self.triangles[t].tolist()
            if a == node:
                nxt = (b, c)
            elif b == node:
                nxt = (c, a)
            else:
                nxt = (a, b)
            if nxt[0] in succ:
                raise OpenRing(f"node {node}: non-manifold fan")
            succ[nxt[0]] = nxt[1]
        if len(succ) < 3:
            raise OpenRing(f"node {node}: fewer than 3 incident triangles")
        start = min(succ)
        order = [start]
        cur = succ[start]
        while cur != start:
            if cur not in succ or len(order) > len(succ):
                raise OpenRing(f"node {node}: incident triangles do not close")
            order.append(cur)
            cur = succ[cur]
        if len(order) != len(succ):
            raise OpenRing(f"node {node}: incident triangles form several fans")
        arr = np.array(order, dtype=np.int64)
        self._rings[node] = arr
        return arr


def boundary_nodes(triangles, n_nodes: int) -> np.ndarray:
    """Boolean mask of nodes on the topological boundary (edges used by one triangle)."""
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    mask = np.zeros(n_nodes, dtype=bool)
    mask[uniq[counts == 1].ravel()] = True
    return mask


@dataclass(frozen=True)
class StarPolygon:
    """A free node and its counter-clockwise one-ring.

    Local numbering puts the centre at 0 and ring node i at i + 1.
    """

    center: np.ndarray
    ring: np.ndarray
    indices: np.ndarray | None = None

    @property
    def degree(self) -> int:
        return len(self.ring)

    @property
    def edges(self) -> np.ndarray:
        n = len(self.ring)
        spokes = [(0, i + 1) for i in range(n)]
        rim = [(i + 1, (i + 1) % n + 1) for i in range(n)]
        return np.array(spokes + rim, dtype=np.int64)

    def points(self) -> np.ndarray:
        return np.vstack([self.center[None, :], self.ring])

    def with_center(self, center) -> "StarPolygon":
        return StarPolygon(np.asarray(center, dtype=float), self.ring, self.indices)

    def area_eps(self) -> float:
        return area_eps(self.points())


def make_star(center, ring) -> StarPolygon:
    ring = np.asarray(ring, dtype=float).reshape(-1, 2)
    if len(ring) < 3:
        raise ValueError("ring needs at least 3 nodes")
    return StarPolygon(np.asarray(center, dtype=float).reshape(2), ring)


def star_polygon(mesh: Mesh, node_index: int) -> StarPolygon:
    ring = mesh.ring(node_index)
    return StarPolygon(mesh.nodes[node_index].copy(), mesh.nodes[ring], ring)


def star_signed_areas(ring: np.ndarray, candidate) -> np.ndarray:
    c = np.broadcast_to(np.asarray(candidate, dtype=float).reshape(2), ring.shape)
    return robust_signed_area(c, ring, np.roll(ring, -1, axis=0))


def has_negative_element(star: StarPolygon, candidate, eps: float | None = None) -> bool:
    if eps is None:
        eps = star.area_eps()
    return bool(np.any(star_signed_areas(star.ring, candidate) <= eps))


@dataclass(frozen=True)
class TriangleQuality:
    angles: tuple
    edge_lengths: tuple
    area: float
    aspect_ratio: float
    transformed: float


def _angles_deg(p: np.ndarray) -> np.ndarray:
    """Interior angles (degrees) of triangles p[..., 3, 2] via atan2 for accuracy near 0 and 180."""
    out = []
    for k in range(3):
        o = p[..., k, :]
        u = p[..., (k + 1) % 3, :] - o
        v = p[..., (k + 2) % 3, :] - o
        cross = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
        dot = u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]
        out.append(np.degrees(np.arctan2(cross, dot)))
    return np.stack(out, axis=-1)


def triangle_quality(a, b, c) -> TriangleQuality:
    p = np.array([a, b, c], dtype=float)
    ang = _angles_deg(p)
    m = float(np.hypot(*(p[1] - p[0])))
    n = float(np.hypot(*(p[2] - p[1])))
    l = float(np.hypot(*(p[0] - p[2])))
    s = signed_area(p[0], p[1], p[2])
    if s <= 0:
        q, f = math.inf, 1.0
    else:
        with np.errstate(over="ignore"):
            q = float(np.float64(m * m + n * n + l * l) / (4.0 * SQRT3 * s))
        f = 1.0 - 1.0 / q
    return TriangleQuality(tuple(float(x) for x in ang), (m, n, l), float(s), q, f)


def element_metrics(nodes: np.ndarray, triangles: np.ndarray) -> dict:
    """Vectorised per-element angles, signed areas, aspect ratios and f(q)."""
    p = nodes[triangles]
    ang = _angles_deg(p)
    d01 = p[:, 1] - p[:, 0]
    d12 = p[:, 2] - p[:, 1]
    d20 = p[:, 0] - p[:, 2]
    ssum = (d01 ** 2).sum(1) + (d12 ** 2).sum(1) + (d20 ** 2).sum(1)
    area = 0.5 * (d01[:, 0] * (-d20[:, 1]) - d01[:, 1] * (-d20[:, 0]))
    valid = area > 0
    inv_q = np.where(valid, 4.0 * SQRT3 * np.where(valid, area, 1.0) / np.where(ssum > 0, ssum, 1.0), 0.0)
    return {
        "angles": ang,
        "area": area,
        "inv_q": inv_q,
        "transformed": 1.0 - inv_q,
    }


@dataclass(frozen=True)
class QualityReport:
    min_angle_min: float
    min_angle_mean: float
    max_angle_max: float
    max_angle_mean: float
    inv_ar_min: float
    inv_ar_mean: float
    histogram: tuple
    element_count: int

    def as_row(self) -> dict:
        return {
            "min_angle_min": self.min_angle_min,
            "min_angle_mean": self.min_angle_mean,
            "max_angle_max": self.max_angle_max,
            "max_angle_mean": self.max_angle_mean,
            "inv_ar_min": self.inv_ar_min,
            "inv_ar_mean": self.inv_ar_mean,
        }


def quality_report(mesh: Mesh) -> QualityReport:
    if len(mesh.triangles) == 0:
        raise EmptyMesh("mesh has no triangles")
    em = element_metrics(mesh.nodes, mesh.triangles)
    mins = em["angles"].min(axis=1)
    maxs = em["angles"].max(axis=1)
    inv_q = em["inv_q"]
    hist, _ = np.histogram(em["transformed"], bins=HIST_BINS, range=(0.0, 1.0))
    return QualityReport(
        min_angle_min=float(mins.min()),
        min_angle_mean=float(mins.mean()),
        max_angle_max=float(maxs.max()),
        max_angle_mean=float(maxs.mean()),
        inv_ar_min=float(inv_q.min()),
        inv_ar_mean=float(inv_q.mean()),
        histogram=tuple(int(h) for h in hist),
        element_count=int(len(mesh.triangles)),
    )


def weighted_quality(report: QualityReport) -> float:
    angle_term = (report.min_angle_mean + report.min_angle_min + 120.0
                  - report.max_angle_max - report.max_angle_mean) / 60.0
    return (angle_term + report.inv_ar_mean + report.inv_ar_min) / 6.0


def negative_element_count(mesh: Mesh) -> int:
    p = mesh.nodes[mesh.triangles]
    s = robust_signed_area(p[:, 0], p[:, 1], p[:, 2])
    return int(np.sum(s <= area_eps(mesh.nodes)))


# --- .m2d text format -------------------------------------------------------

def save_m2d(mesh: Mesh, path) -> None:
    lines = [f"nodes {mesh.n_nodes}"]
    for (x, y), f in zip(mesh.nodes.tolist(), mesh.fixed.tolist()):
        lines.append(f"{x:.17g} {y:.17g} {int(f)}")
    lines.append(f"triangles {len(mesh.triangles)}")
    for i, j, k in mesh.triangles.tolist():
        lines.append(f"{i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(line: str, word: str, lineno: int) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != word:
        raise MeshFormatError(f"line {lineno}: expected '{word} <count>'")
    try:
        n = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"line {lineno}: bad count {parts[1]!r}") from None
    if n < 0:
        raise MeshFormatError(f"line {lineno}: negative count")
    return n


def load_m2d(path) -> Mesh:
    try:
        raw = Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise MeshFormatError(f"{path}: not UTF-8 text") from exc
    lines = [(i + 1, ln) for i, ln in enumerate(raw) if ln.strip()]
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file while reading {what}") from None

    lineno, ln = take("node header")
    n = _parse_header(ln, "nodes", lineno)
    nodes = np.empty((n, 2))
    fixed = np.empty(n, dtype=bool)
    for k in range(n):
        lineno, ln = take("nodes")
        parts = ln.split()
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise MeshFormatError(f"line {lineno}: expected 'x y F' with F in {{0,1}}")
        try:
            nodes[k] = float(parts[0]), float(parts[1])
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad coordinate") from None
        if not np.all(np.isfinite(nodes[k])):
            raise MeshFormatError(f"line {lineno}: non-finite coordinate")
        fixed[k] = parts[2] == "1"
    lineno, ln = take("triangle header")
    m = _parse_header(ln, "triangles", lineno)
    tris = np.empty((m, 3), dtype=np.int64)
    for k in range(m):
        lineno, ln = take("triangles")
        parts = ln.split()
        try:
            tri = [int(v) for v in parts]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad index") from None
        if len(tri) != 3:
            raise MeshFormatError(f"line {lineno}: expected 'i j k'")
        if min(tri) < 0 or max(tri) >= n or len(set(tri)) != 3:
            raise MeshFormatError(f"line {lineno}: invalid triangle indices {tri}")
        if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) <= 0:
            raise MeshFormatError(f"line {lineno}: triangle {tri} is not counter-clockwise")
        tris[k] = tri
    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError(f"line {extra[0]}: trailing content")
    return Mesh(nodes, tris, fixed)
