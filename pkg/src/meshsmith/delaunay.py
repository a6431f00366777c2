"""Bowyer-Watson Delaunay triangulation and random square-domain datasets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DuplicatePoints
from .mesh import Mesh, boundary_nodes

DUPLICATE_TOL = 1e-12


def _incircle(ax, ay, bx, by, cx, cy, px, py):
    """Determinant (positive when p is inside the circumcircle of ccw a, b, c) and its error scale."""
    adx, ady = ax - px, ay - py
    bdx, bdy = bx - px, by - py
    cdx, cdy = cx - px, cy - py
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    det = (ad * (bdx * cdy - cdx * bdy)
           + bd * (cdx * ady - adx * cdy)
           + cd * (adx * bdy - bdx * ady))
    perm = (ad * (np.abs(bdx * cdy) + np.abs(cdx * bdy))
            + bd * (np.abs(cdx * ady) + np.abs(adx * cdy))
            + cd * (np.abs(adx * bdy) + np.abs(bdx * ady)))
    return det, perm


def _orient(ux, uy, vx, vy, px, py):
    """Twice the signed area of (u, v, p) and its error scale."""
    l = (vx - ux) * (py - uy)
    r = (vy - uy) * (px - ux)
    return l - r, np.abs(l) + np.abs(r)


class _Triangulation:
    """Bowyer-Watson with a symbolic vertex at infinity.

    A hull edge u -> v (outside on its left) is stored as the ghost triangle (u, v, G).
    Its circumcircle is the open half-plane left of u -> v plus the open segment uv, so
    no finite super-triangle is needed and slivers on the hull are never lost.
    """

    def __init__(self, pts: np.ndarray, capacity: int):
        self.n = len(pts)
        self.ghost = self.n
        # dummy coordinates for the ghost index; ghost rows are handled separately
        self.pts = np.vstack([pts, np.zeros((1, 2))])
        self.tri = np.zeros((capacity, 3), dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)
        self.count = 0

    def add(self, a, b, c):
        g = self.ghost
        # keep the ghost vertex last so the real edge is (tri[0], tri[1])
        if a == g:
            a, b, c = b, c, a
        elif b == g:
            a, b, c = c, a, b
        if self.count == len(self.tri):
            self.tri = np.concatenate([self.tri, np.zeros_like(self.tri)])
            self.alive = np.concatenate([self.alive, np.zeros_like(self.alive)])
        self.tri[self.count] = (a, b, c)
        self.alive[self.count] = True
        self.count += 1

    def start(self, a: int, b: int, c: int):
        """Seed with ccw triangle (a, b, c) and its three ghosts."""
        g = self.ghost
        self.add(a, b, c)
        self.add(b, a, g)
        self.add(c, b, g)
        self.add(a, c, g)

    def insert(self, pi: int):
        n = self.count
        idx = np.flatnonzero(self.alive[:n])
        t = self.tri[idx]
        P = self.pts
        a, b, c = P[t[:, 0]], P[t[:, 1]], P[t[:, 2]]
        px, py = P[pi]
        is_ghost = t[:, 2] == self.ghost
        det, perm = _incircle(a[:, 0], a[:, 1], b[:, 0], b[:, 1], c[:, 0], c[:, 1], px, py)
        # cocircular ties keep the existing triangles (first retriangulation wins)
        conflict = det > 1e-12 * perm
        o, operm = _orient(a[:, 0], a[:, 1], b[:, 0], b[:, 1], px, py)
        on_line = np.abs(o) <= 1e-12 * operm
        along = (px - a[:, 0]) * (b[:, 0] - a[:, 0]) + (py - a[:, 1]) * (b[:, 1] - a[:, 1])
        seg2 = (b[:, 0] - a[:, 0]) ** 2 + (b[:, 1] - a[:, 1]) ** 2
        between = on_line & (along > 0) & (along < seg2)
        conflict[is_ghost] = ((o > 1e-12 * operm) | between)[is_ghost]
        bad = idx[conflict]
        if len(bad) == 0:
            raise DegenerateInput(f"point {pi} not inside any circumcircle")
        self.alive[bad] = False
        edge_count: dict = {}
        for a_, b_, c_ in self.tri[bad].tolist():
            for e in ((a_, b_), (b_, c_), (c_, a_)):
                key = (min(e), max(e))
                if key in edge_count:
                    del edge_count[key]
                else:
                    edge_count[key] = e
        for u, v in edge_count.values():
            self.add(u, v, pi)

    def real_triangles(self) -> np.ndarray:
        t = self.tri[: self.count][self.alive[: self.count]]
        return t[t[:, 2] != self.ghost]


def delaunay_triangulate(points) -> Mesh:
    """Delaunay triangulation of a planar point set; hull nodes come back fixed."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    for start in range(0, n, 512):
        blk = pts[start:start + 512]
        d2 = ((blk[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        d2[np.arange(len(blk)), np.arange(start, start + len(blk))] = np.inf
        if d2.min() <= DUPLICATE_TOL ** 2:
            i, j = np.unravel_index(np.argmin(d2), d2.shape)
            raise DuplicatePoints(f"points {start + i} and {j} coincide")
    ext = pts.max(axis=0) - pts.min(axis=0)
    span = float(max(ext[0], ext[1]))
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if span == 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateInput("points are collinear")

    # seed triangle: points 0 and 1 plus the first point clearly off their line
    o, operm = _orient(pts[0, 0], pts[0, 1], pts[1, 0], pts[1, 1], pts[:, 0], pts[:, 1])
    off = np.flatnonzero(np.abs(o) > 1e-10 * operm.max())
    k = int(off[0]) if len(off) else int(np.argmax(np.abs(o)))
    tr = _Triangulation(pts, capacity=max(16, 4 * n))
    if o[k] > 0:
        tr.start(0, 1, k)
    else:
        tr.start(1, 0, k)
    for i in range(2, n):
        if i != k:
            tr.insert(i)
    tris = tr.real_triangles()
    # canonical vertex order inside each triangle (smallest index first, orientation kept)
    rot = np.argmin(tris, axis=1)
    tris = np.stack([tris[np.arange(len(tris)), (rot + j) % 3] for j in range(3)], axis=1)
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    s = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tris = tris[s > 0]
    return Mesh(pts.copy(), tris, boundary_nodes(tris, n))


def circumcircle(a, b, c):
    """Circumcentre and radius of a triangle."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0:
        return None, math.inf
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return np.array([ux, uy]), math.hypot(ax - ux, ay - uy)


def boundary_count(node_count: int) -> int:
    return 4 * math.ceil(math.sqrt(node_count))


def square_boundary(count: int, side: float) -> np.ndarray:
    per = count // 4
    t = np.arange(per) / per * side
    return np.vstack([
        np.column_stack([t, np.zeros(per)]),
        np.column_stack([np.full(per, side), t]),
        np.column_stack([side - t, np.full(per, side)]),
        np.column_stack([np.zeros(per), side - t]),
    ])


def random_square_mesh(node_count: int, side: float, seed: int) -> Mesh:
    if node_count < 4:
        raise ValueError("node_count must be at least 4")
    rng = np.random.default_rng(seed)
    bnd = square_boundary(boundary_count(node_count), side)
    n_in = max(0, node_count - len(bnd))
    inner = rng.uniform(0.0, side, size=(n_in, 2))
    return delaunay_triangulate(np.vstack([bnd, inner]))


@dataclass
class DatasetSpec:
    mesh_count: int = 20
    split: tuple = (6, 2, 2)
    node_count_range: tuple = (200, 800)
    domain_size_range: tuple = (1.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        if self.node_count_range[0] < 4 or self.node_count_range[1] < self.node_count_range[0]:
            raise ValueError("node_count_range must satisfy 4 <= lo <= hi")
        if self.domain_size_range[0] <= 0 or self.domain_size_range[1] < self.domain_size_range[0]:
            raise ValueError("domain_size_range must be positive and ordered")
        if len(self.split) != 3 or min(self.split) < 0 or sum(self.split) <= 0:
            raise ValueError("split needs three non-negative ratios")
        if self.mesh_count < 1:
            raise ValueError("mesh_count must be positive")


def split_counts(total: int, ratios) -> tuple:
    """Largest-remainder apportionment of ``total`` items by ``ratios``."""
    s = float(sum(ratios))
    quotas = [total * r / s for r in ratios]
    counts = [math.floor(q) for q in quotas]
    rem = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rem]:
        counts[i] += 1
    return tuple(counts)


def mesh_params(spec: DatasetSpec) -> list:
    """(node_count, side, seed) per mesh, each from its own RNG stream."""
    out = []
    for i in range(spec.mesh_count):
        rng = np.random.default_rng([spec.seed, i])
        nc = int(rng.integers(spec.node_count_range[0], spec.node_count_range[1] + 1))
        side = float(rng.uniform(*spec.domain_size_range))
        mesh_seed = int(rng.integers(0, 2 ** 63 - 1))
        out.append((nc, side, mesh_seed))
    return out


def build_dataset(spec: DatasetSpec):
    params = mesh_params(spec)
    meshes = [random_square_mesh(nc, side, s) for nc, side, s in params]
    n_tr, n_va, _ = split_counts(spec.mesh_count, spec.split)
    return meshes[:n_tr], meshes[n_tr:n_tr + n_va], meshes[n_tr + n_va:]
