"""Star-polygon quality losses and shift truncation.

Every loss is the mean, over the triangles (candidate, ring[i], ring[i+1]), of
a per-triangle term.  The term functions take the candidate rows ``cand``
(T x 2, Tensor or ndarray) and the fixed ring endpoints ``a``/``b`` (T x 2
ndarrays), so the same code serves a single star, a training batch, and the
optimisation smoother.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .mesh import StarPolygon, star_signed_areas

FOUR_SQRT3 = 4.0 * math.sqrt(3.0)
MAX_HALVINGS = 30
_EX = np.array([[1.0], [0.0]])
_EY = np.array([[0.0], [1.0]])
_ONES2 = np.ones((2, 1))
_COS_CLAMP = 1.0 - 1e-12


def _geometry(cand, a, b):
    u = a - cand
    v = b - cand
    area = 0.5 * ((u @ _EX) * (v @ _EY) - (u @ _EY) * (v @ _EX))
    uu = ad.square(u) @ _ONES2
    vv = ad.square(v) @ _ONES2
    w = b - a
    ww = (w * w).sum(axis=1, keepdims=True)
    return u, v, w, area, uu, vv, ww


def metric_terms(cand, a, b):
    """1 - 4*sqrt(3)*S / (m^2 + n^2 + l^2) with signed area S."""
    _, _, _, area, uu, vv, ww = _geometry(cand, a, b)
    return 1.0 - FOUR_SQRT3 * area / (uu + vv + ww)


def aspect_ratio_terms(cand, a, b):
    _, _, _, area, uu, vv, ww = _geometry(cand, a, b)
    return (uu + vv + ww) / (FOUR_SQRT3 * area)


def _cosines(cand, a, b):
    u, v, w, _, uu, vv, ww = _geometry(cand, a, b)
    uv = (u * v) @ _ONES2
    uw = (u * w) @ _ONES2
    vw = (v * w) @ _ONES2
    cos_c = uv / ad.sqrt(uu * vv)
    cos_a = -1.0 * uw / ad.sqrt(uu * ww)
    cos_b = vw / ad.sqrt(vv * ww)
    return cos_c, cos_a, cos_b


def cosine_terms(cand, a, b):
    """Mean over the three angles of (cos(theta) - 1/2)^2."""
    cs = _cosines(cand, a, b)
    return (ad.square(cs[0] - 0.5) + ad.square(cs[1] - 0.5) + ad.square(cs[2] - 0.5)) / 3.0


def minmax_angle_terms(cand, a, b):
    """Largest interior angle of each triangle, in radians."""
    angles = [ad.arccos(ad.clip(c, -_COS_CLAMP, _COS_CLAMP)) for c in _cosines(cand, a, b)]
    return ad.maximum(ad.maximum(angles[0], angles[1]), angles[2])


TERMS = {
    "metric": metric_terms,
    "minmax_angle": minmax_angle_terms,
    "aspect_ratio": aspect_ratio_terms,
    "cosine": cosine_terms,
}

ALIASES = {"minmax": "minmax_angle", "ar": "aspect_ratio", "cos": "cosine"}


def canonical_kind(kind: str) -> str:
    kind = ALIASES.get(kind, kind)
    if kind not in TERMS:
        raise ValueError(f"unknown loss kind {kind!r}")
    return kind


def star_endpoints(ring: np.ndarray):
    return ring, np.roll(ring, -1, axis=0)


def star_loss(kind: str, candidate, star: StarPolygon):
    """Loss of placing the free node at ``candidate`` (array of 2 or 1x2 Tensor)."""
    terms = TERMS[canonical_kind(kind)]
    a, b = star_endpoints(star.ring)
    n = len(a)
    if isinstance(candidate, ad.Tensor):
        cand = np.ones((n, 1)) @ candidate
    else:
        cand = np.broadcast_to(np.asarray(candidate, dtype=float).reshape(1, 2), (n, 2))
    return ad.mean(terms(cand, a, b))


def metric_loss(candidate, star: StarPolygon):
    if isinstance(candidate, ad.Tensor):
        return PointMetricLoss(star.ring)(candidate)
    return star_loss("metric", candidate, star)


class PointMetricLoss:
    """Metric loss of one 1x2 candidate against a fixed ring, with ring constants precomputed.

    Twice the signed area of (c, a, b) is a x b + c . (a_y - b_y, b_x - a_x), and
    |a - c|^2 + |b - c|^2 + |b - a|^2 = const - 2 c . (a + b) + 2|c|^2.
    """

    def __init__(self, ring: np.ndarray):
        a, b = star_endpoints(ring)
        self.cross_ab = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])[None, :]
        self.lin = np.vstack([a[:, 1] - b[:, 1], b[:, 0] - a[:, 0]])
        self.sq_const = ((a * a).sum(1) + (b * b).sum(1) + ((b - a) ** 2).sum(1))[None, :]
        self.lin_sq = -2.0 * (a + b).T
        self.n = len(a)

    def __call__(self, c):
        twice_area = c @ self.lin + self.cross_ab
        denom = (c @ self.lin_sq + self.sq_const) + 2.0 * ad.sum(ad.square(c))
        return 1.0 - (0.5 * FOUR_SQRT3 / self.n) * ad.sum(twice_area / denom)


def minmax_angle_loss(candidate, star: StarPolygon):
    return star_loss("minmax_angle", candidate, star)


def aspect_ratio_loss(candidate, star: StarPolygon):
    return star_loss("aspect_ratio", candidate, star)


def cosine_loss(candidate, star: StarPolygon):
    return star_loss("cosine", candidate, star)


def truncation_halvings(ring: np.ndarray, center, delta, eps: float) -> int:
    """Smallest k <= MAX_HALVINGS with center + delta/2^k free of negative elements, else -1."""
    center = np.asarray(center, dtype=float)
    delta = np.asarray(delta, dtype=float)
    for k in range(MAX_HALVINGS + 1):
        if not np.any(star_signed_areas(ring, center + delta) <= eps):
            return k
        delta = 0.5 * delta
    return -1


def shift_truncate(star: StarPolygon, delta, eps: float | None = None) -> np.ndarray:
    """Halve ``delta`` until moving the centre by it inverts no element; zero after 30 tries."""
    if eps is None:
        eps = star.area_eps()
    delta = np.asarray(delta, dtype=float)
    k = truncation_halvings(star.ring, star.center, delta, eps)
    if k < 0:
        return np.zeros(2)
    return delta * 0.5 ** k
