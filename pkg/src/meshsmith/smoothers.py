"""Classical per-node smoothers.

Each step maps a :class:`StarPolygon` to a proposed centre position.  Safety
(shift truncation) is applied by the driver, except where a smoother needs it
internally (smart Laplacian, optimisation).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DegenerateAngle, DegenerateTriangle
from .losses import PointMetricLoss, metric_terms, star_endpoints, truncation_halvings
from .mesh import StarPolygon, area_eps, has_negative_element, star_signed_areas


def laplacian_step(star: StarPolygon) -> np.ndarray:
    return star.ring.mean(axis=0)


def _mean_metric(star: StarPolygon, p) -> float:
    a, b = star_endpoints(star.ring)
    cand = np.broadcast_to(np.asarray(p, dtype=float), a.shape)
    return float(np.mean(metric_terms(cand, a, b)))


def smart_laplacian_step(star: StarPolygon) -> np.ndarray:
    """Laplacian move, accepted only if it strictly improves the star and inverts nothing."""
    target = laplacian_step(star)
    if has_negative_element(star, target):
        return star.center.copy()
    if _mean_metric(star, target) < _mean_metric(star, star.center):
        return target
    return star.center.copy()


def angle_based_step(star: StarPolygon) -> np.ndarray:
    ring = star.ring
    prev = np.roll(ring, 1, axis=0)
    nxt = np.roll(ring, -1, axis=0)
    u = prev - ring
    v = nxt - ring
    lu = np.hypot(u[:, 0], u[:, 1])
    lv = np.hypot(v[:, 0], v[:, 1])
    if np.any(lu == 0) or np.any(lv == 0):
        raise DegenerateAngle("ring has a zero-length edge")
    bis = u / lu[:, None] + v / lv[:, None]
    # interior of a ccw polygon is on the left of ring[i] -> ring[i+1]
    e_in = ring - prev
    turn = e_in[:, 0] * v[:, 1] - e_in[:, 1] * v[:, 0]
    bis = np.where((turn < 0)[:, None], -bis, bis)
    nb = np.hypot(bis[:, 0], bis[:, 1])
    straight = nb < 1e-12
    if np.any(straight):
        left = np.column_stack([-v[:, 1], v[:, 0]]) / lv[:, None]
        bis = np.where(straight[:, None], left, bis)
        nb = np.where(straight, 1.0, nb)
    bis = bis / nb[:, None]
    r = np.hypot(*(star.center - ring).T)
    return (ring + r[:, None] * bis).mean(axis=0)


def circumcenters(a, b, c) -> np.ndarray:
    ab = b - a
    ac = c - a
    d = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    ab2 = (ab ** 2).sum(1)
    ac2 = (ac ** 2).sum(1)
    ux = (ac[:, 1] * ab2 - ab[:, 1] * ac2) / d
    uy = (ab[:, 0] * ac2 - ac[:, 0] * ab2) / d
    return a + np.column_stack([ux, uy])


def cvt_step(star: StarPolygon) -> np.ndarray:
    """Area-weighted mean of the circumcentres of the star's triangles."""
    areas = star_signed_areas(star.ring, star.center)
    if np.any(areas <= star.area_eps()):
        raise DegenerateTriangle("star contains a degenerate or inverted triangle")
    a, b = star_endpoints(star.ring)
    c = np.broadcast_to(star.center, a.shape)
    cc = circumcenters(c, a, b)
    w = np.abs(areas)
    return (w[:, None] * cc).sum(axis=0) / w.sum()


@dataclass
class OptimConfig:
    max_iters: int = 20
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def star_frame(star: StarPolygon):
    """Origin and uniform scale of the normalisation frame shared with the network."""
    pts = star.points()
    ext = pts.max(axis=0) - pts.min(axis=0)
    return star.center.copy(), float(max(ext[0], ext[1]))


def optimization_step(star: StarPolygon, config: OptimConfig | None = None) -> np.ndarray:
    """Adam on the metric loss in the star's normalised frame; returns the best iterate."""
    cfg = config or OptimConfig()
    origin, d = star_frame(star)
    if d <= 0:
        return star.center.copy()
    ring = (star.ring - origin) / d
    loss_fn = PointMetricLoss(ring)
    eps = area_eps(np.vstack([np.zeros((1, 2)), ring]))
    p = np.zeros((1, 2))
    best_p = p
    best = None
    state = ad.AdamState.for_params([p])
    for it in range(cfg.max_iters + 1):
        x = ad.Tensor(p, requires_grad=True)
        with ad.Tape() as tape:
            loss = loss_fn(x)
        val = loss.item()
        if best is None or val < best:
            best, best_p = val, p
        if it == cfg.max_iters:
            break
        ad.backward(tape, loss)
        (p_new,), state = ad.adam_update([p], [x.grad], state, cfg.learning_rate,
                                         cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        step = (p_new - p).reshape(2)
        k = truncation_halvings(ring, p.reshape(2), step, eps)
        p = p + (step * 0.5 ** k if k >= 0 else 0.0)
    return origin + d * best_p.reshape(2)


CLASSICAL = {
    "laplacian": laplacian_step,
    "smart-laplacian": smart_laplacian_step,
    "angle": angle_based_step,
    "cvt": cvt_step,
    "optim": optimization_step,
}
