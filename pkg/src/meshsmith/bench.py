"""Sequential smoothing driver, benchmark protocol, report rows and SVG rendering."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DegenerateAngle, DegenerateTriangle, UnknownSmoother, ZeroExtent
from .losses import truncation_halvings
from .mesh import Mesh, QualityReport, StarPolygon, area_eps, element_metrics, quality_report, weighted_quality
from .smoothers import CLASSICAL

SMOOTHERS = ("laplacian", "smart-laplacian", "angle", "cvt", "optim", "nn", "gmsnet")
STOP_TOL = 1e-8
CSV_FIELDS = ("mesh", "algo", "min_angle_min", "min_angle_mean", "max_angle_max", "max_angle_mean",
              "inv_ar_min", "inv_ar_mean", "s_per_node", "weighted_quality")
# a failing step keeps the node where it is
_SKIPPABLE = (DegenerateAngle, DegenerateTriangle, ZeroExtent, FloatingPointError)


@dataclass
class SmoothRunResult:
    mesh: Mesh
    sweeps: int
    trace: list = field(default_factory=list)
    seconds_per_node: float = 0.0
    truncations: int = 0

    @property
    def report(self) -> QualityReport:
        return self.trace[-1] if self.trace else quality_report(self.mesh)


def make_smoother(name: str, model=None, nn=None) -> Callable[[StarPolygon], np.ndarray]:
    """Star -> proposed centre for a named algorithm."""
    if name in CLASSICAL:
        return CLASSICAL[name]
    if name == "gmsnet":
        if model is None:
            raise ValueError("gmsnet needs trained model parameters")
        from .gmsnet import forward
        return lambda star: forward(model, star)
    if name == "nn":
        if nn is None:
            raise ValueError("nn needs a trained NN-Smoothing model")
        return nn
    raise UnknownSmoother(f"unknown smoother {name!r}; choose from {', '.join(SMOOTHERS)}")


def smooth_mesh(mesh: Mesh, smoother, max_sweeps: int = 100, model=None, nn=None,
                on_sweep=None) -> SmoothRunResult:
    """Gauss-Seidel sweeps over interior nodes in index order with shift truncation.

    ``on_sweep(mesh)`` is called with the working mesh after every sweep.
    """
    step = make_smoother(smoother, model, nn) if isinstance(smoother, str) else smoother
    out = mesh.copy()
    nodes = out.nodes
    interior = [int(i) for i in out.interior]
    rings = {i: out.ring(i) for i in interior}
    eps = area_eps(nodes)
    tol = STOP_TOL * out.extent()
    trace, elapsed, updates, truncs, sweeps = [], 0.0, 0, 0, 0
    for _ in range(max_sweeps):
        sweeps += 1
        moved = 0.0
        for i in interior:
            t0 = time.perf_counter()
            ring = nodes[rings[i]]
            centre = nodes[i].copy()
            try:
                prop = np.asarray(step(StarPolygon(centre, ring, rings[i])), dtype=float).reshape(2)
            except _SKIPPABLE:
                prop = centre
            delta = prop - centre
            if not np.all(np.isfinite(delta)):
                delta = np.zeros(2)
            k = truncation_halvings(ring, centre, delta, eps)
            if k != 0:
                truncs += 1
            delta = delta * 0.5 ** k if k >= 0 else np.zeros(2)
            nodes[i] = centre + delta
            elapsed += time.perf_counter() - t0
            updates += 1
            moved = max(moved, float(np.hypot(delta[0], delta[1])))
        trace.append(quality_report(out))
        if on_sweep is not None:
            on_sweep(out)
        if moved < tol:
            break
    return SmoothRunResult(out, sweeps, trace, elapsed / max(updates, 1), truncs)


def summary_row(mesh_name: str, algo: str, report: QualityReport, s_per_node: float) -> dict:
    row = {"mesh": mesh_name, "algo": algo, **report.as_row(), "s_per_node": s_per_node,
           "weighted_quality": weighted_quality(report)}
    return row


def run_experiment(mesh: Mesh, smoother: str, runs: int = 10, max_sweeps: int = 100,
                   model=None, nn=None, mesh_name: str = "mesh", stochastic: bool = False, on_sweep=None):
    """Best of ``runs`` smoothing runs by weighted quality, plus its summary row.

    All built-in smoothers are deterministic, so a single run stands for all of them
    unless ``stochastic`` is set.
    """
    n_runs = runs if stochastic else 1
    results = [smooth_mesh(mesh, smoother, max_sweeps, model=model, nn=nn, on_sweep=on_sweep)
               for _ in range(n_runs)]
    scores = [weighted_quality(r.report) for r in results]
    best = results[int(np.argmax(scores))]
    return best, summary_row(mesh_name, smoother, best.report, best.seconds_per_node)


def format_row(row: dict) -> str:
    cells = []
    for k in CSV_FIELDS:
        v = row[k]
        cells.append(f"{v:>12.4e}" if k == "s_per_node" else
                     f"{v:>12.4f}" if isinstance(v, float) else f"{v!s:>12}")
    return " ".join(cells)


def format_header() -> str:
    return " ".join(f"{k[:12]:>12}" for k in CSV_FIELDS)


def csv_line(row: dict) -> str:
    return ",".join(repr(float(row[k])) if isinstance(row[k], float) else str(row[k]) for k in CSV_FIELDS)


def quality_color(f: float) -> str:
    """Blue at f = 0 to yellow at f = 1, linear in RGB."""
    t = min(max(float(f), 0.0), 1.0)
    r = round(255 * t)
    return f"#{r:02x}{r:02x}{round(255 * (1 - t)):02x}"


def render_svg(mesh: Mesh, path) -> None:
    p = mesh.nodes
    lo = p.min(axis=0)
    hi = p.max(axis=0)
    size = hi - lo
    stroke = 0.002 * float(max(size.max(), 1e-300))
    f = element_metrics(p, mesh.triangles)["transformed"]
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.9g} {-hi[1]:.9g} {size[0]:.9g} {size[1]:.9g}">',
        f'<g stroke="#000000" stroke-width="{stroke:.9g}" stroke-linejoin="round">',
    ]
    for tri, fv in zip(mesh.triangles.tolist(), f.tolist()):
        # flip y so the picture is upright
        pts = " ".join(f"{p[k, 0]:.9g},{-p[k, 1]:.9g}" for k in tri)
        lines.append(f'<polygon points="{pts}" fill="{quality_color(fv)}"/>')
    lines += ["</g>", "</svg>"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
