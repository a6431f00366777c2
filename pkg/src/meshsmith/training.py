"""Label-free training of the graph smoother on a mesh-quality loss."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import EmptyDataset
from .gmsnet import KEYS, ModelParams, build_batch, init_params, predict_batch
from .losses import TERMS, canonical_kind, truncation_halvings
from .mesh import Mesh, area_eps, star_polygon

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    initial_lr: float = 1e-2
    plateau_patience: int = 10
    lr_floor: float = 1e-5
    loss_kind: str = "metric"
    hidden_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        self.loss_kind = canonical_kind(self.loss_kind)


@dataclass
class TrainingTrace:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    truncations: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        for i in range(len(self)):
            yield (i + 1, self.train_loss[i], self.val_loss[i], self.lr[i], self.truncations[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr", "truncations"])
            for ep, tl, vl, lr, tc in self.rows():
                w.writerow([ep, repr(float(tl)), repr(float(vl)), repr(float(lr)), tc])


class _MeshStars:
    """Interior stars of one mesh, extracted once."""

    def __init__(self, mesh: Mesh):
        self.stars = [star_polygon(mesh, int(i)) for i in mesh.interior]

    def sample(self, rng: np.random.Generator, k: int):
        n = len(self.stars)
        if n <= k:
            return list(self.stars)
        idx = rng.choice(n, size=k, replace=False)
        return [self.stars[i] for i in sorted(idx)]


@dataclass
class _LossLayout:
    tri_sel: np.ndarray
    star_avg: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eps: np.ndarray


def loss_layout(batch) -> _LossLayout:
    """Selection/averaging matrices mapping B candidates onto the batch's T triangles."""
    degrees = [len(r) for r in batch.rings]
    T = int(sum(degrees))
    B = len(degrees)
    tri_sel = np.zeros((T, B))
    star_avg = np.zeros((B, T))
    a = np.empty((T, 2))
    b = np.empty((T, 2))
    eps = np.empty(B)
    o = 0
    for k, ring in enumerate(batch.rings):
        n = len(ring)
        tri_sel[o:o + n, k] = 1.0
        star_avg[k, o:o + n] = 1.0 / n
        a[o:o + n] = ring
        b[o:o + n] = np.roll(ring, -1, axis=0)
        eps[k] = area_eps(np.vstack([np.zeros((1, 2)), ring]))
        o += n
    return _LossLayout(tri_sel, star_avg, a, b, eps)


def truncation_factors(disp: np.ndarray, batch, layout: _LossLayout):
    """Per-star shift-truncation scale 2^-k (0 when 30 halvings do not suffice)."""
    f = np.empty(len(disp))
    for k, ring in enumerate(batch.rings):
        h = truncation_halvings(ring, np.zeros(2), disp[k], layout.eps[k])
        f[k] = 0.0 if h < 0 else 0.5 ** h
    return f


def batch_loss(kind: str, cand, layout: _LossLayout):
    """Mean over stars of the mean per-triangle loss at normalised candidates ``cand`` (B x 2)."""
    terms = TERMS[kind](layout.tri_sel @ cand, layout.a, layout.b)
    return ad.mean(layout.star_avg @ terms)


def evaluate(params, star_batches, kind: str) -> float:
    """Loss at truncated model outputs, averaged over every star in the given batches."""
    total, count = 0.0, 0
    p = params.as_dict()
    for batch, layout in star_batches:
        disp = np.asarray(predict_batch(p, batch))
        fac = truncation_factors(disp, batch, layout)
        cand = disp * fac[:, None]
        terms = TERMS[kind](layout.tri_sel @ cand, layout.a, layout.b)
        per_star = layout.star_avg @ terms
        total += float(per_star.sum())
        count += batch.size
    return total / max(count, 1)


def train_gmsnet(train_meshes, val_meshes, config: TrainConfig | None = None,
                 init: ModelParams | None = None, progress=None):
    """Train on the chosen loss; returns the best-validation parameters and the trace."""
    cfg = config or TrainConfig()
    if not train_meshes or not val_meshes:
        raise EmptyDataset("training and validation splits must be non-empty")
    kind = cfg.loss_kind
    train = [_MeshStars(m) for m in train_meshes]
    val = [_MeshStars(m) for m in val_meshes]
    if not any(ms.stars for ms in train) or not any(ms.stars for ms in val):
        raise EmptyDataset("no interior nodes to train on")

    val_rng = np.random.default_rng([cfg.seed, 2 ** 32 - 1])
    val_batches = []
    for ms in val:
        if ms.stars:
            b = build_batch(ms.sample(val_rng, cfg.batch_size))
            val_batches.append((b, loss_layout(b)))

    params = (init or init_params(cfg.hidden_dim, cfg.seed)).copy()
    tensors = {k: ad.Tensor(getattr(params, k).copy(), requires_grad=True) for k in KEYS}
    opt = ad.Adam([tensors[k] for k in KEYS], lr=cfg.initial_lr)
    trace = TrainingTrace()
    best_val = math.inf
    best = params.copy()
    plateau_best = math.inf
    stale = 0

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        losses = []
        truncated = 0
        for ms in train:
            if not ms.stars:
                continue
            batch = build_batch(ms.sample(rng, cfg.batch_size))
            layout = loss_layout(batch)
            opt.zero_grad()
            with ad.Tape() as tape:
                disp = predict_batch(tensors, batch)
                fac = truncation_factors(disp.data, batch, layout)
                truncated += int(np.sum(fac < 1.0))
                cand = disp * np.repeat(fac[:, None], 2, axis=1)
                loss = batch_loss(kind, cand, layout)
            value = loss.item()
            losses.append(value)
            if not math.isfinite(value):
                continue
            ad.backward(tape, loss)
            if all(np.all(np.isfinite(t.grad)) for t in opt.params if t.grad is not None):
                opt.step()

        current = params.replace({k: tensors[k].data for k in KEYS})
        val_loss = evaluate(current, val_batches, kind)
        train_loss = float(np.mean(losses)) if losses else math.nan
        trace.train_loss.append(train_loss)
        trace.val_loss.append(val_loss)
        trace.lr.append(opt.lr)
        trace.truncations.append(truncated)
        if math.isfinite(val_loss) and val_loss < best_val:
            best_val = val_loss
            best = current.copy()
        # plateau schedule: halve after `patience` epochs without improvement
        if math.isfinite(val_loss) and val_loss < plateau_best:
            plateau_best = val_loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.plateau_patience:
                opt.lr = max(opt.lr * 0.5, cfg.lr_floor)
                stale = 0
        if progress is not None:
            progress(epoch + 1, train_loss, val_loss, opt.lr, truncated)
        log.debug("epoch %d train %.5f val %.5f lr %.2e trunc %d",
                  epoch + 1, train_loss, val_loss, opt.lr, truncated)
    return best, trace


def diverged(trace: TrainingTrace, reference_floor: float, within: int = 10, factor: float = 10.0) -> bool:
    """True if the first ``within`` epochs show a non-finite loss or one above factor * floor."""
    vals = trace.train_loss[:within] + trace.val_loss[:within]
    return any((not math.isfinite(v)) or v > factor * reference_floor for v in vals)
