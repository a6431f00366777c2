"""Graph neural network smoother: one residual GCN block with GraphNorm and an InstanceNorm head.

A star polygon is normalised into its own frame (free node at the origin,
uniform scale ``d``), embedded by a linear layer, passed through
GraphNorm -> ReLU -> GCN with a residual connection, and the free node's
feature row is decoded by FC -> InstanceNorm -> ReLU -> FC into a normalised
displacement.  The predicted position is ``x0 + d * displacement``.

All forward code is written against the primitives in :mod:`meshsmith.autodiff`,
so passing numpy arrays runs fast inference and passing Tensors records a tape
for training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CorruptFile, VersionMismatch, ZeroExtent
from .mesh import StarPolygon

FORMAT = "gmsnet-v1"
KEYS = ("W_l", "b_l", "gn_gamma", "gn_beta", "gn_alpha", "W_g",
        "in_gamma", "in_beta", "mlp_W1", "mlp_b1", "mlp_W2", "mlp_b2")
STD_FLOOR = 1e-6


def param_shapes(H: int) -> dict:
    return {
        "W_l": (2, H), "b_l": (H,),
        "gn_gamma": (H,), "gn_beta": (H,), "gn_alpha": (H,),
        "W_g": (H, H),
        "in_gamma": (H,), "in_beta": (H,),
        "mlp_W1": (H, H), "mlp_b1": (H,),
        "mlp_W2": (H, 2), "mlp_b2": (2,),
    }


@dataclass
class ModelParams:
    W_l: np.ndarray
    b_l: np.ndarray
    gn_gamma: np.ndarray
    gn_beta: np.ndarray
    gn_alpha: np.ndarray
    W_g: np.ndarray
    in_gamma: np.ndarray
    in_beta: np.ndarray
    mlp_W1: np.ndarray
    mlp_b1: np.ndarray
    mlp_W2: np.ndarray
    mlp_b2: np.ndarray
    hidden_dim: int = 32
    seed: int = 0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in KEYS}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: getattr(self, k).copy() for k in KEYS},
                           hidden_dim=self.hidden_dim, seed=self.seed)

    def parameter_count(self) -> int:
        return int(sum(getattr(self, k).size for k in KEYS))

    def replace(self, arrays: dict) -> "ModelParams":
        vals = {k: np.array(arrays.get(k, getattr(self, k)), dtype=float) for k in KEYS}
        return ModelParams(**vals, hidden_dim=self.hidden_dim, seed=self.seed)


def init_params(H: int = 32, seed: int = 0) -> ModelParams:
    if H < 2:
        raise ValueError("hidden dimension must be at least 2")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return ModelParams(
        W_l=glorot(2, H), b_l=np.zeros(H),
        gn_gamma=np.ones(H), gn_beta=np.zeros(H), gn_alpha=np.ones(H),
        W_g=glorot(H, H),
        in_gamma=np.ones(H), in_beta=np.zeros(H),
        mlp_W1=glorot(H, H), mlp_b1=np.zeros(H),
        mlp_W2=glorot(H, 2), mlp_b2=np.zeros(2),
        hidden_dim=H, seed=seed,
    )


@dataclass(frozen=True)
class NormalizationFrame:
    scale: float
    origin: np.ndarray


def normalize_points(points: np.ndarray, center_index: int = 0):
    pts = np.asarray(points, dtype=float)
    ext = pts.max(axis=0) - pts.min(axis=0)
    d = float(max(ext[0], ext[1]))
    if not d > 0:
        raise ZeroExtent("star has zero extent")
    origin = pts[center_index].copy()
    return (pts - origin) / d, NormalizationFrame(d, origin)


def normalize_star(star: StarPolygon):
    """Features (n+1) x 2 with the free node at row 0 mapped to (0, 0), plus the frame."""
    return normalize_points(star.points(), 0)


def adjacency_from_edges(n_nodes: int, edges) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 for an undirected edge list."""
    A = np.eye(n_nodes)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    A[e[:, 0], e[:, 1]] = 1.0
    A[e[:, 1], e[:, 0]] = 1.0
    dinv = 1.0 / np.sqrt(A.sum(axis=1))
    return A * dinv[:, None] * dinv[None, :]


def normalized_adjacency(star: StarPolygon) -> np.ndarray:
    return adjacency_from_edges(star.degree + 1, star.edges)


def _star_adjacency(n: int) -> np.ndarray:
    # centre joined to every ring node, ring closed into a cycle, self-loops
    m = n + 1
    A = np.eye(m)
    A[0, 1:] = A[1:, 0] = 1.0
    idx = np.arange(1, m)
    nxt = np.roll(idx, -1)
    A[idx, nxt] = A[nxt, idx] = 1.0
    dinv = 1.0 / np.sqrt(A.sum(axis=1))
    return A * dinv[:, None] * dinv[None, :]


_ADJ_CACHE: dict = {}


def star_adjacency(n: int) -> np.ndarray:
    A = _ADJ_CACHE.get(n)
    if A is None:
        A = _ADJ_CACHE[n] = _star_adjacency(n)
        A.setflags(write=False)
    return A


def graph_norm(x, gamma, beta, alpha, pool):
    """GraphNorm over the nodes of each graph; ``pool`` averages rows within a graph."""
    mu = pool @ x
    centred = x - mu * alpha
    var = pool @ ad.square(centred)
    sigma = ad.sqrt(ad.clip(var, STD_FLOOR ** 2))
    return centred / sigma * gamma + beta


def instance_norm(x, gamma, beta):
    """Normalise each row across its H channels, then apply the affine map."""
    H = np.shape(ad._val(x))[1]
    avg = np.full((H, H), 1.0 / H)
    centred = x - x @ avg
    var = ad.square(centred) @ avg
    sigma = ad.sqrt(ad.clip(var, STD_FLOOR ** 2))
    return centred / sigma * gamma + beta


def network(p: dict, X, A, pool, centre_sel):
    """Normalised node features -> normalised displacement of each graph's free node."""
    xh = X @ p["W_l"] + p["b_l"]
    xh_hat = graph_norm(xh, p["gn_gamma"], p["gn_beta"], p["gn_alpha"], pool)
    xg = (A @ ad.relu(xh_hat)) @ p["W_g"] + xh_hat
    h = centre_sel @ xg
    h = h @ p["mlp_W1"] + p["mlp_b1"]
    h = ad.relu(instance_norm(h, p["in_gamma"], p["in_beta"]))
    return h @ p["mlp_W2"] + p["mlp_b2"]


@dataclass
class StarGraphBatch:
    """Several stars packed as one block-diagonal graph; free nodes lead each block."""

    X: np.ndarray
    A: np.ndarray
    pool: np.ndarray
    centre_sel: np.ndarray
    origins: np.ndarray
    scales: np.ndarray
    rings: list
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return len(self.rings)


def build_batch(stars) -> StarGraphBatch:
    sizes = [s.degree + 1 for s in stars]
    N = int(sum(sizes))
    B = len(stars)
    X = np.empty((N, 2))
    A = np.zeros((N, N))
    pool = np.zeros((N, N))
    sel = np.zeros((B, N))
    origins = np.empty((B, 2))
    scales = np.empty(B)
    rings = []
    offsets = np.cumsum([0] + sizes)
    for b, s in enumerate(stars):
        o, m = offsets[b], sizes[b]
        xb, frame = normalize_star(s)
        X[o:o + m] = xb
        A[o:o + m, o:o + m] = star_adjacency(s.degree)
        pool[o:o + m, o:o + m] = 1.0 / m
        sel[b, o] = 1.0
        origins[b] = frame.origin
        scales[b] = frame.scale
        rings.append(xb[1:])
    return StarGraphBatch(X, A, pool, sel, origins, scales, rings, offsets)


def predict_batch(params, batch: StarGraphBatch):
    """Normalised displacements (B x 2) for every star in the batch."""
    p = params.as_dict() if isinstance(params, ModelParams) else params
    return network(p, batch.X, batch.A, batch.pool, batch.centre_sel)


def forward_graph(params: ModelParams, points, edges, center_index: int) -> np.ndarray:
    """Predicted free-node position for an arbitrary node order and edge list."""
    X, frame = normalize_points(points, center_index)
    n = len(X)
    A = adjacency_from_edges(n, edges)
    pool = np.full((n, n), 1.0 / n)
    sel = np.zeros((1, n))
    sel[0, center_index] = 1.0
    out = network(params.as_dict(), X, A, pool, sel)
    return frame.origin + frame.scale * np.asarray(out).reshape(2)


def forward(params: ModelParams, star: StarPolygon) -> np.ndarray:
    X, frame = normalize_star(star)
    n = len(X)
    pool = np.full((n, n), 1.0 / n)
    sel = np.zeros((1, n))
    sel[0, 0] = 1.0
    out = network(params.as_dict(), X, star_adjacency(star.degree), pool, sel)
    return frame.origin + frame.scale * out.reshape(2)


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(params: ModelParams, path, extra: dict | None = None) -> None:
    header = {"format": FORMAT, "hidden_dim": params.hidden_dim, "seed": params.seed}
    if extra:
        header.update(extra)
    lines = [json.dumps(header, sort_keys=True)]
    for k in KEYS:
        arr = getattr(params, k)
        lines.append(json.dumps({
            "name": k,
            "shape": list(arr.shape),
            "data": [format(float(v), ".17g") for v in arr.reshape(-1)],
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path, hidden_dim: int | None = None) -> ModelParams:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CorruptFile(f"{path}: not text") from exc
    if not lines:
        raise CorruptFile(f"{path}: empty checkpoint")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: bad header") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise VersionMismatch(f"{path}: expected format {FORMAT!r}")
    H = header.get("hidden_dim")
    if not isinstance(H, int):
        raise CorruptFile(f"{path}: header lacks hidden_dim")
    if hidden_dim is not None and hidden_dim != H:
        raise VersionMismatch(f"{path}: hidden_dim {H} but {hidden_dim} expected")
    shapes = param_shapes(H)
    body = lines[1:]
    if len(body) < len(KEYS):
        raise CorruptFile(f"{path}: truncated ({len(body)} of {len(KEYS)} arrays)")
    arrays = {}
    for k, ln in zip(KEYS, body):
        try:
            rec = json.loads(ln)
            data = np.array([float(v) for v in rec["data"]], dtype=float)
            shape = tuple(rec["shape"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"{path}: unreadable array {k!r}") from exc
        if rec.get("name") != k:
            raise CorruptFile(f"{path}: expected array {k!r}, found {rec.get('name')!r}")
        if shape != shapes[k]:
            raise VersionMismatch(f"{path}: {k} has shape {shape}, hidden_dim {H} needs {shapes[k]}")
        if data.size != int(np.prod(shape)):
            raise CorruptFile(f"{path}: {k} has {data.size} values for shape {shape}")
        arrays[k] = data.reshape(shape)
    return ModelParams(**arrays, hidden_dim=H, seed=int(header.get("seed", 0)))
