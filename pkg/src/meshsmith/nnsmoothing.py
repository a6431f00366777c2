"""Supervised per-degree MLP baseline trained on optimisation-smoothing labels."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CorruptFile, MissingDegree, VersionMismatch
from .mesh import Mesh, StarPolygon, star_polygon
from .smoothers import OptimConfig, laplacian_step, optimization_step, star_frame

FORMAT = "nn-smoothing-v1"
DEGREES = tuple(range(3, 10))
LAYER_KEYS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class Label:
    star: StarPolygon
    target: np.ndarray


def nn_generate_labels(meshes, config: OptimConfig | None = None) -> list:
    """(star, optimised position) for every interior node of every mesh."""
    labels = []
    for mesh in meshes:
        for i in mesh.interior:
            s = star_polygon(mesh, int(i))
            labels.append(Label(s, optimization_step(s, config)))
    return labels


def _features(star: StarPolygon, shift: int = 0) -> tuple:
    origin, d = star_frame(star)
    ring = np.roll((star.ring - origin) / d, -shift, axis=0)
    return ring.reshape(-1), origin, d


def augmented_arrays(labels, degree: int):
    """Inputs/targets for one degree, with every cyclic choice of starting ring node."""
    xs, ys = [], []
    for lab in labels:
        if lab.star.degree != degree:
            continue
        origin, d = star_frame(lab.star)
        target = (lab.target - origin) / d
        for shift in range(degree):
            xs.append(_features(lab.star, shift)[0])
            ys.append(target)
    return np.array(xs).reshape(-1, 2 * degree), np.array(ys).reshape(-1, 2)


def _init_mlp(n_in: int, hidden: int, rng) -> dict:
    def glorot(a, b):
        lim = np.sqrt(6.0 / (a + b))
        return rng.uniform(-lim, lim, size=(a, b))

    return {"W1": glorot(n_in, hidden), "b1": np.zeros(hidden),
            "W2": glorot(hidden, hidden), "b2": np.zeros(hidden),
            "W3": glorot(hidden, 2), "b3": np.zeros(2)}


def mlp(p: dict, x):
    h = ad.relu(x @ p["W1"] + p["b1"])
    h = ad.relu(h @ p["W2"] + p["b2"])
    return h @ p["W3"] + p["b3"]


def mse(p: dict, x, y) -> float:
    return float(np.mean((np.asarray(mlp(p, x)) - y) ** 2))


def train_mlp(x: np.ndarray, y: np.ndarray, hidden: int = 64, epochs: int = 300,
              lr: float = 1e-2, batch: int = 512, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    params = {k: ad.Tensor(v, requires_grad=True)
              for k, v in _init_mlp(x.shape[1], hidden, rng).items()}
    opt = ad.Adam([params[k] for k in LAYER_KEYS], lr=lr)
    n = len(x)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            opt.zero_grad()
            with ad.Tape() as tape:
                diff = mlp(params, x[idx]) - y[idx]
                loss = ad.mean(ad.square(diff))
            ad.backward(tape, loss)
            opt.step()
    return {k: params[k].data.copy() for k in LAYER_KEYS}


@dataclass
class NNSmoother:
    models: dict = field(default_factory=dict)
    hidden: int = 64

    def __call__(self, star: StarPolygon) -> np.ndarray:
        n = star.degree
        p = self.models.get(n)
        if p is None:
            if n in DEGREES:
                warnings.warn(f"no model for degree {n}; using Laplacian", MissingDegree)
            return laplacian_step(star)
        x, origin, d = _features(star)
        out = np.asarray(mlp(p, x[None, :])).reshape(2)
        return origin + d * out

    def save(self, path) -> None:
        doc = {"format": FORMAT, "hidden": self.hidden, "models": {
            str(deg): {k: {"shape": list(v.shape), "data": [format(float(t), ".17g") for t in v.reshape(-1)]}
                       for k, v in p.items()}
            for deg, p in sorted(self.models.items())}}
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NNSmoother":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptFile(f"{path}: unreadable NN-Smoothing file") from exc
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise VersionMismatch(f"{path}: expected format {FORMAT!r}")
        models = {}
        try:
            for deg, p in doc["models"].items():
                models[int(deg)] = {k: np.array([float(t) for t in p[k]["data"]]).reshape(p[k]["shape"])
                                    for k in LAYER_KEYS}
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"{path}: malformed model entry") from exc
        return cls(models, int(doc.get("hidden", 64)))


def nn_train_and_step(labels, degrees=DEGREES, hidden: int = 64, epochs: int = 300,
                      seed: int = 0) -> NNSmoother:
    """One MLP per degree; degrees without samples fall back to Laplacian with a warning."""
    models = {}
    for deg in degrees:
        x, y = augmented_arrays(labels, deg)
        if len(x) == 0:
            warnings.warn(f"no labels of degree {deg}; Laplacian fallback", MissingDegree)
            continue
        models[deg] = train_mlp(x, y, hidden=hidden, epochs=epochs, seed=seed + deg)
    return NNSmoother(models, hidden)


def train_from_meshes(meshes: list[Mesh], seed: int = 0, epochs: int = 300) -> NNSmoother:
    return nn_train_and_step(nn_generate_labels(meshes), seed=seed, epochs=epochs)
