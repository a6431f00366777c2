"""A small reverse-mode autodiff engine over dense float64 arrays, plus Adam.

Operations are recorded on the innermost active :class:`Tape` whenever one of
their inputs requires a gradient.  Every primitive also accepts plain numpy
arrays and then simply computes the forward value, so model and loss code can
run unchanged for inference.

Broadcasting is deliberately narrow: scalar-with-tensor and a row vector
(shape ``(k,)`` or ``(1, k)``) over the rows of an ``(m, k)`` matrix.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import NonScalarOutput, ShapeMismatch

_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


class Tape:
    """Ordered record of primitive applications; use as a context manager."""

    def __init__(self):
        self.records: list = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def backward(self, output: "Tensor") -> None:
        backward(self, output)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")
    __array_ufunc__ = None  # make ndarray @ Tensor defer to Tensor.__rmatmul__

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeMismatch(f"tensors have at most 2 dimensions, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return subtract(self, o)
    def __rsub__(self, o): return subtract(o, self)
    def __mul__(self, o): return multiply(self, o)
    def __rmul__(self, o): return multiply(o, self)
    def __truediv__(self, o): return divide(self, o)
    def __rtruediv__(self, o): return divide(o, self)
    def __neg__(self): return multiply(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)


def _val(x):
    return x.data if isinstance(x, Tensor) else x


def _record(out_data, inputs, grad_fn):
    """Wrap a forward value as a Tensor, recording it when an input needs a gradient."""
    out = Tensor.__new__(Tensor)
    out.data = out_data if type(out_data) is np.ndarray else np.asarray(out_data, dtype=np.float64)
    out.grad = None
    st = _stack()
    for x in inputs:
        if isinstance(x, Tensor) and x.requires_grad:
            if st:
                out.requires_grad = True
                st[-1].records.append((out, inputs, grad_fn))
                return out
            break
    out.requires_grad = False
    return out


def backward(tape: Tape, output: Tensor) -> None:
    """Accumulate d(output)/d(x) into ``x.grad`` for every recorded input."""
    if not isinstance(output, Tensor) or output.data.size != 1:
        raise NonScalarOutput("backward needs a scalar output")
    if not output.requires_grad:
        return
    output.grad = np.ones_like(output.data)
    for out, inputs, grad_fn in reversed(tape.records):
        g = out.grad
        if g is None:
            continue
        grads = grad_fn(g)
        for x, gx in zip(inputs, grads):
            if gx is None:
                continue
            if x.grad is None:
                x.grad = gx if np.shape(gx) == x.data.shape else np.reshape(gx, x.data.shape)
            else:
                x.grad = x.grad + gx


# --- broadcasting helpers -------------------------------------------------

def _bshape(a: np.ndarray, b: np.ndarray):
    sa, sb = a.shape, b.shape
    if sa == sb or a.size == 1 and a.ndim <= 2 or b.size == 1 and b.ndim <= 2:
        return np.broadcast_shapes(sa, sb)
    for big, small in ((sa, sb), (sb, sa)):
        if len(big) == 2 and (small == (big[1],) or small == (1, big[1])):
            return big
    raise ShapeMismatch(f"cannot broadcast {sa} with {sb}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if np.shape(g) == shape:
        return g
    size = int(np.prod(shape)) if shape else 1
    if size == 1:
        return np.full(shape, g.sum())
    return g.reshape(-1, shape[-1]).sum(axis=0).reshape(shape)


_SCALAR_TYPES = (float, int, np.floating, np.integer)


def _binary(a, b, fwd, da, db):
    ta = isinstance(a, Tensor)
    tb = isinstance(b, Tensor)
    av = a.data if ta else a
    bv = b.data if tb else b
    # python scalars skip conversion; they never need a gradient
    if not isinstance(av, (np.ndarray,) + _SCALAR_TYPES):
        av = np.asarray(av, dtype=np.float64)
    if not isinstance(bv, (np.ndarray,) + _SCALAR_TYPES):
        bv = np.asarray(bv, dtype=np.float64)
    sa = np.shape(av)
    sb = np.shape(bv)
    if sa != sb and sa and sb:
        _bshape(av, bv)
    out = fwd(av, bv)
    if not (ta or tb):
        return out
    need_a = ta and a.requires_grad
    need_b = tb and b.requires_grad

    def grad_fn(g):
        ga = _unbroadcast(da(g, av, bv, out), sa) if need_a else None
        gb = _unbroadcast(db(g, av, bv, out), sb) if need_b else None
        return ga, gb

    return _record(out, (a, b), grad_fn)


def add(a, b):
    return _binary(a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def subtract(a, b):
    return _binary(a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def multiply(a, b):
    return _binary(a, b, np.multiply,
                   lambda g, av, bv, o: g * bv,
                   lambda g, av, bv, o: g * av)


def divide(a, b):
    return _binary(a, b, np.divide,
                   lambda g, av, bv, o: g / bv,
                   lambda g, av, bv, o: -g * av / (bv * bv))


def maximum(a, b):
    """Elementwise max; ties send the gradient to the first argument."""
    return _binary(a, b, np.maximum,
                   lambda g, av, bv, o: g * (av >= bv),
                   lambda g, av, bv, o: g * (av < bv))


def matmul(a, b):
    ta = isinstance(a, Tensor)
    tb = isinstance(b, Tensor)
    av = a.data if ta else a
    bv = b.data if tb else b
    if np.ndim(av) != 2 or np.ndim(bv) != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul {np.shape(av)} @ {np.shape(bv)}")
    out = av @ bv
    if not (ta or tb):
        return out
    need_a = ta and a.requires_grad
    need_b = tb and b.requires_grad

    def grad_fn(g):
        return (g @ bv.T if need_a else None), (av.T @ g if need_b else None)

    return _record(out, (a, b), grad_fn)


def _unary(x, fwd, dfn):
    xv = _val(x)
    out = fwd(xv)
    if not isinstance(x, Tensor):
        return out
    return _record(out, (x,), lambda g: (dfn(g, xv, out),))


def relu(x):
    # subgradient at 0 is 0
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda g, v, o: g * (v > 0))


def sqrt(x):
    return _unary(x, np.sqrt, lambda g, v, o: g * 0.5 / o)


def square(x):
    return _unary(x, np.square, lambda g, v, o: g * 2.0 * v)


def arccos(x):
    return _unary(x, np.arccos, lambda g, v, o: -g / np.sqrt(1.0 - v * v))


def clip(x, lo=None, hi=None):
    """Clamp to [lo, hi]; the gradient is zero where clamping is active."""
    def fwd(v):
        return np.clip(v, -np.inf if lo is None else lo, np.inf if hi is None else hi)

    def d(g, v, o):
        inside = np.ones_like(v, dtype=bool)
        if lo is not None:
            inside &= v >= lo
        if hi is not None:
            inside &= v <= hi
        return g * inside

    return _unary(x, fwd, d)


def _axis_size(shape, axis):
    return int(np.prod(shape)) if axis is None else shape[axis]


def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    xv = _val(x)
    out = np.sum(xv, axis=axis, keepdims=axis is not None)
    if not isinstance(x, Tensor):
        return out
    return _record(out, (x,), lambda g: (np.broadcast_to(g, xv.shape),))


def mean(x, axis=None):
    xv = _val(x)
    n = _axis_size(np.shape(xv), axis)
    out = np.mean(xv, axis=axis, keepdims=axis is not None)
    if not isinstance(x, Tensor):
        return out
    return _record(out, (x,), lambda g: (np.broadcast_to(g / n, xv.shape),))


def variance(x, axis=None):
    """Population variance (divides by N)."""
    xv = _val(x)
    n = _axis_size(np.shape(xv), axis)
    mu = np.mean(xv, axis=axis, keepdims=True)
    out = np.mean((xv - mu) ** 2, axis=axis, keepdims=axis is not None)
    if not isinstance(x, Tensor):
        return out
    return _record(out, (x,), lambda g: (2.0 / n * (xv - mu) * g,))


def concat_rows(parts):
    vals = [np.atleast_2d(_val(p)) for p in parts]
    if len({v.shape[1] for v in vals}) != 1:
        raise ShapeMismatch("concat_rows needs equal column counts")
    out = np.vstack(vals)
    if not any(isinstance(p, Tensor) for p in parts):
        return out
    bounds = np.cumsum([0] + [v.shape[0] for v in vals])

    def grad_fn(g):
        return tuple(g[bounds[i]:bounds[i + 1]].reshape(np.shape(_val(p)))
                     if isinstance(p, Tensor) and p.requires_grad else None
                     for i, p in enumerate(parts))

    return _record(out, tuple(parts), grad_fn)


def select_row(x, i: int):
    xv = _val(x)
    if np.ndim(xv) != 2:
        raise ShapeMismatch("select_row needs a matrix")
    out = xv[i:i + 1]
    if not isinstance(x, Tensor):
        return out

    def grad_fn(g):
        full = np.zeros_like(xv)
        full[i:i + 1] = g
        return (full,)

    return _record(out, (x,), grad_fn)


# --- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls([np.zeros_like(np.asarray(p, dtype=float)) for p in params],
                   [np.zeros_like(np.asarray(p, dtype=float)) for p in params], 0)


def adam_update(params, grads, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam step; returns new parameter arrays and a new state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and state must align")
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        p = np.asarray(p, dtype=float)
        g = np.asarray(g, dtype=float)
        if p.shape != g.shape or m.shape != p.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


class Adam:
    """Stateful wrapper updating a list of Tensors in place from their ``.grad``."""

    def __init__(self, params, lr: float = 1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = (beta1, beta2)
        self.eps = eps
        self.state = AdamState.for_params([p.data for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_update([p.data for p in self.params], grads, self.state,
                                      self.lr, *self.betas, self.eps)
        for p, d in zip(self.params, new):
            p.data = d


def grad_check(f, point, step: float = 1e-5, max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` takes a list of Tensors and returns a scalar Tensor; ``point`` is a
    list of arrays.  Error per coordinate is |a - n| / max(1, |a|, |n|).
    With ``max_coords`` only that many coordinates, drawn at random across all
    arrays, are differenced.
    """
    arrays = [np.array(p, dtype=float) for p in point]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = f(tensors)
    backward(tape, out)
    coords = [(k, j) for k, a in enumerate(arrays) for j in range(a.size)]
    if max_coords is not None and max_coords < len(coords):
        pick = np.random.default_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in np.sort(pick)]
    worst = 0.0
    for k, j in coords:
        flat = arrays[k].reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        fp = float(np.asarray(_val(f([Tensor(x) for x in arrays]))).reshape(-1)[0])
        flat[j] = orig - step
        fm = float(np.asarray(_val(f([Tensor(x) for x in arrays]))).reshape(-1)[0])
        flat[j] = orig
        num = (fp - fm) / (2.0 * step)
        an = float(tensors[k].grad.reshape(-1)[j])
        worst = max(worst, abs(an - num) / max(1.0, abs(an), abs(num)))
    return worst
