import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshsmith import autodiff as ad
from meshsmith.errors import NonScalarOutput, ShapeMismatch


def grad_of(f, *arrays):
    ts = [ad.Tensor(a, requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        out = f(*ts)
    ad.backward(tape, out)
    return out, [t.grad for t in ts]


def test_matmul_shape():
    out = ad.matmul(ad.Tensor(np.ones((1, 2))), ad.Tensor(np.ones((2, 3))))
    assert out.shape == (1, 3)
    with pytest.raises(ShapeMismatch):
        ad.matmul(np.ones((1, 2)), np.ones((3, 3)))


def test_relu_values_and_grads():
    out, (g,) = grad_of(lambda x: ad.sum(ad.relu(x)), np.array([[-1.0, 2.0, 0.0]]))
    assert out.item() == 2.0
    assert g.tolist() == [[0.0, 1.0, 0.0]]


def test_mean_grad():
    out, (g,) = grad_of(ad.mean, np.array([[1.0, 2.0, 3.0]]))
    assert out.item() == 2.0
    assert np.allclose(g, 1 / 3)


def test_square_grad():
    _, (g,) = grad_of(lambda x: ad.sum(ad.square(x)), np.array([[3.0]]))
    assert g.item() == 6.0


def test_constant_output_zero_grad():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with ad.Tape() as tape:
        out = ad.Tensor(np.array(5.0))
    ad.backward(tape, out)
    assert np.all(x.grad == 0)


def test_fan_out_accumulates():
    _, (g,) = grad_of(lambda x: ad.sum(x + x), np.array([[1.5]]))
    assert g.item() == 2.0


def test_non_scalar_backward_rejected():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with ad.Tape() as tape:
        y = x * 2.0
    with pytest.raises(NonScalarOutput):
        ad.backward(tape, y)


def test_broadcast_limits():
    ad.add(np.ones((3, 2)), np.ones(2))
    ad.add(np.ones((3, 2)), np.ones((1, 2)))
    ad.add(np.ones((3, 2)), 2.0)
    with pytest.raises(ShapeMismatch):
        ad.add(ad.Tensor(np.ones((3, 2))), ad.Tensor(np.ones((3, 1))))


def test_numpy_inputs_skip_tape():
    with ad.Tape() as tape:
        out = ad.relu(np.array([[1.0, -1.0]])) @ np.ones((2, 1))
    assert isinstance(out, np.ndarray)
    assert tape.records == []


UNARY = {
    "relu": (ad.relu, lambda r: r.normal(size=(3, 4))),
    "sqrt": (ad.sqrt, lambda r: r.uniform(0.5, 2, (3, 4))),
    "square": (ad.square, lambda r: r.normal(size=(3, 4))),
    "arccos": (ad.arccos, lambda r: r.uniform(-0.9, 0.9, (3, 4))),
    "sum_axis0": (lambda x: ad.sum(x, axis=0), lambda r: r.normal(size=(3, 4))),
    "mean_axis1": (lambda x: ad.mean(x, axis=1), lambda r: r.normal(size=(3, 4))),
    "variance": (lambda x: ad.variance(x, axis=0), lambda r: r.normal(size=(3, 4))),
    "select_row": (lambda x: ad.select_row(x, 1), lambda r: r.normal(size=(3, 4))),
    "clip": (lambda x: ad.clip(x, -0.5, 0.5), lambda r: r.normal(size=(3, 4))),
    "scalar_ops": (lambda x: 2.0 - x * 3.0 + x / 4.0, lambda r: r.normal(size=(3, 4))),
}

BINARY = {
    "add": (ad.add, (3, 4), (4,)),
    "subtract": (ad.subtract, (3, 4), (1, 4)),
    "multiply": (ad.multiply, (3, 4), (3, 4)),
    "divide": (ad.divide, (3, 4), (3, 4)),
    "maximum": (ad.maximum, (3, 4), (3, 4)),
    "matmul": (ad.matmul, (3, 4), (4, 2)),
    "concat": (lambda a, b: ad.concat_rows([a, b]), (2, 4), (3, 4)),
}


def _scalarise(y, w):
    # random weights make every output entry matter
    return ad.sum(y * w)


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_grad_check(name):
    fn, sample = UNARY[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(100):
        x = sample(rng)
        if name in ("relu", "clip"):
            # keep away from kinks
            x = np.where(np.abs(x) < 1e-3, 0.1, x)
            x = np.where(np.abs(np.abs(x) - 0.5) < 1e-3, 0.1, x)
        w = rng.normal(size=np.shape(fn(x)))
        worst = max(worst, ad.grad_check(lambda ts: _scalarise(fn(ts[0]), w), [x]))
    assert worst < 1e-6


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_grad_check(name):
    fn, sa, sb = BINARY[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(100):
        a = rng.normal(size=sa)
        b = rng.normal(size=sb)
        if name == "divide":
            b = np.sign(b) * (np.abs(b) + 0.5)
        if name == "maximum":
            b = a + np.sign(rng.normal(size=sb)) * rng.uniform(0.01, 1, sb)
        w = rng.normal(size=np.shape(fn(a, b)))
        worst = max(worst, ad.grad_check(lambda ts: _scalarise(fn(ts[0], ts[1]), w), [a, b]))
    assert worst < 1e-6


def test_grad_check_sum_of_squares():
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert ad.grad_check(lambda ts: ad.sum(ad.square(ts[0])), [x]) < 1e-7


def test_grad_check_relu_away_from_zero():
    assert ad.grad_check(lambda ts: ad.sum(ad.relu(ts[0])), [np.array([[0.7, -0.4]])]) < 1e-7


def test_adam_first_step():
    new, st_ = ad.adam_update([np.array([1.0])], [np.array([1.0])], ad.AdamState.for_params([np.zeros(1)]), 0.01)
    # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    assert new[0][0] == pytest.approx(1.0 - 0.01 / (1 + 1e-8), abs=1e-15)
    assert st_.t == 1


def test_adam_zero_gradient_fixed_point():
    p = [np.array([[1.0, -2.0]])]
    state = ad.AdamState.for_params(p)
    for _ in range(5):
        p, state = ad.adam_update(p, [np.zeros((1, 2))], state, 0.1)
    assert p[0].tolist() == [[1.0, -2.0]]


def test_adam_is_pure():
    p = [np.array([0.3, 0.4])]
    g = [np.array([0.1, -0.2])]
    s = ad.AdamState.for_params(p)
    a1, s1 = ad.adam_update(p, g, s, 0.01)
    a2, s2 = ad.adam_update(p, g, s, 0.01)
    assert np.array_equal(a1[0], a2[0]) and s1.t == s2.t == 1 and s.t == 0


def test_adam_minimises_quadratic():
    x = ad.Tensor(np.array([[3.0, -2.0]]), requires_grad=True)
    opt = ad.Adam([x], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        with ad.Tape() as tape:
            loss = ad.sum(ad.square(x - np.array([[1.0, 1.0]])))
        ad.backward(tape, loss)
        opt.step()
    assert np.allclose(x.data, [[1.0, 1.0]], atol=1e-2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_backward_deterministic(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))

    def f(x, y):
        return ad.mean(ad.square(ad.relu(x @ y) + 1.0))

    o1, g1 = grad_of(f, a, b)
    o2, g2 = grad_of(f, a, b)
    assert o1.item() == o2.item()
    assert all(np.array_equal(u, v) for u, v in zip(g1, g2))
    assert np.array_equal(a, a.copy())
