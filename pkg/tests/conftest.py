import math

import numpy as np
import pytest
from hypothesis import strategies as st

from meshsmith.mesh import Mesh, make_star


def regular_ring(n, radius=1.0, phase=0.0, center=(0.0, 0.0)):
    t = phase + 2 * math.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def random_star(rng, degree=None, jitter=0.35, center_spread=0.2):
    """Star-shaped ring about the origin with a centre that keeps every fan triangle positive."""
    n = int(degree if degree is not None else rng.integers(3, 13))
    gap = 2 * math.pi / n
    while True:
        t = gap * np.arange(n) + rng.uniform(-jitter, jitter, n) * gap
        r = rng.uniform(0.6, 1.4, n)
        ring = np.column_stack([r * np.cos(t), r * np.sin(t)])
        b = np.roll(ring, -1, axis=0)
        for _ in range(100):
            c = rng.uniform(-center_spread, center_spread, 2)
            u, v = ring - c, b - c
            if np.all(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0] > 1e-3):
                return make_star(c, ring)


def fan_mesh(ring, center=(0.0, 0.0)):
    """One interior node joined to a closed ring of fixed nodes."""
    ring = np.asarray(ring, dtype=float)
    n = len(ring)
    nodes = np.vstack([np.asarray(center, dtype=float)[None, :], ring])
    tris = [(0, 1 + i, 1 + (i + 1) % n) for i in range(n)]
    fixed = np.ones(n + 1, dtype=bool)
    fixed[0] = False
    return Mesh(nodes, tris, fixed)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hexagon_star():
    return make_star((0.0, 0.0), regular_ring(6))


@pytest.fixture(scope="session")
def record(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def add(number, passed, detail):
        store[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(store[number])
        return passed

    return add


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, None)
    if store:
        terminalreporter.section("acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])
