import warnings

import numpy as np
import pytest

from conftest import random_star, regular_ring
from meshsmith.delaunay import random_square_mesh
from meshsmith.errors import CorruptFile, MissingDegree, VersionMismatch
from meshsmith.losses import metric_loss
from meshsmith.mesh import has_negative_element, make_star
from meshsmith.nnsmoothing import (
    Label, NNSmoother, _init_mlp, augmented_arrays, mse, nn_generate_labels, nn_train_and_step, train_mlp,
)
from meshsmith.smoothers import OptimConfig, laplacian_step


@pytest.fixture(scope="module")
def labels():
    meshes = [random_square_mesh(50, 1.0, s) for s in range(2)]
    return nn_generate_labels(meshes, OptimConfig(max_iters=10))


def test_labels_valid_and_never_worse(labels):
    assert labels
    for lab in labels:
        assert not has_negative_element(lab.star, lab.target)
        assert metric_loss(lab.target, lab.star) <= metric_loss(lab.star.center, lab.star) + 1e-15


def test_augmentation_rotates_ring():
    s = make_star((0.1, 0.0), regular_ring(5))
    x, y = augmented_arrays([Label(s, np.array([0.0, 0.0]))], 5)
    assert x.shape == (5, 10) and y.shape == (5, 2)
    # each row is the previous one shifted by one ring node
    assert np.array_equal(np.roll(x[0], -2), x[1])
    assert np.all(y == y[0])
    assert augmented_arrays([Label(s, s.center)], 6)[0].shape == (0, 12)


def test_unsupported_degree_falls_back_silently():
    nn = NNSmoother({})
    s = make_star((0.2, 0.1), regular_ring(10))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.array_equal(nn(s), laplacian_step(s))


def test_missing_degree_warns():
    s = make_star((0.2, 0.1), regular_ring(6))
    with pytest.warns(MissingDegree):
        assert np.array_equal(NNSmoother({})(s), laplacian_step(s))
    with pytest.warns(MissingDegree):
        nn_train_and_step([Label(s, s.center)], degrees=(6, 7), epochs=1)


def test_training_beats_untrained(labels):
    x, y = augmented_arrays(labels, 6)
    assert len(x) > 0
    untrained = mse(_init_mlp(12, 32, np.random.default_rng(0)), x, y)
    trained = mse(train_mlp(x, y, hidden=32, epochs=60, seed=0), x, y)
    assert trained < untrained


def test_prediction_is_similarity_equivariant(labels):
    nn = nn_train_and_step(labels, degrees=(5, 6), hidden=8, epochs=3)
    s = random_star(np.random.default_rng(1), degree=6)
    moved = nn(make_star(3.0 * s.center + 7.0, 3.0 * s.ring + 7.0))
    assert np.allclose(moved, 3.0 * nn(s) + 7.0, atol=1e-9)


def test_save_load_round_trip(labels, tmp_path):
    nn = nn_train_and_step(labels, degrees=(5, 6), hidden=8, epochs=2)
    nn.save(tmp_path / "nn.json")
    back = NNSmoother.load(tmp_path / "nn.json")
    assert back.hidden == 8 and sorted(back.models) == sorted(nn.models)
    s = random_star(np.random.default_rng(2), degree=6)
    assert np.array_equal(back(s), nn(s))


def test_load_errors(tmp_path):
    (tmp_path / "junk.json").write_text("{nope")
    with pytest.raises(CorruptFile):
        NNSmoother.load(tmp_path / "junk.json")
    (tmp_path / "old.json").write_text('{"format": "nn-smoothing-v0", "models": {}}')
    with pytest.raises(VersionMismatch):
        NNSmoother.load(tmp_path / "old.json")
    (tmp_path / "bad.json").write_text('{"format": "nn-smoothing-v1", "models": {"6": {"W1": {}}}}')
    with pytest.raises(CorruptFile):
        NNSmoother.load(tmp_path / "bad.json")
