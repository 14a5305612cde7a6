import numpy as np
import pytest

from senet import mlp
from senet.errors import DimensionMismatch, FormatError
from senet.model import (coeff, coeff_matrix, init_senet, load_checkpoint, save_checkpoint,
                         soft_threshold)
from senet.objective import HyperParams


@pytest.fixture
def small_net():
    return init_senet(6, (10, 10), 8, seed=5)


@pytest.fixture
def points():
    X = np.random.default_rng(0).standard_normal((6, 5))
    return X / np.linalg.norm(X, axis=0)


def test_soft_threshold_examples():
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(2.0, 0.5) == 1.5
    assert soft_threshold(-2.0, 0.5) == -1.5


def test_alpha_is_inverse_width(small_net):
    assert small_net.alpha == 1.0 / 8


def test_coeff_dead_zone(small_net, points):
    small_net.b = 8.0
    value, _ = coeff(small_net, points[:, 0], points[:, 1])
    assert value == 0.0
    np.testing.assert_array_equal(coeff_matrix(small_net, points), 0.0)


def test_coeff_bounded(small_net, points):
    value, _ = coeff(small_net, points[:, 0], points[:, 0])
    assert -1.0 < value < 1.0


def test_coeff_matches_manual_composition(small_net, points):
    small_net.b = 0.3
    x_i, x_j = points[:, 1], points[:, 3]
    u = mlp.forward(small_net.query, x_j)[0]
    v = mlp.forward(small_net.key, x_i)[0]
    expected = small_net.alpha * soft_threshold(u @ v, 0.3)
    assert coeff(small_net, x_i, x_j)[0] == pytest.approx(expected, abs=1e-14)


def test_coeff_dimension_mismatch(small_net):
    with pytest.raises(DimensionMismatch):
        coeff(small_net, np.ones(5), np.ones(6))
    with pytest.raises(DimensionMismatch):
        coeff_matrix(small_net, np.ones((5, 3)))


def test_coeff_matrix_single_point(small_net, points):
    np.testing.assert_array_equal(coeff_matrix(small_net, points[:, :1]), [[0.0]])


@pytest.mark.parametrize("block", [1, 2, 1024])
def test_coeff_matrix_matches_pairwise(small_net, block):
    X = np.random.default_rng(3).standard_normal((6, 17))
    small_net.b = 0.5
    C = coeff_matrix(small_net, X, block=block)
    assert np.all(np.diag(C) == 0.0)
    for i in range(17):
        for j in range(17):
            if i != j:
                assert C[i, j] == pytest.approx(coeff(small_net, X[:, i], X[:, j])[0], abs=1e-12)
    assert np.all(np.abs(C) < 1)


def test_coefficients_are_not_symmetric(small_net, points):
    C = coeff_matrix(small_net, points)
    assert not np.allclose(C, C.T)


def test_sparsity_monotone_in_threshold(small_net):
    X = np.random.default_rng(4).standard_normal((6, 30))
    zeros = []
    for b in np.linspace(0.0, 6.0, 13):
        small_net.b = b
        zeros.append(np.count_nonzero(coeff_matrix(small_net, X) == 0.0))
    assert all(a <= b for a, b in zip(zeros, zeros[1:]))


def test_checkpoint_round_trip(tmp_path, small_net, points):
    small_net.b = 0.125
    hyper = HyperParams(50.0, 0.9)
    path = tmp_path / "net.sent"
    save_checkpoint(small_net, hyper, path)
    loaded, h2 = load_checkpoint(path)
    assert h2 == hyper
    assert loaded.b == small_net.b
    for a, b in zip(small_net.arrays(), loaded.arrays()):
        assert a.tobytes() == b.tobytes()
    assert coeff_matrix(loaded, points).tobytes() == coeff_matrix(small_net, points).tobytes()


def test_checkpoint_bad_magic(tmp_path, small_net):
    path = tmp_path / "net.sent"
    save_checkpoint(small_net, HyperParams(), path)
    raw = path.read_bytes()
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(path)
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_checkpoint_no_threshold_flag(tmp_path):
    net = init_senet(4, (5,), 3, seed=0, use_threshold=False)
    save_checkpoint(net, HyperParams(), tmp_path / "n.sent")
    assert load_checkpoint(tmp_path / "n.sent")[0].use_threshold is False
