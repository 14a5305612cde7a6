import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from senet.errors import DimensionMismatch, NonzeroDiagonal
from senet.objective import HyperParams, point_loss, reg, reg_deriv, residual_q, total_loss


def test_reg_examples():
    assert reg(1.0, 0.9) == pytest.approx(0.95)
    assert reg(0.0, 0.9) == 0.0
    assert reg(-2.0, 0.9) == pytest.approx(2.0)


def test_reg_deriv_examples():
    assert reg_deriv(0.0, 0.9) == 0.0
    assert reg_deriv(1.0, 0.9) == pytest.approx(1.0)
    assert reg_deriv(-2.0, 0.9) == pytest.approx(-1.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1), st.floats(0, 1))
def test_reg_convex(a, b, theta, lam):
    lhs = reg(theta * a + (1 - theta) * b, lam)
    assert lhs <= theta * reg(a, lam) + (1 - theta) * reg(b, lam) + 1e-12


def test_reg_nonnegative_zero_only_at_zero():
    c = np.linspace(-3, 3, 601)
    for lam in (0.0, 0.5, 1.0):
        v = reg(c, lam)
        assert np.all(v >= 0)
        assert np.all((v == 0) == (c == 0))


def test_reg_deriv_matches_finite_difference():
    c = np.concatenate([np.linspace(-3, -1e-3, 200), np.linspace(1e-3, 3, 200)])
    h = 1e-6
    for lam in (0.0, 0.3, 0.9, 1.0):
        fd = (reg(c + h, lam) - reg(c - h, lam)) / (2 * h)
        np.testing.assert_allclose(reg_deriv(c, lam), fd, atol=1e-8)


@pytest.fixture
def case():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 6))
    X /= np.linalg.norm(X, axis=0)
    c = rng.standard_normal(6) * 0.3
    c[2] = 0.0
    return X, c


def test_residual_zero_coefficients(case):
    X, _ = case
    np.testing.assert_allclose(residual_q(X[:, 2], X, np.zeros(6), 50.0, j=2), 50.0 * X[:, 2])


def test_residual_exact_reconstruction():
    X = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    np.testing.assert_allclose(residual_q(X[:, 2], X, np.array([1.0, 1.0, 0.0]), 7.0, j=2), 0.0)


def test_residual_matches_dense_arithmetic(case):
    X, c = case
    expected = 50.0 * np.array([X[d, 2] - sum(c[i] * X[d, i] for i in range(6) if i != 2)
                                for d in range(4)])
    np.testing.assert_allclose(residual_q(X[:, 2], X, c, 50.0, j=2), expected, atol=1e-12)


def test_residual_errors(case):
    X, c = case
    bad = c.copy()
    bad[2] = 0.1
    with pytest.raises(NonzeroDiagonal):
        residual_q(X[:, 2], X, bad, 1.0, j=2)
    with pytest.raises(DimensionMismatch):
        residual_q(X[:, 2], X, c[:5], 1.0)


def test_point_loss_zero_coefficients():
    x = np.array([0.6, 0.8])
    X = np.column_stack([x, [1.0, 0.0]])
    assert point_loss(x, X, np.zeros(2), HyperParams(50.0, 0.9), j=0) == pytest.approx(25.0)


def test_point_loss_exact_reconstruction():
    X = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    c = np.array([1.0, 1.0, 0.0])
    h = HyperParams(50.0, 0.9)
    assert point_loss(X[:, 2], X, c, h, j=2) == pytest.approx(2 * 0.95)


def test_point_loss_brute_force(case):
    X, c = case
    h = HyperParams(50.0, 0.9)
    res = X[:, 2] - sum(c[i] * X[:, i] for i in range(6) if i != 2)
    expected = 25.0 * sum(v * v for v in res) + sum(
        0.9 * abs(c[i]) + 0.05 * c[i] ** 2 for i in range(6) if i != 2)
    assert point_loss(X[:, 2], X, c, h, j=2) == pytest.approx(expected, abs=1e-12)


def test_total_loss_zero_matrix():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((5, 9))
    X /= np.linalg.norm(X, axis=0)
    lb = total_loss(X, np.zeros((9, 9)), HyperParams(50.0, 0.9))
    assert lb.rec == pytest.approx(9.0)
    assert lb.reg == 0.0


def test_total_loss_decomposition_and_sum(case):
    X, _ = case
    rng = np.random.default_rng(2)
    C = rng.standard_normal((6, 6)) * 0.2
    np.fill_diagonal(C, 0.0)
    h = HyperParams(50.0, 0.9)
    lb = total_loss(X, C, h)
    assert lb.total == pytest.approx(0.5 * h.gamma * lb.rec + lb.reg, rel=1e-10)
    assert lb.total == pytest.approx(sum(point_loss(X[:, j], X, C[:, j], h, j=j) for j in range(6)),
                                     rel=1e-10)
    assert min(lb.total, lb.rec, lb.reg) >= 0


def test_total_loss_rejects_diagonal(case):
    X, _ = case
    with pytest.raises(NonzeroDiagonal):
        total_loss(X, np.eye(6), HyperParams())
