"""Elastic-net self-expression objective.

All sums over a column skip the self term; coefficient inputs with a
nonzero self entry are rejected rather than silently zeroed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, NonzeroDiagonal


@dataclass(frozen=True)
class HyperParams:
    gamma: float = 50.0
    lam: float = 0.9

    def validate(self):
        if not self.gamma > 0:
            raise InvalidSpec(f"gamma must be > 0, got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidSpec(f"lambda must lie in [0, 1], got {self.lam}")
        return self


@dataclass(frozen=True)
class LossBreakdown:
    """``total = gamma / 2 * rec + reg``; ``rec`` is the unweighted squared residual."""

    total: float
    rec: float
    reg: float

    def as_dict(self):
        return {"L": self.total, "L_rec": self.rec, "L_reg": self.reg}


def reg(c, lam):
    """r(c) = lam |c| + (1 - lam) / 2 c^2, elementwise."""
    c = np.asarray(c, dtype=np.float64)
    return lam * np.abs(c) + 0.5 * (1.0 - lam) * c * c


def reg_deriv(c, lam):
    """r'(c) with the convention r'(0) = 0."""
    c = np.asarray(c, dtype=np.float64)
    return lam * np.sign(c) + (1.0 - lam) * c


def _check_column(X, coeffs_j, j):
    X = np.asarray(X, dtype=np.float64)
    coeffs_j = np.asarray(coeffs_j, dtype=np.float64)
    if coeffs_j.shape != (X.shape[1],):
        raise DimensionMismatch(f"coefficient vector length {coeffs_j.shape} != N={X.shape[1]}")
    if j is not None and coeffs_j[j] != 0.0:
        raise NonzeroDiagonal(f"self-coefficient c[{j}] = {coeffs_j[j]!r} must be zero")
    return X, coeffs_j


def residual_q(x_j, X, coeffs_j, gamma, j=None):
    """q_j = gamma * (x_j - X c_j).

    ``j`` is the column index of ``x_j`` inside ``X``; when given the self
    coefficient is checked to be zero.
    """
    X, coeffs_j = _check_column(X, coeffs_j, j)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_j.shape != (X.shape[0],):
        raise DimensionMismatch(f"x_j length {x_j.shape} != D={X.shape[0]}")
    return gamma * (x_j - X @ coeffs_j)


def point_loss(x_j, X, coeffs_j, hyper, j=None):
    q = residual_q(x_j, X, coeffs_j, 1.0, j)
    return 0.5 * hyper.gamma * float(q @ q) + float(np.sum(reg(coeffs_j, hyper.lam)))


def total_loss(X, C, hyper):
    """Loss decomposition of a full coefficient matrix (column j explains x_j)."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    N = X.shape[1]
    if C.shape != (N, N):
        raise DimensionMismatch(f"C shape {C.shape} != ({N}, {N})")
    diag = np.diag(C)
    if np.any(diag != 0.0):
        j = int(np.flatnonzero(diag)[0])
        raise NonzeroDiagonal(f"C[{j}, {j}] = {diag[j]!r} must be zero")
    R = X - X @ C
    rec = float(np.sum(R * R))
    regv = float(np.sum(reg(C, hyper.lam)))
    return LossBreakdown(0.5 * hyper.gamma * rec + regv, rec, regv)
