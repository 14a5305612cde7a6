"""Dense linear-algebra helpers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  The
production eigensolver is LAPACK (``numpy.linalg.eigh``); a cyclic Jacobi
solver is kept alongside it as an independent reference.
"""

import numpy as np

from .errors import DimensionMismatch, NotSymmetric

SYMMETRY_TOL = 1e-8


class EigenResult:
    """Ascending eigenvalues with matching unit-norm eigenvectors (as columns)."""

    __slots__ = ("values", "vectors")

    def __init__(self, values, vectors):
        self.values = values
        self.vectors = vectors

    def __iter__(self):
        yield self.values
        yield self.vectors


def check_symmetric(A, tol=SYMMETRY_TOL):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if A.size and np.max(np.abs(A - A.T)) > tol:
        raise NotSymmetric(f"max |A - A^T| = {np.max(np.abs(A - A.T)):.3e} exceeds {tol:g}")
    return A


def sym_eig_smallest(A, k):
    """Return the ``k`` algebraically smallest eigenpairs of a symmetric matrix."""
    A = check_symmetric(A)
    n = A.shape[0]
    if k > n or k < 0:
        raise DimensionMismatch(f"k={k} exceeds matrix order {n}")
    # symmetrize exactly so LAPACK sees the matrix we validated
    A = 0.5 * (A + A.T)
    values, vectors = np.linalg.eigh(A)
    return EigenResult(values[:k].copy(), np.ascontiguousarray(vectors[:, :k]))


def jacobi_eig(A, tol=1e-14, max_sweeps=100):
    """Full eigendecomposition by cyclic Jacobi rotations.

    Slow (O(n^3) per sweep in Python loops over pivots) and intended as a
    reference for checking :func:`sym_eig_smallest` on small matrices.

    Returns
    -------
    EigenResult with all eigenvalues ascending.
    """
    A = check_symmetric(A).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    return EigenResult(values[order], V[:, order])


def topk_abs(v, k):
    """Indices of the ``k`` largest-magnitude entries, ties to the lower index."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if k > v.size or k < 0:
        raise DimensionMismatch(f"k={k} exceeds vector length {v.size}")
    # stable sort on -|v| keeps lower indices first among equal magnitudes
    return np.argsort(-np.abs(v), kind="stable")[:k]
