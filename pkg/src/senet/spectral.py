"""Affinity construction, normalized spectral embedding and k-means."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, IsolatedVertex, NonzeroDiagonal
from .linalg import check_symmetric, sym_eig_smallest, topk_abs

DEGREE_EPS = 1e-12


@dataclass
class ClusterResult:
    assignments: np.ndarray
    embedding: np.ndarray
    kmeans_inertia: float


def _check_coefficients(C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"coefficient matrix must be square, got {C.shape}")
    diag = np.diag(C)
    if np.any(diag != 0.0):
        j = int(np.flatnonzero(diag)[0])
        raise NonzeroDiagonal(f"C[{j}, {j}] = {diag[j]!r} must be zero")
    return C


def parse_mode(mode):
    """Accept ``"sym_abs"``, ``"knn"`` (k=3), ``"knn:k"`` or ``("knn", k)``."""
    if isinstance(mode, (tuple, list)):
        name, k = mode
        return str(name), int(k)
    if mode == "sym_abs":
        return "sym_abs", 0
    if mode == "knn":
        return "knn", 3
    if isinstance(mode, str) and mode.startswith("knn:"):
        return "knn", int(mode.split(":", 1)[1])
    raise InvalidSpec(f"unknown affinity mode {mode!r}")


def build_affinity(C, mode="sym_abs"):
    """Symmetric non-negative affinity from a coefficient matrix.

    ``sym_abs`` gives ``|C| + |C^T|``.  ``knn`` keeps, in every column, the
    ``k`` entries of largest magnitude and symmetrizes by elementwise max.
    """
    C = _check_coefficients(C)
    name, k = parse_mode(mode)
    if name == "sym_abs":
        A = np.abs(C)
        return A + A.T
    if name != "knn":
        raise InvalidSpec(f"unknown affinity mode {mode!r}")
    N = C.shape[0]
    if not 1 <= k <= N:
        raise InvalidSpec(f"knn k={k} outside [1, {N}]")
    K = np.zeros_like(C)
    for j in range(N):
        idx = topk_abs(C[:, j], k)
        K[idx, j] = np.abs(C[idx, j])
    W = np.maximum(K, K.T)
    np.fill_diagonal(W, 0.0)
    return W


def normalized_laplacian(W, regularize=False):
    """I - D^{-1/2} W D^{-1/2}.  Zero-degree vertices raise unless ``regularize``."""
    W = check_symmetric(W)
    deg = W.sum(axis=1)
    if regularize:
        deg = deg + DEGREE_EPS
    elif np.any(deg <= 0):
        raise IsolatedVertex(int(np.flatnonzero(deg <= 0)[0]))
    s = 1.0 / np.sqrt(deg)
    L = np.eye(W.shape[0]) - (s[:, None] * W) * s[None, :]
    return 0.5 * (L + L.T)


def spectral_embed(W, m, regularize=False):
    """Row-normalized eigenvectors of the ``m`` smallest normalized-Laplacian eigenvalues."""
    W = np.asarray(W, dtype=np.float64)
    if m > W.shape[0] or m < 1:
        raise DimensionMismatch(f"embedding dim {m} invalid for {W.shape[0]} vertices")
    L = normalized_laplacian(W, regularize)
    _, vecs = sym_eig_smallest(L, m)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / np.where(norms > 0, norms, 1.0)


def _kmeans_pp(P, k, rng):
    N = P.shape[0]
    centers = np.empty((k, P.shape[1]))
    centers[0] = P[rng.integers(N)]
    d2 = np.sum((P - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        idx = rng.choice(N, p=d2 / total) if total > 0 else rng.integers(N)
        centers[c] = P[idx]
        d2 = np.minimum(d2, np.sum((P - centers[c]) ** 2, axis=1))
    return centers


def _sq_dists(P, centers):
    return (np.sum(P * P, axis=1)[:, None] - 2.0 * P @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]).clip(min=0.0)


def lloyd(P, centers, max_iter=300):
    """Lloyd iterations from given centers; returns ``(labels, inertia, inertia_trace)``."""
    k = centers.shape[0]
    labels = None
    trace = []
    for _ in range(max_iter):
        d = _sq_dists(P, centers)
        new = np.argmin(d, axis=1)
        trace.append(float(np.sum(d[np.arange(P.shape[0]), new])))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if np.any(members):
                centers[c] = P[members].mean(axis=0)
            else:
                # refill an empty cluster with the point farthest from its center
                far = int(np.argmax(d[np.arange(P.shape[0]), labels]))
                centers[c] = P[far]
                labels[far] = c
    inertia = float(np.sum((P - centers[labels]) ** 2))
    return labels, inertia, trace


def kmeans(points, k, seed=0, restarts=10, max_iter=300):
    """k-means++ seeded Lloyd, best of ``restarts`` by inertia (ties: first restart)."""
    P = np.asarray(points, dtype=np.float64)
    N = P.shape[0]
    if not 1 <= k <= N:
        raise InvalidSpec(f"k={k} outside [1, {N}]")
    if restarts < 1:
        raise InvalidSpec("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels, inertia, _ = lloyd(P, _kmeans_pp(P, k, rng), max_iter)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return best[0].astype(np.int64), best[1]


def cluster(C, k, mode="sym_abs", m=None, seed=0, restarts=10, regularize=False):
    W = build_affinity(C, mode)
    emb = spectral_embed(W, k if m is None else m, regularize)
    labels, inertia = kmeans(emb, k, seed, restarts)
    return ClusterResult(labels, emb, inertia)
