"""Evaluation metrics: SRE, CONN, ACC, NMI and ARI."""

import json
import warnings
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ClassTooSmall, DimensionMismatch, InvalidSpec
from .linalg import sym_eig_smallest

MAX_CLUSTERS = 64


@dataclass
class MetricsReport:
    sre: Optional[float] = None
    conn: Optional[float] = None
    acc: Optional[float] = None
    nmi: Optional[float] = None
    ari: Optional[float] = None
    L: Optional[float] = None
    L_rec: Optional[float] = None
    L_reg: Optional[float] = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _labels(x, n=None):
    x = np.asarray(x).ravel()
    if n is not None and x.size != n:
        raise DimensionMismatch(f"label vector length {x.size} != {n}")
    return x


def sre(C, labels):
    """Fraction of the off-diagonal l1 mass of ``C`` linking different classes."""
    C = np.abs(np.asarray(C, dtype=np.float64))
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"C must be square, got {C.shape}")
    labels = _labels(labels, C.shape[0])
    off = C.copy()
    np.fill_diagonal(off, 0.0)
    total = off.sum()
    if total == 0.0:
        warnings.warn("all-zero coefficient matrix; SRE reported as 0", RuntimeWarning)
        return 0.0
    wrong = off[labels[:, None] != labels[None, :]].sum()
    return float(wrong / total)


def conn(W, labels):
    """Minimum over classes of the second-smallest normalized-Laplacian eigenvalue."""
    W = np.asarray(W, dtype=np.float64)
    labels = _labels(labels, W.shape[0])
    best = np.inf
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ClassTooSmall(f"class {c} has {idx.size} member(s); need >= 2")
        Wc = W[np.ix_(idx, idx)]
        Wc = 0.5 * (Wc + Wc.T)
        deg = Wc.sum(axis=1)
        if np.any(deg <= 0):
            value = 0.0
        else:
            s = 1.0 / np.sqrt(deg)
            L = np.eye(idx.size) - (s[:, None] * Wc) * s[None, :]
            value = max(float(sym_eig_smallest(L, 2).values[1]), 0.0)
        best = min(best, value)
    return float(best)


def _contingency(pred, truth):
    pred = _labels(pred)
    truth = _labels(truth, pred.size)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    M = np.zeros((p.max() + 1 if p.size else 0, t.max() + 1 if t.size else 0), dtype=np.int64)
    np.add.at(M, (p, t), 1)
    return M


def acc(pred, truth):
    """Best one-to-one matching accuracy (Hungarian on the padded confusion matrix)."""
    M = _contingency(pred, truth)
    if max(M.shape) > MAX_CLUSTERS:
        raise InvalidSpec(f"more than {MAX_CLUSTERS} clusters")
    n = max(M.shape)
    sq = np.zeros((n, n), dtype=np.int64)
    sq[:M.shape[0], :M.shape[1]] = M
    rows, cols = linear_sum_assignment(-sq)
    return float(sq[rows, cols].sum() / M.sum())


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """Mutual information normalized by the geometric mean of the entropies."""
    M = _contingency(pred, truth)
    n = M.sum()
    hp, ht = _entropy(M.sum(axis=1)), _entropy(M.sum(axis=0))
    if hp == 0.0 or ht == 0.0:
        return 1.0 if hp == ht else 0.0
    if M.shape[0] == M.shape[1] and np.all(np.count_nonzero(M, axis=0) == 1) \
            and np.all(np.count_nonzero(M, axis=1) == 1):
        return 1.0  # same partition up to relabeling; skip the rounding in the log sums
    P = M / n
    outer = np.outer(P.sum(axis=1), P.sum(axis=0))
    nz = P > 0
    mi = float(np.sum(P[nz] * np.log(P[nz] / outer[nz])))
    return float(min(max(mi / np.sqrt(hp * ht), 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(pred, truth):
    """Pair-counting adjusted Rand index."""
    M = _contingency(pred, truth)
    n = M.sum()
    sum_ij = _comb2(M).sum()
    sum_a = _comb2(M.sum(axis=1)).sum()
    sum_b = _comb2(M.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (one cluster or all singletons)
        return 1.0 if M.shape[0] == M.shape[1] and np.count_nonzero(M) == M.shape[0] else 0.0
    return float((sum_ij - expected) / (max_index - expected))
