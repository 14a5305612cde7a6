import itertools
import json
import math

import numpy as np
import pytest

from senet.errors import ClassTooSmall, DimensionMismatch
from senet.metrics import MetricsReport, acc, ari, conn, nmi, sre


def _brute_acc(pred, truth):
    k = max(pred.max(), truth.max()) + 1
    return max(np.mean(np.array(perm)[pred] == truth) for perm in itertools.permutations(range(k)))


def _pair_ari(pred, truth):
    pairs = list(itertools.combinations(range(len(pred)), 2))
    same_p = np.array([pred[i] == pred[j] for i, j in pairs])
    same_t = np.array([truth[i] == truth[j] for i, j in pairs])
    n = len(pairs)
    index = np.sum(same_p & same_t)
    expected = same_p.sum() * same_t.sum() / n
    top = 0.5 * (same_p.sum() + same_t.sum())
    return (index - expected) / (top - expected)


def test_sre_cases():
    labels = np.array([0, 0, 1, 1])
    block = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 2], [0, 0, 2, 0]], float)
    assert sre(block, labels) == 0.0
    off = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], float)
    assert sre(off, labels) == 1.0
    C = np.zeros((3, 3))
    C[1, 0], C[2, 0] = 0.8, -0.2
    assert sre(C, np.array([0, 0, 1])) == pytest.approx(0.2)
    with pytest.warns(RuntimeWarning):
        assert sre(np.zeros((3, 3)), np.array([0, 0, 1])) == 0.0


def test_sre_pools_mass_over_all_columns():
    C = np.zeros((3, 3))
    C[1, 0], C[2, 0] = 0.8, 0.2
    C[0, 1] = C[0, 2] = 1.0
    labels = np.array([0, 0, 1])
    # wrong entries C[2,0]=0.2 and C[0,2]=1.0 out of a total mass of 3.0
    assert sre(C, labels) == pytest.approx(1.2 / 3.0)


def test_sre_sign_invariant_and_bounded():
    rng = np.random.default_rng(0)
    C = rng.standard_normal((10, 10))
    labels = rng.integers(0, 3, 10)
    assert 0 <= sre(C, labels) <= 1
    assert sre(np.abs(C), labels) == pytest.approx(sre(C, labels))


def test_conn_small_graphs():
    K3 = np.ones((3, 3)) - np.eye(3)
    assert conn(K3, np.zeros(3, int)) == pytest.approx(1.5)
    P3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
    assert conn(P3, np.zeros(3, int)) == pytest.approx(1.0)


def test_conn_disconnected_class_and_min():
    W = np.zeros((7, 7))
    W[0, 1] = W[1, 0] = 1
    W[2, 3] = W[3, 2] = 1
    W[4:, 4:] = 1 - np.eye(3)
    labels = np.array([0, 0, 0, 0, 1, 1, 1])
    assert conn(W, labels) == pytest.approx(0.0, abs=1e-10)
    W2 = W.copy()
    W2[1, 2] = W2[2, 1] = 1
    assert conn(W2, labels) == pytest.approx(min(np.linalg.eigvalsh(_lsym(W2[:4, :4]))[1], 1.5))


def _lsym(W):
    d = W.sum(axis=1)
    return np.eye(len(W)) - W / np.sqrt(np.outer(d, d))


def test_conn_class_too_small():
    with pytest.raises(ClassTooSmall):
        conn(np.ones((3, 3)) - np.eye(3), np.array([0, 0, 1]))


def test_acc_examples():
    truth = np.array([0, 0, 1, 1, 2, 2])
    assert acc(truth, truth) == 1.0
    assert acc(np.array([2, 2, 0, 0, 1, 1]), truth) == 1.0
    assert acc(np.array([1, 1, 2, 2, 2, 0]), truth) == pytest.approx(5 / 6)


def test_acc_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        truth = rng.integers(0, k, 20)
        pred = rng.integers(0, k, 20)
        assert acc(pred, truth) == pytest.approx(_brute_acc(pred, truth))


def test_acc_rectangular():
    # more predicted clusters than classes; extra cluster counts as wrong
    assert acc(np.array([0, 1, 2, 2]), np.array([0, 0, 1, 1])) == pytest.approx(0.75)


def test_nmi_cases():
    assert nmi(np.array([0, 0, 1, 1]), np.array([1, 1, 0, 0])) == pytest.approx(1.0)
    assert nmi(np.zeros(4, int), np.array([0, 0, 1, 1])) == 0.0
    assert nmi(np.array([0, 1, 0, 1]), np.array([0, 0, 1, 1])) == pytest.approx(0.0, abs=1e-12)


def test_nmi_direct_entropy():
    pred = np.array([0, 0, 1, 1, 1, 2])
    truth = np.array([0, 0, 0, 1, 1, 1])
    n = len(pred)
    def H(x):
        p = np.bincount(x) / n
        p = p[p > 0]
        return -np.sum(p * np.log(p))
    mi = 0.0
    for a in set(pred):
        for b in set(truth):
            pab = np.mean((pred == a) & (truth == b))
            if pab > 0:
                mi += pab * math.log(pab / (np.mean(pred == a) * np.mean(truth == b)))
    assert nmi(pred, truth) == pytest.approx(mi / math.sqrt(H(pred) * H(truth)))


def test_ari_cases():
    t = np.array([0, 0, 1, 1])
    assert ari(t, t) == 1.0
    p = np.array([0, 1, 0, 1])
    assert ari(p, t) == pytest.approx(_pair_ari(p, t))
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.integers(0, 3, 12), rng.integers(0, 4, 12)
        assert ari(a, b) == pytest.approx(_pair_ari(a, b))


def test_relabeling_invariance():
    rng = np.random.default_rng(3)
    pred, truth = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
    perm = rng.permutation(4)
    for f in (acc, nmi, ari):
        assert f(perm[pred], truth) == pytest.approx(f(pred, truth))
        assert f(pred, perm[truth]) == pytest.approx(f(pred, truth))


def test_length_mismatch():
    with pytest.raises(DimensionMismatch):
        acc(np.zeros(3, int), np.zeros(4, int))


def test_report_json():
    r = MetricsReport(sre=0.1, conn=0.2, acc=0.9, nmi=0.8, ari=0.7)
    d = json.loads(r.to_json())
    assert d["acc"] == 0.9 and d["sre"] == 0.1
