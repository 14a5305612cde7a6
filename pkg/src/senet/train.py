"""Stochastic training of the self-expressive network.

Two gradient routes are provided for the same batch objective:

* ``naive``: embeds every column, forms the full ``N x B`` coefficient
  block and backpropagates through it.
* ``two_pass``: streams the data in blocks twice.  The first (forward
  only) pass accumulates the reconstruction of each target point to get
  ``q_j = gamma (x_j - sum_i f_ij x_i)``; the second pass accumulates
  ``(r'(f_ij) - <x_i, q_j>) df_ij/dTheta`` block by block, so working
  memory does not depend on ``N``.

Both routes average the per-point gradient over the batch.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import mlp
from .errors import DimensionMismatch, InvalidSpec
from .model import SENetParams, init_senet, soft_threshold
from .objective import LossBreakdown, reg, reg_deriv

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
AUTO_NAIVE_MAX_N = 20000


@dataclass
class TrainConfig:
    iterations: int = 500
    batch_size: int = 100
    learning_rate: float = 1e-3
    lr_min: float = 0.0
    clip_norm: float = 1.0
    block: int = 1000
    seed: int = 0
    algorithm: str = "auto"
    hidden_dims: tuple = (1024, 1024, 1024)
    embed_dim: int = 1024
    soft_threshold: bool = True
    log_every: int = 10
    # Adam step multiplier for b; None means p.  b lives on the scale of the
    # raw inner product (up to p) while coefficients are alpha * T_b(.), so a
    # step of p * lr moves the effective threshold alpha * b by about lr.
    threshold_lr_scale: Optional[float] = None

    def validate(self, allow_zero_iterations=False):
        if self.iterations < (0 if allow_zero_iterations else 1):
            raise InvalidSpec("iterations must be >= 1")
        if self.batch_size < 1 or self.block < 1:
            raise InvalidSpec("batch_size and block must be >= 1")
        if not self.learning_rate > 0 or not self.clip_norm > 0:
            raise InvalidSpec("learning_rate and clip_norm must be > 0")
        if self.lr_min < 0 or self.lr_min > self.learning_rate:
            raise InvalidSpec("lr_min must lie in [0, learning_rate]")
        if self.threshold_lr_scale is not None and not self.threshold_lr_scale > 0:
            raise InvalidSpec("threshold_lr_scale must be > 0")
        if self.algorithm not in ("auto", "naive", "two_pass"):
            raise InvalidSpec(f"unknown algorithm {self.algorithm!r}")
        if self.embed_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise InvalidSpec("layer widths must be >= 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_params(cls, params):
        n = params.to_vector().size
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass
class TrainResult:
    params: SENetParams
    losses: list
    log_rows: list = field(default_factory=list)


class MemoryAccountant:
    """Tracks the byte size of working buffers live at each recorded point."""

    def __init__(self):
        self.peak = {}

    def record(self, phase, *arrays):
        size = 0
        for a in arrays:
            if isinstance(a, mlp.MlpTape):
                size += sum(x.nbytes for x in a.pre) + sum(x.nbytes for x in a.activations[1:])
            elif isinstance(a, mlp.MlpParams):
                size += sum(x.nbytes for x in a.arrays())
            else:
                size += np.asarray(a).nbytes
        self.peak[phase] = max(self.peak.get(phase, 0), size)
        return size

    @property
    def total_peak(self):
        return max(self.peak.values()) if self.peak else 0


def cosine_lr(t, T, lr_max, lr_min=0.0):
    if T <= 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / T))


def global_norm(grads):
    return float(np.linalg.norm(grads.to_vector()))


def clip_gradient(grads, clip_norm):
    """Rescale ``grads`` so its global l2 norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if norm <= clip_norm or norm == 0.0:
        return grads
    return grads.from_vector(grads.to_vector() * (clip_norm / norm))


def adam_step(params, grads, state, lr, threshold_lr_scale=1.0):
    """One bias-corrected Adam update; ``b`` is clamped to be non-negative.

    The step for ``b`` is multiplied by ``threshold_lr_scale``.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    theta = params.to_vector()
    g = grads.to_vector()
    if g.shape != theta.shape or state.m.shape != theta.shape:
        raise DimensionMismatch("gradient / optimizer state shape does not match parameters")
    if not params.use_threshold:
        g = g.copy()
        g[-1] = 0.0
    step = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1 ** step)
    v_hat = v / (1.0 - ADAM_BETA2 ** step)
    delta = lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    delta[-1] *= threshold_lr_scale
    theta = theta - delta
    new = params.from_vector(theta)
    new.b = max(new.b, 0.0) if params.use_threshold else params.b
    return new, AdamState(m, v, step)


# -- gradients ---------------------------------------------------------------

def _coefficients(params, T):
    """Threshold ``T`` and return ``(F, dF/dT mask, dF/db)`` (scaled by alpha)."""
    a = params.alpha
    if not params.use_threshold:
        return a * T, None, None
    F = a * soft_threshold(T, params.b)
    # kink |t| == b counts as the dead zone
    active = np.abs(T) > params.b
    return F, active, -a * np.sign(T) * active


def _mask_self(F, rows, J):
    # rows are the global indices of F's rows; column k belongs to point J[k]
    hit = rows[:, None] == np.asarray(J)[None, :]
    if np.any(hit):
        F = np.where(hit, 0.0, F)
    return F, hit


def _dT(params, dF, active):
    if active is None:
        return params.alpha * dF
    return params.alpha * dF * active


def _assemble(params, gq, gk, db, scale):
    out = SENetParams(gq, gk, float(db), params.use_threshold)
    for arr in out.arrays():
        arr *= scale
    out.b *= scale
    return out


def _check_inputs(params, X, J):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != params.input_dim:
        raise DimensionMismatch(f"expected ({params.input_dim}, N) data, got {X.shape}")
    J = np.asarray(J, dtype=np.int64).ravel()
    if J.size == 0 or J.min() < 0 or J.max() >= X.shape[1]:
        raise DimensionMismatch("batch indices out of range")
    return X, J


def batch_gradient_naive(params, X, J, hyper, accountant=None):
    """Mean loss and gradient over target points ``J`` by full backpropagation.

    Returns ``(grads, mean_loss)``.
    """
    X, J = _check_inputs(params, X, J)
    N, B = X.shape[1], J.size
    XJ = X[:, J]
    U, tape_u = mlp.forward(params.query, XJ)
    V, tape_v = mlp.forward(params.key, X)
    T = V.T @ U
    F, active, dFdb = _coefficients(params, T)
    F, hit = _mask_self(F, np.arange(N), J)
    R = XJ - X @ F
    loss = 0.5 * hyper.gamma * np.sum(R * R) + np.sum(reg(F, hyper.lam))
    # d loss / d F = -gamma X^T R + r'(F)
    dF = reg_deriv(F, hyper.lam) - hyper.gamma * (X.T @ R)
    dF[hit] = 0.0
    dT = _dT(params, dF, active)
    db = float(np.sum(dF * dFdb)) if dFdb is not None else 0.0
    gq, _ = mlp.backward(params.query, tape_u, V @ dT)
    gk, _ = mlp.backward(params.key, tape_v, U @ dT.T)
    if accountant is not None:
        accountant.record("naive", U, tape_u, V, tape_v, T, F, R, dF, dT, gq, gk)
    return _assemble(params, gq, gk, db, 1.0 / B), float(loss) / B


def batch_gradient_two_pass(params, X, J, hyper, block=1000, accountant=None):
    """Same quantity as :func:`batch_gradient_naive`, computed in two streaming passes."""
    X, J = _check_inputs(params, X, J)
    if block < 1:
        raise InvalidSpec("block must be >= 1")
    N, B = X.shape[1], J.size
    XJ = X[:, J]
    U, tape_u = mlp.forward(params.query, XJ)

    # pass 1: forward only, accumulate the reconstruction of each target
    xbar = np.zeros_like(XJ)
    reg_sum = 0.0
    for start in range(0, N, block):
        rows = np.arange(start, min(start + block, N))
        XI = X[:, rows]
        VI, tape_i = mlp.forward(params.key, XI)
        TI = VI.T @ U
        FI, _, _ = _coefficients(params, TI)
        FI, _ = _mask_self(FI, rows, J)
        xbar += XI @ FI
        reg_sum += float(np.sum(reg(FI, hyper.lam)))
        if accountant is not None:
            accountant.record("pass1", U, tape_u, xbar, XI, VI, tape_i, TI, FI)
        del VI, tape_i, TI, FI
    Q = hyper.gamma * (XJ - xbar)
    loss = float(np.sum(Q * Q)) / (2.0 * hyper.gamma) + reg_sum

    # pass 2: accumulate weighted gradients of f_ij
    dU = np.zeros_like(U)
    gk = params.key.zeros_like()
    db = 0.0
    for start in range(0, N, block):
        rows = np.arange(start, min(start + block, N))
        XI = X[:, rows]
        VI, tape_i = mlp.forward(params.key, XI)
        TI = VI.T @ U
        FI, active, dFdb = _coefficients(params, TI)
        FI, hit = _mask_self(FI, rows, J)
        WI = reg_deriv(FI, hyper.lam) - XI.T @ Q
        WI[hit] = 0.0
        dTI = _dT(params, WI, active)
        if dFdb is not None:
            db += float(np.sum(WI * dFdb))
        dU += VI @ dTI
        gki, _ = mlp.backward(params.key, tape_i, U @ dTI.T)
        for acc, g in zip(gk.arrays(), gki.arrays()):
            acc += g
        if accountant is not None:
            accountant.record("pass2", U, tape_u, Q, dU, gk, XI, VI, tape_i, TI, FI, WI, dTI, gki)
        del VI, tape_i, TI, FI, WI, dTI, gki
    gq, _ = mlp.backward(params.query, tape_u, dU)
    return _assemble(params, gq, gk, db, 1.0 / B), loss / B


def loss_breakdown(params, X, hyper, block=1000):
    """Full-data loss decomposition of the network's coefficients, computed blockwise."""
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[1]
    U, _ = mlp.forward(params.query, X)
    V, _ = mlp.forward(params.key, X)
    rec = 0.0
    regv = 0.0
    for start in range(0, N, block):
        cols = np.arange(start, min(start + block, N))
        F, _, _ = _coefficients(params, V.T @ U[:, cols])
        F, _ = _mask_self(F, np.arange(N), cols)
        R = X[:, cols] - X @ F
        rec += float(np.sum(R * R))
        regv += float(np.sum(reg(F, hyper.lam)))
    return LossBreakdown(0.5 * hyper.gamma * rec + regv, rec, regv)


# -- training loops ------------------------------------------------------------

def derive_seeds(seed, n):
    """Independent integer sub-seeds derived from one top-level seed."""
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
            for s in np.random.SeedSequence(seed).spawn(n)]


def train(X, hyper, cfg, params=None, callback=None, accountant=None):
    """Train with the algorithm named in ``cfg``.

    ``callback(t, params)`` is called after every update (``t`` counts
    completed iterations).  Returns a :class:`TrainResult`.
    """
    cfg.validate(allow_zero_iterations=True)
    hyper.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise InvalidSpec(f"training data must be (D, N) with N >= 2, got {X.shape}")
    init_seed, batch_seed = derive_seeds(cfg.seed, 2)
    if params is None:
        params = init_senet(X.shape[0], cfg.hidden_dims, cfg.embed_dim, init_seed,
                            use_threshold=cfg.soft_threshold)
    elif params.input_dim != X.shape[0]:
        raise InvalidSpec(f"network input dim {params.input_dim} != data dim {X.shape[0]}")
    rng = np.random.default_rng(batch_seed)
    state = AdamState.for_params(params)
    N = X.shape[1]
    algorithm = cfg.algorithm
    if algorithm == "auto":
        algorithm = "naive" if N <= AUTO_NAIVE_MAX_N else "two_pass"
    b_scale = cfg.threshold_lr_scale if cfg.threshold_lr_scale is not None else float(params.embed_dim)
    B = min(cfg.batch_size, N)
    losses, rows = [], []
    for t in range(cfg.iterations):
        J = rng.choice(N, size=B, replace=False)
        if algorithm == "naive":
            grads, loss = batch_gradient_naive(params, X, J, hyper, accountant)
        else:
            grads, loss = batch_gradient_two_pass(params, X, J, hyper, cfg.block, accountant)
        grads = clip_gradient(grads, cfg.clip_norm)
        lr = cosine_lr(t, cfg.iterations, cfg.learning_rate, cfg.lr_min)
        params, state = adam_step(params, grads, state, lr, b_scale)
        losses.append(loss)
        done = t + 1
        if cfg.log_every and (done % cfg.log_every == 0 or done == cfg.iterations):
            lb = loss_breakdown(params, X, hyper, cfg.block)
            rows.append({"iteration": done, "lr": lr, **lb.as_dict()})
            log.debug("iter %d lr %.3g L %.4f", done, lr, lb.total)
        if callback is not None:
            callback(done, params)
    return TrainResult(params, losses, rows)


def train_naive(X, hyper, cfg, **kwargs):
    cfg = TrainConfig(**{**cfg.to_dict(), "algorithm": "naive"})
    return train(X, hyper, cfg, **kwargs)


def train_two_pass(X, hyper, cfg, **kwargs):
    cfg = TrainConfig(**{**cfg.to_dict(), "algorithm": "two_pass"})
    return train(X, hyper, cfg, **kwargs)


def write_loss_history(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lr", "L", "L_rec", "L_reg"])
        for r in rows:
            w.writerow([r["iteration"], repr(r["lr"]), repr(r["L"]), repr(r["L_rec"]), repr(r["L_reg"])])
