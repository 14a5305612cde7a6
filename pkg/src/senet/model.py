"""The self-expressive network.

The coefficient for explaining ``x_j`` with ``x_i`` is

    f(x_i, x_j) = alpha * T_b(u(x_j) . v(x_i)),    T_b(t) = sgn(t) max(0, |t| - b)

where ``u`` (query) and ``v`` (key) are MLPs with tanh outputs in R^p and
``alpha = 1 / p``.  The map is not symmetric in (i, j).
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import mlp
from .errors import DimensionMismatch, FormatError, InvalidSpec, IoError
from .objective import HyperParams

CHECKPOINT_MAGIC = b"SENT"
CHECKPOINT_VERSION = 1
DEFAULT_BLOCK = 1024


@dataclass
class SENetParams:
    query: mlp.MlpParams
    key: mlp.MlpParams
    b: float = 0.0
    use_threshold: bool = True

    @property
    def input_dim(self):
        return self.query.weights[0].shape[1]

    @property
    def embed_dim(self):
        return self.query.weights[-1].shape[0]

    @property
    def alpha(self):
        return 1.0 / self.embed_dim

    @property
    def hidden_dims(self):
        return self.query.dims[1:-1]

    def copy(self):
        return SENetParams(self.query.copy(), self.key.copy(), float(self.b), self.use_threshold)

    def zeros_like(self):
        return SENetParams(self.query.zeros_like(), self.key.zeros_like(), 0.0, self.use_threshold)

    def arrays(self):
        return self.query.arrays() + self.key.arrays()

    def to_vector(self):
        """Flatten all trainable values (query, key, then b) into one vector."""
        return np.concatenate([a.ravel() for a in self.arrays()] + [np.array([self.b])])

    def from_vector(self, vec):
        """Return a copy whose values are taken from ``vec`` (layout of :meth:`to_vector`)."""
        out = self.copy()
        pos = 0
        for a in out.arrays():
            a[...] = vec[pos:pos + a.size].reshape(a.shape)
            pos += a.size
        out.b = float(vec[pos])
        if pos + 1 != len(vec):
            raise DimensionMismatch(f"vector length {len(vec)} != parameter count {pos + 1}")
        return out

    def validate(self):
        self.query.validate()
        self.key.validate()
        if self.query.dims[0] != self.key.dims[0] or self.query.dims[-1] != self.key.dims[-1]:
            raise DimensionMismatch("query and key nets must share input and output dims")
        if self.b < 0:
            raise InvalidSpec(f"threshold b must be >= 0, got {self.b}")
        return self


def init_senet(input_dim, hidden_dims=(1024, 1024, 1024), embed_dim=1024, seed=0,
               use_threshold=True):
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden_dims, embed_dim]
    return SENetParams(mlp.init(dims, rng), mlp.init(dims, rng), 0.0, use_threshold)


def soft_threshold(t, b):
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.maximum(np.abs(t) - b, 0.0)


def _threshold(params, T):
    return soft_threshold(T, params.b) if params.use_threshold else T


def coeff(params, x_i, x_j):
    """Single coefficient f(x_i, x_j); returns ``(value, (query_tape, key_tape))``."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != (params.input_dim,) or x_j.shape != (params.input_dim,):
        raise DimensionMismatch(f"expected vectors of length {params.input_dim}")
    u, tape_u = mlp.forward(params.query, x_j)
    v, tape_v = mlp.forward(params.key, x_i)
    t = float(u @ v)
    return params.alpha * float(_threshold(params, t)), (tape_u, tape_v)


def embed(params, X):
    """Query and key embeddings ``(U, V)`` of every column, each ``(p, N)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != params.input_dim:
        raise DimensionMismatch(f"expected ({params.input_dim}, N) data, got {X.shape}")
    U, _ = mlp.forward(params.query, X)
    V, _ = mlp.forward(params.key, X)
    return U, V


def coeff_matrix(params, X, block=DEFAULT_BLOCK, Y=None):
    """Coefficient matrix ``C[i, j] = f(x_i, x_j)`` with a zero diagonal.

    Columns of ``X`` are embedded once; inner products are formed for
    ``block`` target columns at a time.  When ``Y`` is given, column ``j``
    holds coefficients for expressing ``Y[:, j]`` with the columns of ``X``
    (no diagonal masking).
    """
    X = np.asarray(X, dtype=np.float64)
    if block < 1:
        raise InvalidSpec("block must be >= 1")
    N = X.shape[1]
    _, V = embed(params, X)
    if Y is None:
        U, _ = mlp.forward(params.query, X)
    else:
        U, _ = mlp.forward(params.query, np.asarray(Y, dtype=np.float64))
    M = U.shape[1]
    C = np.empty((N, M))
    for start in range(0, M, block):
        stop = min(start + block, M)
        C[:, start:stop] = params.alpha * _threshold(params, V.T @ U[:, start:stop])
    if Y is None:
        np.fill_diagonal(C, 0.0)
    return C


# -- checkpoints -------------------------------------------------------------

def _tensor_names(params):
    names = []
    for net in ("query", "key"):
        for l in range(getattr(params, net).n_layers):
            names.extend((f"{net}.W{l + 1}", f"{net}.b{l + 1}"))
    return names


def save_checkpoint(params, hyper, path):
    header = {
        "D": params.input_dim,
        "p": params.embed_dim,
        "hidden_dims": list(params.hidden_dims),
        "gamma": float(hyper.gamma),
        "lambda": float(hyper.lam),
        "alpha": params.alpha,
        "b": float(params.b),
        "soft_threshold": bool(params.use_threshold),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob]
    for name, arr in zip(_tensor_names(params), params.arrays()):
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)) + enc + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.asarray(arr, dtype="<f8").tobytes(order="F"))
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise IoError(str(exc)) from exc


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise FormatError(f"truncated while reading {what}", offset=self.pos)
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def load_checkpoint(path):
    """Read a checkpoint; returns ``(SENetParams, HyperParams)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    rd = _Reader(raw)
    if rd.take(4, "magic") != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    version, hlen = rd.unpack("<II", "version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    try:
        header = json.loads(rd.take(hlen, "header").decode("utf-8"))
        D, p, hidden = int(header["D"]), int(header["p"]), [int(h) for h in header["hidden_dims"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed checkpoint header: {exc}", offset=12) from exc
    dims = [D, *hidden, p]
    nets = {}
    for net in ("query", "key"):
        weights, biases = [], []
        for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            for kind, shape in (("W", (fan_out, fan_in)), ("b", (fan_out,))):
                start = rd.pos
                (nlen,) = rd.unpack("<H", "name length")
                name = rd.take(nlen, "name").decode("utf-8", errors="replace")
                if name != f"{net}.{kind}{l + 1}":
                    raise FormatError(f"unexpected tensor {name!r}", offset=start)
                (ndim,) = rd.unpack("<B", "ndim")
                got = rd.unpack(f"<{ndim}Q", "dims")
                if tuple(got) != shape:
                    raise FormatError(f"tensor {name} has shape {got}, expected {shape}", offset=start)
                count = int(np.prod(shape))
                payload = rd.take(8 * count, f"payload of {name}")
                arr = np.frombuffer(payload, dtype="<f8").reshape(shape, order="F").astype(np.float64)
                (weights if kind == "W" else biases).append(arr)
        nets[net] = mlp.MlpParams(weights, biases)
    if rd.pos != len(raw):
        raise FormatError("trailing bytes after last tensor", offset=rd.pos)
    params = SENetParams(nets["query"], nets["key"], float(header["b"]),
                         bool(header.get("soft_threshold", True)))
    hyper = HyperParams(float(header["gamma"]), float(header["lambda"]))
    return params.validate(), hyper
