"""Synthetic union-of-subspaces data, preprocessing and matrix file I/O.

Feature matrices are ``(D, N)`` float64 arrays with one data point per
column.  Randomness comes from ``numpy.random.Generator`` (PCG64) seeded
with an integer.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidSpec, IoError

MATRIX_MAGIC = b"SEMX"
MATRIX_VERSION = 1
DTYPE_F64 = 1
DTYPE_U32 = 2
_HEADER = struct.Struct("<4sIQQB")


@dataclass(frozen=True)
class SyntheticSpec:
    ambient_dim: int
    subspace_dim: int
    num_subspaces: int
    points_per_subspace: int
    seed: int = 0

    def validate(self):
        if self.subspace_dim > self.ambient_dim:
            raise InvalidSpec(
                f"subspace_dim={self.subspace_dim} exceeds ambient_dim={self.ambient_dim}")
        if min(self.ambient_dim, self.subspace_dim, self.num_subspaces, self.points_per_subspace) < 1:
            raise InvalidSpec("all synthetic dimensions and counts must be >= 1")
        return self


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def n_points(self):
        return self.features.shape[1]


def gen_synthetic(spec):
    """Sample ``n`` random ``d``-dimensional subspaces of R^D and unit-norm points on each.

    Bases come from QR of a Gaussian D x d matrix; point coefficients are
    Gaussian d-vectors normalized to unit length, so every column has unit
    norm.  Labels are grouped by subspace (``0, 0, ..., 1, 1, ...``).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D, d, n, m = spec.ambient_dim, spec.subspace_dim, spec.num_subspaces, spec.points_per_subspace
    blocks = []
    for _ in range(n):
        basis, _ = np.linalg.qr(rng.standard_normal((D, d)))
        coef = rng.standard_normal((d, m))
        coef /= np.linalg.norm(coef, axis=0, keepdims=True)
        blocks.append(basis @ coef)
    X = np.hstack(blocks)
    # renormalize to remove the ~1e-16 drift from the basis product
    X /= np.linalg.norm(X, axis=0, keepdims=True)
    labels = np.repeat(np.arange(n, dtype=np.int64), m)
    return Dataset(X, labels)


def unit_normalize(X, warnings=None):
    X = np.array(X, dtype=np.float64, copy=True)
    norms = np.linalg.norm(X, axis=0)
    zero = norms == 0
    if np.any(zero) and warnings is not None:
        for j in np.flatnonzero(zero):
            warnings.append(f"column {j} has zero norm; left unchanged")
    norms[zero] = 1.0
    return X / norms


def remove_mean(X):
    X = np.asarray(X, dtype=np.float64)
    return X - X.mean(axis=1, keepdims=True)


def pca(X, target_dim):
    """Project columns onto the top ``target_dim`` principal directions.

    Returns the ``(target_dim, N)`` coordinates of the mean-centered data.
    """
    X = np.asarray(X, dtype=np.float64)
    D, N = X.shape
    if not 1 <= target_dim <= min(D, N):
        raise InvalidSpec(f"pca target_dim={target_dim} outside [1, {min(D, N)}]")
    Xc = X - X.mean(axis=1, keepdims=True)
    U, _, _ = np.linalg.svd(Xc, full_matrices=False)
    return U[:, :target_dim].T @ Xc


def preprocess(X, steps, warnings=None):
    """Apply preprocessing steps in order.

    ``steps`` is a sequence of ``"remove_mean"``, ``"unit_normalize"`` or
    ``("pca", k)`` entries (``"pca:k"`` strings are accepted too).
    """
    out = np.asarray(X, dtype=np.float64)
    for step in steps:
        if isinstance(step, str) and step.startswith("pca:"):
            step = ("pca", int(step.split(":", 1)[1]))
        if step == "remove_mean":
            out = remove_mean(out)
        elif step == "unit_normalize":
            out = unit_normalize(out, warnings)
        elif isinstance(step, (tuple, list)) and step[0] == "pca":
            out = pca(out, int(step[1]))
        else:
            raise InvalidSpec(f"unknown preprocessing step {step!r}")
    return out


def split(ds, n_train, seed):
    """Uniform random train/test split without replacement."""
    N = ds.n_points
    if not 0 <= n_train <= N:
        raise InvalidSpec(f"n_train={n_train} outside [0, {N}]")
    perm = np.random.default_rng(seed).permutation(N)
    tr, ts = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return (Dataset(ds.features[:, tr], ds.labels[tr]),
            Dataset(ds.features[:, ts], ds.labels[ts]))


# -- file formats ------------------------------------------------------------

def _is_csv(path):
    return os.fspath(path).lower().endswith((".csv", ".txt"))


def _write_binary(path, M, dtype_code):
    rows, cols = M.shape
    if dtype_code == DTYPE_F64:
        payload = np.asarray(M, dtype="<f8").tobytes(order="F")
    else:
        payload = np.asarray(M, dtype="<u4").tobytes(order="F")
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, rows, cols, dtype_code))
            fh.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _read_binary(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"header truncated: {len(raw)} of {_HEADER.size} bytes", offset=len(raw))
    magic, version, rows, cols, dtype_code = _HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if dtype_code == DTYPE_F64:
        dt, width = "<f8", 8
    elif dtype_code == DTYPE_U32:
        dt, width = "<u4", 4
    else:
        raise FormatError(f"unknown dtype code {dtype_code}", offset=24)
    expected = _HEADER.size + rows * cols * width
    if len(raw) != expected:
        raise FormatError(f"payload size mismatch: file has {len(raw)} bytes, expected {expected}",
                          offset=min(len(raw), expected))
    data = np.frombuffer(raw, dtype=dt, offset=_HEADER.size, count=rows * cols)
    return data.reshape((rows, cols), order="F"), dtype_code


def write_matrix(path, M):
    """Write a float matrix as binary ``.semx`` or, for ``.csv`` paths, CSV."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if _is_csv(path):
        try:
            with open(path, "w") as fh:
                for row in M:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        except OSError as exc:
            raise IoError(str(exc)) from exc
    else:
        _write_binary(path, M, DTYPE_F64)


def read_matrix(path):
    if _is_csv(path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise IoError(str(exc)) from exc
        rows = []
        offset = 0
        for line in text.splitlines(keepends=True):
            stripped = line.strip()
            if stripped:
                try:
                    rows.append([float(tok) for tok in stripped.split(",")])
                except ValueError as exc:
                    raise FormatError(f"cannot parse CSV line {stripped!r}", offset=offset) from exc
                if len(rows[-1]) != len(rows[0]):
                    raise FormatError("ragged CSV row", offset=offset)
            offset += len(line.encode())
        return np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    M, dtype_code = _read_binary(path)
    return np.array(M, dtype=np.float64)


def write_labels(path, labels):
    labels = np.asarray(labels)
    if labels.size and labels.min() < 0:
        raise InvalidSpec("labels must be non-negative")
    if _is_csv(path):
        try:
            with open(path, "w") as fh:
                fh.writelines(f"{int(v)}\n" for v in labels)
        except OSError as exc:
            raise IoError(str(exc)) from exc
    else:
        _write_binary(path, labels.reshape(-1, 1), DTYPE_U32)


def read_labels(path):
    if _is_csv(path):
        try:
            with open(path) as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
        except OSError as exc:
            raise IoError(str(exc)) from exc
        try:
            out = np.array([int(v) for v in lines], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"non-integer label: {exc}") from exc
        if out.size and out.min() < 0:
            raise FormatError("negative label")
        return out
    M, dtype_code = _read_binary(path)
    if dtype_code != DTYPE_U32:
        raise FormatError("label file must use dtype code 2 (u32)", offset=24)
    return M.ravel(order="F").astype(np.int64)
