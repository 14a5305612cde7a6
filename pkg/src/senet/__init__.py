"""Self-expressive network subspace clustering with an elastic-net convex oracle."""

from .errors import (ClassTooSmall, DimensionMismatch, FormatError, InvalidSpec, IoError,
                     IsolatedVertex, NonzeroDiagonal, NotSymmetric, SENetError)
from .objective import HyperParams, LossBreakdown
from .model import SENetParams, init_senet, coeff, coeff_matrix, soft_threshold
from .train import TrainConfig, train_naive, train_two_pass
from .ensc import SolverConfig, solve_all, solve_column
from .spectral import cluster
from .metrics import MetricsReport

__all__ = [
    "ClassTooSmall", "DimensionMismatch", "FormatError", "InvalidSpec", "IoError", "IsolatedVertex",
    "NonzeroDiagonal", "NotSymmetric", "SENetError", "HyperParams", "LossBreakdown", "SENetParams",
    "init_senet", "coeff", "coeff_matrix", "soft_threshold", "TrainConfig", "train_naive",
    "train_two_pass", "SolverConfig", "solve_all", "solve_column", "cluster", "MetricsReport",
]

__version__ = "0.1.0"
