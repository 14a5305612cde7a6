"""Experiment configuration and the runners shared by the CLI and the acceptance suite."""

import copy
import json
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import data, metrics
from .ensc import SolverConfig, solve_all
from .errors import InvalidSpec
from .model import coeff_matrix
from .objective import HyperParams, total_loss
from .spectral import build_affinity, cluster
from .train import (MemoryAccountant, TrainConfig, batch_gradient_naive, batch_gradient_two_pass,
                    derive_seeds, loss_breakdown, train)

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "synthetic": {"ambient_dim": 15, "subspace_dim": 6, "num_subspaces": 5, "points_per_subspace": 200},
        "features": None,
        "labels": None,
    },
    "preprocess": [],
    "n_train": None,
    "hyper": {"gamma": 50.0, "lam": 0.9},
    "train": {},
    "ensc": {"max_iters": 5000, "tol": 1e-8, "step_rule": "bb"},
    "spectral": {"mode": "sym_abs", "m": None, "k": None, "restarts": 10, "regularize": False},
    "compare_algs": {"probes": 20, "probe_points": 200, "probe_batch": 1},
    "ablate": {"sweep": "threshold", "values": None, "seeds": [0, 1, 2]},
    "out": "out",
}


def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_path(cfg, dotted, value):
    """Set ``cfg["a"]["b"] = value`` for ``dotted="a.b"`` (dashes read as underscores)."""
    keys = dotted.replace("-", "_").split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d=None):
        cfg = cls(_merge(DEFAULT_CONFIG, d or {}))
        cfg.resolve()
        return cfg

    @classmethod
    def load(cls, path, overrides=()):
        with open(path) as fh:
            d = json.load(fh)
        for key, value in overrides:
            set_path(d, key, value)
        return cls.from_dict(d)

    def resolve(self):
        """Fill defaults and validate every sub-config before any work starts."""
        r = self.raw
        train_fields = {f.name for f in fields(TrainConfig)}
        unknown = set(r["train"]) - train_fields
        if unknown:
            raise InvalidSpec(f"unknown train settings: {sorted(unknown)}")
        r["train"].setdefault("seed", int(r["seed"]))
        tc = TrainConfig(**{**r["train"], "hidden_dims": tuple(r["train"].get("hidden_dims", TrainConfig.hidden_dims))})
        r["train"] = tc.validate().to_dict()
        self.hyper.validate()
        self.solver.validate()
        if r["data"].get("features") is None:
            data.SyntheticSpec(**{"seed": int(r["seed"]), **r["data"]["synthetic"]}).validate()
        return self

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def hyper(self):
        return HyperParams(**self.raw["hyper"])

    @property
    def train_config(self):
        t = dict(self.raw["train"])
        t["hidden_dims"] = tuple(t["hidden_dims"])
        return TrainConfig(**t)

    @property
    def solver(self):
        return SolverConfig(hyper=self.hyper, **self.raw["ensc"])

    @property
    def spectral(self):
        return dict(self.raw["spectral"])

    @property
    def out(self):
        return self.raw["out"]

    def to_json(self):
        return json.dumps(self.raw, indent=2, sort_keys=True)

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "config.json"), "w") as fh:
            fh.write(self.to_json() + "\n")


def load_data(cfg):
    """Dataset described by the config after preprocessing, plus the optional train/test split."""
    d = cfg.raw["data"]
    data_seed, split_seed = derive_seeds(cfg.seed, 2)
    if d.get("features"):
        X = data.read_matrix(d["features"])
        labels = data.read_labels(d["labels"]) if d.get("labels") else None
        ds = data.Dataset(X, labels)
    else:
        spec = data.SyntheticSpec(**{"seed": data_seed, **d["synthetic"]})
        ds = data.gen_synthetic(spec)
    if cfg.raw["preprocess"]:
        ds = data.Dataset(data.preprocess(ds.features, cfg.raw["preprocess"], ds.warnings), ds.labels, ds.warnings)
    n_train = cfg.raw.get("n_train")
    if n_train is None or n_train >= ds.n_points:
        return ds, None
    return data.split(ds, int(n_train), split_seed)


def n_clusters(cfg, labels):
    k = cfg.raw["spectral"].get("k")
    if k is None:
        if labels is None:
            raise InvalidSpec("spectral.k is required when no labels are available")
        k = int(np.unique(labels).size)
    return int(k)


def cluster_and_score(C, labels, k, spectral, seed, X=None, hyper=None):
    """Spectral clustering of ``C`` and a full metrics report against ``labels``."""
    res = cluster(C, k, mode=spectral.get("mode", "sym_abs"), m=spectral.get("m"), seed=seed,
                  restarts=spectral.get("restarts", 10), regularize=spectral.get("regularize", False))
    report = metrics.MetricsReport()
    if labels is not None:
        report.sre = metrics.sre(C, labels)
        report.acc = metrics.acc(res.assignments, labels)
        report.nmi = metrics.nmi(res.assignments, labels)
        report.ari = metrics.ari(res.assignments, labels)
        try:
            report.conn = metrics.conn(build_affinity(C, "sym_abs"), labels)
        except metrics.ClassTooSmall:
            report.conn = None
    if X is not None and hyper is not None:
        lb = total_loss(X, C, hyper)
        report.L, report.L_rec, report.L_reg = lb.total, lb.rec, lb.reg
    return res.assignments, report


@dataclass
class SenetRun:
    params: object
    coefficients: np.ndarray
    assignments: np.ndarray
    report: metrics.MetricsReport
    log_rows: list
    losses: list
    seconds: float
    test_report: metrics.MetricsReport = None
    test_assignments: np.ndarray = None
    extra: dict = field(default_factory=dict)


def run_senet(train_ds, hyper, train_cfg, spectral, seed, test_ds=None, k=None, accountant=None):
    """Train SENet on ``train_ds``, cluster its coefficients, and optionally score held-out data."""
    k = k or int(np.unique(train_ds.labels).size)
    _, cluster_seed = derive_seeds(seed, 2)
    start = time.perf_counter()
    res = train(train_ds.features, hyper, train_cfg, accountant=accountant)
    seconds = time.perf_counter() - start
    C = coeff_matrix(res.params, train_ds.features)
    assignments, report = cluster_and_score(C, train_ds.labels, k, spectral, cluster_seed)
    lb = loss_breakdown(res.params, train_ds.features, hyper)
    report.L, report.L_rec, report.L_reg = lb.total, lb.rec, lb.reg
    run = SenetRun(res.params, C, assignments, report, res.log_rows, res.losses, seconds)
    if test_ds is not None:
        Ct = coeff_matrix(res.params, test_ds.features)
        run.test_assignments, run.test_report = cluster_and_score(Ct, test_ds.labels, k, spectral,
                                                                  cluster_seed)
        lt = loss_breakdown(res.params, test_ds.features, hyper)
        run.test_report.L, run.test_report.L_rec, run.test_report.L_reg = lt.total, lt.rec, lt.reg
    return run


def run_ensc(ds, solver, spectral, seed, k=None):
    """EnSC oracle coefficients with clustering metrics and the loss decomposition."""
    k = k or int(np.unique(ds.labels).size)
    _, cluster_seed = derive_seeds(seed, 2)
    start = time.perf_counter()
    C = solve_all(ds.features, solver)
    seconds = time.perf_counter() - start
    assignments, report = cluster_and_score(C, ds.labels, k, spectral, cluster_seed, ds.features, solver.hyper)
    return C, assignments, report, seconds


def gradient_discrepancy(params, X, J, hyper, block):
    """Max per-coordinate relative gap between the two gradient routes (floor 1e-8)."""
    ga, _ = batch_gradient_naive(params, X, J, hyper)
    gb, _ = batch_gradient_two_pass(params, X, J, hyper, block)
    a, b = ga.to_vector(), gb.to_vector()
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def compare_algorithms(cfg):
    """Paired gradient probes plus end-to-end runs of both training algorithms."""
    from .model import init_senet

    train_ds, test_ds = load_data(cfg)
    hyper, tc = cfg.hyper, cfg.train_config
    opts = cfg.raw["compare_algs"]
    seeds = derive_seeds(cfg.seed, int(opts["probes"]) + 1)
    N = train_ds.n_points
    probe_n = min(int(opts["probe_points"]), N)
    worst = 0.0
    for s in seeds[:-1]:
        rng = np.random.default_rng(s)
        idx = np.sort(rng.choice(N, probe_n, replace=False))
        params = init_senet(train_ds.features.shape[0], tc.hidden_dims, tc.embed_dim, rng,
                            use_threshold=tc.soft_threshold)
        if tc.soft_threshold:
            params.b = float(rng.uniform(0.0, 0.5))
        J = rng.choice(probe_n, int(opts["probe_batch"]), replace=False)
        worst = max(worst, gradient_discrepancy(params, train_ds.features[:, idx], J, hyper,
                                                min(tc.block, probe_n)))
    k = n_clusters(cfg, train_ds.labels)
    runs = {}
    for alg in ("naive", "two_pass"):
        acct = MemoryAccountant()
        alg_cfg = TrainConfig(**{**tc.to_dict(), "hidden_dims": tc.hidden_dims, "algorithm": alg})
        run = run_senet(train_ds, hyper, alg_cfg, cfg.spectral, cfg.seed, k=k, accountant=acct)
        runs[alg] = {"acc": run.report.acc, "L": run.report.L,
                     "peak_bytes": acct.total_peak, "final_batch_loss": run.losses[-1] if run.losses else None}
    return {
        "n_probes": len(seeds) - 1,
        "max_grad_rel_discrepancy": worst,
        "naive": runs["naive"],
        "two_pass": runs["two_pass"],
        "acc_gap": abs(runs["naive"]["acc"] - runs["two_pass"]["acc"]),
    }


def compare_senet_ensc(cfg):
    """Side-by-side rows for SENet (train and, if split, test) and the EnSC oracle."""
    train_ds, test_ds = load_data(cfg)
    k = n_clusters(cfg, train_ds.labels)
    run = run_senet(train_ds, cfg.hyper, cfg.train_config, cfg.spectral, cfg.seed, test_ds=test_ds, k=k)
    _, _, ensc_report, _ = run_ensc(train_ds, cfg.solver, cfg.spectral, cfg.seed, k=k)
    rows = [{"method": "senet", "split": "train", **run.report.to_dict()},
            {"method": "ensc", "split": "train", **ensc_report.to_dict()}]
    if run.test_report is not None:
        rows.insert(1, {"method": "senet", "split": "test", **run.test_report.to_dict()})
    return rows, run


ABLATIONS = ("threshold", "depth", "width", "batch")
ABLATION_DEFAULTS = {"threshold": [True, False], "depth": [1, 2, 3], "width": [64, 128, 256],
                     "batch": [50, 100, 200]}


def ablation_config(tc, sweep, value):
    d = tc.to_dict()
    d["hidden_dims"] = tuple(tc.hidden_dims)
    if sweep == "threshold":
        d["soft_threshold"] = bool(value)
    elif sweep == "depth":
        width = tc.hidden_dims[0] if tc.hidden_dims else tc.embed_dim
        d["hidden_dims"] = (width,) * (int(value) - 1)
        if int(value) < 1:
            raise InvalidSpec("depth must be >= 1")
    elif sweep == "width":
        d["hidden_dims"] = (int(value),) * len(tc.hidden_dims)
        d["embed_dim"] = int(value)
    elif sweep == "batch":
        d["batch_size"] = int(value)
    else:
        raise InvalidSpec(f"unknown sweep {sweep!r}; expected one of {ABLATIONS}")
    return TrainConfig(**d).validate()


def ablate(cfg, sweep=None, values=None, seeds=None):
    """Rows ``{sweep, value, seed, metrics...}`` over a one-factor sweep and several seeds.

    Outputs carry no wall-clock timings so repeated runs are byte-identical.

    Depth counts the layers of each network (hidden layers plus the output layer).
    """
    opts = cfg.raw["ablate"]
    sweep = sweep or opts["sweep"]
    if sweep not in ABLATIONS:
        raise InvalidSpec(f"unknown sweep {sweep!r}; expected one of {ABLATIONS}")
    values = values if values is not None else (opts.get("values") or ABLATION_DEFAULTS[sweep])
    seeds = seeds if seeds is not None else opts["seeds"]
    rows = []
    for seed in seeds:
        seeded = ExperimentConfig.from_dict(_merge(cfg.raw, {"seed": int(seed), "train": {"seed": int(seed)}}))
        train_ds, _ = load_data(seeded)
        k = n_clusters(seeded, train_ds.labels)
        for value in values:
            tc = ablation_config(seeded.train_config, sweep, value)
            run = run_senet(train_ds, seeded.hyper, tc, seeded.spectral, int(seed), k=k)
            rows.append({"sweep": sweep, "value": value, "seed": int(seed), **run.report.to_dict(),
                         "b": run.params.b})
    return rows
