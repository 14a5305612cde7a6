"""Command-line front end: ``senet <subcommand> [options] [--section.key value ...]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import csv
import json
import os
import sys

from threadpoolctl import threadpool_limits

from . import data, experiments, metrics
from .ensc import SolverConfig, solve_all
from .errors import SENetError
from .model import coeff_matrix, load_checkpoint, save_checkpoint
from .objective import HyperParams
from .spectral import cluster
from .train import derive_seeds, write_loss_history


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _split_overrides(extra):
    """Turn leftover ``--a.b value`` tokens into ``[("a.b", value), ...]``."""
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra):
            val = extra[i + 1]
            i += 2
        else:
            raise UsageError(f"missing value for --{key}")
        out.append((key, _parse_value(val)))
    return out


def _config(args, overrides):
    if args.config:
        cfg = experiments.ExperimentConfig.load(args.config, overrides)
    else:
        d = {}
        for key, value in overrides:
            experiments.set_path(d, key, value)
        cfg = experiments.ExperimentConfig.from_dict(d)
    if getattr(args, "out", None):
        cfg.raw["out"] = args.out
    return cfg


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# -- subcommands ---------------------------------------------------------------

def cmd_gen(args, overrides):
    spec_dict = {}
    if args.spec:
        with open(args.spec) as fh:
            spec_dict = json.load(fh)
    for key, value in overrides:
        spec_dict[key.replace("-", "_")] = value
    spec = data.SyntheticSpec(**spec_dict).validate()
    ds = data.gen_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    data.write_matrix(os.path.join(args.out, "features.semx"), ds.features)
    data.write_labels(os.path.join(args.out, "labels.csv"), ds.labels)
    _write_json(os.path.join(args.out, "spec.json"), vars(spec))
    return 0


def cmd_train(args, overrides):
    cfg = _config(args, overrides)
    out = cfg.out
    cfg.write(out)
    train_ds, test_ds = experiments.load_data(cfg)
    labels = train_ds.labels
    k = experiments.n_clusters(cfg, labels) if (labels is not None or cfg.raw["spectral"]["k"]) else None
    data.write_matrix(os.path.join(out, "train_features.semx"), train_ds.features)
    if labels is not None and k is not None:
        run = experiments.run_senet(train_ds, cfg.hyper, cfg.train_config, cfg.spectral, cfg.seed,
                                    test_ds=test_ds if test_ds is not None and test_ds.n_points > 1 else None,
                                    k=k)
        params, C, rows = run.params, run.coefficients, run.log_rows
        data.write_labels(os.path.join(out, "train_assignments.csv"), run.assignments)
        _write_json(os.path.join(out, "metrics.json"), run.report.to_dict())
        if run.test_report is not None:
            data.write_matrix(os.path.join(out, "test_features.semx"), test_ds.features)
            _write_json(os.path.join(out, "test_metrics.json"), run.test_report.to_dict())
    else:
        from .train import train
        res = train(train_ds.features, cfg.hyper, cfg.train_config)
        params, rows = res.params, res.log_rows
        C = coeff_matrix(params, train_ds.features)
    save_checkpoint(params, cfg.hyper, os.path.join(out, "checkpoint.sent"))
    data.write_matrix(os.path.join(out, "coefficients.semx"), C)
    write_loss_history(os.path.join(out, "loss_history.csv"), rows)
    return 0


def cmd_infer(args, overrides):
    if overrides:
        raise UsageError(f"unexpected options {[k for k, _ in overrides]}")
    params, _ = load_checkpoint(args.checkpoint)
    X = data.read_matrix(args.features)
    data.write_matrix(args.out, coeff_matrix(params, X, block=args.block))
    return 0


def cmd_ensc(args, overrides):
    if args.config:
        solver = _config(args, overrides).solver
    else:
        opts = dict(overrides)
        hyper = HyperParams(float(opts.pop("gamma", 50.0)), float(opts.pop("lam", 0.9)))
        solver = SolverConfig(hyper=hyper, **{k.replace("-", "_"): v for k, v in opts.items()})
    X = data.read_matrix(args.features)
    data.write_matrix(args.out, solve_all(X, solver))
    return 0


def cmd_cluster(args, overrides):
    if overrides:
        raise UsageError(f"unexpected options {[k for k, _ in overrides]}")
    C = data.read_matrix(args.coef)
    res = cluster(C, args.k, mode=args.mode, m=args.m, seed=derive_seeds(args.seed, 2)[1],
                  restarts=args.restarts, regularize=args.regularize)
    data.write_labels(args.out, res.assignments)
    return 0


def cmd_eval(args, overrides):
    if overrides:
        raise UsageError(f"unexpected options {[k for k, _ in overrides]}")
    pred, truth = data.read_labels(args.pred), data.read_labels(args.truth)
    report = metrics.MetricsReport(acc=metrics.acc(pred, truth), nmi=metrics.nmi(pred, truth),
                                   ari=metrics.ari(pred, truth))
    if args.coef:
        C = data.read_matrix(args.coef)
        report.sre = metrics.sre(C, truth)
        from .spectral import build_affinity
        try:
            report.conn = metrics.conn(build_affinity(C), truth)
        except metrics.ClassTooSmall:
            pass
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_compare_senet_ensc(args, overrides):
    cfg = _config(args, overrides)
    cfg.write(cfg.out)
    rows, _ = experiments.compare_senet_ensc(cfg)
    _write_rows(os.path.join(cfg.out, "compare_senet_ensc.csv"), rows)
    _write_json(os.path.join(cfg.out, "compare_senet_ensc.json"), rows)
    print(json.dumps(rows, indent=2))
    return 0


def cmd_compare_algs(args, overrides):
    cfg = _config(args, overrides)
    cfg.write(cfg.out)
    report = experiments.compare_algorithms(cfg)
    _write_json(os.path.join(cfg.out, "compare_algs.json"), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args, overrides):
    cfg = _config(args, overrides)
    cfg.write(cfg.out)
    values = [_parse_value(v) for v in args.values.split(",")] if args.values else None
    rows = experiments.ablate(cfg, sweep=args.sweep, values=values)
    _write_rows(os.path.join(cfg.out, f"ablate_{args.sweep or cfg.raw['ablate']['sweep']}.csv"), rows)
    return 0


def build_parser():
    p = _Parser(prog="senet", description="Self-expressive network subspace clustering.")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads (1 = bitwise reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic union-of-subspaces dataset")
    g.add_argument("--spec", help="JSON SyntheticSpec")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    for name, func, help_text in (
            ("train", cmd_train, "train SENet"),
            ("compare-senet-ensc", cmd_compare_senet_ensc, "SENet vs EnSC side-by-side report"),
            ("compare-algs", cmd_compare_algs, "naive vs two-pass gradient and end-to-end parity"),
            ("ablate", cmd_ablate, "one-factor ablation sweep to CSV")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--out", help="output directory (overrides the config)")
        if name == "ablate":
            s.add_argument("--sweep", choices=experiments.ABLATIONS)
            s.add_argument("--values", help="comma-separated sweep values")
        s.set_defaults(func=func)

    i = sub.add_parser("infer", help="coefficient matrix from a checkpoint")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--features", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--block", type=int, default=1024)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("ensc", help="elastic-net oracle coefficients")
    e.add_argument("--features", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config", help="JSON experiment config (hyper and ensc sections)")
    e.set_defaults(func=cmd_ensc)

    c = sub.add_parser("cluster", help="spectral clustering of a coefficient matrix")
    c.add_argument("--coef", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--mode", default="sym_abs")
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--restarts", type=int, default=10)
    c.add_argument("--regularize", action="store_true")
    c.set_defaults(func=cmd_cluster)

    v = sub.add_parser("eval", help="metrics report for predicted labels")
    v.add_argument("--pred", required=True)
    v.add_argument("--truth", required=True)
    v.add_argument("--coef")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, extra = build_parser().parse_known_args(argv)
        overrides = _split_overrides(extra)
    except UsageError as exc:
        print(f"senet: usage error: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        import logging
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args, overrides)
    except UsageError as exc:
        print(f"senet: usage error: {exc}", file=sys.stderr)
        return 1
    except (SENetError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"senet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
