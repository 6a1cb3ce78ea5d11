"""Command-line front door.

Subcommands::

    denoise   smooth a signal over a graph, write the result and an
              objective trace
    train     train the classifier over one or more seeds, write per-seed
              reports, checkpoints, and a mean +/- sd summary
    variants  train the five penalty variants on a base graph and any number
              of perturbed edge files (robustness matrix)
    diagnose  smoothness-adaptivity and sparsity metrics from a checkpoint
    sweep-k   accuracy as a function of the propagation depth

Every command writes its outputs atomically into ``--out`` and finishes by
writing ``manifest.json``; the manifest's presence marks a completed run and
the exit code is 0 exactly when it was written.  Delimited outputs (CSV/JSON)
are the canonical artifacts; matching PNG figures are rendered next to them
unless ``--no-figures`` is given.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import figures
from .data import Dataset, load_dataset, load_perturbed_edges
from .errors import InputError, NumericError
from .graphs import as_signal, load_graph, normalized_operators
from .nn import TrainConfig, forward, load_checkpoint, save_checkpoint, train
from .solver import (EMPConfig, Penalty, default_stepsizes, emp_run,
                     load_emp_config, ObjectiveBreakdown, THEOREM_SLACK)

__all__ = ["main"]


# ---------------------------------------------------------------------------
# plumbing

def _write_text_atomic(path, text: str) -> str:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def version_string() -> str:
    """Package version, with the git revision appended when available."""
    try:
        from importlib.metadata import version
        base = version("elasticgraph")
    except Exception:
        base = "unknown"
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        rev = subprocess.run(
            ["git", "-C", here, "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{base}+g{rev.stdout.strip()}"
    except Exception:
        pass
    return base


@dataclass
class RunManifest:
    """Written last; its presence signals a completed run."""

    command: str
    config: dict
    seeds: list
    inputs: list
    outputs: list
    wall_time_s: float
    version: str

    def write(self, out_dir) -> str:
        path = os.path.join(os.fspath(out_dir), "manifest.json")
        return _write_text_atomic(path, json.dumps(asdict(self), indent=2) + "\n")


class _Run:
    """Collects outputs and timing for one command, then seals the manifest."""

    def __init__(self, command: str, out_dir, config: dict, seeds=(),
                 inputs=()):
        self.command = command
        self.out_dir = os.fspath(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.config = config
        self.seeds = list(seeds)
        self.inputs = [os.fspath(p) for p in inputs]
        self.outputs: list[str] = []
        self.started = time.perf_counter()

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def add(self, path) -> str:
        self.outputs.append(os.fspath(path))
        return os.fspath(path)

    def write_text(self, name: str, text: str) -> str:
        return self.add(_write_text_atomic(self.path(name), text))

    def finish(self) -> None:
        manifest = RunManifest(
            command=self.command,
            config=self.config,
            seeds=self.seeds,
            inputs=self.inputs,
            outputs=sorted(self.outputs),
            wall_time_s=time.perf_counter() - self.started,
            version=version_string(),
        )
        manifest.write(self.out_dir)


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise InputError(f"bad --seeds value {text!r}: {exc}") from exc


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise InputError(f"bad --k-list value {text!r}: {exc}") from exc
    if not ks or any(k < 0 for k in ks):
        raise InputError(f"--k-list needs nonnegative integers, got {text!r}")
    return ks


def _load_csv_signal(path, rows=None):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read signal {path}: {exc}") from exc
    return as_signal(arr, rows=rows, name=os.fspath(path))


def _format_csv_matrix(arr) -> str:
    lines = [",".join(repr(v) for v in row) for row in np.atleast_2d(arr)]
    return "\n".join(lines) + "\n"


def _solver_config(args) -> EMPConfig:
    """EMP config from an optional key-value file plus flag overrides."""
    if getattr(args, "config", None):
        base = load_emp_config(args.config)
        lambda1 = base.lambda1 if args.lambda1 is None else args.lambda1
        lambda2 = base.lambda2 if args.lambda2 is None else args.lambda2
        k = base.k if args.k is None else args.k
        mode = base.mode if args.mode is None else Penalty(args.mode)
        gamma = base.gamma if args.gamma is None else args.gamma
        beta = base.beta if args.beta is None else args.beta
        if args.lambda2 is not None and args.gamma is None:
            gamma, beta_default = default_stepsizes(lambda2)
            beta = beta_default if args.beta is None else args.beta
    else:
        lambda1 = args.lambda1 if args.lambda1 is not None else 0.0
        lambda2 = args.lambda2 if args.lambda2 is not None else 0.0
        k = args.k if args.k is not None else 10
        mode = Penalty(args.mode) if args.mode is not None else Penalty.L21
        gamma_default, beta_default = default_stepsizes(lambda2)
        gamma = args.gamma if args.gamma is not None else gamma_default
        beta = args.beta if args.beta is not None else beta_default
    fast = abs(gamma * (1.0 + lambda2) - 1.0) <= THEOREM_SLACK
    return EMPConfig(lambda1=lambda1, lambda2=lambda2, gamma=gamma, beta=beta,
                     k=k, mode=mode, fast_path=fast)


def _dataset_from_args(args) -> Dataset:
    return load_dataset(
        args.dataset,
        split=args.split,
        seed=args.split_seed,
        identity_features=args.identity_features,
        lcc=args.lcc,
        row_normalize=args.row_normalize,
    )


def _train_config(args, seed: int) -> TrainConfig:
    k = getattr(args, "k", None)
    mode = getattr(args, "mode", None)
    return TrainConfig(
        lr=args.lr, weight_decay=args.weight_decay, dropout=args.dropout,
        k=k if k is not None else 10,
        lambda1=args.lambda1 if args.lambda1 is not None else 3.0,
        lambda2=args.lambda2 if args.lambda2 is not None else 3.0,
        mode=Penalty(mode) if mode is not None else Penalty.L21,
        epochs=args.epochs, patience=args.patience, seed=seed,
        hidden=args.hidden,
    )


def _summarize(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# commands

def cmd_denoise(args) -> None:
    graph = load_graph(args.edges, n=args.n)
    ops = normalized_operators(graph)
    signal = _load_csv_signal(args.signal, rows=graph.n)
    cfg = _solver_config(args)

    run = _Run("denoise", args.out, config=_emp_config_dict(cfg),
               inputs=[args.edges, args.signal])
    smoothed, trace = emp_run(signal, ops, cfg, trace=True)

    run.write_text("smoothed.csv", _format_csv_matrix(smoothed))
    rows = [ObjectiveBreakdown.CSV_HEADER]
    rows += [b.csv_row(k) for k, b in enumerate(trace)]
    run.write_text("trace.csv", "\n".join(rows) + "\n")
    if not args.no_figures:
        run.add(figures.save_trace_figure(trace, run.path("trace.png")))
    run.finish()


def _emp_config_dict(cfg: EMPConfig) -> dict:
    out = asdict(cfg)
    out["mode"] = cfg.mode.value
    return out


def cmd_train(args) -> None:
    ds = _dataset_from_args(args)
    ops = normalized_operators(ds.graph)
    seeds = _parse_seeds(args.seeds)
    cfg0 = _train_config(args, seeds[0])

    run = _Run("train", args.out, config=cfg0.to_dict(), seeds=seeds,
               inputs=[args.dataset])
    reports = []
    for seed in seeds:
        cfg = replace(cfg0, seed=seed)
        model, report = train(ds, ops, cfg)
        reports.append(report)
        run.write_text(f"report_seed{seed}.json", report.to_json() + "\n")
        ckpt = run.path(f"checkpoint_seed{seed}.npz")
        save_checkpoint(model, cfg, ckpt)
        run.add(ckpt)

    mean, sd = _summarize([r.test_accuracy for r in reports])
    summary = {
        "dataset": ds.name,
        "seeds": seeds,
        "test_accuracy_mean": mean,
        "test_accuracy_sd": sd,
        "cell": f"{100 * mean:.1f} ± {100 * sd:.1f}",
        "per_seed": {str(r.seed): r.test_accuracy for r in reports},
    }
    run.write_text("summary.json", json.dumps(summary, indent=2) + "\n")
    run.write_text(
        "summary.csv",
        "dataset,mode,lambda1,lambda2,k,num_seeds,accuracy_mean,accuracy_sd\n"
        f"{ds.name},{cfg0.mode.value},{cfg0.lambda1!r},{cfg0.lambda2!r},"
        f"{cfg0.k},{len(seeds)},{mean!r},{sd!r}\n",
    )
    if not args.no_figures:
        run.add(figures.save_training_figure(reports, run.path("curves.png"),
                                             title=f"Training on {ds.name}"))
    run.finish()


VARIANTS = (
    # (name, uses_lambda1, uses_lambda2, mode)
    ("l2", False, True, Penalty.L21),
    ("l1", True, False, Penalty.L1),
    ("l21", True, False, Penalty.L21),
    ("l1+l2", True, True, Penalty.L1),
    ("l21+l2", True, True, Penalty.L21),
)


def cmd_variants(args) -> None:
    ds = _dataset_from_args(args)
    ops_base = normalized_operators(ds.graph)
    seeds = _parse_seeds(args.seeds)
    lambda1 = args.lambda1 if args.lambda1 is not None else 3.0
    lambda2 = args.lambda2 if args.lambda2 is not None else 3.0

    # fixed robustness-run protocol: lr 0.01, weight decay 5e-4, dropout 0.5, K=10
    base_cfg = TrainConfig(lr=0.01, weight_decay=5e-4, dropout=0.5, k=10,
                           lambda1=lambda1, lambda2=lambda2,
                           epochs=args.epochs, patience=args.patience,
                           hidden=args.hidden)

    graphs_to_run = [(ds.name, ds, ops_base, 0.0)]
    for path in args.perturbed:
        pds, rate = load_perturbed_edges(ds, path)
        graphs_to_run.append((pds.name, pds, normalized_operators(pds.graph), rate))

    run = _Run("variants", args.out,
               config={"lambda1": lambda1, "lambda2": lambda2,
                       "train": base_cfg.to_dict()},
               seeds=seeds, inputs=[args.dataset, *args.perturbed])

    header = ["graph", "ptb_rate"]
    for name, *_ in VARIANTS:
        header += [f"{name}_mean", f"{name}_sd"]
    rows = [",".join(header)]
    table = {name: ([], []) for name, *_ in VARIANTS}
    rates = []
    for gname, gds, gops, rate in graphs_to_run:
        rates.append(rate)
        cells = [gname, repr(rate)]
        for name, use_l1, use_l2, mode in VARIANTS:
            cfg = replace(base_cfg,
                          lambda1=lambda1 if use_l1 else 0.0,
                          lambda2=lambda2 if use_l2 else 0.0,
                          mode=mode)
            accs = []
            for seed in seeds:
                _, report = train(gds, gops, replace(cfg, seed=seed))
                accs.append(report.test_accuracy)
            mean, sd = _summarize(accs)
            table[name][0].append(mean)
            table[name][1].append(sd)
            cells += [repr(mean), repr(sd)]
        rows.append(",".join(cells))

    run.write_text("variants.csv", "\n".join(rows) + "\n")
    if not args.no_figures:
        run.add(figures.save_variants_figure(
            rates, table, run.path("variants.png"),
            title=f"Variants on {ds.name}"))
    run.finish()


def cmd_diagnose(args) -> None:
    ds = _dataset_from_args(args)
    ops = normalized_operators(ds.graph)
    model, cfg = load_checkpoint(args.checkpoint)

    logits, _ = forward(model, ds, ops, cfg, train_mode=False)
    diffs = ops.Delta_tilde @ logits
    norms = np.linalg.norm(diffs, axis=1)
    edges = ds.graph.edges
    wrong = ds.labels[edges[:, 0]] != ds.labels[edges[:, 1]]

    smoothness: float | str
    if wrong.any() and (~wrong).any() and norms[~wrong].mean() > 0:
        smoothness = float(norms[wrong].mean() / norms[~wrong].mean())
    else:
        smoothness = "undef"
    sparsity: float | str
    sparsity = float(np.mean(norms < args.threshold)) if norms.size else "undef"

    run = _Run("diagnose", args.out,
               config={"threshold": args.threshold, "train": cfg.to_dict()},
               inputs=[args.dataset, args.checkpoint])
    metrics = {
        "smoothness_ratio": smoothness,
        "sparsity_ratio": sparsity,
        "threshold": args.threshold,
        "num_edges": int(norms.size),
        "num_wrong_edges": int(wrong.sum()),
        "forward_mode": "eval",          # dropout off for diagnostics
    }
    run.write_text("metrics.json", json.dumps(metrics, indent=2) + "\n")
    if not args.no_figures:
        run.add(figures.save_edge_norm_figure(
            norms, args.threshold, run.path("edge_norms.png"),
            title=f"Edge-difference norms on {ds.name}"))
    run.finish()


def cmd_sweep_k(args) -> None:
    ds = _dataset_from_args(args)
    ops = normalized_operators(ds.graph)
    seeds = _parse_seeds(args.seeds)
    ks = _parse_k_list(args.k_list)

    cfg0 = _train_config(args, seeds[0])
    run = _Run("sweep-k", args.out, config=cfg0.to_dict(), seeds=seeds,
               inputs=[args.dataset])
    rows = ["K,accuracy_mean,accuracy_sd"]
    means, sds = [], []
    for k in ks:
        accs = []
        for seed in seeds:
            _, report = train(ds, ops, replace(cfg0, k=k, seed=seed))
            accs.append(report.test_accuracy)
        mean, sd = _summarize(accs)
        means.append(mean)
        sds.append(sd)
        rows.append(f"{k},{mean!r},{sd!r}")
    run.write_text("sweep_k.csv", "\n".join(rows) + "\n")
    if not args.no_figures:
        run.add(figures.save_sweep_figure(ks, means, sds,
                                          run.path("sweep_k.png"),
                                          title=f"Accuracy vs K on {ds.name}"))
    run.finish()


# ---------------------------------------------------------------------------
# argument wiring

def _add_out(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, write only CSV/JSON")


def _add_solver_flags(p, with_config=True):
    p.add_argument("--lambda1", type=float, default=None,
                   help="TV penalty weight (default 0 for denoise, 3 for training)")
    p.add_argument("--lambda2", type=float, default=None,
                   help="quadratic penalty weight (default 0 for denoise, 3 for training)")
    p.add_argument("--mode", choices=[m.value for m in Penalty], default=None,
                   help="TV penalty type (default l21)")
    p.add_argument("--k", type=int, default=None,
                   help="propagation steps (default 10)")
    if with_config:
        p.add_argument("--gamma", type=float, default=None,
                       help="primal stepsize override")
        p.add_argument("--beta", type=float, default=None,
                       help="dual stepsize override")
        p.add_argument("--config", default=None,
                       help="key-value solver config file")


def _add_dataset_flags(p):
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--split", choices=["planetoid", "fraction"],
                   default="planetoid",
                   help="split protocol when masks.csv is absent")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for generated splits")
    p.add_argument("--identity-features", action="store_true",
                   help="use I_n when features.csv is absent")
    p.add_argument("--lcc", action="store_true",
                   help="restrict to the largest connected component")
    p.add_argument("--row-normalize", action="store_true",
                   help="rescale feature rows to unit sum")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seeds", default="0", help="comma-separated seed list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elasticgraph",
        description="Elastic graph smoothing, training, and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="smooth a signal over a graph")
    p.add_argument("--edges", required=True, help="edge-list file")
    p.add_argument("--signal", required=True, help="CSV signal, one row per node")
    p.add_argument("--n", type=int, default=None,
                   help="node count (default: inferred from the edge list)")
    _add_solver_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="train over one or more seeds")
    _add_dataset_flags(p)
    _add_solver_flags(p, with_config=False)
    _add_train_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("variants", help="penalty-variant matrix over graphs")
    _add_dataset_flags(p)
    p.add_argument("--perturbed", nargs="*", default=[],
                   help="perturbed edge-list files")
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seeds", default="0", help="comma-separated seed list")
    _add_out(p)
    p.set_defaults(func=cmd_variants)

    p = sub.add_parser("diagnose", help="smoothness/sparsity metrics")
    _add_dataset_flags(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.npz)")
    p.add_argument("--threshold", type=float, default=0.1,
                   help="sparsity threshold on edge-difference norms")
    _add_out(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep-k", help="accuracy vs propagation depth")
    _add_dataset_flags(p)
    p.add_argument("--k-list", required=True,
                   help="comma-separated propagation depths")
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--mode", choices=[m.value for m in Penalty], default=None)
    _add_train_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_sweep_k)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
