"""Command-line interface: gen-data, run, sweep, eval, report."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import nn
from .config import RunConfig, load_config, parse_variant
from .data import (BlobSpec, generate_gaussian_stream, load_dataset,
                   read_checkpoint, save_dataset)
from .metrics import step_report
from .protocol import run_experiment, run_sweep, variant_name

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class UsageError(Exception):
    pass


def _load_inputs(args):
    """Config and dataset problems are usage errors (exit 2)."""
    try:
        cfg = load_config(args.config, overrides=_config_overrides(args))
        dataset = load_dataset(args.data)
    except (ValueError, FileNotFoundError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return cfg, dataset

_BLOB_FIELDS = {f.name: f.type for f in dataclasses.fields(BlobSpec)}


def _load_blob_spec(path: str) -> BlobSpec:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (p.strip() for p in line.split("=", 1))
            key = key.removeprefix("blob.")
            if key not in _BLOB_FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            kind = _BLOB_FIELDS[key]
            if kind.startswith("int"):
                values[key] = int(raw)
            else:
                values[key] = float(raw)
    return BlobSpec(**values)


def _config_overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    if args.mode is not None:
        over["mode"] = args.mode
    if args.variant is not None:
        variant, upl_k = parse_variant(args.variant)
        over["variant"] = variant
        over["upl_k"] = upl_k
    if args.q is not None:
        over["q"] = args.q
    if args.epochs is not None:
        over["epochs"] = args.epochs
    if args.batch is not None:
        over["batch_size"] = args.batch
    if args.lr is not None:
        over["lr"] = args.lr
    if args.temperature is not None:
        over["temperature"] = args.temperature
    if args.weight_decay is not None:
        over["weight_decay"] = args.weight_decay
    if args.step_size is not None:
        over["step_size"] = args.step_size
    if args.exemplar_policy is not None:
        over["exemplar_policy"] = args.exemplar_policy
    if args.bias_correction is not None:
        over["bias_correction"] = args.bias_correction == "on"
    if args.oracle_labels:
        over["oracle_labels"] = True
    if args.seed is not None:
        over["model_seed"] = args.seed
        over["shuffle_seed"] = args.seed
    return over


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--mode", choices=("offline", "online"))
    p.add_argument("--variant", help="ours|ffe|scratch|pca|upl-K")
    p.add_argument("--q", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--step-size", type=int, dest="step_size")
    p.add_argument("--exemplar-policy", choices=("herding", "random", "none"),
                   dest="exemplar_policy")
    p.add_argument("--bias-correction", choices=("on", "off"),
                   dest="bias_correction")
    p.add_argument("--oracle-labels", action="store_true", dest="oracle_labels")
    p.add_argument("--seed", type=int, help="model and shuffle seed")


def _default_out(cfg: RunConfig, tag: str) -> str:
    root = os.environ.get("PSEUDOCL_RUN_ROOT", "runs")
    return os.path.join(root, f"{tag}_{variant_name(cfg)}_seed{cfg.model_seed}")


def _print_report(reports, summary) -> None:
    print(f"{'step':>4} {'classes':>8} {'acc':>8} {'nmi':>8} {'ari':>8}")
    for r in reports:
        print(f"{r.step:>4} {r.classes_seen:>8} {r.acc:>8.4f} "
              f"{r.nmi:>8.4f} {r.ari:>8.4f}")
    print(f"Avg ACC {summary['avg_acc']:.4f}  Last ACC {summary['last_acc']:.4f}  "
          f"Avg NMI {summary['avg_nmi']:.4f}  Avg ARI {summary['avg_ari']:.4f}")


def cmd_gen_data(args) -> int:
    try:
        spec = _load_blob_spec(args.specfile)
    except (ValueError, FileNotFoundError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    save_dataset(generate_gaussian_stream(spec), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg, dataset = _load_inputs(args)
    out_dir = args.out or _default_out(cfg, "run")
    result = run_experiment(cfg, dataset, out_dir=out_dir)
    _print_report(result.reports, result.summary)
    print(f"run directory: {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg, dataset = _load_inputs(args)
    if "=" not in args.axis:
        raise UsageError("axis must look like 'q=2,5,10,20'")
    axis, raw = args.axis.split("=", 1)
    values = [v.strip() for v in raw.split(",") if v.strip()]
    out_dir = args.out or _default_out(cfg, f"sweep_{axis}")
    rows = run_sweep(cfg, dataset, axis.strip(), values, out_dir,
                     repeats=args.repeats, jobs=args.jobs)
    print(f"{axis:>12} {'seed':>6} {'avg_acc':>8} {'last_acc':>9}")
    for row in rows:
        print(f"{str(row['value']):>12} {row['seed']:>6} "
              f"{row['avg_acc']:>8.4f} {row['last_acc']:>9.4f}")
    print(f"sweep directory: {out_dir}")
    return 0


def cmd_eval(args) -> int:
    try:
        model, meta = read_checkpoint(args.checkpoint)
        dataset = load_dataset(args.data)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    classes = meta.get("classes_seen")
    if classes is None:
        raise UsageError("checkpoint carries no classes_seen metadata")
    eval_ids = dataset.ids_for_classes(np.array(classes), eval_split=True)
    x = dataset.features_for(eval_ids)
    preds = np.argmax(nn.forward(model, x), axis=1)
    truth = dataset.sealed.reveal(dataset.positions(eval_ids))
    rep = step_report(meta.get("step", 0), model.out_dim, preds, truth)
    line = f"step={rep.step} classes={rep.classes_seen} acc={rep.acc!r} " \
           f"nmi={rep.nmi!r} ari={rep.ari!r}"
    print(line)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("step,classes_seen,acc,nmi,ari\n")
            fh.write(f"{rep.step},{rep.classes_seen},{rep.acc!r},"
                     f"{rep.nmi!r},{rep.ari!r}\n")
    return 0


def cmd_report(args) -> int:
    report_path = os.path.join(args.run_dir, "report.csv")
    with open(report_path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    print(" ".join(f"{h:>12}" for h in header))
    for line in lines[1:]:
        cells = []
        for c in line.split(","):
            try:
                cells.append(f"{float(c):>12.4f}" if "." in c else f"{c:>12}")
            except ValueError:
                cells.append(f"{c:>12}")
        print(" ".join(cells))
    summary_path = os.path.join(args.run_dir, "summary.csv")
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            keys, vals = (l.split(",") for l in fh.read().splitlines()[:2])
        print("; ".join(f"{k}={v}" for k, v in zip(keys, vals)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudocl",
        description="Unsupervised class-incremental continual learning "
                    "with cluster-derived pseudo labels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic feature dataset")
    p.add_argument("specfile", help="blob spec (key = value)")
    p.add_argument("out", help="output dataset CSV")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config", help="run config file (key = value)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("config")
    p.add_argument("--axis", required=True, help="e.g. q=2,5,10,20")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="re-evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="pretty-print a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - runtime failure path
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
