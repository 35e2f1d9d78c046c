"""Command-line entry point: ``karst {train,merge,verify,bench,transfer,default-config}``.

Exit codes: 0 success, 1 verification or run failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import verify as verify_mod
from .adapter import AdapterShapeError
from .config import ConfigError, ExperimentConfig, OutputSection, default_config_yaml, load_config
from .numerics import make_rng
from .serialize import ModelFileError, load_model, save_merged, save_model
from .training import TrainingDiverged, build_model, forward, make_task, merge_model, merged_forward, train
from .training.experiments import transfer_study

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CSV_COLUMNS = ("epoch", "train_loss", "train_acc", "test_acc", "param_count", "seed")
MERGE_TOL = 1e-10
PROBE_BATCH = 64

log = logging.getLogger("karst")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def metrics_csv(history: list[dict], resolved: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {_dumps(resolved)}\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in history:
        writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out_dir: Path) -> list[dict]:
    """Train per ``cfg`` and write config.json, metrics.jsonl, metrics.csv and model.npz."""
    resolved = cfg.resolved()
    task = make_task(cfg.task.recipe, cfg.task_seed, cfg.task.spec())
    model = build_model(task.base, cfg.train)
    out_dir.mkdir(parents=True, exist_ok=True)
    history = train(model, task, cfg.train)
    (out_dir / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "metrics.jsonl", "w") as fh:
        fh.write(_dumps({"type": "config", "config": resolved}) + "\n")
        for row in history:
            fh.write(_dumps({"type": "epoch", **row}) + "\n")
    (out_dir / "metrics.csv").write_text(metrics_csv(history, resolved))
    save_model(out_dir / "model.npz", model, {"config": resolved, "task": task.describe()})
    return history


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out:
            cfg = replace(cfg, output=OutputSection(args.out))
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    out_dir = Path(cfg.output.dir)
    try:
        history = run_experiment(cfg, out_dir)
    except AdapterShapeError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except TrainingDiverged as exc:
        _err(str(exc))
        return EXIT_FAIL
    last = history[-1]
    print(
        f"trained {cfg.train.method} for {cfg.train.epochs} epochs (seed {cfg.train.seed}): "
        f"loss {history[0]['train_loss']:.4f} -> {last['train_loss']:.4f}, "
        f"train acc {last['train_acc']:.3f}, test acc {last['test_acc']:.3f}, "
        f"{last['param_count']} trainable params; outputs in {out_dir}"
    )
    return EXIT_OK


def cmd_merge(args) -> int:
    try:
        model, meta = load_model(args.model)
    except ModelFileError as exc:
        _err(str(exc))
        return EXIT_USAGE
    merged = merge_model(model)
    seed = meta.get("config", {}).get("train", {}).get("seed", 0)
    probe = make_rng(seed).standard_normal((PROBE_BATCH, model.d_in))
    reference, _ = forward(model, probe)
    deviation = float(np.max(np.abs(merged_forward(merged, probe) - reference)))
    save_merged(args.out, merged, {"config": meta.get("config"), "merge_probe_max_deviation": deviation})
    print(f"max output deviation over {PROBE_BATCH} probe inputs: {deviation:.3e}")
    if deviation > MERGE_TOL:
        _err(f"merge deviation {deviation:.3e} exceeds {MERGE_TOL:.0e}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    results = verify_mod.run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:{width}s}  {r.seconds:7.3f}s  {r.detail}")
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} families passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if n_pass == len(results) else EXIT_FAIL


def cmd_bench(args) -> int:
    try:
        res = bench_mod.run_bench(args.d_in, args.d_out, args.m, args.r, args.n, batch=args.batch, reps=args.reps, seed=args.seed)
    except (AdapterShapeError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    text = res.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not res.flops_match:
        _err(f"structured apply issued {res.structured_tally} multiplies, formula says {res.structured_formula}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_transfer(args) -> int:
    study = transfer_study(seeds=tuple(args.seeds), m=args.m, r=args.r)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["variant", *[f"seed_{s}" for s in study.seeds], "median"])
    for name, losses in study.losses.items():
        writer.writerow([name, *[repr(v) for v in losses], repr(study.median(name))])
    checks = {
        "karst beats probe on every seed": study.beats_probe,
        "re-scaling does not worsen median loss": study.rescale_helps,
        "median loss non-increasing in N": study.kernel_trend,
    }
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=sys.stderr)
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_default_config(args) -> int:
    sys.stdout.write(default_config_yaml())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="karst", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a synthetic task from a YAML config")
    p.add_argument("--config", help="YAML config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", help="override output.dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("merge", help="fold adapters and re-scaling into plain affine layers")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("verify", help="run the built-in property checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time dense, structured and merged application")
    p.add_argument("--d-in", type=int, default=768)
    p.add_argument("--d-out", type=int, default=768)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--r", type=int, default=8)
    p.add_argument("--n", type=int, default=2, help="kernel count")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("transfer", help="multi-seed probe / adapter / kernel-count comparison")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--r", type=int, default=2)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("default-config", help="print the default YAML config")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
