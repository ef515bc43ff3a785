"""Experiment driver: train originals, unlearn, evaluate, sweep, report.

Artifacts live under one root (``--artifacts`` flag or the
``UNLEARNKIT_ARTIFACTS`` environment variable, default ``./artifacts``):

    artifacts/
      manifest.json                     run index (single writer)
      checkpoints/<train_hash>/         model.json + meta.json
      runs/<config_hash>/               config.json, report.json,
                                        model_prime.json, trace.csv
      reports/                          leaderboard outputs

Exit codes: 0 success, 1 configuration error, 2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics
from .config import UnlearnConfig, config_hash, load_config_file, train_hash
from .data import generate
from .errors import (BudgetError, ConfigError, DomainError,
                     InsufficientDataError, NumericError, ShapeError,
                     UnlearnkitError)
from .manifest import Manifest
from .metrics import EvalReport, build_report
from .nn import Model
from .report import collect_runs, write_leaderboard
from .unlearn import (RunRecorder, train_original, unlearn as run_unlearn,
                      write_trace_csv)

ENV_ARTIFACTS = "UNLEARNKIT_ARTIFACTS"

_CONFIG_FIELDS = [f.name for f in dataclasses.fields(UnlearnConfig)]


def _artifacts_root(args) -> Path:
    if args.artifacts:
        return Path(args.artifacts)
    return Path(os.environ.get(ENV_ARTIFACTS, "artifacts"))


def _resolve_config(args) -> UnlearnConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _CONFIG_FIELDS:
        raw = getattr(args, name, None)
        if raw is not None:
            values[name] = raw  # flags win over the file
    return UnlearnConfig.from_mapping(values)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    for name in _CONFIG_FIELDS:
        parser.add_argument(f"--{name}", default=None, metavar="V",
                            help=argparse.SUPPRESS)


def _checkpoint_dir(root: Path, cfg: UnlearnConfig) -> Path:
    return root / "checkpoints" / train_hash(cfg)


def _run_dir(root: Path, cfg: UnlearnConfig) -> Path:
    return root / "runs" / config_hash(cfg)


# ----------------------------------------------------------------------- train

def ensure_checkpoint(root: Path, cfg: UnlearnConfig, manifest: Manifest,
                      force: bool = False, quiet: bool = False) -> Path:
    """Train (or reuse) the original model for this config; return its directory."""
    ckpt_dir = _checkpoint_dir(root, cfg)
    key = train_hash(cfg)
    model_path = ckpt_dir / "model.json"
    if model_path.exists() and manifest.is_done(key) and not force:
        if not quiet:
            print(f"checkpoint {key} already exists at {ckpt_dir} (use --force to retrain)")
        return ckpt_dir
    spec = cfg.data_spec()
    split = generate(spec)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    manifest.start(key, "train", ckpt_dir, force=True)
    recorder = RunRecorder(split)
    start = time.perf_counter()
    try:
        model = train_original(split, cfg, recorder)
    except NumericError:
        write_trace_csv(recorder.rows, ckpt_dir / "trace.csv")
        manifest.finish(key, "failed", "non-finite training loss")
        raise
    seconds = time.perf_counter() - start
    model.save(model_path)
    test_acc = metrics.accuracy(model, split.test_x, split.test_y)
    meta = {"train_seconds": seconds, "test_acc": test_acc,
            "train_config": cfg.train_dict(), "flos": recorder.flos}
    (ckpt_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    write_trace_csv(recorder.rows, ckpt_dir / "trace.csv")
    manifest.finish(key, "done")
    if not quiet:
        print(f"trained original {key}: test_acc={test_acc:.1f} "
              f"seconds={seconds:.3f} -> {ckpt_dir}")
    return ckpt_dir


def cmd_train(args) -> int:
    root = _artifacts_root(args)
    cfg = _resolve_config(args)
    ensure_checkpoint(root, cfg, Manifest(root), force=args.force)
    return 0


# --------------------------------------------------------------------- unlearn

def _load_checkpoint(root: Path, cfg: UnlearnConfig) -> tuple[Model, dict]:
    ckpt_dir = _checkpoint_dir(root, cfg)
    model_path = ckpt_dir / "model.json"
    if not model_path.exists():
        raise ConfigError(
            f"no trained checkpoint for this config (expected {model_path}); "
            f"run 'unlearnkit train' with the same data_name/backbone/seed/train_* "
            f"settings first")
    meta = json.loads((ckpt_dir / "meta.json").read_text())
    return Model.load(model_path), meta


def execute_unlearn(root: Path, cfg: UnlearnConfig, no_budget: bool = False) -> Path:
    """Run unlearn + evaluate and write the full artifact directory."""
    f, meta = _load_checkpoint(root, cfg)
    split = generate(cfg.data_spec()).with_deletion(cfg.del_ratio)
    if cfg.budget_seconds is None and not no_budget and cfg.unlearn_method != "exact_retrain":
        # The recorded training time is the practical ceiling for unlearning.
        cfg = dataclasses.replace(cfg, budget_seconds=meta["train_seconds"])
    run_dir = _run_dir(root, cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        run = run_unlearn(cfg.unlearn_method, f, split, cfg)
    except (NumericError, BudgetError) as exc:
        trace = getattr(exc, "trace", [])
        if trace:
            write_trace_csv(trace, run_dir / "trace.csv")
        raise
    report = build_report(run.model, split, seconds=run.seconds, flos=run.flos,
                          config_hash=config_hash(cfg), seed=cfg.seed)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.resolved_dict(), indent=2, sort_keys=True))
    run.model.save(run_dir / "model_prime.json")
    write_trace_csv(run.trace, run_dir / "trace.csv")
    report.save(run_dir / "report.json")
    return run_dir


def cmd_unlearn(args) -> int:
    root = _artifacts_root(args)
    cfg = _resolve_config(args)
    key = config_hash(cfg)
    run_dir = _run_dir(root, cfg)
    manifest = Manifest(root)
    if manifest.is_done(key) and (run_dir / "report.json").exists() and not args.force:
        print(f"run {key} already complete at {run_dir} (use --force to redo)")
        print((run_dir / "report.json").read_text())
        return 0
    manifest.start(key, "unlearn", run_dir, force=True)
    try:
        execute_unlearn(root, cfg, no_budget=args.no_budget)
    except UnlearnkitError as exc:
        manifest.finish(key, "failed", str(exc))
        raise
    manifest.finish(key, "done")
    print(f"run {key} complete -> {run_dir}")
    print((run_dir / "report.json").read_text())
    return 0


# -------------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    root = _artifacts_root(args)
    if args.run:
        run_dir = Path(args.run)
        cfg = UnlearnConfig.from_mapping(
            json.loads((run_dir / "config.json").read_text()))
        model = Model.load(run_dir / "model_prime.json")
        stored = EvalReport.load(run_dir / "report.json")
        seconds, flos = stored.seconds, stored.flos
    else:
        cfg = _resolve_config(args)
        ckpt_dir = _checkpoint_dir(root, cfg)
        if not (ckpt_dir / "model.json").exists():
            raise ConfigError(f"no checkpoint at {ckpt_dir}; run 'unlearnkit train' first")
        model = Model.load(ckpt_dir / "model.json")
        meta = json.loads((ckpt_dir / "meta.json").read_text())
        seconds, flos = meta["train_seconds"], meta.get("flos", 0.0)
    split = generate(cfg.data_spec()).with_deletion(cfg.del_ratio)
    report = build_report(model, split, seconds=seconds, flos=flos,
                          config_hash=config_hash(cfg), seed=cfg.seed)
    print(report.to_json())
    return 0


# ----------------------------------------------------------------------- sweep

def _parse_grid_field(text: str, kind=int) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part and kind is int and not part.startswith("-"):
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(kind(part))
    if not out:
        raise ConfigError(f"empty grid field {text!r}")
    return out


def _sweep_job(cfg_dict: dict, root: str, no_budget: bool) -> tuple[str, str, str]:
    cfg = UnlearnConfig.from_mapping(cfg_dict)
    key = config_hash(cfg)
    try:
        run_dir = execute_unlearn(Path(root), cfg, no_budget=no_budget)
        return key, "done", str(run_dir)
    except UnlearnkitError as exc:
        return key, "failed", f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    root = _artifacts_root(args)
    base = _resolve_config(args)
    methods = _parse_grid_field(args.methods, str)
    ratios = _parse_grid_field(args.ratios, int)
    seeds = _parse_grid_field(args.seeds, int)
    manifest = Manifest(root)

    grid: list[UnlearnConfig] = []
    seen = set()
    for method in methods:
        for ratio in ratios:
            for seed in seeds:
                cfg = dataclasses.replace(base, unlearn_method=method,
                                          del_ratio=ratio, seed=seed)
                key = config_hash(cfg)
                if key in seen:
                    print(f"warning: duplicate grid entry {method}/r{ratio}/s{seed}, skipping")
                    continue
                seen.add(key)
                grid.append(cfg)
    print(f"sweep: {len(grid)} runs ({len(methods)} methods x {len(ratios)} "
          f"ratios x {len(seeds)} seeds)")

    # Originals are shared across methods/ratios; train them up front, serially.
    for seed in seeds:
        ensure_checkpoint(root, dataclasses.replace(base, seed=seed), manifest,
                          quiet=True)

    pending = []
    for cfg in grid:
        key = config_hash(cfg)
        if manifest.is_done(key) and (_run_dir(root, cfg) / "report.json").exists():
            continue  # resume: never redo a completed run
        manifest.start(key, "unlearn", _run_dir(root, cfg), force=True)
        pending.append(cfg)
    print(f"sweep: {len(grid) - len(pending)} already done, {len(pending)} to run")

    failures = 0
    if args.workers > 1 and pending:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_job, cfg.to_dict(), str(root), args.no_budget)
                       for cfg in pending]
            for future in futures:
                key, status, message = future.result()
                manifest.finish(key, status, message if status == "failed" else None)
                failures += status == "failed"
    else:
        for cfg in pending:
            key, status, message = _sweep_job(cfg.to_dict(), str(root), args.no_budget)
            manifest.finish(key, status, message if status == "failed" else None)
            failures += status == "failed"
            print(f"  {cfg.unlearn_method} r={cfg.del_ratio} s={cfg.seed}: {status}")
    print(f"sweep finished: {len(pending) - failures} ok, {failures} failed, "
          f"manifest at {manifest.path}")
    return 0 if failures == 0 else 2


# ---------------------------------------------------------------------- report

def cmd_report(args) -> int:
    root = _artifacts_root(args)
    if args.run_dirs:
        run_dirs = [Path(d) for d in args.run_dirs]
    else:
        run_dirs = sorted((root / "runs").glob("*"))
    records = collect_runs(run_dirs)
    if not records:
        raise ConfigError("no completed runs found (need report.json + config.json)")
    out_dir = Path(args.out) if args.out else root / "reports"
    paths = write_leaderboard(records, out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


# ------------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unlearnkit",
        description="Machine unlearning experiments on synthetic data: train, "
                    "unlearn, evaluate, sweep, report.")
    parser.add_argument("--artifacts", default=None,
                        help=f"artifact root (default: ${ENV_ARTIFACTS} or ./artifacts)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and checkpoint an original model")
    _add_config_flags(p_train)
    p_train.add_argument("--force", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_unlearn = sub.add_parser("unlearn", help="run one unlearning + evaluation")
    _add_config_flags(p_unlearn)
    p_unlearn.add_argument("--force", action="store_true")
    p_unlearn.add_argument("--no-budget", action="store_true",
                           help="do not cap unlearning at the recorded training time")
    p_unlearn.set_defaults(func=cmd_unlearn)

    p_eval = sub.add_parser("evaluate", help="recompute the metric bundle")
    _add_config_flags(p_eval)
    p_eval.add_argument("--run", help="existing run directory to evaluate")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="methods x ratios x seeds grid")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--methods", required=True,
                         help="comma-separated method names")
    p_sweep.add_argument("--ratios", default="1-10",
                         help="deletion ratios, e.g. 1-10 or 1,5,10")
    p_sweep.add_argument("--seeds", default="0-4", help="seeds, e.g. 0-4 or 0,7")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--no-budget", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="aggregate runs into a leaderboard")
    p_report.add_argument("run_dirs", nargs="*", help="run directories (default: all)")
    p_report.add_argument("--out", help="output directory (default: <artifacts>/reports)")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, DomainError, InsufficientDataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except UnlearnkitError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
