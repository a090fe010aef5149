"""Command-line entry point.

Subcommands cover the whole pipeline:

  synth    generate a synthetic dataset with ground-truth labels
  train    train one (task, architecture, backbone) configuration
  grid     hyperparameter grid search (full 72-point grid or --reduced)
  eval     evaluate a checkpoint on a dataset split
  report   aggregate eval reports into an accuracy table
  repro    self-contained end-to-end run: synth, split, train the five
           fusion architectures over multiple seeds, aggregate, report

Configuration precedence is flags over --config file (JSON) over built-in
defaults. The TOOLACT_DATA_ROOT environment variable supplies the default
dataset directory. Exit codes: 0 success, 2 usage or configuration error,
1 runtime error. Every subcommand writes a run_manifest.json into its
output directory before doing any work.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

from .core import (
    BACKBONE_FAMILIES,
    FusionConfig,
    FusionVariant,
    TaskSpec,
    config_hash,
)
from .data import (
    ArrayExamples,
    CachedViews,
    NormStats,
    SampleSet,
    SplitSpec,
    compute_norm_stats,
    load_manifest,
    load_split,
    split_dataset,
    split_ratios_for,
    write_split,
)
from .errors import ConfigurationError, SplitError, ToolactError
from .evaluation import (
    ResultEntry,
    evaluate,
    save_eval_report,
    write_results_table,
)
from .models import load_checkpoint
from .synth import generate_synthetic_dataset, oracle_accuracy
from .training import (
    GridSpace,
    TrainConfig,
    checkpoint_metric_name,
    grid_search,
    run_seeds,
)

DATA_ROOT_ENV = "TOOLACT_DATA_ROOT"

TASK_NAMES = tuple(t.value for t in TaskSpec)
ARCH_NAMES = tuple(v.value for v in FusionVariant)

# Keys a --config file may set, mirroring TrainConfig and FusionConfig.
CONFIG_FILE_KEYS = {
    "task", "arch", "backbone", "learning_rate", "batch_size", "epochs",
    "seed", "first_block_kernel", "first_block_stride", "tiny_width",
    "split_seed",
}


class UsageError(ConfigurationError):
    """Bad command-line input; mapped to exit code 2."""


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_run_manifest(
    out_dir: Path,
    subcommand: str,
    resolved: dict,
    inputs: dict,
    outputs: dict,
    seeds: Sequence[int],
) -> Path:
    """Record what is about to run: resolved configuration, paths, seeds,
    timestamp and the configuration hash. Written before any work so an
    interrupted run is diagnosable."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": subcommand,
        "resolved_config": resolved,
        "inputs": inputs,
        "outputs": outputs,
        "seeds": list(seeds),
        "timestamp": _now(),
        "config_hash": config_hash(resolved),
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    file_path = Path(path)
    if not file_path.is_file():
        raise UsageError(f"config file not found: {file_path}")
    try:
        data = json.loads(file_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {file_path} is not valid JSON: {err.msg}") from err
    if not isinstance(data, dict):
        raise UsageError(f"config file {file_path} must hold a JSON object")
    unknown = set(data) - CONFIG_FILE_KEYS
    if unknown:
        raise UsageError(f"config file {file_path} has unknown keys: {sorted(unknown)}")
    return data


def _resolve(flag_value, file_config: dict, key: str, default):
    """flags > config file > defaults."""
    if flag_value is not None:
        return flag_value
    if key in file_config:
        return file_config[key]
    return default


def _data_dir(args) -> Path:
    data = getattr(args, "data", None) or os.environ.get(DATA_ROOT_ENV)
    if not data:
        raise UsageError(f"no dataset directory: pass --data or set {DATA_ROOT_ENV}")
    data_dir = Path(data)
    if not (data_dir / "manifest.jsonl").is_file():
        raise UsageError(f"no manifest.jsonl under {data_dir}")
    return data_dir


def prepare_splits(
    data_dir: Path, split_seed: int, ratios: tuple[int, int, int] | None = None
) -> tuple[SampleSet, SampleSet, SampleSet, NormStats]:
    """Split a dataset and compute train-split normalization statistics,
    cached in a sidecar directory so repeated runs skip the image pass.
    When no ratios are given they are derived from the per-group repetition
    count in 6:2:2 proportion (ten repetitions give (6, 2, 2))."""
    split_dir = data_dir / "splits" / f"seed{split_seed}"
    if (split_dir / "split.json").is_file():
        train, val, test, spec, stats = load_split(split_dir, data_dir)
        if spec.seed == split_seed and (ratios is None or spec.ratios == ratios):
            return train, val, test, stats
    dataset = load_manifest(data_dir / "manifest.jsonl")
    if ratios is None:
        group_sizes = {len(reps) for reps in dataset.groups().values()}
        if len(group_sizes) != 1:
            raise SplitError(f"groups have unequal repetition counts: {sorted(group_sizes)}")
        ratios = split_ratios_for(group_sizes.pop())
    spec = SplitSpec(ratios=ratios, seed=split_seed)
    train, val, test = split_dataset(dataset, spec)
    stats = compute_norm_stats(train)
    write_split(split_dir, train, val, test, spec, stats)
    return train, val, test, stats


def _example_builders(
    train: SampleSet, val: SampleSet, test: SampleSet, stats: NormStats, task: TaskSpec
) -> tuple[Callable[[FusionConfig], tuple[ArrayExamples, ArrayExamples]], Callable[[FusionConfig], ArrayExamples]]:
    """(train+val, test) example builders sharing per-split image caches."""
    caches = {"train": CachedViews(train), "val": CachedViews(val), "test": CachedViews(test)}
    datasets = {"train": train, "val": val, "test": test}

    def build(split: str, fusion: FusionConfig) -> ArrayExamples:
        views = caches[split].get(fusion.variant.image_keys)
        return ArrayExamples.build(datasets[split], task, fusion, stats, view_arrays=views)

    def train_val(fusion: FusionConfig) -> tuple[ArrayExamples, ArrayExamples]:
        return build("train", fusion), build("val", fusion)

    def test_only(fusion: FusionConfig) -> ArrayExamples:
        return build("test", fusion)

    return train_val, test_only


def cmd_synth(args) -> int:
    out = Path(args.out or os.environ.get(DATA_ROOT_ENV) or "")
    if str(out) in ("", "."):
        raise UsageError(f"no output directory: pass --out or set {DATA_ROOT_ENV}")
    if args.objects < 1 or args.objects > 20:
        raise UsageError(f"--objects must be in [1, 20], got {args.objects}")
    if args.reps < 1 or args.reps > 10:
        raise UsageError(f"--reps must be in [1, 10], got {args.reps}")
    resolved = {"objects": args.objects, "reps": args.reps, "seed": args.seed}
    write_run_manifest(out, "synth", resolved, inputs={}, outputs={"dataset": str(out)}, seeds=[args.seed])
    dataset = generate_synthetic_dataset(
        out, objects=args.objects, repetitions=args.reps, seed=args.seed, progress=args.progress
    )
    print(f"wrote {len(dataset)} samples ({6 * len(dataset)} images) to {out}")
    if args.check_oracle:
        acc = oracle_accuracy(dataset)
        print(f"oracle joint accuracy: {acc['joint_accuracy']:.4f} over {int(acc['n'])} samples")
        if acc["joint_accuracy"] < 1.0:
            print("error: oracle disagrees with generator labels", file=sys.stderr)
            return 1
    return 0


def _train_settings(args) -> dict:
    """Merge flags, config file and defaults into one settings dict."""
    file_config = _load_config_file(args.config)
    settings = {
        "task": _resolve(args.task, file_config, "task", None),
        "arch": _resolve(args.arch, file_config, "arch", None),
        "backbone": _resolve(args.backbone, file_config, "backbone", "tiny"),
        "learning_rate": float(_resolve(args.lr, file_config, "learning_rate", 1e-3)),
        "batch_size": int(_resolve(args.batch_size, file_config, "batch_size", 64)),
        "epochs": int(_resolve(args.epochs, file_config, "epochs", 150)),
        "seed": int(_resolve(args.seed, file_config, "seed", 0)),
        "first_block_kernel": int(_resolve(args.kernel, file_config, "first_block_kernel", 7)),
        "first_block_stride": int(_resolve(args.stride, file_config, "first_block_stride", 2)),
        "tiny_width": int(_resolve(args.tiny_width, file_config, "tiny_width", 64)),
        "split_seed": int(_resolve(args.split_seed, file_config, "split_seed", 0)),
    }
    if settings["task"] is None:
        raise UsageError("--task is required (or set it in the config file)")
    if settings["arch"] is None:
        raise UsageError("--arch is required (or set it in the config file)")
    if settings["backbone"] not in BACKBONE_FAMILIES:
        raise UsageError(f"unknown backbone {settings['backbone']!r}; choose from {BACKBONE_FAMILIES}")
    return settings


def cmd_train(args) -> int:
    s = _train_settings(args)
    task = TaskSpec.from_name(s["task"])
    # Reject incompatible task/architecture pairs before loading any data.
    fusion = FusionConfig.create(
        s["arch"], task=task, family=s["backbone"],
        first_block_kernel=s["first_block_kernel"], first_block_stride=s["first_block_stride"],
        tiny_width=s["tiny_width"],
    )
    data_dir = _data_dir(args)
    run_dir = Path(args.out) if args.out else data_dir / "runs" / (
        f"{task.value.replace('+', '-')}_{s['arch']}_{s['backbone']}_seed{s['seed']}"
    )
    write_run_manifest(
        run_dir, "train", {**s, "architecture": fusion.to_dict()},
        inputs={"data": str(data_dir)}, outputs={"run_dir": str(run_dir)}, seeds=[s["seed"]],
    )

    train_set, val_set, test_set, stats = prepare_splits(data_dir, s["split_seed"])
    train_val_builder, _ = _example_builders(train_set, val_set, test_set, stats, task)
    config = TrainConfig(
        learning_rate=s["learning_rate"], batch_size=s["batch_size"],
        epochs=s["epochs"], seed=s["seed"],
    )
    from .training import build_and_train

    _, history = build_and_train(
        s["arch"], task, train_val_builder, config,
        family=s["backbone"], first_block_kernel=s["first_block_kernel"],
        first_block_stride=s["first_block_stride"], tiny_width=s["tiny_width"],
        run_dir=run_dir, normalization=stats, progress=args.progress,
    )
    best = history.best_record
    print(f"run dir: {run_dir}")
    print(f"best epoch {history.best_index}: "
          + " ".join(f"val_{k}={v:.4f}" for k, v in (
              ("tool", best.val_acc_tool), ("action", best.val_acc_action), ("joint", best.val_acc_joint))
              if v is not None))
    return 0


def cmd_grid(args) -> int:
    s = _train_settings(args)
    task = TaskSpec.from_name(s["task"])
    FusionConfig.create(s["arch"], task=task, family=s["backbone"], tiny_width=s["tiny_width"])
    data_dir = _data_dir(args)
    out_dir = Path(args.out) if args.out else data_dir / "grid" / f"{task.value.replace('+', '-')}_{s['arch']}_{s['backbone']}"
    space = GridSpace.reduced() if args.reduced else GridSpace.full()
    epochs = int(args.epochs if args.epochs is not None else 10)
    write_run_manifest(
        out_dir, "grid",
        {**s, "epochs": epochs, "space": {
            "learning_rates": list(space.learning_rates), "batch_sizes": list(space.batch_sizes),
            "kernels": list(space.kernels), "strides": list(space.strides)}},
        inputs={"data": str(data_dir)}, outputs={"trials": str(out_dir / "trials.csv")}, seeds=[s["seed"]],
    )
    if not args.reduced:
        print(f"full grid: {len(space)} trials x {epochs} epochs; use --reduced for a 4-trial search", file=sys.stderr)

    train_set, val_set, test_set, stats = prepare_splits(data_dir, s["split_seed"])
    train_val_builder, _ = _example_builders(train_set, val_set, test_set, stats, task)
    result = grid_search(
        space, task, s["arch"], train_val_builder,
        family=s["backbone"], tiny_width=s["tiny_width"], epochs=epochs, seed=s["seed"],
        progress=args.progress,
    )
    result.to_csv(out_dir / "trials.csv")
    b = result.best
    print(f"trials: {out_dir / 'trials.csv'} ({len(result.trials)} rows)")
    print(f"best: lr={b.learning_rate} batch={b.batch_size} kernel={b.first_block_kernel} "
          f"stride={b.first_block_stride} val={b.val_accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    model, payload = load_checkpoint(ckpt_path)
    task_name = args.task or payload.get("task")
    if not task_name:
        raise UsageError("checkpoint does not record a task; pass --task")
    task = TaskSpec.from_name(task_name)
    data_dir = _data_dir(args)
    out_dir = Path(args.out) if args.out else ckpt_path.parent / f"eval_{args.split}"
    write_run_manifest(
        out_dir, "eval",
        {"checkpoint": str(ckpt_path), "task": task.value, "split": args.split, "split_seed": args.split_seed},
        inputs={"data": str(data_dir), "checkpoint": str(ckpt_path)},
        outputs={"report": str(out_dir / "report.json")}, seeds=[args.split_seed],
    )

    train_set, val_set, test_set, stats = prepare_splits(data_dir, args.split_seed)
    part = {"train": train_set, "val": val_set, "test": test_set}[args.split]
    if payload.get("normalization"):
        stats = NormStats.from_dict(payload["normalization"])
    data = ArrayExamples.build(part, task, model.config, stats)
    report = evaluate(model, data, task)
    save_eval_report(
        report, out_dir,
        extra={
            "architecture": model.config.variant.value,
            "architecture_display": model.config.variant.display_name,
            "backbone": model.config.backbone.family,
            "headline_metric": checkpoint_metric_name(task),
            "split": args.split,
        },
    )
    print(f"report: {out_dir / 'report.json'}")
    print(" ".join(f"{k}={v:.4f}" for k, v in sorted(report.accuracies.items())))
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    inputs = [Path(p) for p in args.inputs]
    if not inputs:
        raise UsageError("report needs at least one report.json input")
    write_run_manifest(
        out_dir, "report", {"inputs": [str(p) for p in inputs]},
        inputs={"reports": [str(p) for p in inputs]},
        outputs={"table": str(out_dir / "results.txt")}, seeds=[],
    )
    grouped: dict[tuple[str, str], ResultEntry] = {}
    for path in inputs:
        if not path.is_file():
            raise UsageError(f"report input not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        for key in ("architecture_display", "backbone", "accuracies", "headline_metric"):
            if key not in data:
                raise UsageError(f"{path} lacks {key!r}; produce inputs with the eval subcommand")
        arch = data["architecture_display"]
        backbone = data["backbone"]
        value = float(data["accuracies"][data["headline_metric"]])
        entry = grouped.get((arch, backbone))
        if entry is None:
            grouped[(arch, backbone)] = ResultEntry(
                architecture=arch, backbone=backbone, values=(value,),
                config_hash=data.get("config_hash", ""),
            )
        else:
            entry.values = entry.values + (value,)
    txt_path, csv_path = write_results_table(list(grouped.values()), out_dir)
    print(f"table: {txt_path}")
    print((out_dir / "results.txt").read_text(encoding="utf-8"), end="")
    return 0


REPRO_FULL_WARNING = (
    "--full trains ResNet backbones over the complete grid at full scale; "
    "this takes days of CPU time. The default desk-scale run finishes in "
    "well under an hour."
)


def cmd_repro(args) -> int:
    out_dir = Path(args.out)
    if args.full:
        print(f"warning: {REPRO_FULL_WARNING}", file=sys.stderr)
        objects, reps, n_seeds, epochs = 20, 10, 5, 150
        backbones = ("resnet18", "resnet50", "resnet101")
    else:
        objects = args.objects
        reps = args.reps
        n_seeds = args.seeds
        epochs = args.epochs
        backbones = (args.backbone,)
    if n_seeds < 1:
        raise UsageError(f"--seeds must be >= 1, got {n_seeds}")
    if args.objects < 1 or args.objects > 20 or args.reps < 1 or args.reps > 10:
        raise UsageError("--objects must be in [1, 20] and --reps in [1, 10]")
    seeds = list(range(args.seed, args.seed + n_seeds))
    task = TaskSpec.tools_plus_actions

    resolved = {
        "objects": objects, "reps": reps, "seeds": seeds, "epochs": epochs,
        "backbones": list(backbones), "task": task.value, "full": bool(args.full),
        "learning_rate": args.lr, "batch_size": args.batch_size,
        "generator_seed": args.seed, "split_seed": args.seed,
    }
    write_run_manifest(
        out_dir, "repro", resolved, inputs={},
        outputs={"data": str(out_dir / "data"), "runs": str(out_dir / "runs"), "report": str(out_dir / "report")},
        seeds=seeds,
    )

    data_dir = out_dir / "data"
    sidecar = data_dir / "generator.json"
    want = {"seed": args.seed, "objects": objects, "repetitions": reps}
    have = None
    if sidecar.is_file():
        recorded = json.loads(sidecar.read_text(encoding="utf-8"))
        have = {k: recorded.get(k) for k in want}
    if have == want and (data_dir / "manifest.jsonl").is_file():
        print(f"[1/4] reusing dataset at {data_dir}", flush=True)
    else:
        print(f"[1/4] generating {objects * 16 * reps} samples", flush=True)
        generate_synthetic_dataset(data_dir, objects=objects, repetitions=reps, seed=args.seed)

    print("[2/4] splitting and computing normalization statistics", flush=True)
    train_set, val_set, test_set, stats = prepare_splits(data_dir, args.seed)
    train_val_builder, test_builder = _example_builders(train_set, val_set, test_set, stats, task)

    config = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=epochs, seed=seeds[0])
    entries: list[ResultEntry] = []
    dual_1c1n: ResultEntry | None = None
    total = len(backbones) * len(FusionVariant)
    done = 0
    for family in backbones:
        for variant in FusionVariant:
            done += 1
            print(f"[3/4] ({done}/{total}) training {variant.value} on {family}, seeds {seeds}", flush=True)
            results = run_seeds(
                variant, task, train_val_builder, test_builder, config, seeds,
                family=family, tiny_width=args.tiny_width,
                run_dir=out_dir / "runs" / f"{variant.value}_{family}",
                normalization=stats, progress=args.progress,
            )
            values = tuple(r[checkpoint_metric_name(task)] for r in results)
            fusion = FusionConfig.create(variant, task=task, family=family, tiny_width=args.tiny_width)
            entry = ResultEntry(
                architecture=variant.display_name, backbone=family, values=values,
                config_hash=config_hash(fusion.to_dict()),
            )
            entries.append(entry)
            if variant is FusionVariant.shared_central_1c1n and family == backbones[0]:
                dual_1c1n = entry

    # Head ablation on the central shared architecture: dual heads versus a
    # single 16-way head. The dual entry is the 1C-1N run from the loop
    # above; the joint16 run uses the same data and budget.
    print("[3/4] head ablation: single joint16 head", flush=True)
    abl_task = TaskSpec.joint16
    tv_builder, t_builder = _example_builders(train_set, val_set, test_set, stats, abl_task)
    results = run_seeds(
        FusionVariant.shared_central_1c1n, abl_task, tv_builder, t_builder, config, seeds,
        family=backbones[0], tiny_width=args.tiny_width,
        run_dir=out_dir / "runs" / "ablation_joint16",
        normalization=stats, progress=args.progress,
    )
    fusion = FusionConfig.create(FusionVariant.shared_central_1c1n, task=abl_task,
                                 family=backbones[0], tiny_width=args.tiny_width)
    ablation_entries = [
        ResultEntry(
            architecture="dual heads (tools+actions)", backbone=backbones[0],
            values=dual_1c1n.values, config_hash=dual_1c1n.config_hash,
        ),
        ResultEntry(
            architecture="single joint16 head", backbone=backbones[0],
            values=tuple(r[checkpoint_metric_name(abl_task)] for r in results),
            config_hash=config_hash(fusion.to_dict()),
        ),
    ]

    print("[4/4] writing report", flush=True)
    report_dir = out_dir / "report"
    txt_path, _ = write_results_table(entries, report_dir)
    abl_dir = report_dir / "ablation"
    write_results_table(ablation_entries, abl_dir)
    print(f"report: {txt_path}")
    print((report_dir / "results.txt").read_text(encoding="utf-8"))
    print("1C-1N head ablation (joint accuracy):")
    print((abl_dir / "results.txt").read_text(encoding="utf-8"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toolact",
        description="Tool and action recognition from before/after multi-camera images.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--objects", type=int, default=20, help="number of distinct objects (1-20)")
    p.add_argument("--reps", type=int, default=10, help="repetitions per (object, tool, action) (1-10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default ${DATA_ROOT_ENV})")
    p.add_argument("--check-oracle", action="store_true", help="verify the oracle scores 100%% afterwards")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_synth)

    def add_train_flags(p):
        p.add_argument("--task", choices=TASK_NAMES)
        p.add_argument("--arch", choices=ARCH_NAMES)
        p.add_argument("--backbone", choices=BACKBONE_FAMILIES)
        p.add_argument("--data", help=f"dataset directory (default ${DATA_ROOT_ENV})")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--kernel", type=int, choices=(3, 5, 7), help="first-block kernel size")
        p.add_argument("--stride", type=int, choices=(1, 2), help="first-block stride")
        p.add_argument("--tiny-width", type=int, help="embedding width of the tiny backbone")
        p.add_argument("--split-seed", type=int)
        p.add_argument("--progress", action="store_true")

    p = sub.add_parser("train", help="train one configuration")
    add_train_flags(p)
    p.add_argument("--out", help="run directory (default <data>/runs/<name>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    add_train_flags(p)
    p.add_argument("--reduced", action="store_true", help="4-trial desk-scale grid instead of the 72-trial grid")
    p.add_argument("--out", help="output directory for trials.csv")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ROOT_ENV})")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--task", choices=TASK_NAMES, help="override the task recorded in the checkpoint")
    p.add_argument("--out", help="output directory (default <checkpoint dir>/eval_<split>)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate eval reports into a results table")
    p.add_argument("--inputs", nargs="+", required=True, help="report.json files produced by eval")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("repro", help="end-to-end desk-scale reproduction on synthetic data")
    p.add_argument("--out", required=True, help="workspace directory")
    p.add_argument("--objects", type=int, default=6)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seeds", type=int, default=2, help="number of seeds per architecture")
    p.add_argument("--seed", type=int, default=0, help="base seed (also generator and split seed)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--backbone", choices=BACKBONE_FAMILIES, default="tiny")
    p.add_argument("--tiny-width", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--full", action="store_true",
                   help="full-scale grid over ResNet backbones (very expensive; prints a warning)")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_repro)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ConfigurationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ToolactError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
