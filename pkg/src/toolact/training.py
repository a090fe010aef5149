"""Training loop, grid search and multi-seed runs.

The protocol is deliberately plain: adaptive moment estimation with
default moment coefficients and no weight decay, cross-entropy loss (the
dual-head loss is the sum of the two head losses), a fixed epoch budget,
and best-validation checkpointing. The checkpoint metric is joint accuracy
for dual-head and 16-way tasks and plain head accuracy otherwise.

Every stochastic choice flows from TrainConfig.seed: model initialization
(seed before construction, see seed_everything) and per-epoch shuffling
(a dedicated numpy generator). Two runs with equal configs and seeds
produce equal histories.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .core import (
    BackboneSpec,
    FusionConfig,
    FusionVariant,
    HeadLayout,
    TaskSpec,
    check_task_fusion,
    config_hash,
)
from .data import ArrayExamples, NormStats
from .errors import ConfigurationError, DivergedError, LabelError, NumericalError, ToolactError
from .models import FusionModel, HeadLogits, save_checkpoint

GRID_LEARNING_RATES = (1e-3, 5e-4, 1e-4)
GRID_BATCH_SIZES = (16, 32, 64, 128)
GRID_KERNELS = (3, 5, 7)
GRID_STRIDES = (1, 2)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(data["learning_rate"]),
            batch_size=int(data["batch_size"]),
            epochs=int(data["epochs"]),
            seed=int(data["seed"]),
        )


@dataclass
class EpochRecord:
    """One row of training history. Validation fields are None for heads
    the task does not predict."""

    epoch: int
    train_loss: float
    train_acc: float
    val_acc_tool: float | None
    val_acc_action: float | None
    val_acc_joint: float | None


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_acc_tool", "val_acc_action", "val_acc_joint")


@dataclass
class TrainHistory:
    """Per-epoch records plus the index of the best-validation epoch."""

    records: list[EpochRecord] = field(default_factory=list)
    best_index: int = 0

    @property
    def best_record(self) -> EpochRecord:
        return self.records[self.best_index]

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for r in self.records:
                writer.writerow([
                    r.epoch,
                    f"{r.train_loss:.6f}",
                    f"{r.train_acc:.6f}",
                    "" if r.val_acc_tool is None else f"{r.val_acc_tool:.6f}",
                    "" if r.val_acc_action is None else f"{r.val_acc_action:.6f}",
                    "" if r.val_acc_joint is None else f"{r.val_acc_joint:.6f}",
                ])
        return path


def seed_everything(seed: int) -> None:
    """Seed every library RNG a run touches. Call before building the
    model so initialization is covered."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _check_labels(labels: torch.Tensor, n_classes: int, head: str) -> None:
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= n_classes):
        raise LabelError(
            f"label outside [0, {n_classes}) for head {head!r}: "
            f"min={int(labels.min())} max={int(labels.max())}"
        )


def loss(logits: HeadLogits, labels: dict[str, torch.Tensor], head: HeadLayout) -> torch.Tensor:
    """Cross-entropy for the head layout; the dual-head loss is the sum of
    the tool and action terms."""
    total = None
    for name, n_classes in head.class_counts.items():
        head_logits = getattr(logits, name)
        if head_logits is None:
            raise ConfigurationError(f"logits missing head {name!r} required by layout {head.value!r}")
        _check_labels(labels[name], n_classes, name)
        term = F.cross_entropy(head_logits, labels[name])
        total = term if total is None else total + term
    return total


def checkpoint_metric_name(task: TaskSpec) -> str:
    """History key used for best-validation selection: joint accuracy when
    the task predicts both labels, plain head accuracy otherwise."""
    return {
        HeadLayout.dual: "joint",
        HeadLayout.joint16: "joint",
        HeadLayout.tool_only: "tool",
        HeadLayout.action_only: "action",
    }[task.head_layout]


def _batch_correct(logits: HeadLogits, labels: dict[str, torch.Tensor], head: HeadLayout) -> dict[str, int]:
    """Correct-prediction counts per reported metric for one batch."""
    out: dict[str, int] = {}
    if head is HeadLayout.dual:
        tool_ok = logits.tool.argmax(dim=1) == labels["tool"]
        action_ok = logits.action.argmax(dim=1) == labels["action"]
        out["tool"] = int(tool_ok.sum())
        out["action"] = int(action_ok.sum())
        out["joint"] = int((tool_ok & action_ok).sum())
    elif head is HeadLayout.joint16:
        pred = logits.joint.argmax(dim=1)
        out["joint"] = int((pred == labels["joint"]).sum())
        out["tool"] = int((pred // 4 == labels["tool"]).sum())
        out["action"] = int((pred % 4 == labels["action"]).sum())
    elif head is HeadLayout.tool_only:
        out["tool"] = int((logits.tool.argmax(dim=1) == labels["tool"]).sum())
    else:
        out["action"] = int((logits.action.argmax(dim=1) == labels["action"]).sum())
    return out


@torch.no_grad()
def accuracy_on(model: FusionModel, data: ArrayExamples, task: TaskSpec, batch_size: int = 256) -> dict[str, float]:
    """Accuracy of every metric the task defines, over a whole example set."""
    model.eval()
    totals: dict[str, int] = {}
    n = len(data)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        images, onehot, labels = data.batch(idx)
        logits = model(images, onehot)
        for key, c in _batch_correct(logits, labels, task.head_layout).items():
            totals[key] = totals.get(key, 0) + c
    return {key: c / n for key, c in totals.items()}


def train(
    model: FusionModel,
    train_data: ArrayExamples,
    val_data: ArrayExamples,
    config: TrainConfig,
    task: TaskSpec,
    run_dir: Path | str | None = None,
    val_fn: Callable[[FusionModel, int], dict[str, float] | float] | None = None,
    normalization: NormStats | None = None,
    progress: bool = False,
) -> tuple[FusionModel, TrainHistory]:
    """Train for the full epoch budget and return the model restored to its
    best-validation parameters, plus the history.

    `val_fn`, when given, replaces the built-in validation pass (used by
    tests to inject a known validation curve); it may return a bare float,
    which is treated as the task's checkpoint metric. When `run_dir` is
    set, the run layout is written there: config.json, history.csv,
    best.pt and final.pt.
    """
    check_task_fusion(task, model.config)
    metric_name = checkpoint_metric_name(task)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best_metric = -float("inf")
    best_state: dict | None = None
    n = len(train_data)
    t0 = time.monotonic()

    for epoch in range(config.epochs):
        model.train()
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            images, onehot, labels = train_data.batch(idx)
            # Non-finite activations during training mean the run diverged,
            # same as a non-finite loss.
            try:
                logits = model(images, onehot)
            except NumericalError as err:
                raise DivergedError(
                    f"diverged at epoch {epoch}, step {step}: {err}",
                    epoch=epoch,
                    step=step,
                ) from err
            batch_loss = loss(logits, labels, task.head_layout)
            if not torch.isfinite(batch_loss):
                raise DivergedError(
                    f"non-finite training loss at epoch {epoch}, step {step}",
                    epoch=epoch,
                    step=step,
                )
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            loss_sum += float(batch_loss.detach()) * len(idx)
            correct += _batch_correct(logits, labels, task.head_layout)[metric_name]

        try:
            if val_fn is not None:
                raw = val_fn(model, epoch)
                val = {metric_name: float(raw)} if not isinstance(raw, dict) else dict(raw)
            else:
                val = accuracy_on(model, val_data, task)
        except NumericalError as err:
            raise DivergedError(
                f"diverged during validation after epoch {epoch}: {err}",
                epoch=epoch,
                step=-1,
            ) from err
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_acc=correct / n,
            val_acc_tool=val.get("tool"),
            val_acc_action=val.get("action"),
            val_acc_joint=val.get("joint"),
        )
        history.records.append(record)
        metric = val[metric_name]
        if metric > best_metric:
            best_metric = metric
            history.best_index = epoch
            best_state = copy.deepcopy(model.state_dict())
        if progress:
            print(
                f"epoch {epoch + 1}/{config.epochs}: loss {record.train_loss:.4f} "
                f"train {record.train_acc:.3f} val[{metric_name}] {metric:.3f} "
                f"({time.monotonic() - t0:.0f}s)",
                flush=True,
            )

    final_state = copy.deepcopy(model.state_dict()) if run_dir is not None else None
    if best_state is not None:
        model.load_state_dict(best_state)

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        norm_dict = normalization.to_dict() if normalization is not None else None
        snapshot = {
            "train": config.to_dict(),
            "architecture": model.config.to_dict(),
            "task": task.value,
            "config_hash": config_hash({"train": config.to_dict(), "architecture": model.config.to_dict(), "task": task.value}),
            "best_epoch": history.best_index,
            "best_val": {k: v for k, v in vars(history.best_record).items() if k.startswith("val_")},
        }
        (run_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        history.to_csv(run_dir / "history.csv")
        save_checkpoint(run_dir / "best.pt", model, task=task.value, normalization=norm_dict,
                        extra={"epoch": history.best_index, "selection": "best_validation"})
        current = {k: v.clone() for k, v in model.state_dict().items()}
        model.load_state_dict(final_state)
        save_checkpoint(run_dir / "final.pt", model, task=task.value, normalization=norm_dict,
                        extra={"epoch": config.epochs - 1, "selection": "final_epoch"})
        model.load_state_dict(current)

    return model, history


def build_and_train(
    variant: FusionVariant | str,
    task: TaskSpec | str,
    train_data_builder: Callable[[FusionConfig], tuple[ArrayExamples, ArrayExamples]],
    config: TrainConfig,
    family: str = "tiny",
    first_block_kernel: int = 7,
    first_block_stride: int = 2,
    tiny_width: int = 64,
    run_dir: Path | str | None = None,
    normalization: NormStats | None = None,
    progress: bool = False,
) -> tuple[FusionModel, TrainHistory]:
    """Seed, build the architecture for (variant, task), then train.

    `train_data_builder` maps the finished FusionConfig to (train, val)
    example sets; building examples lazily lets callers share image caches
    across architectures.
    """
    task = TaskSpec.from_name(task) if isinstance(task, str) else task
    fusion = FusionConfig.create(
        variant,
        task=task,
        family=family,
        first_block_kernel=first_block_kernel,
        first_block_stride=first_block_stride,
        tiny_width=tiny_width,
    )
    seed_everything(config.seed)
    model = FusionModel(fusion)
    train_data, val_data = train_data_builder(fusion)
    return train(
        model, train_data, val_data, config, task,
        run_dir=run_dir, normalization=normalization, progress=progress,
    )


@dataclass(frozen=True)
class GridSpace:
    """Hyperparameter grid: learning rate x batch size x first-block kernel
    x first-block stride."""

    learning_rates: tuple[float, ...] = GRID_LEARNING_RATES
    batch_sizes: tuple[int, ...] = GRID_BATCH_SIZES
    kernels: tuple[int, ...] = GRID_KERNELS
    strides: tuple[int, ...] = GRID_STRIDES

    def __post_init__(self):
        if not (self.learning_rates and self.batch_sizes and self.kernels and self.strides):
            raise ConfigurationError("grid space must be non-empty on every axis")

    @classmethod
    def full(cls) -> "GridSpace":
        """The full reproduction grid: 3 x 4 x 3 x 2 = 72 trials."""
        return cls()

    @classmethod
    def reduced(cls) -> "GridSpace":
        """Desk-scale grid: 2 learning rates x 2 batch sizes, first block
        fixed, 4 trials."""
        return cls(learning_rates=(1e-3, 5e-4), batch_sizes=(32, 64), kernels=(3,), strides=(2,))

    def points(self) -> list[tuple[float, int, int, int]]:
        return list(itertools.product(self.learning_rates, self.batch_sizes, self.kernels, self.strides))

    def __len__(self) -> int:
        return len(self.points())


@dataclass
class GridTrial:
    """Outcome of one grid point."""

    learning_rate: float
    batch_size: int
    first_block_kernel: int
    first_block_stride: int
    status: str  # "ok" or "diverged"
    val_accuracy: float | None
    best_epoch: int | None


@dataclass
class GridResult:
    trials: list[GridTrial]
    best_index: int

    @property
    def best(self) -> GridTrial:
        return self.trials[self.best_index]

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "learning_rate", "batch_size", "first_block_kernel", "first_block_stride",
                "status", "val_accuracy", "best_epoch", "is_best",
            ])
            for i, t in enumerate(self.trials):
                writer.writerow([
                    t.learning_rate, t.batch_size, t.first_block_kernel, t.first_block_stride,
                    t.status,
                    "" if t.val_accuracy is None else f"{t.val_accuracy:.6f}",
                    "" if t.best_epoch is None else t.best_epoch,
                    int(i == self.best_index),
                ])
        return path


def grid_search(
    space: GridSpace,
    task: TaskSpec | str,
    variant: FusionVariant | str,
    train_data_builder: Callable[[FusionConfig], tuple[ArrayExamples, ArrayExamples]],
    family: str = "tiny",
    tiny_width: int = 64,
    epochs: int = 10,
    seed: int = 0,
    progress: bool = False,
) -> GridResult:
    """Train every grid point and rank by validation accuracy of the task's
    checkpoint metric. A diverging trial is recorded as failed and the
    search continues."""
    task = TaskSpec.from_name(task) if isinstance(task, str) else task
    trials: list[GridTrial] = []
    for lr, batch, kernel, stride in space.points():
        config = TrainConfig(learning_rate=lr, batch_size=batch, epochs=epochs, seed=seed)
        try:
            _, history = build_and_train(
                variant, task, train_data_builder, config,
                family=family, first_block_kernel=kernel, first_block_stride=stride,
                tiny_width=tiny_width,
            )
            metric = checkpoint_metric_name(task)
            best = history.best_record
            val = {"tool": best.val_acc_tool, "action": best.val_acc_action, "joint": best.val_acc_joint}[metric]
            trial = GridTrial(lr, batch, kernel, stride, "ok", val, history.best_index)
        except DivergedError:
            trial = GridTrial(lr, batch, kernel, stride, "diverged", None, None)
        trials.append(trial)
        if progress:
            print(
                f"grid lr={lr} batch={batch} kernel={kernel} stride={stride}: "
                f"{trial.status} val={trial.val_accuracy}",
                flush=True,
            )
    scored = [i for i, t in enumerate(trials) if t.status == "ok"]
    if not scored:
        raise DivergedError("every grid trial diverged", epoch=0, step=0)
    best_index = max(scored, key=lambda i: trials[i].val_accuracy)
    return GridResult(trials=trials, best_index=best_index)


def run_seeds(
    variant: FusionVariant | str,
    task: TaskSpec | str,
    train_data_builder: Callable[[FusionConfig], tuple[ArrayExamples, ArrayExamples]],
    test_data_builder: Callable[[FusionConfig], ArrayExamples],
    config: TrainConfig,
    seeds: Sequence[int],
    family: str = "tiny",
    first_block_kernel: int = 7,
    first_block_stride: int = 2,
    tiny_width: int = 64,
    run_dir: Path | str | None = None,
    normalization: NormStats | None = None,
    progress: bool = False,
) -> list[dict[str, float]]:
    """One full train+test cycle per seed, in seed order.

    Returns one metric dict per seed (the task's metrics on the test
    split). Training errors are re-raised with the offending seed named.
    """
    if not seeds:
        raise ConfigurationError("run_seeds needs at least one seed")
    task = TaskSpec.from_name(task) if isinstance(task, str) else task
    from .evaluation import evaluate  # deferred: evaluation imports this module's helpers

    results: list[dict[str, float]] = []
    for seed in seeds:
        seed_config = replace(config, seed=seed)
        seed_dir = None if run_dir is None else Path(run_dir) / f"seed{seed}"
        try:
            model, _ = build_and_train(
                variant, task, train_data_builder, seed_config,
                family=family, first_block_kernel=first_block_kernel,
                first_block_stride=first_block_stride, tiny_width=tiny_width,
                run_dir=seed_dir, normalization=normalization, progress=progress,
            )
            test_data = test_data_builder(model.config)
            report = evaluate(model, test_data, task)
            results.append(dict(report.accuracies))
        except DivergedError as err:
            raise DivergedError(f"seed {seed}: {err}", epoch=err.epoch, step=err.step) from err
        except ToolactError as err:
            raise type(err)(f"seed {seed}: {err}") from err
    return results
