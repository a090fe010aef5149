"""Test metrics, confusion matrices, multi-seed aggregation and reports.

Accuracy is counted per head; the joint accuracy counts a sample correct
only when tool and action are simultaneously right. Multi-seed results are
summarized as mean and 95% confidence half-width using the Student-t
quantile with n-1 degrees of freedom, and rendered in percent as
"86.00 ± 1.96" (two decimals).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from scipy import stats as scipy_stats

from .core import (
    Action,
    HeadLayout,
    LABEL_ORDERINGS,
    N_ACTIONS,
    N_JOINT,
    N_TOOLS,
    TaskSpec,
    Tool,
    check_task_fusion,
    config_hash,
    split_joint_index,
)
from .data import ArrayExamples
from .errors import AggregationError, EvaluationError
from .models import FusionModel

JOINT_LABEL_NAMES = tuple(
    f"{tool.name}/{action.name}" for tool in Tool for action in Action
)

_HEAD_LABEL_NAMES = {
    "tool": tuple(t.name for t in Tool),
    "action": tuple(a.name for a in Action),
    "joint": JOINT_LABEL_NAMES,
}

_HEAD_SIZES = {"tool": N_TOOLS, "action": N_ACTIONS, "joint": N_JOINT}


def confusion_matrix(
    predictions: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    n_classes: int,
    row_normalize: bool = False,
) -> np.ndarray:
    """Entry (i, j) counts true class i predicted as j. With
    row_normalize, every row with support is divided by its sum; empty
    rows stay all-zero."""
    preds = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if preds.shape != true.shape or preds.ndim != 1:
        raise EvaluationError(
            f"predictions and labels must be equal-length vectors, got {preds.shape} and {true.shape}"
        )
    if preds.size and (preds.min() < 0 or preds.max() >= n_classes or true.min() < 0 or true.max() >= n_classes):
        raise EvaluationError(f"entries outside [0, {n_classes})")
    matrix = np.zeros((n_classes, n_classes), dtype=np.float64)
    np.add.at(matrix, (true, preds), 1.0)
    if row_normalize:
        support = matrix.sum(axis=1, keepdims=True)
        matrix = np.divide(matrix, support, out=np.zeros_like(matrix), where=support > 0)
    return matrix


@dataclass
class EvalReport:
    """Evaluation outcome on one example set."""

    task: str
    config_hash: str
    n: int
    accuracies: dict[str, float]
    confusion_counts: dict[str, np.ndarray]
    confusion: dict[str, np.ndarray]  # row-normalized

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "config_hash": self.config_hash,
            "n": self.n,
            "accuracies": {k: float(v) for k, v in self.accuracies.items()},
            "confusion": {k: v.tolist() for k, v in self.confusion.items()},
            "label_orderings": LABEL_ORDERINGS,
        }


@torch.no_grad()
def predict_examples(
    model: FusionModel, data: ArrayExamples, task: TaskSpec, batch_size: int = 256
) -> dict[str, np.ndarray]:
    """Predictions and labels for every metric the task defines, as flat
    int arrays keyed '<head>_pred' / '<head>_true'."""
    model.eval()
    layout = task.head_layout
    preds: dict[str, list[np.ndarray]] = {}
    trues: dict[str, list[np.ndarray]] = {}
    n = len(data)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        images, onehot, labels = data.batch(idx)
        logits = model(images, onehot)
        batch_preds: dict[str, np.ndarray] = {}
        if layout is HeadLayout.joint16:
            joint = logits.joint.argmax(dim=1).numpy()
            batch_preds = {"joint": joint, "tool": joint // N_ACTIONS, "action": joint % N_ACTIONS}
        else:
            if logits.tool is not None:
                batch_preds["tool"] = logits.tool.argmax(dim=1).numpy()
            if logits.action is not None:
                batch_preds["action"] = logits.action.argmax(dim=1).numpy()
        for key, values in batch_preds.items():
            preds.setdefault(key, []).append(values)
            trues.setdefault(key, []).append(labels[key].numpy())
    out: dict[str, np.ndarray] = {}
    for key in preds:
        out[f"{key}_pred"] = np.concatenate(preds[key])
        out[f"{key}_true"] = np.concatenate(trues[key])
    return out


def report_from_predictions(
    predictions: Mapping[str, np.ndarray], task: TaskSpec, config_id: str = ""
) -> EvalReport:
    """Assemble an EvalReport from prediction/label arrays (as returned by
    predict_examples, or by any other predictor such as a rule-based one)."""
    layout = task.head_layout
    native_heads = list(layout.class_counts)
    first = native_heads[0]
    n = int(predictions[f"{first}_true"].shape[0])
    if n == 0:
        raise EvaluationError("cannot evaluate an empty example set")

    accuracies: dict[str, float] = {}
    for key in ("tool", "action", "joint"):
        if f"{key}_pred" in predictions:
            accuracies[key] = float(
                np.mean(predictions[f"{key}_pred"] == predictions[f"{key}_true"])
            )
    if layout is HeadLayout.dual:
        both = (predictions["tool_pred"] == predictions["tool_true"]) & (
            predictions["action_pred"] == predictions["action_true"]
        )
        accuracies["joint"] = float(np.mean(both))

    counts = {
        head: confusion_matrix(predictions[f"{head}_pred"], predictions[f"{head}_true"], _HEAD_SIZES[head])
        for head in native_heads
    }
    normalized = {
        head: confusion_matrix(
            predictions[f"{head}_pred"], predictions[f"{head}_true"], _HEAD_SIZES[head], row_normalize=True
        )
        for head in native_heads
    }
    return EvalReport(
        task=task.value,
        config_hash=config_id,
        n=n,
        accuracies=accuracies,
        confusion_counts=counts,
        confusion=normalized,
    )


def evaluate(model: FusionModel, data: ArrayExamples, task: TaskSpec) -> EvalReport:
    """Evaluate a model on an example set."""
    check_task_fusion(task, model.config)
    if len(data) == 0:
        raise EvaluationError("cannot evaluate an empty example set")
    predictions = predict_examples(model, data, task)
    return report_from_predictions(
        predictions, task, config_id=config_hash(model.config.to_dict())
    )


@dataclass(frozen=True)
class AggregateResult:
    """Mean and 95% confidence half-width over per-seed accuracies."""

    mean: float
    half_width: float
    n: int
    values: tuple[float, ...]


def aggregate_seeds(values: Sequence[float]) -> AggregateResult:
    """mean and t(0.975, n-1) * sample_std / sqrt(n) over >= 2 values."""
    vals = tuple(float(v) for v in values)
    if len(vals) < 2:
        raise AggregationError(f"confidence interval undefined for {len(vals)} value(s)")
    arr = np.asarray(vals, dtype=np.float64)
    n = arr.size
    mean = float(arr.mean())
    std = float(arr.std(ddof=1))
    t = float(scipy_stats.t.ppf(0.975, n - 1))
    return AggregateResult(mean=mean, half_width=t * std / np.sqrt(n), n=n, values=vals)


def format_mean_ci(mean: float, half_width: float) -> str:
    """Percent rendering with two decimals: 0.8600/0.0196 -> '86.00 ± 1.96'."""
    return f"{100 * mean:.2f} ± {100 * half_width:.2f}"


@dataclass
class ResultEntry:
    """One cell of the results table: an (architecture, backbone) pair with
    its per-seed accuracies."""

    architecture: str
    backbone: str
    values: tuple[float, ...]
    config_hash: str = ""

    @property
    def cell(self) -> str:
        if len(self.values) >= 2:
            agg = aggregate_seeds(self.values)
            return format_mean_ci(agg.mean, agg.half_width)
        return f"{100 * self.values[0]:.2f} (n=1)"


def render_results_table(entries: Sequence[ResultEntry]) -> str:
    """Plain-text pivot: architectures as rows, backbones as columns."""
    if not entries:
        raise EvaluationError("cannot render an empty results table")
    archs = list(dict.fromkeys(e.architecture for e in entries))
    backbones = list(dict.fromkeys(e.backbone for e in entries))
    cells = {(e.architecture, e.backbone): e.cell for e in entries}
    header = ["Architecture"] + backbones
    rows = [[arch] + [cells.get((arch, b), "-") for b in backbones] for arch in archs]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def write_results_table(entries: Sequence[ResultEntry], out_dir: Path | str) -> tuple[Path, Path]:
    """Write results.txt (pivot) and results.csv (flat, one row per entry)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt_path = out_dir / "results.txt"
    txt_path.write_text(render_results_table(entries), encoding="utf-8")
    csv_path = out_dir / "results.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["architecture", "backbone", "n_seeds", "mean", "half_width", "cell", "seeds", "config_hash"])
        for e in entries:
            if len(e.values) >= 2:
                agg = aggregate_seeds(e.values)
                mean, hw = agg.mean, agg.half_width
            else:
                mean, hw = e.values[0], ""
            writer.writerow([
                e.architecture,
                e.backbone,
                len(e.values),
                f"{mean:.6f}",
                hw if hw == "" else f"{hw:.6f}",
                e.cell,
                ";".join(f"{v:.6f}" for v in e.values),
                e.config_hash,
            ])
    return txt_path, csv_path


def _write_confusion_csv(matrix: np.ndarray, head: str, path: Path, config_id: str) -> None:
    import csv as _csv

    names = _HEAD_LABEL_NAMES[head]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow([f"true\\pred (config {config_id})"] + list(names))
        for i, row in enumerate(matrix):
            writer.writerow([names[i]] + [f"{v:.6f}" for v in row])


def _write_confusion_png(matrix: np.ndarray, head: str, path: Path, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = _HEAD_LABEL_NAMES[head]
    size = max(4.0, 0.5 * len(names) + 2.0)
    fig, ax = plt.subplots(figsize=(size, size))
    ax.imshow(matrix, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(names)), names, rotation=90, fontsize=7)
    ax.set_yticks(range(len(names)), names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title, fontsize=9)
    if len(names) <= 4:
        for i in range(len(names)):
            for j in range(len(names)):
                ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center",
                        color="white" if matrix[i, j] > 0.5 else "black", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_eval_report(report: EvalReport, out_dir: Path | str, extra: Mapping | None = None) -> Path:
    """Write report.json plus a CSV and raster image per confusion matrix.

    `extra` entries (e.g. architecture and backbone identifiers) are merged
    into the JSON so downstream report aggregation can group runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for head, matrix in report.confusion.items():
        _write_confusion_csv(matrix, head, out_dir / f"confusion_{head}.csv", report.config_hash)
        _write_confusion_png(
            matrix, head, out_dir / f"confusion_{head}.png",
            title=f"{report.task}: {head} (config {report.config_hash})",
        )
    return report_path
