"""Dataset handling: manifest IO, validation, splitting and preprocessing.

A dataset is a line-delimited JSON manifest, one record per sample, with
six PNG references ({left, center, right} x {initial, final}) plus object,
repetition, tool and action fields. Image paths are relative to the
manifest's directory.

Preprocessing is fixed: bilinear resize to 128x128, scale to [0, 1], then
per-channel standardization with statistics computed on the training split
only. The same uint8-resized representation backs both the one-sample
`preprocess_image` path and the cached batch path in ArrayExamples, so the
two produce identical tensors.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .core import (
    Action,
    FusionConfig,
    IMAGE_KEYS,
    N_ACTIONS,
    TaskSpec,
    Tool,
    check_task_fusion,
    encode_action,
    joint_index,
)
from .errors import (
    ChannelCountError,
    ImageDecodeError,
    IntegrityError,
    LabelError,
    ManifestError,
    SplitError,
)

IMAGE_SIZE = 128
NATIVE_SIZE = (640, 480)

# Full acquisition shape: 20 objects x 4 tools x 4 actions x 10 repetitions.
FULL_OBJECTS = 20
FULL_REPETITIONS = 10
FULL_SAMPLE_COUNT = FULL_OBJECTS * len(Tool) * len(Action) * FULL_REPETITIONS


@dataclass(frozen=True)
class Sample:
    """One trial: which object was moved, with which tool and action, plus
    the six before/after image references."""

    object_id: int
    repetition: int
    tool: Tool
    action: Action
    images: Mapping[str, str]

    def __post_init__(self):
        if not 0 <= self.object_id < FULL_OBJECTS:
            raise ValueError(f"object_id {self.object_id} outside [0, {FULL_OBJECTS})")
        if not 0 <= self.repetition < FULL_REPETITIONS:
            raise ValueError(f"repetition {self.repetition} outside [0, {FULL_REPETITIONS})")
        missing = set(IMAGE_KEYS) - set(self.images)
        extra = set(self.images) - set(IMAGE_KEYS)
        if missing or extra:
            raise ValueError(f"images must have exactly keys {IMAGE_KEYS}; missing={sorted(missing)} extra={sorted(extra)}")

    @property
    def key(self) -> tuple[int, Tool, Action, int]:
        return (self.object_id, self.tool, self.action, self.repetition)

    def to_record(self) -> dict:
        return {
            "object_id": self.object_id,
            "repetition": self.repetition,
            "tool": self.tool.name,
            "action": self.action.name,
            "images": dict(self.images),
        }


class SampleSet:
    """An ordered, key-unique collection of samples rooted at a directory.

    `root` resolves the relative image paths; it may be None for in-memory
    sets that never touch image files (splitting, counting).
    """

    def __init__(self, samples: Iterable[Sample], root: Path | str | None = None):
        self.samples: tuple[Sample, ...] = tuple(samples)
        self.root = Path(root) if root is not None else None
        seen: set = set()
        for sample in self.samples:
            if sample.key in seen:
                raise IntegrityError(
                    "duplicate sample key (object_id={}, tool={}, action={}, repetition={})".format(
                        sample.object_id, sample.tool.name, sample.action.name, sample.repetition
                    )
                )
            seen.add(sample.key)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]

    def resolve(self, sample: Sample, key: str) -> Path:
        if self.root is None:
            raise ValueError("this SampleSet has no root directory to resolve images against")
        return self.root / sample.images[key]

    @property
    def object_counts(self) -> Counter:
        return Counter(s.object_id for s in self.samples)

    @property
    def tool_counts(self) -> Counter:
        return Counter(s.tool for s in self.samples)

    @property
    def action_counts(self) -> Counter:
        return Counter(s.action for s in self.samples)

    @property
    def is_complete(self) -> bool:
        """True when the set covers the full 20x4x4x10 acquisition grid."""
        if len(self.samples) != FULL_SAMPLE_COUNT:
            return False
        keys = {s.key for s in self.samples}
        return len(keys) == FULL_SAMPLE_COUNT

    def groups(self) -> dict[tuple[int, Tool, Action], list[Sample]]:
        """Samples grouped by (object_id, tool, action), insertion-ordered."""
        out: dict[tuple[int, Tool, Action], list[Sample]] = {}
        for sample in self.samples:
            out.setdefault((sample.object_id, sample.tool, sample.action), []).append(sample)
        return out

    def subset(self, samples: Iterable[Sample]) -> "SampleSet":
        return SampleSet(samples, root=self.root)


def _parse_record(record: dict, line_no: int) -> Sample:
    try:
        images = record["images"]
        if not isinstance(images, dict):
            raise TypeError("images must be an object")
        return Sample(
            object_id=int(record["object_id"]),
            repetition=int(record["repetition"]),
            tool=Tool.from_name(record["tool"]),
            action=Action.from_name(record["action"]),
            images={k: str(v) for k, v in images.items()},
        )
    except (KeyError, TypeError, ValueError, LabelError) as err:
        raise ManifestError(f"manifest line {line_no}: {err}") from err


def load_manifest(path: Path | str, check_images: bool = True) -> SampleSet:
    """Load and validate a manifest file.

    Raises ManifestError for a missing file or malformed record (naming the
    line), IntegrityError for duplicate keys or, when check_images is set,
    for unresolvable image references (listing every missing file).
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ManifestError(f"manifest line {line_no}: invalid JSON ({err.msg})") from err
            if not isinstance(record, dict):
                raise ManifestError(f"manifest line {line_no}: expected an object")
            samples.append(_parse_record(record, line_no))

    dataset = SampleSet(samples, root=root)

    if check_images:
        missing = [
            str(rel)
            for sample in dataset
            for rel in (sample.images[k] for k in IMAGE_KEYS)
            if not (root / rel).is_file()
        ]
        if missing:
            shown = ", ".join(missing[:10])
            more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
            raise IntegrityError(f"{len(missing)} missing image file(s): {shown}{more}")
    return dataset


def write_manifest(samples: Iterable[Sample], path: Path | str) -> Path:
    """Write samples as line-delimited JSON. Byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_record(), sort_keys=True) + "\n")
    return path


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test ratios over the repetitions of each (object, tool,
    action) group, plus the permutation seed. Ratios must sum to the
    group's repetition count (6:2:2 over 10 repetitions by default)."""

    ratios: tuple[int, int, int] = (6, 2, 2)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or sum(self.ratios) <= 0:
            raise SplitError(f"invalid split ratios {self.ratios}")


def split_ratios_for(repetitions: int) -> tuple[int, int, int]:
    """Split counts in 6:2:2 proportion for a per-group repetition count:
    validation and test each take a rounded fifth (at least one repetition),
    training takes the rest. Ten repetitions give the canonical (6, 2, 2)."""
    if repetitions < 3:
        raise SplitError(f"need at least 3 repetitions per group to split, got {repetitions}")
    held = max(1, round(repetitions / 5))
    return (repetitions - 2 * held, held, held)


def split_dataset(dataset: SampleSet, spec: SplitSpec) -> tuple[SampleSet, SampleSet, SampleSet]:
    """Stratified split: within every (object, tool, action) group, a seeded
    permutation of the repetition indices sends the first `ratios[0]` to
    train, the next `ratios[1]` to val and the rest to test.

    The per-group permutation is seeded from (spec.seed, group key), so the
    assignment is independent of sample order in the manifest.
    """
    total = sum(spec.ratios)
    assignment: dict[tuple, int] = {}
    for (object_id, tool, action), members in dataset.groups().items():
        if len(members) != total:
            raise SplitError(
                f"group (object_id={object_id}, tool={tool.name}, action={action.name}) "
                f"has {len(members)} repetitions, expected {total} for ratios {spec.ratios}"
            )
        reps = sorted(s.repetition for s in members)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(spec.seed, object_id, int(tool), int(action)))
        )
        perm = rng.permutation(reps)
        bounds = (spec.ratios[0], spec.ratios[0] + spec.ratios[1])
        for pos, rep in enumerate(perm):
            part = 0 if pos < bounds[0] else (1 if pos < bounds[1] else 2)
            assignment[(object_id, tool, action, int(rep))] = part

    parts: tuple[list[Sample], list[Sample], list[Sample]] = ([], [], [])
    for sample in dataset:
        parts[assignment[sample.key]].append(sample)
    return tuple(dataset.subset(p) for p in parts)  # type: ignore[return-value]


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and std of the [0, 1]-scaled training images."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(mean=tuple(data["mean"]), std=tuple(data["std"]))

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))


def load_rgb(path: Path | str) -> Image.Image:
    """Open an image, enforcing 3-channel RGB input."""
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as err:
        raise ImageDecodeError(f"cannot decode image {path}: {err}") from err
    if img.mode != "RGB":
        raise ChannelCountError(f"{path}: expected 3-channel RGB, got mode {img.mode!r}")
    return img


def load_resized_uint8(source: Path | str | Image.Image | np.ndarray) -> np.ndarray:
    """Decode and bilinearly resize to (IMAGE_SIZE, IMAGE_SIZE, 3) uint8."""
    if isinstance(source, np.ndarray):
        if source.ndim != 3 or source.shape[2] != 3:
            raise ChannelCountError(f"expected an (H, W, 3) array, got shape {source.shape}")
        img = Image.fromarray(source.astype(np.uint8), mode="RGB")
    elif isinstance(source, Image.Image):
        if source.mode != "RGB":
            raise ChannelCountError(f"expected 3-channel RGB, got mode {source.mode!r}")
        img = source
    else:
        img = load_rgb(source)
    if img.size != (IMAGE_SIZE, IMAGE_SIZE):
        img = img.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
    return np.asarray(img, dtype=np.uint8)


def normalize_uint8(arr: np.ndarray, stats: NormStats) -> np.ndarray:
    """(H, W, 3) uint8 -> standardized (3, H, W) float32."""
    x = arr.astype(np.float32) / 255.0
    mean = np.asarray(stats.mean, dtype=np.float32)
    std = np.asarray(stats.std, dtype=np.float32)
    x = (x - mean) / std
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def preprocess_image(source: Path | str | Image.Image | np.ndarray, stats: NormStats) -> np.ndarray:
    """Full preprocessing of one image: resize, scale to [0, 1], standardize.

    Output shape is exactly (3, 128, 128), float32, finite.
    """
    return normalize_uint8(load_resized_uint8(source), stats)


def compute_norm_stats(dataset: SampleSet, keys: Sequence[str] = IMAGE_KEYS) -> NormStats:
    """Pooled per-channel statistics over all images (at model resolution)
    of a sample set. Run this on the training split only."""
    count = 0
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    for sample in dataset:
        for key in keys:
            arr = load_resized_uint8(dataset.resolve(sample, key)).astype(np.float64) / 255.0
            total += arr.sum(axis=(0, 1))
            total_sq += (arr * arr).sum(axis=(0, 1))
            count += arr.shape[0] * arr.shape[1]
    if count == 0:
        raise SplitError("cannot compute normalization statistics from an empty sample set")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1e-6)
    return NormStats(mean=tuple(float(m) for m in mean), std=tuple(float(s) for s in std))


@dataclass
class ModelInput:
    """Per-sample model input: the image tensors a fusion variant consumes
    plus the optional action one-hot."""

    images: dict[str, np.ndarray]
    action_onehot: np.ndarray | None = None


@dataclass
class LabelRecord:
    """Ground truth for one example. tool is always present; action and
    joint are filled when the task predicts them."""

    tool: int
    action: int | None = None
    joint: int | None = None


def make_example(
    sample: Sample,
    task: TaskSpec,
    fusion: FusionConfig,
    stats: NormStats,
    root: Path | str,
) -> tuple[ModelInput, LabelRecord]:
    """Turn one sample into (ModelInput, LabelRecord) for a task and
    architecture. Rejects incompatible task/architecture pairs."""
    check_task_fusion(task, fusion)
    root = Path(root)
    images = {
        key: preprocess_image(root / sample.images[key], stats)
        for key in fusion.variant.image_keys
    }
    onehot = encode_action(sample.action) if task.uses_action_input else None
    label = LabelRecord(
        tool=int(sample.tool),
        action=int(sample.action) if task.predicts_action else None,
        joint=joint_index(sample.tool, sample.action) if task is TaskSpec.joint16 else None,
    )
    return ModelInput(images=images, action_onehot=onehot), label


def load_view_arrays(
    dataset: SampleSet, keys: Sequence[str] = IMAGE_KEYS
) -> dict[str, np.ndarray]:
    """Load the requested views of every sample as (N, 128, 128, 3) uint8.

    This is the shared image cache: slices of these arrays are normalized
    on the fly at batch time, so multiple tasks and architectures can reuse
    one load pass.
    """
    n = len(dataset)
    out = {key: np.empty((n, IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8) for key in keys}
    for i, sample in enumerate(dataset):
        for key in keys:
            out[key][i] = load_resized_uint8(dataset.resolve(sample, key))
    return out


class CachedViews:
    """Lazy per-view uint8 cache for one sample list, so several tasks and
    architectures over the same split share a single image-loading pass."""

    def __init__(self, dataset: SampleSet):
        self.dataset = dataset
        self._arrays: dict[str, np.ndarray] = {}

    def get(self, keys: Sequence[str]) -> dict[str, np.ndarray]:
        missing = [k for k in keys if k not in self._arrays]
        if missing:
            self._arrays.update(load_view_arrays(self.dataset, missing))
        return {k: self._arrays[k] for k in keys}


class ArrayExamples:
    """Model-ready examples for a whole sample list, stored compactly.

    Images stay uint8; `batch` normalizes the requested slice with the
    stored statistics and returns torch tensors in NCHW layout. Labels for
    all heads are precomputed so one instance serves any task whose views
    are loaded.
    """

    def __init__(
        self,
        images: dict[str, np.ndarray],
        labels: dict[str, np.ndarray],
        stats: NormStats,
        action_onehot: np.ndarray | None = None,
    ):
        lengths = {arr.shape[0] for arr in images.values()} | {arr.shape[0] for arr in labels.values()}
        if action_onehot is not None:
            lengths.add(action_onehot.shape[0])
        if len(lengths) != 1:
            raise ValueError(f"inconsistent array lengths: {sorted(lengths)}")
        self.images = images
        self.labels = labels
        self.stats = stats
        self.action_onehot = action_onehot
        self._n = lengths.pop()
        self._mean = torch.tensor(stats.mean, dtype=torch.float32).view(1, 3, 1, 1)
        self._std = torch.tensor(stats.std, dtype=torch.float32).view(1, 3, 1, 1)

    @classmethod
    def build(
        cls,
        dataset: SampleSet,
        task: TaskSpec,
        fusion: FusionConfig,
        stats: NormStats,
        view_arrays: dict[str, np.ndarray] | None = None,
    ) -> "ArrayExamples":
        """Assemble examples for (task, fusion), loading images unless a
        preloaded view cache is supplied."""
        check_task_fusion(task, fusion)
        keys = fusion.variant.image_keys
        if view_arrays is None:
            view_arrays = load_view_arrays(dataset, keys)
        images = {key: view_arrays[key] for key in keys}
        tools = np.array([int(s.tool) for s in dataset], dtype=np.int64)
        actions = np.array([int(s.action) for s in dataset], dtype=np.int64)
        labels = {"tool": tools, "action": actions, "joint": tools * N_ACTIONS + actions}
        onehot = None
        if task.uses_action_input:
            onehot = np.zeros((len(dataset), N_ACTIONS), dtype=np.float32)
            onehot[np.arange(len(dataset)), actions] = 1.0
        return cls(images=images, labels=labels, stats=stats, action_onehot=onehot)

    def __len__(self) -> int:
        return self._n

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self.images)

    def batch(
        self, indices: np.ndarray | Sequence[int]
    ) -> tuple[dict[str, torch.Tensor], torch.Tensor | None, dict[str, torch.Tensor]]:
        """Normalized (images, action one-hot, labels) tensors for `indices`."""
        idx = np.asarray(indices)
        images = {}
        for key, arr in self.images.items():
            x = torch.from_numpy(arr[idx]).permute(0, 3, 1, 2).float().div_(255.0)
            images[key] = x.sub_(self._mean).div_(self._std)
        onehot = None
        if self.action_onehot is not None:
            onehot = torch.from_numpy(self.action_onehot[idx])
        labels = {key: torch.from_numpy(arr[idx]) for key, arr in self.labels.items()}
        return images, onehot, labels


def write_split(
    out_dir: Path | str,
    train: SampleSet,
    val: SampleSet,
    test: SampleSet,
    spec: SplitSpec,
    stats: NormStats,
) -> Path:
    """Write the three split manifests plus a JSON sidecar holding the seed,
    ratios and training-split normalization statistics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("val", val), ("test", test)):
        write_manifest(part, out_dir / f"{name}.jsonl")
    sidecar = {
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "normalization": stats.to_dict(),
        "sizes": {"train": len(train), "val": len(val), "test": len(test)},
    }
    sidecar_path = out_dir / "split.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar_path


def load_split(
    split_dir: Path | str, data_root: Path | str, check_images: bool = False
) -> tuple[SampleSet, SampleSet, SampleSet, SplitSpec, NormStats]:
    """Read back the three split manifests and sidecar written by write_split.

    Image paths inside the split manifests are relative to `data_root` (the
    directory of the original manifest), not to the split directory.
    """
    split_dir = Path(split_dir)
    data_root = Path(data_root)
    sidecar_path = split_dir / "split.json"
    if not sidecar_path.is_file():
        raise ManifestError(f"split sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    spec = SplitSpec(ratios=tuple(sidecar["ratios"]), seed=int(sidecar["seed"]))
    stats = NormStats.from_dict(sidecar["normalization"])
    parts = []
    for name in ("train", "val", "test"):
        part = load_manifest(split_dir / f"{name}.jsonl", check_images=False)
        part = SampleSet(part.samples, root=data_root)
        if check_images:
            missing = [
                str(sample.images[k])
                for sample in part
                for k in IMAGE_KEYS
                if not (data_root / sample.images[k]).is_file()
            ]
            if missing:
                raise IntegrityError(f"{len(missing)} missing image file(s) in split {name!r}")
        parts.append(part)
    return parts[0], parts[1], parts[2], spec, stats
