"""Shared vocabulary: label enums, task definitions, fusion variants and
architecture configuration.

The orderings defined here are load-bearing. One-hot encodings, joint
16-way indices and confusion-matrix axes all assume the canonical member
order of Action and Tool, and checkpoints store these orderings so a
loaded model can refuse mismatched data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum

import numpy as np

from .errors import ConfigurationError, LabelError


class Action(IntEnum):
    """The four scripted manipulation actions, in canonical order."""

    push = 0
    pull = 1
    left_to_right = 2
    right_to_left = 3

    @classmethod
    def from_name(cls, name: str) -> "Action":
        try:
            return cls[name]
        except KeyError:
            raise LabelError(f"unknown action name {name!r}") from None


class Tool(IntEnum):
    """The four tools, in canonical order."""

    boomerang = 0
    ruler = 1
    slingshot = 2
    spatula = 3

    @classmethod
    def from_name(cls, name: str) -> "Tool":
        try:
            return cls[name]
        except KeyError:
            raise LabelError(f"unknown tool name {name!r}") from None


class CameraView(str, Enum):
    left = "left"
    center = "center"
    right = "right"


class Phase(str, Enum):
    initial = "initial"
    final = "final"


# Canonical ordering of the six per-sample images: cameras (left, center,
# right) x phase (initial, final). Embedding concatenation and the manifest
# schema both follow this order.
CAMERA_ORDER = (CameraView.left, CameraView.center, CameraView.right)
PHASE_ORDER = (Phase.initial, Phase.final)


def image_key(view: CameraView, phase: Phase) -> str:
    return f"{view.value}_{phase.value}"


IMAGE_KEYS = tuple(image_key(v, p) for v in CAMERA_ORDER for p in PHASE_ORDER)

N_TOOLS = len(Tool)
N_ACTIONS = len(Action)
N_JOINT = N_TOOLS * N_ACTIONS


def encode_action(action: Action) -> np.ndarray:
    """One-hot encode an action at its canonical index, length 4, float32."""
    vec = np.zeros(N_ACTIONS, dtype=np.float32)
    vec[int(action)] = 1.0
    return vec


def decode_action(vec: np.ndarray) -> Action:
    """Inverse of encode_action; validates that the input is a unit one-hot."""
    arr = np.asarray(vec)
    if arr.shape != (N_ACTIONS,):
        raise LabelError(f"expected a length-{N_ACTIONS} vector, got shape {arr.shape}")
    ones = np.flatnonzero(arr == 1.0)
    if len(ones) != 1 or arr.sum() != 1.0:
        raise LabelError("not a one-hot vector")
    return Action(int(ones[0]))


def joint_index(tool: Tool, action: Action) -> int:
    """16-way class index for a (tool, action) pair: tool * 4 + action."""
    return int(tool) * N_ACTIONS + int(action)


def split_joint_index(index: int) -> tuple[Tool, Action]:
    if not 0 <= index < N_JOINT:
        raise LabelError(f"joint index {index} out of range [0, {N_JOINT})")
    return Tool(index // N_ACTIONS), Action(index % N_ACTIONS)


class HeadLayout(str, Enum):
    """Classifier head arrangement on top of the fused embedding."""

    dual = "dual"            # two 4-way heads: tool and action
    joint16 = "joint16"      # one 16-way head over (tool, action) pairs
    tool_only = "tool_only"  # one 4-way tool head
    action_only = "action_only"  # one 4-way action head

    @property
    def class_counts(self) -> dict[str, int]:
        return {
            HeadLayout.dual: {"tool": N_TOOLS, "action": N_ACTIONS},
            HeadLayout.joint16: {"joint": N_JOINT},
            HeadLayout.tool_only: {"tool": N_TOOLS},
            HeadLayout.action_only: {"action": N_ACTIONS},
        }[self]


class TaskSpec(str, Enum):
    """The recognition tasks. Values double as CLI names."""

    tools_with_action = "tools"
    tools_no_action = "tools-no-action"
    tools_plus_actions = "tools+actions"
    actions_only = "actions"
    joint16 = "joint16"

    @classmethod
    def from_name(cls, name: str) -> "TaskSpec":
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ConfigurationError(
            f"unknown task {name!r}; expected one of "
            f"{', '.join(m.value for m in cls)}"
        )

    @property
    def head_layout(self) -> HeadLayout:
        return {
            TaskSpec.tools_with_action: HeadLayout.tool_only,
            TaskSpec.tools_no_action: HeadLayout.tool_only,
            TaskSpec.tools_plus_actions: HeadLayout.dual,
            TaskSpec.actions_only: HeadLayout.action_only,
            TaskSpec.joint16: HeadLayout.joint16,
        }[self]

    @property
    def uses_action_input(self) -> bool:
        """Only the action-informed tool task feeds the action one-hot."""
        return self is TaskSpec.tools_with_action

    @property
    def predicts_tool(self) -> bool:
        return self is not TaskSpec.actions_only

    @property
    def predicts_action(self) -> bool:
        return self in (TaskSpec.tools_plus_actions, TaskSpec.actions_only, TaskSpec.joint16)


class FusionVariant(str, Enum):
    """The five schemes for combining multi-camera before/after images.

    Naming: <cameras>C-<networks>N. "Shared" variants run the initial and
    final image through the same encoder parameters; "separate" variants
    give each image its own encoder; "stacked" concatenates everything into
    one 18-channel input for a single encoder.
    """

    stacked_3c1n = "3c1n"
    separate_3c6n = "3c6n"
    shared_3c3n = "3c3n"
    separate_central_1c2n = "1c2n"
    shared_central_1c1n = "1c1n"

    @classmethod
    def from_name(cls, name: str) -> "FusionVariant":
        for member in cls:
            if name.lower() in (member.value, member.name):
                return member
        raise ConfigurationError(
            f"unknown architecture {name!r}; expected one of "
            f"{', '.join(m.value for m in cls)}"
        )

    @property
    def display_name(self) -> str:
        return {
            FusionVariant.stacked_3c1n: "Stacked-channels (3C-1N)",
            FusionVariant.separate_3c6n: "Separate (3C-6N)",
            FusionVariant.shared_3c3n: "Shared (3C-3N)",
            FusionVariant.separate_central_1c2n: "Separate-central (1C-2N)",
            FusionVariant.shared_central_1c1n: "Shared-central (1C-1N)",
        }[self]

    @property
    def cameras(self) -> tuple[CameraView, ...]:
        if self in (FusionVariant.separate_central_1c2n, FusionVariant.shared_central_1c1n):
            return (CameraView.center,)
        return CAMERA_ORDER

    @property
    def stacked(self) -> bool:
        return self is FusionVariant.stacked_3c1n

    @property
    def image_keys(self) -> tuple[str, ...]:
        """Input image keys this variant consumes, in canonical order."""
        return tuple(image_key(v, p) for v in self.cameras for p in PHASE_ORDER)

    def encoder_id(self, view: CameraView, phase: Phase) -> str:
        """Name of the encoder that processes the (view, phase) image.

        Shared variants map both phases of a camera to one id; separate
        variants give every image its own id. The stacked variant has a
        single encoder that is handled specially by the model.
        """
        if self is FusionVariant.stacked_3c1n:
            return "stacked"
        if self is FusionVariant.separate_3c6n:
            return image_key(view, phase)
        if self is FusionVariant.shared_3c3n:
            return view.value
        if self is FusionVariant.separate_central_1c2n:
            return phase.value
        return "center"

    @property
    def encoder_ids(self) -> tuple[str, ...]:
        if self is FusionVariant.stacked_3c1n:
            return ("stacked",)
        seen: list[str] = []
        for view in self.cameras:
            for phase in PHASE_ORDER:
                eid = self.encoder_id(view, phase)
                if eid not in seen:
                    seen.append(eid)
        return tuple(seen)

    @property
    def n_encoders(self) -> int:
        return len(self.encoder_ids)

    @property
    def n_embeddings(self) -> int:
        """Number of embeddings concatenated before the heads."""
        return 1 if self.stacked else len(self.image_keys)


BACKBONE_FAMILIES = ("resnet18", "resnet50", "resnet101", "tiny")

_RESNET_EMBEDDING = {"resnet18": 512, "resnet50": 2048, "resnet101": 2048}


@dataclass(frozen=True)
class BackboneSpec:
    """Configuration of one encoder.

    first_block_kernel and first_block_stride parameterize the first
    convolution (grid-search axes). input_channels is 3 except for the
    stacked variant where all six images form one 18-channel input.
    tiny_width sets the embedding width of the test backbone and is ignored
    by the ResNet families.
    """

    family: str = "resnet18"
    first_block_kernel: int = 7
    first_block_stride: int = 2
    input_channels: int = 3
    tiny_width: int = 64

    def __post_init__(self):
        if self.family not in BACKBONE_FAMILIES:
            raise ConfigurationError(
                f"unknown backbone family {self.family!r}; expected one of {BACKBONE_FAMILIES}"
            )
        if self.first_block_kernel not in (3, 5, 7):
            raise ConfigurationError(f"first_block_kernel must be 3, 5 or 7, got {self.first_block_kernel}")
        if self.first_block_stride not in (1, 2):
            raise ConfigurationError(f"first_block_stride must be 1 or 2, got {self.first_block_stride}")
        if self.input_channels not in (3, 18):
            raise ConfigurationError(f"input_channels must be 3 or 18, got {self.input_channels}")
        if self.family == "tiny" and (self.tiny_width < 4 or self.tiny_width % 4 != 0):
            raise ConfigurationError(f"tiny_width must be a positive multiple of 4, got {self.tiny_width}")

    @property
    def embedding_dim(self) -> int:
        if self.family == "tiny":
            return self.tiny_width
        return _RESNET_EMBEDDING[self.family]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneSpec":
        return cls(**data)


@dataclass(frozen=True)
class FusionConfig:
    """Complete architecture description: variant, backbone, optional action
    one-hot side input, and head layout."""

    variant: FusionVariant
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    use_action_input: bool = False
    head: HeadLayout = HeadLayout.dual

    def __post_init__(self):
        if self.use_action_input and self.head is not HeadLayout.tool_only:
            raise ConfigurationError(
                "the action one-hot input is only valid when predicting tools alone "
                f"(head={self.head.value!r})"
            )
        expected_channels = 18 if self.variant.stacked else 3
        if self.backbone.input_channels != expected_channels:
            raise ConfigurationError(
                f"variant {self.variant.value} needs input_channels={expected_channels}, "
                f"got {self.backbone.input_channels}"
            )

    @classmethod
    def create(
        cls,
        variant: FusionVariant | str,
        task: "TaskSpec | str | None" = None,
        family: str = "resnet18",
        first_block_kernel: int = 7,
        first_block_stride: int = 2,
        tiny_width: int = 64,
    ) -> "FusionConfig":
        """Build a config whose channel count, head and side-input match the
        variant and (optionally) the task."""
        if isinstance(variant, str):
            variant = FusionVariant.from_name(variant)
        if isinstance(task, str):
            task = TaskSpec.from_name(task)
        backbone = BackboneSpec(
            family=family,
            first_block_kernel=first_block_kernel,
            first_block_stride=first_block_stride,
            input_channels=18 if variant.stacked else 3,
            tiny_width=tiny_width,
        )
        head = task.head_layout if task is not None else HeadLayout.dual
        use_action = task.uses_action_input if task is not None else False
        return cls(variant=variant, backbone=backbone, use_action_input=use_action, head=head)

    @property
    def head_input_width(self) -> int:
        width = self.variant.n_embeddings * self.backbone.embedding_dim
        if self.use_action_input:
            width += N_ACTIONS
        return width

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "backbone": self.backbone.to_dict(),
            "use_action_input": self.use_action_input,
            "head": self.head.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FusionConfig":
        return cls(
            variant=FusionVariant.from_name(data["variant"]),
            backbone=BackboneSpec.from_dict(data["backbone"]),
            use_action_input=bool(data["use_action_input"]),
            head=HeadLayout(data["head"]),
        )


def check_task_fusion(task: TaskSpec, config: FusionConfig) -> None:
    """Reject task/architecture pairings before any compute happens."""
    if config.head is not task.head_layout:
        raise ConfigurationError(
            f"task {task.value!r} needs head {task.head_layout.value!r}, "
            f"but the architecture has {config.head.value!r}"
        )
    if config.use_action_input != task.uses_action_input:
        if task.uses_action_input:
            raise ConfigurationError(
                f"task {task.value!r} feeds the action one-hot but the architecture "
                "was built without it"
            )
        raise ConfigurationError(
            f"task {task.value!r} does not provide an action one-hot input "
            "(only the action-informed tool task does)"
        )


def config_hash(payload: dict) -> str:
    """Stable short hash of a JSON-serializable configuration dict."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


LABEL_ORDERINGS = {
    "tools": [t.name for t in Tool],
    "actions": [a.name for a in Action],
    "image_keys": list(IMAGE_KEYS),
}
