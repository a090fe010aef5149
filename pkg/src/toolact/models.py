"""Backbones and fusion models.

Backbones are trained from scratch: ResNet-18/50/101 with a configurable
first block (kernel 3/5/7, stride 1/2) and input width (3 channels, or 18
for the stacked variant), plus a small 4-block convolutional backbone for
tests and desk-scale runs. Every backbone maps an image tensor to a flat
embedding via global average pooling.

A fusion model owns one encoder per distinct parameter set of its variant.
Shared variants register one module for both phases, so sharing is
aliasing, not weight copying: any update to the initial-phase encoder is
by construction an update to the final-phase encoder. Embeddings are
concatenated in a frozen order (cameras left, center, right; phase initial
then final), optionally joined by the action one-hot, and fed to single
affine heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import torch
from torch import Tensor, nn

from .core import (
    BackboneSpec,
    FusionConfig,
    FusionVariant,
    HeadLayout,
    LABEL_ORDERINGS,
    config_hash,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    InputShapeError,
    NumericalError,
)


def _init_module(module: nn.Module) -> None:
    """He fan-in initialization for convolutions, unit scale for norms,
    zero biases."""
    if isinstance(module, nn.Conv2d):
        nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.GroupNorm)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with an identity (or projected) skip."""

    expansion = 1

    def __init__(self, in_planes: int, planes: int, stride: int = 1,
                 downsample: nn.Module | None = None):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x: Tensor) -> Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3, 1x1 expand, with skip. Expansion factor 4."""

    expansion = 4

    def __init__(self, in_planes: int, planes: int, stride: int = 1,
                 downsample: nn.Module | None = None):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = nn.Conv2d(planes, planes * self.expansion, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(planes * self.expansion)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x: Tensor) -> Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


_RESNET_LAYOUT: dict[str, tuple[type, tuple[int, int, int, int]]] = {
    "resnet18": (BasicBlock, (2, 2, 2, 2)),
    "resnet50": (Bottleneck, (3, 4, 6, 3)),
    "resnet101": (Bottleneck, (3, 4, 23, 3)),
}


class ResNetBackbone(nn.Module):
    """Residual encoder ending in global average pooling.

    Matches the reference layout of its family except for the configurable
    first block (kernel size, stride, input channel count).
    """

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        if spec.family not in _RESNET_LAYOUT:
            raise ConfigurationError(f"unknown residual family {spec.family!r}")
        block, layers = _RESNET_LAYOUT[spec.family]
        self.spec = spec
        self.embedding_dim = 512 * block.expansion

        k, s = spec.first_block_kernel, spec.first_block_stride
        self.conv1 = nn.Conv2d(spec.input_channels, 64, k, stride=s, padding=k // 2, bias=False)
        self.bn1 = nn.BatchNorm2d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)

        self.in_planes = 64
        self.layer1 = self._make_layer(block, 64, layers[0], stride=1)
        self.layer2 = self._make_layer(block, 128, layers[1], stride=2)
        self.layer3 = self._make_layer(block, 256, layers[2], stride=2)
        self.layer4 = self._make_layer(block, 512, layers[3], stride=2)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.apply(_init_module)

    def _make_layer(self, block: type, planes: int, count: int, stride: int) -> nn.Sequential:
        downsample = None
        if stride != 1 or self.in_planes != planes * block.expansion:
            downsample = nn.Sequential(
                nn.Conv2d(self.in_planes, planes * block.expansion, 1, stride=stride, bias=False),
                nn.BatchNorm2d(planes * block.expansion),
            )
        blocks = [block(self.in_planes, planes, stride, downsample)]
        self.in_planes = planes * block.expansion
        blocks += [block(self.in_planes, planes) for _ in range(count - 1)]
        return nn.Sequential(*blocks)

    def forward(self, x: Tensor) -> Tensor:
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer4(self.layer3(self.layer2(self.layer1(x))))
        return torch.flatten(self.avgpool(x), 1)


class TinyBackbone(nn.Module):
    """Small test encoder: four stride-2 conv blocks (conv + bias + ReLU)
    with tapered widths (w/4, w/2, w, w), global average pooling to width w.

    The taper keeps the early full-resolution convolutions cheap so the
    whole desk-scale pipeline runs on a single CPU core; the embedding
    width and every structural contract (first-block configurability,
    channel count, pooling) match the full backbones. There is no
    normalization layer on purpose: per-sample normalization would cancel
    the global intensity statistics that, after average pooling, are the
    shallow net's cheapest carrier of object-position information.
    """

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        w = spec.tiny_width
        widths = (w // 4, w // 2, w, w)
        self.embedding_dim = w
        blocks: list[nn.Module] = []
        in_ch = spec.input_channels
        for i, width in enumerate(widths):
            k = spec.first_block_kernel if i == 0 else 3
            s = spec.first_block_stride if i == 0 else 2
            blocks += [
                nn.Conv2d(in_ch, width, k, stride=s, padding=k // 2, bias=True),
                nn.ReLU(inplace=True),
            ]
            in_ch = width
        self.features = nn.Sequential(*blocks)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.apply(_init_module)

    def forward(self, x: Tensor) -> Tensor:
        return torch.flatten(self.avgpool(self.features(x)), 1)


def build_backbone(spec: BackboneSpec) -> nn.Module:
    """Encoder for a spec: input_channels x H x W image -> embedding_dim."""
    if spec.family == "tiny":
        return TinyBackbone(spec)
    if spec.family in _RESNET_LAYOUT:
        return ResNetBackbone(spec)
    raise ConfigurationError(f"unknown backbone family {spec.family!r}")


def build_reference_classifier(family: str, classes: int = 1000) -> nn.Module:
    """Backbone plus a single affine classifier head, in the reference
    configuration used for published parameter counts."""
    spec = BackboneSpec(family=family)
    backbone = build_backbone(spec)
    head = nn.Linear(backbone.embedding_dim, classes)
    nn.init.zeros_(head.bias)
    return nn.Sequential(backbone, head)


def count_parameters(model: nn.Module) -> int:
    """Trainable scalar parameters; aliased (shared) tensors count once."""
    seen: set[int] = set()
    total = 0
    for p in model.parameters():
        if p.requires_grad and id(p) not in seen:
            seen.add(id(p))
            total += p.numel()
    return total


@dataclass
class HeadLogits:
    """Per-head logits of one forward pass. Only the heads the model owns
    are populated."""

    tool: Tensor | None = None
    action: Tensor | None = None
    joint: Tensor | None = None

    def as_dict(self) -> dict[str, Tensor]:
        return {k: v for k, v in (("tool", self.tool), ("action", self.action), ("joint", self.joint)) if v is not None}


class FusionModel(nn.Module):
    """One of the five fusion variants wired to its classifier head(s).

    forward consumes a dict of image tensors keyed like Sample.images,
    restricted to the variant's cameras, each of shape (B, 3, H, W). The
    stacked variant concatenates them internally into one 18-channel
    tensor for its single encoder.
    """

    def __init__(self, config: FusionConfig):
        super().__init__()
        self.config = config
        self.variant = config.variant
        self.encoders = nn.ModuleDict(
            {eid: build_backbone(config.backbone) for eid in self.variant.encoder_ids}
        )
        self.heads = nn.ModuleDict(
            {name: nn.Linear(config.head_input_width, n)
             for name, n in config.head.class_counts.items()}
        )
        for head in self.heads.values():
            nn.init.zeros_(head.bias)

    def _encoder_for(self, key: str) -> tuple[str, nn.Module]:
        from .core import CameraView, Phase  # local import avoids a cycle at module load

        view_name, phase_name = key.split("_", 1)
        eid = self.variant.encoder_id(CameraView(view_name), Phase(phase_name))
        return eid, self.encoders[eid]

    def _check_inputs(self, images: Mapping[str, Tensor], action_onehot: Tensor | None) -> int:
        expected = set(self.variant.image_keys)
        missing = expected - set(images)
        extra = set(images) - expected
        if missing:
            raise InputShapeError(f"missing input image {sorted(missing)[0]!r} for variant {self.variant.value}")
        if extra:
            raise InputShapeError(f"unexpected input image {sorted(extra)[0]!r} for variant {self.variant.value}")
        batch = None
        for key in self.variant.image_keys:
            t = images[key]
            if t.ndim != 4 or t.shape[1] != 3:
                raise InputShapeError(f"input {key!r} must be (B, 3, H, W), got {tuple(t.shape)}")
            if batch is None:
                batch = t.shape[0]
            elif t.shape[0] != batch:
                raise InputShapeError(f"input {key!r} batch size {t.shape[0]} != {batch}")
        if self.config.use_action_input:
            if action_onehot is None:
                raise InputShapeError("this architecture requires the action one-hot input")
            if action_onehot.ndim != 2 or action_onehot.shape != (batch, 4):
                raise InputShapeError(f"action one-hot must be ({batch}, 4), got {tuple(action_onehot.shape)}")
        elif action_onehot is not None:
            raise InputShapeError("this architecture does not accept an action one-hot input")
        return int(batch)  # type: ignore[arg-type]

    @staticmethod
    def _check_finite(tensor: Tensor, layer: str) -> Tensor:
        if not torch.isfinite(tensor).all():
            raise NumericalError(f"non-finite activations in {layer}", layer=layer)
        return tensor

    def forward(self, images: Mapping[str, Tensor], action_onehot: Tensor | None = None) -> HeadLogits:
        self._check_inputs(images, action_onehot)
        if self.variant.stacked:
            stacked = torch.cat([images[k] for k in self.variant.image_keys], dim=1)
            parts = [self._check_finite(self.encoders["stacked"](stacked), "encoder stacked")]
        else:
            parts = []
            for key in self.variant.image_keys:
                eid, encoder = self._encoder_for(key)
                parts.append(self._check_finite(encoder(images[key]), f"encoder {eid}"))
        fused = torch.cat(parts, dim=1)
        if action_onehot is not None:
            fused = torch.cat([fused, action_onehot.to(fused.dtype)], dim=1)

        logits = HeadLogits()
        for name, head in self.heads.items():
            out = self._check_finite(head(fused), f"head {name}")
            setattr(logits, name, out)
        return logits


def build_fusion_model(config: FusionConfig) -> FusionModel:
    return FusionModel(config)


CHECKPOINT_FORMAT = "toolact-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Path | str,
    model: FusionModel,
    task: str | None = None,
    normalization: dict | None = None,
    extra: dict | None = None,
) -> Path:
    """Write a self-describing checkpoint: architecture config (with hash),
    task, normalization statistics, label orderings and all parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = model.config.to_dict()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "task": task,
        "normalization": normalization,
        "label_orderings": LABEL_ORDERINGS,
        "extra": extra or {},
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: Path | str, expected: FusionConfig | None = None
) -> tuple[FusionModel, dict]:
    """Rebuild a model from a checkpoint.

    When `expected` is given, the stored config hash must match it exactly;
    a mismatch means the caller asked for a different architecture than the
    file contains.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a recognized checkpoint file")
    stored_hash = payload.get("config_hash")
    if stored_hash != config_hash(payload["config"]):
        raise CheckpointError(f"{path}: config hash does not match stored configuration")
    if expected is not None and config_hash(expected.to_dict()) != stored_hash:
        raise CheckpointError(
            f"{path} holds architecture {payload['config']}, which does not match the requested configuration"
        )
    config = FusionConfig.from_dict(payload["config"])
    model = FusionModel(config)
    model.load_state_dict(payload["state_dict"])
    return model, payload
