"""Label vocabulary, task and architecture configuration."""

import numpy as np
import pytest

from toolact.core import (
    Action,
    BackboneSpec,
    CameraView,
    FusionConfig,
    FusionVariant,
    HeadLayout,
    IMAGE_KEYS,
    N_JOINT,
    Phase,
    TaskSpec,
    Tool,
    check_task_fusion,
    config_hash,
    decode_action,
    encode_action,
    image_key,
    joint_index,
    split_joint_index,
)
from toolact.errors import ConfigurationError, LabelError


def test_label_orderings_are_frozen():
    assert [t.name for t in Tool] == ["boomerang", "ruler", "slingshot", "spatula"]
    assert [a.name for a in Action] == ["push", "pull", "left_to_right", "right_to_left"]
    assert [int(t) for t in Tool] == [0, 1, 2, 3]
    assert [int(a) for a in Action] == [0, 1, 2, 3]


def test_image_keys_cover_cameras_by_phase():
    assert IMAGE_KEYS == (
        "left_initial", "left_final",
        "center_initial", "center_final",
        "right_initial", "right_final",
    )
    assert image_key(CameraView.center, Phase.final) == "center_final"


def test_from_name_rejects_unknown():
    with pytest.raises(LabelError):
        Tool.from_name("hammer")
    with pytest.raises(LabelError):
        Action.from_name("rotate")
    with pytest.raises(ConfigurationError):
        TaskSpec.from_name("everything")
    with pytest.raises(ConfigurationError):
        FusionVariant.from_name("9c9n")


def test_action_one_hot_round_trip():
    for action in Action:
        vec = encode_action(action)
        assert vec.shape == (4,) and vec.dtype == np.float32
        assert vec.sum() == 1.0 and vec[int(action)] == 1.0
        assert decode_action(vec) is action
    with pytest.raises(LabelError):
        decode_action(np.array([0.5, 0.5, 0.0, 0.0], dtype=np.float32))


def test_joint_index_round_trip():
    seen = set()
    for tool in Tool:
        for action in Action:
            idx = joint_index(tool, action)
            assert 0 <= idx < N_JOINT
            assert split_joint_index(idx) == (tool, action)
            seen.add(idx)
    assert len(seen) == N_JOINT


def test_task_head_layouts_and_side_input():
    assert TaskSpec.from_name("tools").head_layout is HeadLayout.tool_only
    assert TaskSpec.from_name("tools").uses_action_input
    assert TaskSpec.from_name("tools-no-action").head_layout is HeadLayout.tool_only
    assert not TaskSpec.from_name("tools-no-action").uses_action_input
    assert TaskSpec.from_name("tools+actions").head_layout is HeadLayout.dual
    assert TaskSpec.from_name("actions").head_layout is HeadLayout.action_only
    assert TaskSpec.from_name("joint16").head_layout is HeadLayout.joint16


@pytest.mark.parametrize(
    "name,n_encoders,n_embeddings,keys",
    [
        ("3c1n", 1, 1, 6),
        ("3c6n", 6, 6, 6),
        ("3c3n", 3, 6, 6),
        ("1c2n", 2, 2, 2),
        ("1c1n", 1, 2, 2),
    ],
)
def test_variant_encoder_plans(name, n_encoders, n_embeddings, keys):
    variant = FusionVariant.from_name(name)
    assert variant.n_encoders == n_encoders
    assert variant.n_embeddings == n_embeddings
    assert len(variant.image_keys) == keys


def test_shared_variants_reuse_encoders_across_phases():
    v = FusionVariant.from_name("3c3n")
    for view in (CameraView.left, CameraView.center, CameraView.right):
        assert v.encoder_id(view, Phase.initial) == v.encoder_id(view, Phase.final)
    v2 = FusionVariant.from_name("1c2n")
    assert v2.encoder_id(CameraView.center, Phase.initial) != v2.encoder_id(CameraView.center, Phase.final)


def test_backbone_spec_validation():
    assert BackboneSpec(family="resnet18").embedding_dim == 512
    assert BackboneSpec(family="resnet50").embedding_dim == 2048
    assert BackboneSpec(family="tiny", tiny_width=32).embedding_dim == 32
    with pytest.raises(ConfigurationError):
        BackboneSpec(family="vgg")
    with pytest.raises(ConfigurationError):
        BackboneSpec(first_block_kernel=4)
    with pytest.raises(ConfigurationError):
        BackboneSpec(first_block_stride=3)
    with pytest.raises(ConfigurationError):
        BackboneSpec(input_channels=6)


def test_fusion_config_channels_follow_variant():
    stacked = FusionConfig.create("3c1n", task="tools+actions")
    assert stacked.backbone.input_channels == 18
    plain = FusionConfig.create("1c1n", task="tools+actions")
    assert plain.backbone.input_channels == 3
    with pytest.raises(ConfigurationError):
        FusionConfig(variant=FusionVariant.stacked_3c1n, backbone=BackboneSpec(input_channels=3))


def test_action_input_requires_tool_only_head():
    cfg = FusionConfig.create("1c1n", task="tools")
    assert cfg.use_action_input and cfg.head is HeadLayout.tool_only
    assert cfg.head_input_width == 2 * cfg.backbone.embedding_dim + 4
    with pytest.raises(ConfigurationError):
        FusionConfig(variant=FusionVariant.shared_central_1c1n, use_action_input=True, head=HeadLayout.dual)


def test_check_task_fusion_rejects_mismatches():
    dual_cfg = FusionConfig.create("1c1n", task="tools+actions")
    check_task_fusion(TaskSpec.tools_plus_actions, dual_cfg)
    with pytest.raises(ConfigurationError):
        check_task_fusion(TaskSpec.joint16, dual_cfg)
    with pytest.raises(ConfigurationError):
        check_task_fusion(TaskSpec.tools_with_action, dual_cfg)


def test_config_round_trip_and_hash_stability():
    cfg = FusionConfig.create("3c3n", task="joint16", family="resnet50", first_block_kernel=5)
    again = FusionConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert config_hash(cfg.to_dict()) == config_hash(again.to_dict())
    other = FusionConfig.create("3c3n", task="joint16", family="resnet101", first_block_kernel=5)
    assert config_hash(other.to_dict()) != config_hash(cfg.to_dict())


def test_display_names_name_the_fusion_scheme():
    assert FusionVariant.from_name("3c1n").display_name == "Stacked-channels (3C-1N)"
    assert FusionVariant.from_name("1c1n").display_name == "Shared-central (1C-1N)"
