"""Tool and action recognition from before/after multi-camera images.

The package covers the full pipeline: a synthetic dataset generator with a
rule-based oracle, manifest loading and splitting, five multi-camera
fusion architectures over configurable backbones, a training harness with
best-validation checkpointing, grid search and multi-seed aggregation, and
report emission. The `toolact` command line exposes all of it.
"""

from .core import (
    Action,
    BackboneSpec,
    CameraView,
    FusionConfig,
    FusionVariant,
    HeadLayout,
    IMAGE_KEYS,
    Phase,
    TaskSpec,
    Tool,
    image_key,
    joint_index,
    split_joint_index,
)
from .data import (
    ArrayExamples,
    CachedViews,
    NormStats,
    Sample,
    SampleSet,
    SplitSpec,
    compute_norm_stats,
    load_manifest,
    load_split,
    preprocess_image,
    split_dataset,
    split_ratios_for,
    write_manifest,
    write_split,
)
from .errors import (
    AggregationError,
    ChannelCountError,
    CheckpointError,
    ConfigurationError,
    DivergedError,
    EvaluationError,
    GenerationError,
    ImageDecodeError,
    InputShapeError,
    IntegrityError,
    LabelError,
    ManifestError,
    NumericalError,
    OracleError,
    SplitError,
    ToolactError,
)
from .evaluation import (
    AggregateResult,
    EvalReport,
    ResultEntry,
    aggregate_seeds,
    confusion_matrix,
    evaluate,
    format_mean_ci,
    render_results_table,
    save_eval_report,
    write_results_table,
)
from .models import (
    FusionModel,
    HeadLogits,
    build_backbone,
    build_fusion_model,
    build_reference_classifier,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .synth import (
    SceneParams,
    default_scene_params,
    generate_synthetic_dataset,
    oracle_accuracy,
    oracle_classify,
)
from .training import (
    GridResult,
    GridSpace,
    GridTrial,
    TrainConfig,
    TrainHistory,
    accuracy_on,
    build_and_train,
    grid_search,
    loss,
    run_seeds,
    seed_everything,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
