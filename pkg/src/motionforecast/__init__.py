"""Unified 3D human pose and trajectory forecasting.

The pipeline canonicalizes an observed motion window (root translation to the
origin, observed heading to +x), embeds each pose with skeleton graph
attention, forecasts every future frame in one non-autoregressive transformer
pass, and maps the result back to world coordinates.
"""

from .data import (
    MODES,
    MalformedHeaderError,
    NonFiniteValueError,
    RigidMotion,
    RowLengthError,
    SequenceFileError,
    SyntheticSpec,
    apply_random_rigid,
    apply_rigid,
    convert_raw,
    default_skeleton,
    generate_synthetic,
    load_directory,
    random_rigid,
    read_sequence,
    write_sequence,
)
from .embedding import (
    GraphAttention,
    PoseSequenceEmbedding,
    spatial_encoding,
    temporal_encoding,
)
from .metrics import (
    BenchResult,
    EvalReport,
    ZeroVelocityPredictor,
    ade_pose,
    ade_traj,
    bench_forward,
    evaluate_windows,
    fde_pose,
    fde_traj,
)
from .model import (
    CheckpointError,
    ModelConfig,
    MotionPredictor,
    MotionTransformer,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from .presets import PRESETS, DatasetPreset, get_preset
from .skeleton import (
    HorizonSpec,
    MotionSequence,
    Pose,
    SequenceTooShortError,
    Skeleton,
    build_adjacency,
    sliding_windows,
    split_sequence,
)
from .training import (
    AdamW,
    NonFiniteGradientError,
    TrainConfig,
    TrainResult,
    TrainingDivergedError,
    l2_loss,
    train,
)
from .transform import (
    DIRECTION_EPS,
    TransformParams,
    canonicalize,
    compute_params,
    decanonicalize,
    rotation_z,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BenchResult",
    "CheckpointError",
    "DIRECTION_EPS",
    "DatasetPreset",
    "EvalReport",
    "GraphAttention",
    "HorizonSpec",
    "MODES",
    "MalformedHeaderError",
    "ModelConfig",
    "MotionPredictor",
    "MotionSequence",
    "MotionTransformer",
    "NonFiniteGradientError",
    "NonFiniteValueError",
    "PRESETS",
    "Pose",
    "PoseSequenceEmbedding",
    "RigidMotion",
    "RowLengthError",
    "SequenceFileError",
    "SequenceTooShortError",
    "Skeleton",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "TransformParams",
    "ZeroVelocityPredictor",
    "ade_pose",
    "ade_traj",
    "apply_random_rigid",
    "apply_rigid",
    "bench_forward",
    "build_adjacency",
    "canonicalize",
    "compute_params",
    "convert_raw",
    "count_params",
    "decanonicalize",
    "default_skeleton",
    "evaluate_windows",
    "fde_pose",
    "fde_traj",
    "generate_synthetic",
    "get_preset",
    "l2_loss",
    "load_checkpoint",
    "load_directory",
    "random_rigid",
    "read_sequence",
    "rotation_z",
    "save_checkpoint",
    "sliding_windows",
    "spatial_encoding",
    "split_sequence",
    "temporal_encoding",
    "train",
    "write_sequence",
]
