"""Adapting a pretrained vision transformer to geophysical segmentation.

A ViT-S/14 encoder with multi-depth feature taps feeds interchangeable
decoder heads (linear probe, progressive upsampling, multi-level
aggregation, dense-prediction fusion); the encoder is fine-tuned either
fully or through low-rank adapters.  Training uses an inverse-frequency
weighted Dice loss with warmup+cosine scheduling; evaluation reports
confusion-matrix mIoU/mPA; a scratch Unet serves as the baseline.
"""

from .config import (
    ExperimentConfig,
    TrainSettings,
    config_hash,
    parse_config,
    preset,
    preset_names,
)
from .decoders import DecoderConfig, LogitMap, build_decoder, decoder_param_count
from .encoder import EncoderConfig, FeatureTaps, ViTEncoder, build_encoder
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GeofmError,
    MissingArtifactError,
    TrainingDiverged,
)
from .evaluate import evaluate_model, save_report
from .features import FeatureProjection, pca_project_features, render_rgb_map
from .lora import (
    FinetunePolicy,
    LoRALinear,
    apply_policy,
    inject_lora,
    merge_lora,
)
from .losses import LossBreakdown, class_weights, weighted_dice_loss
from .metrics import (
    MetricsReport,
    compute_miou_mpa,
    confusion_counts,
    miou_distance_profile,
)
from .model import AdaptedSegmenter, build_model, count_trainable_params
from .schedule import WarmupCosineSchedule
from .trainer import TrainResult, run_training
from .unet import Unet, UnetConfig

__version__ = "0.1.0"

__all__ = [
    "AdaptedSegmenter",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DecoderConfig",
    "EncoderConfig",
    "ExperimentConfig",
    "FeatureProjection",
    "FeatureTaps",
    "FinetunePolicy",
    "GeofmError",
    "LoRALinear",
    "LogitMap",
    "LossBreakdown",
    "MetricsReport",
    "MissingArtifactError",
    "TrainResult",
    "TrainSettings",
    "TrainingDiverged",
    "Unet",
    "UnetConfig",
    "ViTEncoder",
    "WarmupCosineSchedule",
    "apply_policy",
    "build_decoder",
    "build_encoder",
    "build_model",
    "class_weights",
    "compute_miou_mpa",
    "config_hash",
    "confusion_counts",
    "count_trainable_params",
    "decoder_param_count",
    "evaluate_model",
    "inject_lora",
    "merge_lora",
    "miou_distance_profile",
    "parse_config",
    "pca_project_features",
    "preset",
    "preset_names",
    "render_rgb_map",
    "run_training",
    "save_report",
    "weighted_dice_loss",
]
