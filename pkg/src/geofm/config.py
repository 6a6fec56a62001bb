"""Experiment configuration: dataclass schema, shipped presets, parsing.

A preset named ``<task>+<decoder>`` (e.g. ``fault+mla``) carries the
published recipe for that pairing: AdamW at base rate 1e-5 with 10 warmup
epochs and cosine decay, the per-task batch size, and whether the encoder
is fully fine-tuned or adapted with LoRA.  Config files are YAML mappings
that may start from a preset and override any field; unknown keys are
rejected by their full key path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data.registry import TASK_NAMES, task_spec
from .errors import ConfigError
from .lora import FinetunePolicy
from .model import MODEL_KINDS

DATA_ROOT_ENV = "GEOFM_DATA_ROOT"

FINETUNE_CHOICES = ("full", "lora")

# Per-task batch sizes and the task+decoder pairs adapted with LoRA
# (every other pairing fully fine-tunes the encoder).
_TASK_BATCH_SIZE = {
    "facies": 3,
    "geobody": 32,
    "crater": 3,
    "das_event": 6,
    "fault": 6,
}
_LORA_PAIRS = {("facies", "dpt"), ("fault", "dpt"), ("fault", "mla")}


@dataclass(frozen=True)
class TrainSettings:
    batch_size: int = 4
    base_lr: float = 1e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    warmup_epochs: int = 10
    total_epochs: int = 100
    patience: int = 20

    def __post_init__(self):
        try:
            if self.batch_size < 1:
                raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
            if self.base_lr <= 0:
                raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
            if self.warmup_epochs < 0:
                raise ConfigError(
                    f"warmup_epochs must be >= 0, got {self.warmup_epochs}"
                )
            if self.total_epochs <= self.warmup_epochs:
                raise ConfigError(
                    f"total_epochs ({self.total_epochs}) must exceed "
                    f"warmup_epochs ({self.warmup_epochs})"
                )
            if self.patience < 0:
                raise ConfigError(f"patience must be >= 0, got {self.patience}")
        except TypeError as exc:
            raise ConfigError(f"invalid training setting: {exc}") from exc

    @property
    def betas(self) -> tuple[float, float]:
        return (self.beta1, self.beta2)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    decoder: str
    finetune: str = "full"
    lora_rank: int = 8
    lora_alpha: float | None = None
    lora_targets: tuple[str, ...] = ("query", "key", "value")
    channel_width: int | None = None
    train: TrainSettings = field(default_factory=TrainSettings)
    seed: int = 0
    deterministic: bool = False  # tests opt in; long runs keep full threading
    data_root: str | None = None

    def __post_init__(self):
        task_spec(self.task)  # raises on unknown task
        if self.decoder not in MODEL_KINDS:
            raise ConfigError(
                f"unknown decoder {self.decoder!r}; expected one of {MODEL_KINDS}"
            )
        if self.finetune not in FINETUNE_CHOICES:
            raise ConfigError(
                f"unknown finetune mode {self.finetune!r}; expected one of "
                f"{FINETUNE_CHOICES}"
            )
        if self.decoder == "unet" and self.finetune == "lora":
            raise ConfigError("the scratch baseline has no encoder to adapt")
        object.__setattr__(self, "lora_targets", tuple(self.lora_targets))

    @property
    def class_count(self) -> int:
        return task_spec(self.task).class_count

    def policy(self) -> FinetunePolicy | None:
        if self.decoder == "unet":
            return None
        return FinetunePolicy(
            mode=self.finetune,
            lora_targets=self.lora_targets,
            rank=self.lora_rank,
            alpha=self.lora_alpha,
        )

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["lora_targets"] = list(self.lora_targets)
        return data


def preset_names() -> list[str]:
    names = []
    for task in TASK_NAMES:
        for decoder in MODEL_KINDS:
            names.append(f"{task}+{decoder}")
    return names


def preset(name: str) -> ExperimentConfig:
    """The shipped recipe for a ``<task>+<decoder>`` pairing."""
    if "+" not in name:
        raise ConfigError(
            f"preset {name!r} is not of the form '<task>+<decoder>'"
        )
    task, decoder = name.split("+", maxsplit=1)
    if task not in TASK_NAMES:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASK_NAMES}")
    if decoder not in MODEL_KINDS:
        raise ConfigError(
            f"unknown decoder {decoder!r}; expected one of {MODEL_KINDS}"
        )
    finetune = "lora" if (task, decoder) in _LORA_PAIRS else "full"
    return ExperimentConfig(
        task=task,
        decoder=decoder,
        finetune=finetune,
        train=TrainSettings(batch_size=_TASK_BATCH_SIZE[task]),
    )


def _replace_checked(instance, updates: dict, prefix: str):
    known = {f.name for f in dataclasses.fields(instance)}
    unknown = sorted(set(updates) - known)
    if unknown:
        raise ConfigError(f"unknown config key {prefix}{unknown[0]!r}")
    try:
        return dataclasses.replace(instance, **updates)
    except TypeError as exc:
        raise ConfigError(f"invalid config value under {prefix or 'top level'}: {exc}") from exc


def config_from_dict(
    data: dict, base: ExperimentConfig | None = None
) -> ExperimentConfig:
    """Build a config from a parsed mapping, starting from ``base`` (or a
    named preset under the ``preset`` key, or field defaults)."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a mapping, got {type(data).__name__}")
    data = dict(data)
    preset_name = data.pop("preset", None)
    if preset_name is not None:
        if base is not None:
            raise ConfigError("preset given both in file and externally")
        base = preset(str(preset_name))
    train_updates = data.pop("train", None)
    if base is None:
        for key in ("task", "decoder"):
            if key not in data:
                raise ConfigError(f"config requires {key!r} (or a preset)")
        base = preset(f"{data.pop('task')}+{data.pop('decoder')}")
    config = _replace_checked(base, data, prefix="")
    if train_updates is not None:
        if not isinstance(train_updates, dict):
            raise ConfigError("config key 'train' must be a mapping")
        config = dataclasses.replace(
            config, train=_replace_checked(config.train, train_updates, "train.")
        )
    return config


def parse_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data, base=base)


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_data_root(config: ExperimentConfig) -> Path:
    """Environment variable beats the config field."""
    override = os.environ.get(DATA_ROOT_ENV)
    root = override or config.data_root
    if not root:
        raise ConfigError(
            f"no data root configured; set {DATA_ROOT_ENV} or the "
            "data_root config field"
        )
    return Path(root)
