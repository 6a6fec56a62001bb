"""Fine-tuning loop: seeded shuffling, flip augmentation, weighted Dice
loss, per-step warmup+cosine learning rate, per-epoch validation, and
checkpointing with exact resume.

Epoch randomness derives from (seed, epoch), so a run resumed at epoch k
replays exactly the batches and augmentations an uninterrupted run would
have seen.  Checkpoints are named-tensor archives holding the trainable
model tensors (adapters instead of the full encoder in adapter mode) plus
optimizer state, with run metadata alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig, config_hash
from .data import DatasetManifest, augment_flip, load_entry
from .errors import CheckpointError, TrainingDiverged
from .evaluate import evaluate_model
from .lora import LoRALinear
from .losses import weighted_dice_from_logits
from .model import AdaptedSegmenter
from .schedule import WarmupCosineSchedule, apply_lr
from .tensorio import read_header, read_tensors, write_tensors

BEST_CHECKPOINT = "best.nta"
LAST_CHECKPOINT = "last.nta"
LOG_NAME = "log.jsonl"
_MODEL_PREFIX = "model."
_OPTIM_PREFIX = "optim."


@dataclass
class TrainResult:
    best_miou: float
    best_epoch: int
    epochs_run: int
    global_step: int
    history: list[dict] = field(default_factory=list)
    best_checkpoint: Path | None = None
    last_checkpoint: Path | None = None
    log_path: Path | None = None


def _uses_adapters(model: torch.nn.Module) -> bool:
    return any(isinstance(m, LoRALinear) for m in model.modules())


def checkpoint_tensor_names(model: torch.nn.Module) -> list[str]:
    """State-dict names persisted in a checkpoint: everything, except that
    in adapter mode the frozen encoder base is skipped (adapters suffice)."""
    adapters = _uses_adapters(model)
    names = []
    for name in model.state_dict():
        if (
            adapters
            and isinstance(model, AdaptedSegmenter)
            and name.startswith("encoder.")
            and "lora_A" not in name
            and "lora_B" not in name
        ):
            continue
        names.append(name)
    return names


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    optimizer: torch.optim.Optimizer | None,
    named_params: list[tuple[str, torch.nn.Parameter]] | None,
    metadata: dict[str, str],
) -> Path:
    path = Path(path)
    state = model.state_dict()
    tensors = {
        _MODEL_PREFIX + name: state[name].detach().cpu().numpy()
        for name in checkpoint_tensor_names(model)
    }
    if optimizer is not None and named_params is not None:
        for name, param in named_params:
            entry = optimizer.state.get(param)
            if not entry:
                continue
            for key in ("exp_avg", "exp_avg_sq", "step"):
                value = entry[key]
                if isinstance(value, torch.Tensor):
                    value = value.detach().cpu().numpy()
                else:
                    value = np.asarray(value, dtype=np.float64)
                tensors[f"{_OPTIM_PREFIX}{name}.{key}"] = np.ascontiguousarray(value)
    write_tensors(path, tensors, metadata=metadata)
    return path


def load_model_tensors(path: str | Path, model: torch.nn.Module) -> dict[str, str]:
    """Load the model tensors of a checkpoint into a compatible model.

    Every model tensor in the archive must exist in the model with the same
    shape.  Returns the checkpoint metadata.
    """
    infos, metadata = read_header(path)
    wanted = [n for n in infos if n.startswith(_MODEL_PREFIX)]
    if not wanted:
        raise CheckpointError(f"{path} holds no model tensors")
    stored = read_tensors(path, names=wanted)
    state = model.state_dict()
    update = {}
    for name, array in stored.items():
        key = name[len(_MODEL_PREFIX):]
        if key not in state:
            raise CheckpointError(
                f"checkpoint tensor {key!r} has no place in this model"
            )
        if tuple(array.shape) != tuple(state[key].shape):
            raise CheckpointError(
                f"shape mismatch for {key!r}: checkpoint has "
                f"{tuple(array.shape)}, model expects {tuple(state[key].shape)}"
            )
        update[key] = torch.from_numpy(np.ascontiguousarray(array))
    model.load_state_dict(update, strict=False)
    return metadata


def _load_optimizer_tensors(
    path: str | Path,
    optimizer: torch.optim.Optimizer,
    named_params: list[tuple[str, torch.nn.Parameter]],
) -> None:
    infos, _ = read_header(path)
    wanted = [n for n in infos if n.startswith(_OPTIM_PREFIX)]
    if not wanted:
        return
    stored = read_tensors(path, names=wanted)
    by_name = dict(named_params)
    grouped: dict[str, dict[str, torch.Tensor]] = {}
    for name, array in stored.items():
        body = name[len(_OPTIM_PREFIX):]
        pname, key = body.rsplit(".", maxsplit=1)
        if pname not in by_name:
            raise CheckpointError(
                f"optimizer state for unknown parameter {pname!r}"
            )
        grouped.setdefault(pname, {})[key] = torch.from_numpy(
            np.ascontiguousarray(array)
        )
    for pname, entry in grouped.items():
        missing = {"exp_avg", "exp_avg_sq", "step"} - set(entry)
        if missing:
            raise CheckpointError(
                f"optimizer state for {pname!r} lacks {sorted(missing)}"
            )
        optimizer.state[by_name[pname]] = entry


def _batched(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def run_training(
    model: torch.nn.Module,
    manifest: DatasetManifest,
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Train per the config; returns the run summary.

    ``stop_after_epoch`` ends the invocation early (after that absolute
    epoch index) without touching the schedule, so a later call with
    ``resume_from`` continues exactly where an uninterrupted run would be.
    """
    settings = config.train
    if config.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)

    named_params = [
        (name, p) for name, p in model.named_parameters() if p.requires_grad
    ]
    if not named_params:
        raise TrainingDiverged("model has no trainable parameters", payload={})
    optimizer = torch.optim.AdamW(
        [p for _, p in named_params],
        lr=0.0,
        weight_decay=settings.weight_decay,
        betas=settings.betas,
    )

    entries = manifest.split_entries("train")
    steps_per_epoch = math.ceil(len(entries) / settings.batch_size)
    schedule = WarmupCosineSchedule.from_epochs(
        settings.base_lr,
        settings.warmup_epochs,
        settings.total_epochs,
        steps_per_epoch,
    )

    start_epoch = 0
    global_step = 0
    best_miou = -math.inf
    best_epoch = -1
    if resume_from is not None:
        metadata = load_model_tensors(resume_from, model)
        _load_optimizer_tensors(resume_from, optimizer, named_params)
        start_epoch = int(metadata.get("epoch", "-1")) + 1
        global_step = int(metadata.get("global_step", "0"))
        best_miou = float(metadata.get("best_miou", "-inf"))
        best_epoch = int(metadata.get("best_epoch", "-1"))

    log_file = None
    best_path = last_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        best_path = out_dir / BEST_CHECKPOINT
        last_path = out_dir / LAST_CHECKPOINT
        mode = "a" if resume_from is not None else "w"
        log_file = open(out_dir / LOG_NAME, mode)

    run_hash = config_hash(config)
    history: list[dict] = []

    def emit(record: dict) -> None:
        history.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record) + "\n")

    def metadata_for(epoch: int, val_miou: float) -> dict[str, str]:
        return {
            "config": json.dumps(config.to_dict(), sort_keys=True),
            "config_hash": run_hash,
            "epoch": str(epoch),
            "global_step": str(global_step),
            "val_miou": f"{val_miou:.10f}",
            "best_miou": f"{best_miou:.10f}",
            "best_epoch": str(best_epoch),
        }

    model.train()
    epoch = start_epoch - 1
    try:
        for epoch in range(start_epoch, settings.total_epochs):
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, epoch])
            )
            order = rng.permutation(len(entries))
            coins = rng.random(len(entries))
            for batch in _batched(order, settings.batch_size):
                samples = [
                    augment_flip(load_entry(entries[i], manifest), coins[i])
                    for i in batch
                ]
                images = torch.stack([s.image for s in samples])
                labels = torch.stack([s.label for s in samples])
                masks = torch.stack([s.valid_mask for s in samples])
                global_step += 1
                lr = schedule.lr_at(global_step)
                apply_lr(optimizer, lr)
                logits = model(images)
                breakdown = weighted_dice_from_logits(logits, labels, masks)
                loss = breakdown.total
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        "non-finite training loss",
                        payload={
                            "epoch": epoch,
                            "step": global_step,
                            "lr": lr,
                            "loss": float(loss.detach()),
                            "sample_ids": [s.sample_id for s in samples],
                            "per_class_dice": [
                                float(v) for v in breakdown.per_class_dice.detach()
                            ],
                        },
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                emit(
                    {
                        "step": global_step,
                        "epoch": epoch,
                        "lr": lr,
                        "loss": float(loss.detach()),
                    }
                )
            val_miou = evaluate_model(model, manifest, split="test").miou
            emit({"step": global_step, "epoch": epoch, "val_miou": val_miou})
            if val_miou > best_miou:
                best_miou = val_miou
                best_epoch = epoch
                if best_path is not None:
                    save_checkpoint(
                        best_path,
                        model,
                        optimizer,
                        named_params,
                        metadata_for(epoch, val_miou),
                    )
            if last_path is not None:
                save_checkpoint(
                    last_path,
                    model,
                    optimizer,
                    named_params,
                    metadata_for(epoch, val_miou),
                )
            if log_file is not None:
                log_file.flush()
            if settings.patience and epoch - best_epoch >= settings.patience:
                break
            if stop_after_epoch is not None and epoch >= stop_after_epoch:
                break
    finally:
        if log_file is not None:
            log_file.close()

    return TrainResult(
        best_miou=best_miou,
        best_epoch=best_epoch,
        epochs_run=epoch - start_epoch + 1,
        global_step=global_step,
        history=history,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        log_path=None if out_dir is None else Path(out_dir) / LOG_NAME,
    )
