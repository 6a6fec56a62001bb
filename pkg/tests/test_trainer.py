"""Training loop: determinism, checkpoints, exact resume, stopping rules."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
import torch

from geofm.config import config_from_dict
from geofm.data import load_manifest
from geofm.errors import CheckpointError, TrainingDiverged
from geofm.lora import FinetunePolicy
from geofm.model import build_model
from geofm.tensorio import read_header, read_metadata
from geofm.trainer import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    LOG_NAME,
    checkpoint_tensor_names,
    load_model_tensors,
    run_training,
    save_checkpoint,
)
from helpers import TOY_ENCODER_CONFIG, write_pair_tree


@pytest.fixture()
def tiny_setup(tmp_path):
    """Four-sample 28x28 task plus a full-finetune linear toy model."""
    root = write_pair_tree(tmp_path / "data", "das_event", train_n=4, test_n=2)
    manifest = load_manifest(root, "das_event")
    config = config_from_dict(
        {
            "preset": "das_event+linear",
            "seed": 0,
            "deterministic": True,
            "train": {
                "batch_size": 2,
                "base_lr": 1e-3,
                "warmup_epochs": 1,
                "total_epochs": 4,
                "patience": 0,
            },
        }
    )
    return manifest, config


def _fresh_model(config, seed=0):
    return build_model(
        config.decoder,
        config.class_count,
        policy=config.policy(),
        encoder_config=TOY_ENCODER_CONFIG,
        seed=seed,
    )


def test_training_runs_and_reports(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    result = run_training(model, manifest, config, out_dir=tmp_path / "run")
    assert result.epochs_run == 4
    assert result.global_step == 8  # 2 steps/epoch * 4 epochs
    assert 0.0 <= result.best_miou <= 1.0
    assert 0 <= result.best_epoch < 4
    assert result.best_checkpoint.exists()
    assert result.last_checkpoint.exists()
    assert result.log_path.exists()

    steps = [r for r in result.history if "loss" in r]
    assert len(steps) == 8
    assert all(0.0 <= r["loss"] <= 1.0 + 1e-6 for r in steps)
    vals = [r for r in result.history if "val_miou" in r]
    assert len(vals) == 4


def test_lr_trace_follows_schedule(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    result = run_training(model, manifest, config)
    lrs = {r["step"]: r["lr"] for r in result.history if "loss" in r}
    # warmup spans epoch 0 (2 steps); step counting is 1-based
    assert lrs[1] == pytest.approx(1e-3 * 1 / 2)
    assert lrs[2] == pytest.approx(1e-3)
    # cosine from step 2 to step 8: lr(s) = base/2 (1 + cos(pi (s-2)/6))
    for s in range(3, 9):
        expected = 1e-3 * 0.5 * (1 + math.cos(math.pi * (s - 2) / 6))
        assert lrs[s] == pytest.approx(expected, rel=1e-9)


def test_rerun_is_deterministic(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    first = run_training(_fresh_model(config), manifest, config)
    second = run_training(_fresh_model(config), manifest, config)
    losses1 = [r["loss"] for r in first.history if "loss" in r]
    losses2 = [r["loss"] for r in second.history if "loss" in r]
    assert losses1 == losses2
    assert first.best_miou == second.best_miou


def test_seed_changes_trajectory(tiny_setup):
    manifest, config = tiny_setup
    other = config_from_dict({**config.to_dict(), "seed": 1})
    a = run_training(_fresh_model(config, seed=0), manifest, config)
    b = run_training(_fresh_model(other, seed=0), manifest, other)
    la = [r["loss"] for r in a.history if "loss" in r]
    lb = [r["loss"] for r in b.history if "loss" in r]
    assert la != lb


def test_resume_matches_uninterrupted_run(tiny_setup, tmp_path):
    """Stop after epoch 1, resume from last.nta: the continued loss/miou
    trace must be bitwise identical to the single uninterrupted run."""
    manifest, config = tiny_setup

    full = run_training(
        _fresh_model(config), manifest, config, out_dir=tmp_path / "full"
    )

    part_dir = tmp_path / "part"
    run_training(
        _fresh_model(config),
        manifest,
        config,
        out_dir=part_dir,
        stop_after_epoch=1,
    )
    resumed = run_training(
        _fresh_model(config, seed=123),  # deliberately different init
        manifest,
        config,
        out_dir=part_dir,
        resume_from=part_dir / LAST_CHECKPOINT,
    )

    full_steps = [r for r in full.history if "loss" in r]
    resumed_steps = [r for r in resumed.history if "loss" in r]
    assert [r["step"] for r in resumed_steps] == [5, 6, 7, 8]
    tail = {r["step"]: r["loss"] for r in full_steps if r["step"] >= 5}
    for r in resumed_steps:
        assert r["loss"] == tail[r["step"]], f"divergence at step {r['step']}"
    assert resumed.global_step == full.global_step
    assert resumed.best_miou == pytest.approx(full.best_miou)

    # the appended log holds the full trace
    records = [
        json.loads(line)
        for line in (part_dir / LOG_NAME).read_text().splitlines()
    ]
    assert [r["step"] for r in records if "loss" in r] == list(range(1, 9))


def test_checkpoint_metadata_and_roundtrip(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    run_training(model, manifest, config, out_dir=tmp_path / "run")
    path = tmp_path / "run" / LAST_CHECKPOINT
    meta = read_metadata(path)
    assert meta["epoch"] == "3"
    assert meta["global_step"] == "8"
    assert "config_hash" in meta and len(meta["config_hash"]) == 64
    stored_config = json.loads(meta["config"])
    assert stored_config["task"] == "das_event"

    clone = _fresh_model(config, seed=77)
    load_model_tensors(path, clone)
    for (na, pa), (nb, pb) in zip(
        model.named_parameters(), clone.named_parameters()
    ):
        assert na == nb
        torch.testing.assert_close(pa, pb)


def test_checkpoint_includes_optimizer_state(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    run_training(model, manifest, config, out_dir=tmp_path / "run")
    infos, _ = read_header(tmp_path / "run" / LAST_CHECKPOINT)
    optim_names = [n for n in infos if n.startswith("optim.")]
    assert any(n.endswith(".exp_avg") for n in optim_names)
    assert any(n.endswith(".exp_avg_sq") for n in optim_names)
    assert any(n.endswith(".step") for n in optim_names)
    # one triple per trainable parameter
    trainable = sum(1 for p in model.parameters() if p.requires_grad)
    assert len(optim_names) == 3 * trainable


def test_adapter_checkpoints_exclude_frozen_encoder(tmp_path):
    root = write_pair_tree(tmp_path / "data", "das_event", train_n=2, test_n=1)
    manifest = load_manifest(root, "das_event")
    config = config_from_dict(
        {
            "preset": "das_event+linear",
            "finetune": "lora",
            "lora_rank": 2,
            "seed": 0,
            "deterministic": True,
            "train": {
                "batch_size": 2,
                "warmup_epochs": 1,
                "total_epochs": 2,
                "patience": 0,
            },
        }
    )
    model = _fresh_model(config)
    names = checkpoint_tensor_names(model)
    assert all(
        "lora_" in n or not n.startswith("encoder.") for n in names
    )
    assert any(n.startswith("decoder.") for n in names)
    assert any("lora_A" in n for n in names)

    run_training(model, manifest, config, out_dir=tmp_path / "run")
    infos, _ = read_header(tmp_path / "run" / LAST_CHECKPOINT)
    model_names = [n for n in infos if n.startswith("model.")]
    assert all(
        "lora_" in n or not n.startswith("model.encoder.") for n in model_names
    )
    # the archive stays small because the encoder base is not stored
    stored = sum(int(np.prod(infos[n].shape)) for n in model_names)
    total = sum(p.numel() for p in model.parameters())
    assert stored < total / 3


def test_full_checkpoint_holds_whole_model(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    path = save_checkpoint(tmp_path / "c.nta", model, None, None, {"epoch": "0"})
    infos, _ = read_header(path)
    assert len([n for n in infos if n.startswith("model.")]) == len(
        model.state_dict()
    )


def test_load_model_tensors_rejects_mismatches(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    path = save_checkpoint(tmp_path / "c.nta", model, None, None, {})

    with pytest.raises(CheckpointError, match="no model tensors"):
        from geofm.tensorio import write_tensors

        write_tensors(tmp_path / "raw.nta", {"pos_embed": np.zeros((17, 64))})
        load_model_tensors(tmp_path / "raw.nta", model)

    other = build_model(
        "pup",
        2,
        policy=config.policy(),
        encoder_config=TOY_ENCODER_CONFIG,
        channel_width=8,
        seed=0,
    )
    with pytest.raises(CheckpointError, match="no place|shape mismatch"):
        load_model_tensors(path, other)


def test_early_stopping_on_patience(tmp_path):
    root = write_pair_tree(tmp_path / "data", "das_event", train_n=2, test_n=1)
    manifest = load_manifest(root, "das_event")
    config = config_from_dict(
        {
            "preset": "das_event+linear",
            "finetune": "full",
            "seed": 0,
            "deterministic": True,
            "train": {
                "batch_size": 2,
                "base_lr": 1e-12,  # effectively frozen: the score never improves
                "warmup_epochs": 1,
                "total_epochs": 50,
                "patience": 3,
            },
        }
    )
    result = run_training(_fresh_model(config), manifest, config)
    assert result.best_epoch == 0
    assert result.epochs_run == 4  # epoch 0 is best; epochs 1-3 exhaust patience


def test_divergence_raises_with_payload(tiny_setup, tmp_path):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    with torch.no_grad():  # poison the classifier so logits go non-finite
        model.decoder.classify.weight.fill_(float("nan"))
    with pytest.raises(TrainingDiverged) as err:
        run_training(model, manifest, config)
    payload = err.value.payload
    assert payload["epoch"] == 0
    assert payload["step"] == 1
    assert math.isnan(payload["loss"])
    assert len(payload["sample_ids"]) == 2
    assert "lr" in payload and "per_class_dice" in payload


def test_no_trainable_params_rejected(tiny_setup):
    manifest, config = tiny_setup
    model = _fresh_model(config)
    for p in model.parameters():
        p.requires_grad_(False)
    with pytest.raises(TrainingDiverged, match="no trainable"):
        run_training(model, manifest, config)


def test_epoch_shuffle_covers_all_samples(tiny_setup):
    """The per-epoch permutation touches each training sample exactly once."""
    manifest, config = tiny_setup
    n = len(manifest.split_entries("train"))
    for epoch in range(3):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
        order = rng.permutation(n)
        assert sorted(order.tolist()) == list(range(n))
