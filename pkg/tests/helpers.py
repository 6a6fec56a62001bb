"""Shared fixtures: toy model geometry and tiny on-disk data trees."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from geofm.data import write_sample_array
from geofm.data.manifest import FACIES_LABELS_NAME, FACIES_VOLUME_NAME
from geofm.data.registry import task_spec
from geofm.encoder import EncoderConfig, FeatureTaps, ViTEncoder, build_encoder

PATCH = 14

TOY_ENCODER_CONFIG = EncoderConfig(
    embed_dim=64, depth=2, head_count=4, tap_layers=(1, 2), pos_grid=4
)


def toy_encoder(seed: int = 0) -> ViTEncoder:
    return build_encoder(TOY_ENCODER_CONFIG, seed=seed)


def random_taps(
    batch: int = 1,
    rows: int = 4,
    cols: int = 4,
    dim: int = 32,
    count: int = 4,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
    requires_grad: bool = False,
) -> FeatureTaps:
    """Synthetic feature taps, standing in for an encoder forward pass."""
    gen = torch.Generator().manual_seed(seed)
    grids = [
        torch.randn(batch, rows, cols, dim, generator=gen, dtype=dtype)
        for _ in range(count)
    ]
    if requires_grad:
        for g in grids:
            g.requires_grad_(True)
    return FeatureTaps(
        layers=tuple(range(1, count + 1)),
        grids=grids,
        class_tokens=[g[:, 0, 0] for g in grids],
        grid_shape=(rows, cols),
    )


def write_pair_tree(
    root: Path,
    task: str,
    train_n: int,
    test_n: int,
    size: tuple[int, int] = (28, 28),
    seed: int = 0,
    dtype=np.float32,
) -> Path:
    """Minimal pairs-layout tree with random images and full-range labels."""
    spec = task_spec(task)
    rng = np.random.default_rng(seed)
    h, w = size
    for split, count in (("train", train_n), ("test", test_n)):
        img_dir = root / task / split / "images"
        lab_dir = root / task / split / "labels"
        img_dir.mkdir(parents=True, exist_ok=True)
        lab_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            stem = f"{split}_{i:05d}.nta"
            image = rng.standard_normal((h, w)).astype(dtype)
            label = rng.integers(0, spec.class_count, size=(h, w)).astype(np.int64)
            label.flat[: spec.class_count] = np.arange(spec.class_count)
            write_sample_array(img_dir / stem, image)
            write_sample_array(lab_dir / stem, label)
    return root


def write_volume_tree(
    root: Path,
    task: str = "facies",
    height: int = 28,
    width: int = 28,
    seed: int = 0,
) -> Path:
    spec = task_spec(task)
    rng = np.random.default_rng(seed)
    depth = spec.volume_depth
    task_dir = root / task
    task_dir.mkdir(parents=True, exist_ok=True)
    volume = rng.standard_normal((height, width, depth)).astype(np.float32)
    labels = rng.integers(0, spec.class_count, size=(height, width, depth)).astype(
        np.int64
    )
    labels[: spec.class_count, 0, :] = np.arange(spec.class_count)[:, None]
    write_sample_array(task_dir / FACIES_VOLUME_NAME, volume)
    write_sample_array(task_dir / FACIES_LABELS_NAME, labels)
    return root


def write_blob_tree(root: Path, seed: int = 0, count: int = 8) -> Path:
    """The desk-scale overfit set: 56x56 two-class scenes whose rectangular
    foreground is aligned to the 14-pixel patch grid (2-3 blocks per side),
    with the image a noisy rendering of the label."""
    rng = np.random.default_rng(seed)
    side = 4 * PATCH
    blocks = 4
    for split in ("train", "test"):
        (root / "das_event" / split / "images").mkdir(parents=True, exist_ok=True)
        (root / "das_event" / split / "labels").mkdir(parents=True, exist_ok=True)
    for i in range(count):
        label = np.zeros((side, side), dtype=np.int64)
        bh = int(rng.integers(2, 4))
        bw = int(rng.integers(2, 4))
        top = int(rng.integers(0, blocks - bh + 1)) * PATCH
        left = int(rng.integers(0, blocks - bw + 1)) * PATCH
        label[top : top + bh * PATCH, left : left + bw * PATCH] = 1
        image = label.astype(np.float32) + 0.3 * rng.standard_normal(
            (side, side)
        ).astype(np.float32)
        for split in ("train", "test"):
            write_sample_array(
                root / "das_event" / split / "images" / f"blob_{i}.nta", image
            )
            write_sample_array(
                root / "das_event" / split / "labels" / f"blob_{i}.nta", label
            )
    return root
