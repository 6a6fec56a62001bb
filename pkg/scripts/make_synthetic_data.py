#!/usr/bin/env python3
"""Generate a miniature synthetic data tree for any of the five tasks.

Lets every pipeline verb run end-to-end without the real surveys: images
are smoothed random fields, labels are rectangular class regions.  Pair
tasks get ``<split>/images/*.nta`` + ``<split>/labels/*.nta``; the volume
task gets a single ``volume.nta``/``labels.nta`` pair whose last axis is
the full 590-slice depth expected by the split rule.

Example:
    python3 scripts/make_synthetic_data.py --out /tmp/geodata --task geobody \
        --train-n 6 --test-n 3 --size 70
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from geofm.data import write_sample_array
from geofm.data.manifest import FACIES_LABELS_NAME, FACIES_VOLUME_NAME
from geofm.data.registry import TASK_NAMES, task_spec


def smooth_field(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A band-limited random field: a few random 2-D cosines plus noise."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    field = 0.05 * rng.standard_normal((height, width))
    for _ in range(4):
        fy, fx = rng.uniform(0.02, 0.2, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        field += rng.uniform(0.3, 1.0) * np.cos(fy * yy + fx * xx + phase)
    return field.astype(np.float32)


def rectangle_labels(
    rng: np.random.Generator, height: int, width: int, class_count: int
) -> np.ndarray:
    """Background zero plus one random rectangle per non-background class."""
    label = np.zeros((height, width), dtype=np.int64)
    for cls in range(1, class_count):
        h = int(rng.integers(height // 4, max(height // 2, height // 4 + 1)))
        w = int(rng.integers(width // 4, max(width // 2, width // 4 + 1)))
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, width - w + 1))
        label[top : top + h, left : left + w] = cls
    return label


def make_pair_task(
    root: Path,
    task: str,
    train_n: int,
    test_n: int,
    size: int,
    rng: np.random.Generator,
) -> None:
    spec = task_spec(task)
    for split, count in (("train", train_n), ("test", test_n)):
        img_dir = root / task / split / "images"
        lab_dir = root / task / split / "labels"
        img_dir.mkdir(parents=True, exist_ok=True)
        lab_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            stem = f"{split}_{i:05d}.nta"
            image = smooth_field(rng, size, size)
            label = rectangle_labels(rng, size, size, spec.class_count)
            # guarantee every class appears somewhere in the split
            if i < spec.class_count:
                label.flat[0] = i % spec.class_count
            write_sample_array(img_dir / stem, image)
            write_sample_array(lab_dir / stem, label)


def make_volume_task(
    root: Path, task: str, height: int, width: int, rng: np.random.Generator
) -> None:
    spec = task_spec(task)
    depth = spec.volume_depth
    volume = np.stack(
        [smooth_field(rng, height, width) for _ in range(depth)], axis=-1
    )
    labels = np.stack(
        [
            rectangle_labels(rng, height, width, spec.class_count)
            for _ in range(depth)
        ],
        axis=-1,
    )
    task_dir = root / task
    task_dir.mkdir(parents=True, exist_ok=True)
    write_sample_array(task_dir / FACIES_VOLUME_NAME, volume)
    write_sample_array(task_dir / FACIES_LABELS_NAME, labels.astype(np.int64))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", required=True, help="data root to create")
    parser.add_argument(
        "--task", choices=("all",) + TASK_NAMES, default="all"
    )
    parser.add_argument("--train-n", type=int, default=6)
    parser.add_argument("--test-n", type=int, default=3)
    parser.add_argument("--size", type=int, default=70, help="pair-task side length")
    parser.add_argument(
        "--volume-size", type=int, nargs=2, default=(56, 42),
        metavar=("H", "W"), help="volume-task slice shape",
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.out)
    rng = np.random.default_rng(args.seed)
    tasks = TASK_NAMES if args.task == "all" else (args.task,)
    for task in tasks:
        if task_spec(task).layout == "volume":
            make_volume_task(root, task, *args.volume_size, rng=rng)
        else:
            make_pair_task(root, task, args.train_n, args.test_n, args.size, rng)
        print(f"wrote synthetic {task} data under {root / task}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
