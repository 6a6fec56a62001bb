"""Manifest construction for the on-disk dataset layout.

Pairs layout (geobody, crater, das_event, fault):

    <root>/<task>/{train,test}/{images,labels}/<name>.nta

with each file carrying one 2-D tensor.  The facies volume layout is

    <root>/facies/volume.nta  +  <root>/facies/labels.nta

holding one 3-D tensor each; manifest entries address slices along the
last axis.  Only archive headers are read here, so building a manifest
never touches tensor payloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import tensorio
from ..errors import DataError
from .registry import PATCH_SIZE, TaskSpec, pad_to_multiple, task_spec

SPLITS = ("train", "test")

FACIES_VOLUME_NAME = "volume.nta"
FACIES_LABELS_NAME = "labels.nta"
FACIES_TRAIN_BLOCK = 500  # last-axis boundary between train and test blocks
FACIES_STRIDE = 2


@dataclass(frozen=True)
class SampleEntry:
    image_path: Path
    label_path: Path
    split: str
    slice_index: int | None = None

    @property
    def sample_id(self) -> str:
        if self.slice_index is None:
            return self.image_path.stem
        return f"{self.image_path.stem}[{self.slice_index}]"


@dataclass
class DatasetManifest:
    task_name: str
    class_count: int
    entries: list[SampleEntry]
    native_size: tuple[int, int]
    target_size: tuple[int, int]
    spec: TaskSpec = field(repr=False, default=None)

    def __post_init__(self):
        if self.class_count < 2:
            raise DataError(f"class_count must be >= 2, got {self.class_count}")
        bad = {e.split for e in self.entries} - set(SPLITS)
        if bad:
            raise DataError(f"unexpected split tags {sorted(bad)}; allowed: {SPLITS}")
        if any(s % PATCH_SIZE for s in self.target_size):
            raise DataError(
                f"target_size {self.target_size} not a multiple of {PATCH_SIZE}"
            )

    def split_entries(self, split: str) -> list[SampleEntry]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    @property
    def counts(self) -> tuple[int, int]:
        return (len(self.split_entries("train")), len(self.split_entries("test")))


def sample_tensor_name(path: Path) -> str:
    """Name of the single payload tensor inside a dataset archive."""
    infos, _ = tensorio.read_header(path)
    if "data" in infos:
        return "data"
    if len(infos) == 1:
        return next(iter(infos))
    raise DataError(
        f"{path}: expected a single tensor (or one named 'data'), found {sorted(infos)}"
    )


def read_sample_array(path: Path) -> np.ndarray:
    return tensorio.read_tensors(path, [sample_tensor_name(path)]).popitem()[1]


def write_sample_array(path: Path, array: np.ndarray) -> None:
    tensorio.write_tensors(path, {"data": array})


def _tensor_shape(path: Path) -> tuple[int, ...]:
    infos, _ = tensorio.read_header(path)
    return infos[sample_tensor_name(path)].shape


def split_facies_volume(
    volume: np.ndarray, labels: np.ndarray
) -> tuple[list[int], list[int]]:
    """Slice indices for the facies train/test blocks.

    The last axis is partitioned into [0, 500) and [500, 590); each block is
    subsampled at stride 2, yielding 250 train and 45 test slices.
    """
    if volume.shape != labels.shape:
        raise DataError(
            f"volume shape {volume.shape} does not match labels shape {labels.shape}"
        )
    depth = volume.shape[-1]
    expected = task_spec("facies").volume_depth
    if depth != expected:
        raise DataError(f"facies volume last axis must be {expected}, got {depth}")
    train = list(range(0, FACIES_TRAIN_BLOCK, FACIES_STRIDE))
    test = list(range(FACIES_TRAIN_BLOCK, depth, FACIES_STRIDE))
    return train, test


def load_manifest(
    root: str | Path, task_name: str, strict_counts: bool = False
) -> DatasetManifest:
    """Scan the dataset tree and build a manifest with deterministic ordering.

    With strict_counts=True the split sizes must match the published dataset
    and every class must occur somewhere in the labels.
    """
    spec = task_spec(task_name)
    task_root = Path(root) / task_name
    if not task_root.is_dir():
        raise DataError(f"dataset directory not found: {task_root}")

    if spec.layout == "volume":
        manifest = _load_volume_manifest(task_root, spec)
    else:
        manifest = _load_pairs_manifest(task_root, spec)

    if strict_counts:
        if manifest.counts != spec.expected_counts:
            raise DataError(
                f"{task_name}: split counts {manifest.counts} do not match the "
                f"published {spec.expected_counts}"
            )
        _check_label_range(manifest)
    return manifest


def _load_pairs_manifest(task_root: Path, spec: TaskSpec) -> DatasetManifest:
    entries: list[SampleEntry] = []
    native: tuple[int, int] | None = None
    for split in SPLITS:
        images_dir = task_root / split / "images"
        labels_dir = task_root / split / "labels"
        if not images_dir.is_dir():
            continue
        for image_path in sorted(images_dir.iterdir()):
            if not image_path.is_file():
                continue
            label_path = labels_dir / image_path.name
            if not label_path.is_file():
                raise DataError(f"missing label file: {label_path}")
            ishape = _tensor_shape(image_path)
            lshape = _tensor_shape(label_path)
            if len(ishape) != 2:
                raise DataError(f"{image_path}: expected a 2-D tensor, got {ishape}")
            if ishape != lshape:
                raise DataError(
                    f"label/image shape mismatch: {image_path} is {ishape}, "
                    f"{label_path} is {lshape}"
                )
            if native is None:
                native = (int(ishape[0]), int(ishape[1]))
            elif tuple(ishape) != native:
                raise DataError(
                    f"{image_path}: shape {ishape} differs from the "
                    f"dataset native size {native}"
                )
            entries.append(SampleEntry(image_path, label_path, split))
    if not entries:
        raise DataError(f"no samples found under {task_root}")
    return DatasetManifest(
        task_name=spec.name,
        class_count=spec.class_count,
        entries=entries,
        native_size=native,
        target_size=_target_size(native, spec),
        spec=spec,
    )


def _load_volume_manifest(task_root: Path, spec: TaskSpec) -> DatasetManifest:
    volume_path = task_root / FACIES_VOLUME_NAME
    labels_path = task_root / FACIES_LABELS_NAME
    for path in (volume_path, labels_path):
        if not path.is_file():
            raise DataError(f"missing file: {path}")
    vshape = _tensor_shape(volume_path)
    lshape = _tensor_shape(labels_path)
    if len(vshape) != 3:
        raise DataError(f"{volume_path}: expected a 3-D tensor, got {vshape}")
    if vshape != lshape:
        raise DataError(
            f"label/image shape mismatch: {volume_path} is {vshape}, "
            f"{labels_path} is {lshape}"
        )
    if vshape[-1] != spec.volume_depth:
        raise DataError(
            f"{volume_path}: last axis must be {spec.volume_depth}, got {vshape[-1]}"
        )
    train_idx = list(range(0, FACIES_TRAIN_BLOCK, FACIES_STRIDE))
    test_idx = list(range(FACIES_TRAIN_BLOCK, vshape[-1], FACIES_STRIDE))
    entries = [
        SampleEntry(volume_path, labels_path, "train", k) for k in train_idx
    ] + [SampleEntry(volume_path, labels_path, "test", k) for k in test_idx]
    native = (int(vshape[0]), int(vshape[1]))
    return DatasetManifest(
        task_name=spec.name,
        class_count=spec.class_count,
        entries=entries,
        native_size=native,
        target_size=_target_size(native, spec),
        spec=spec,
    )


def _target_size(native: tuple[int, int], spec: TaskSpec) -> tuple[int, int]:
    if spec.resize_to is not None:
        return spec.resize_to
    return (pad_to_multiple(native[0]), pad_to_multiple(native[1]))


def _check_label_range(manifest: DatasetManifest) -> None:
    observed = -1
    seen_paths: set[Path] = set()
    for entry in manifest.entries:
        if entry.label_path in seen_paths:
            continue
        seen_paths.add(entry.label_path)
        labels = read_sample_array(entry.label_path)
        observed = max(observed, int(labels.max()))
    if observed + 1 != manifest.class_count:
        raise DataError(
            f"{manifest.task_name}: max label value {observed} implies "
            f"{observed + 1} classes, manifest declares {manifest.class_count}"
        )


def save_manifest_jsonl(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            record = {
                "image_path": str(e.image_path),
                "label_path": str(e.label_path),
                "split": e.split,
                "slice_index": e.slice_index,
            }
            fh.write(json.dumps(record) + "\n")


def load_manifest_jsonl(path: str | Path, task_name: str) -> DatasetManifest:
    spec = task_spec(task_name)
    entries: list[SampleEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries.append(
                SampleEntry(
                    Path(rec["image_path"]),
                    Path(rec["label_path"]),
                    rec["split"],
                    rec["slice_index"],
                )
            )
    if not entries:
        raise DataError(f"no samples found in manifest {path}")
    first = entries[0]
    shape = _tensor_shape(first.image_path)  # 3-D for the facies volume
    native = (int(shape[0]), int(shape[1]))
    return DatasetManifest(
        task_name=spec.name,
        class_count=spec.class_count,
        entries=entries,
        native_size=native,
        target_size=_target_size(native, spec),
        spec=spec,
    )
