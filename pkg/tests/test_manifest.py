"""Dataset manifests: tree scanning, the volume split law, jsonl roundtrip."""

from __future__ import annotations

import numpy as np
import pytest

from geofm.data import (
    load_manifest,
    load_manifest_jsonl,
    save_manifest_jsonl,
    split_facies_volume,
    task_spec,
    write_sample_array,
)
from geofm.data.manifest import FACIES_LABELS_NAME, FACIES_VOLUME_NAME
from geofm.errors import ConfigError, DataError
from helpers import write_pair_tree, write_volume_tree


def test_pair_manifest_counts_and_order(pair_root):
    m = load_manifest(pair_root, "das_event")
    assert m.counts == (4, 2)
    assert m.class_count == 2
    names = [e.image_path.name for e in m.split_entries("train")]
    assert names == sorted(names)
    assert all(e.sample_id == e.image_path.stem for e in m.entries)
    assert m.native_size == (28, 28)
    assert m.target_size == (28, 28)


def test_pair_manifest_pads_target_to_lattice(tmp_path):
    write_pair_tree(tmp_path, "crater", train_n=1, test_n=1, size=(30, 45))
    m = load_manifest(tmp_path, "crater")
    assert m.native_size == (30, 45)
    assert m.target_size == (42, 56)


def test_geobody_target_is_fixed_resize(tmp_path):
    write_pair_tree(tmp_path, "geobody", train_n=1, test_n=1, size=(101, 101))
    m = load_manifest(tmp_path, "geobody")
    assert m.target_size == (224, 224)


def test_missing_label_is_fatal(pair_root):
    victim = next((pair_root / "das_event" / "train" / "labels").iterdir())
    victim.unlink()
    with pytest.raises(DataError, match="missing label"):
        load_manifest(pair_root, "das_event")


def test_shape_mismatch_is_fatal(pair_root):
    victim = next((pair_root / "das_event" / "train" / "labels").iterdir())
    write_sample_array(victim, np.zeros((28, 29), dtype=np.int64))
    with pytest.raises(DataError, match="mismatch"):
        load_manifest(pair_root, "das_event")


def test_inconsistent_image_sizes_are_fatal(pair_root):
    img = next((pair_root / "das_event" / "train" / "images").iterdir())
    lab = pair_root / "das_event" / "train" / "labels" / img.name
    write_sample_array(img, np.zeros((14, 14), dtype=np.float32))
    write_sample_array(lab, np.zeros((14, 14), dtype=np.int64))
    with pytest.raises(DataError, match="differs from"):
        load_manifest(pair_root, "das_event")


def test_empty_tree_is_fatal(tmp_path):
    (tmp_path / "fault" / "train" / "images").mkdir(parents=True)
    (tmp_path / "fault" / "train" / "labels").mkdir(parents=True)
    with pytest.raises(DataError, match="no samples"):
        load_manifest(tmp_path, "fault")


def test_missing_task_dir_is_fatal(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_manifest(tmp_path, "crater")


def test_unknown_task_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="unknown task"):
        load_manifest(tmp_path, "gravity")


def test_strict_counts_rejects_small_tree(pair_root):
    with pytest.raises(DataError, match="split counts"):
        load_manifest(pair_root, "das_event", strict_counts=True)


def test_strict_counts_checks_label_range(tmp_path):
    spec = task_spec("das_event")
    write_pair_tree(
        tmp_path, "das_event", train_n=spec.expected_counts[0],
        test_n=spec.expected_counts[1], size=(14, 14),
    )
    # overwrite every label with zeros so class 1 never appears
    for split in ("train", "test"):
        for lab in (tmp_path / "das_event" / split / "labels").iterdir():
            write_sample_array(lab, np.zeros((14, 14), dtype=np.int64))
    with pytest.raises(DataError, match="classes"):
        load_manifest(tmp_path, "das_event", strict_counts=True)


def test_volume_split_law():
    depth = task_spec("facies").volume_depth
    vol = np.zeros((4, 4, depth), dtype=np.float32)
    train, test = split_facies_volume(vol, vol.astype(np.int64))
    assert len(train) == 250
    assert len(test) == 45
    assert train[:4] == [0, 2, 4, 6]
    assert train[-1] == 498
    assert test[0] == 500
    assert test[-1] == 588
    assert set(train).isdisjoint(test)
    assert all(i % 2 == 0 for i in train + test)


def test_volume_split_shape_checks():
    vol = np.zeros((4, 4, 590), dtype=np.float32)
    with pytest.raises(DataError, match="does not match"):
        split_facies_volume(vol, np.zeros((4, 4, 589), dtype=np.int64))
    short = np.zeros((4, 4, 100), dtype=np.float32)
    with pytest.raises(DataError, match="last axis"):
        split_facies_volume(short, short.astype(np.int64))


def test_volume_manifest(volume_root):
    m = load_manifest(volume_root, "facies")
    assert m.counts == (250, 45)
    assert m.class_count == 6
    first = m.split_entries("train")[0]
    assert first.slice_index == 0
    assert first.sample_id == "volume[0]"
    assert m.split_entries("test")[0].slice_index == 500
    assert m.native_size == (28, 28)


def test_volume_manifest_missing_labels(tmp_path):
    task_dir = tmp_path / "facies"
    task_dir.mkdir()
    write_sample_array(
        task_dir / FACIES_VOLUME_NAME, np.zeros((4, 4, 590), dtype=np.float32)
    )
    with pytest.raises(DataError, match="missing file"):
        load_manifest(tmp_path, "facies")


def test_volume_manifest_wrong_depth(tmp_path):
    task_dir = tmp_path / "facies"
    task_dir.mkdir()
    vol = np.zeros((4, 4, 10), dtype=np.float32)
    write_sample_array(task_dir / FACIES_VOLUME_NAME, vol)
    write_sample_array(task_dir / FACIES_LABELS_NAME, vol.astype(np.int64))
    with pytest.raises(DataError, match="last axis"):
        load_manifest(tmp_path, "facies")


def test_jsonl_roundtrip(pair_root, tmp_path):
    m = load_manifest(pair_root, "das_event")
    out = tmp_path / "m.jsonl"
    save_manifest_jsonl(m, out)
    back = load_manifest_jsonl(out, "das_event")
    assert back.counts == m.counts
    assert [e.sample_id for e in back.entries] == [e.sample_id for e in m.entries]
    assert [e.split for e in back.entries] == [e.split for e in m.entries]
    assert back.target_size == m.target_size


def test_jsonl_roundtrip_volume(volume_root, tmp_path):
    m = load_manifest(volume_root, "facies")
    out = tmp_path / "f.jsonl"
    save_manifest_jsonl(m, out)
    back = load_manifest_jsonl(out, "facies")
    assert back.counts == (250, 45)
    assert back.split_entries("test")[0].slice_index == 500


def test_empty_jsonl_is_fatal(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("\n")
    with pytest.raises(DataError, match="no samples"):
        load_manifest_jsonl(path, "das_event")


def test_split_entries_rejects_unknown_split(pair_root):
    m = load_manifest(pair_root, "das_event")
    with pytest.raises(DataError, match="unknown split"):
        m.split_entries("val")
