"""Materialize ModelInputs from a manifest, with optional prefetching.

Sample preprocessing is pure, so a single background worker can prepare
samples ahead of the consumer through a bounded queue; output order always
matches manifest order.
"""

from __future__ import annotations

import queue
import threading
from typing import Iterator

import numpy as np

from .. import tensorio
from .manifest import (
    DatasetManifest,
    SampleEntry,
    read_sample_array,
    sample_tensor_name,
)
from .preprocess import ModelInput, preprocess_sample, resize_pair


def _read_slice(path, index: int) -> np.ndarray:
    volume = tensorio.open_memmap(path, sample_tensor_name(path))
    return np.array(volume[:, :, index])


def load_entry(entry: SampleEntry, manifest: DatasetManifest) -> ModelInput:
    """Read, resize if the task calls for it, and preprocess one entry."""
    if entry.slice_index is not None:
        image = _read_slice(entry.image_path, entry.slice_index)
        label = _read_slice(entry.label_path, entry.slice_index)
    else:
        image = read_sample_array(entry.image_path)
        label = read_sample_array(entry.label_path)
    spec = manifest.spec
    if spec is not None and spec.resize_to is not None:
        image, label = resize_pair(image, label, spec.resize_to)
    return preprocess_sample(
        image,
        label,
        manifest.class_count,
        sample_id=entry.sample_id,
        slice_index=entry.slice_index,
    )


def iter_samples(
    manifest: DatasetManifest,
    split: str,
    limit: int | None = None,
    prefetch: int = 0,
) -> Iterator[ModelInput]:
    """Yield preprocessed samples for one split, in manifest order.

    prefetch > 0 runs loading in a background thread behind a queue of that
    depth; order is unchanged.
    """
    entries = manifest.split_entries(split)
    if limit is not None:
        entries = entries[:limit]
    if prefetch <= 0:
        for entry in entries:
            yield load_entry(entry, manifest)
        return

    q: queue.Queue = queue.Queue(maxsize=prefetch)
    _END = object()

    def worker():
        try:
            for entry in entries:
                q.put(load_entry(entry, manifest))
        except BaseException as exc:  # surfaced on the consumer side
            q.put(exc)
            return
        q.put(_END)

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    while True:
        item = q.get()
        if item is _END:
            break
        if isinstance(item, BaseException):
            raise item
        yield item
    thread.join()


def load_split(
    manifest: DatasetManifest, split: str, limit: int | None = None
) -> list[ModelInput]:
    return list(iter_samples(manifest, split, limit=limit))
