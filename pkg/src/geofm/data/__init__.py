from .loader import iter_samples, load_entry, load_split
from .manifest import (
    DatasetManifest,
    SampleEntry,
    load_manifest,
    load_manifest_jsonl,
    read_sample_array,
    save_manifest_jsonl,
    split_facies_volume,
    write_sample_array,
)
from .preprocess import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    ModelInput,
    augment_flip,
    normalize_minmax,
    preprocess_sample,
    resize_pair,
    standardize,
)
from .registry import PATCH_SIZE, TASK_NAMES, TASKS, TaskSpec, pad_to_multiple, task_spec

__all__ = [
    "DatasetManifest",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "ModelInput",
    "PATCH_SIZE",
    "SampleEntry",
    "TASKS",
    "TASK_NAMES",
    "TaskSpec",
    "augment_flip",
    "iter_samples",
    "load_entry",
    "load_manifest",
    "load_manifest_jsonl",
    "load_split",
    "normalize_minmax",
    "pad_to_multiple",
    "preprocess_sample",
    "read_sample_array",
    "resize_pair",
    "save_manifest_jsonl",
    "split_facies_volume",
    "standardize",
    "task_spec",
    "write_sample_array",
]
