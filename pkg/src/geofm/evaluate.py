"""Run a model over a dataset split and assemble the metrics report.

Dataset-level mIoU/mPA come from summed confusion counts; per-sample
scores feed the distribution histogram; volume tasks additionally get the
per-slice profile.  Reports serialize to JSON plus column-oriented text
files (one row per sample / slice) that any plotting tool can consume.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
import torch.nn as nn

from .data import DatasetManifest, iter_samples
from .decoders import LogitMap
from .errors import DataError
from .metrics import MetricsReport, SampleResult, confusion_counts, summarize_results

REPORT_NAME = "report.json"
HISTOGRAM_NAME = "per_sample_miou.tsv"
PROFILE_NAME = "distance_profile.tsv"


def evaluate_model(
    model: nn.Module,
    manifest: DatasetManifest,
    split: str = "test",
    limit: int | None = None,
    prefetch: int = 0,
) -> MetricsReport:
    was_training = model.training
    model.eval()
    results: list[SampleResult] = []
    class_count = manifest.class_count
    with torch.no_grad():
        for sample in iter_samples(manifest, split, limit=limit, prefetch=prefetch):
            logits = model(sample.image.unsqueeze(0))
            prediction = LogitMap(logits).predictions()[0]
            counts = confusion_counts(
                prediction,
                sample.label.numpy(),
                class_count,
                sample.valid_mask.numpy(),
            )
            results.append(
                SampleResult(
                    sample_id=sample.sample_id,
                    counts=counts,
                    slice_index=sample.slice_index,
                )
            )
    if was_training:
        model.train()
    if not results:
        raise DataError(f"split {split!r} is empty")
    return summarize_results(results)


def save_report(
    report: MetricsReport,
    out_dir: str | Path,
    config_payload: dict | None = None,
) -> Path:
    """Write report.json plus the plot-data text files; returns the JSON path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if config_payload:
        payload.update(config_payload)
    report_path = out_dir / REPORT_NAME
    report_path.write_text(json.dumps(payload, indent=2) + "\n")
    lines = ["sample_id\tmiou"]
    lines += [f"{sid}\t{score:.6f}" for sid, score in report.per_sample_miou]
    (out_dir / HISTOGRAM_NAME).write_text("\n".join(lines) + "\n")
    if report.distance_profile is not None:
        lines = ["slice_index\tmiou"]
        lines += [f"{idx}\t{score:.6f}" for idx, score in report.distance_profile]
        (out_dir / PROFILE_NAME).write_text("\n".join(lines) + "\n")
    return report_path
