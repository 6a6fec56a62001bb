"""Confusion-matrix segmentation metrics: mIoU, mPA, and per-slice profiles.

Counts are accumulated with labels on rows and predictions on columns.
Per-class IoU divides the diagonal by the union (row + col - diag); classes
whose union is empty are excluded from the mean.  Per-class pixel accuracy
divides the diagonal by the row sum; classes absent from the labels are
excluded.  Dataset-level scores come from summed counts, not from averaging
per-sample scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def confusion_counts(
    prediction: np.ndarray,
    label: np.ndarray,
    class_count: int,
    valid_mask: np.ndarray | None = None,
) -> np.ndarray:
    """C x C count matrix; entry (i, j) counts valid pixels with label i
    and prediction j."""
    prediction = np.asarray(prediction)
    label = np.asarray(label)
    if prediction.shape != label.shape:
        raise DataError(
            f"prediction shape {prediction.shape} does not match label "
            f"shape {label.shape}"
        )
    if valid_mask is None:
        pred = prediction.reshape(-1).astype(np.int64)
        lab = label.reshape(-1).astype(np.int64)
    else:
        valid_mask = np.asarray(valid_mask, dtype=bool)
        if valid_mask.shape != label.shape:
            raise DataError(
                f"valid_mask shape {valid_mask.shape} does not match label "
                f"shape {label.shape}"
            )
        pred = prediction[valid_mask].astype(np.int64)
        lab = label[valid_mask].astype(np.int64)
    if pred.size:
        for name, values in (("prediction", pred), ("label", lab)):
            low, high = int(values.min()), int(values.max())
            if low < 0 or high >= class_count:
                raise DataError(
                    f"{name} values span [{low}, {high}] outside "
                    f"[0, {class_count})"
                )
    return np.bincount(
        lab * class_count + pred, minlength=class_count * class_count
    ).reshape(class_count, class_count)


@dataclass(frozen=True)
class ClassScores:
    per_class_iou: np.ndarray  # NaN marks classes excluded from the mean
    per_class_pa: np.ndarray
    miou: float
    mpa: float


def compute_miou_mpa(counts: np.ndarray) -> ClassScores:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise DataError(f"counts must be square, got shape {counts.shape}")
    if (counts < 0).any():
        raise DataError("counts must be nonnegative")
    if counts.sum() == 0:
        raise DataError("no evaluable classes")
    diag = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    union = row + col - diag
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, diag / union, np.nan)
        pa = np.where(row > 0, diag / row, np.nan)
    return ClassScores(
        per_class_iou=iou,
        per_class_pa=pa,
        miou=float(np.nanmean(iou)),
        mpa=float(np.nanmean(pa)),
    )


@dataclass
class SampleResult:
    sample_id: str
    counts: np.ndarray
    slice_index: int | None = None

    @property
    def miou(self) -> float:
        return compute_miou_mpa(self.counts).miou


def miou_distance_profile(
    results: list[SampleResult],
) -> list[tuple[int, float]]:
    """Per-slice mIoU ordered by slice index (distance from the training
    block grows with the index)."""
    missing = [r.sample_id for r in results if r.slice_index is None]
    if missing:
        raise DataError(f"samples lack a slice_index: {missing}")
    ordered = sorted(results, key=lambda r: r.slice_index)
    return [(r.slice_index, r.miou) for r in ordered]


@dataclass
class MetricsReport:
    per_class_iou: np.ndarray
    miou: float
    per_class_pa: np.ndarray
    mpa: float
    per_sample_miou: list[tuple[str, float]]
    distance_profile: list[tuple[int, float]] | None = None
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def to_dict(self) -> dict:
        def clean(values: np.ndarray) -> list:
            return [None if np.isnan(v) else float(v) for v in values]

        return {
            "miou": self.miou,
            "mpa": self.mpa,
            "per_class_iou": clean(self.per_class_iou),
            "per_class_pa": clean(self.per_class_pa),
            "per_sample_miou": [[sid, score] for sid, score in self.per_sample_miou],
            "distance_profile": (
                None
                if self.distance_profile is None
                else [[int(idx), score] for idx, score in self.distance_profile]
            ),
            "confusion": self.confusion.astype(int).tolist(),
        }


def summarize_results(
    results: list[SampleResult], include_profile: bool | None = None
) -> MetricsReport:
    """Dataset-level report: scores from summed counts plus the per-sample
    distribution.  The distance profile is included when every sample has a
    slice index (or when forced by ``include_profile``)."""
    if not results:
        raise DataError("no samples to summarize")
    total = np.zeros_like(np.asarray(results[0].counts))
    for r in results:
        total = total + np.asarray(r.counts)
    scores = compute_miou_mpa(total)
    if include_profile is None:
        include_profile = all(r.slice_index is not None for r in results)
    profile = miou_distance_profile(results) if include_profile else None
    return MetricsReport(
        per_class_iou=scores.per_class_iou,
        miou=scores.miou,
        per_class_pa=scores.per_class_pa,
        mpa=scores.mpa,
        per_sample_miou=[(r.sample_id, r.miou) for r in results],
        distance_profile=profile,
        confusion=total,
    )
