"""Project patch features onto their three principal components and render
them as an RGB map.

The PCA is fitted per image on the patch-token matrix (mean-centered, top
eigenvectors of the sample covariance).  Each component's sign is fixed so
its largest-magnitude entry is positive.  For rendering, each score channel
is min-max scaled to [0, 255] independently (a constant channel maps to
mid-gray 128), reshaped onto the patch grid, and nearest-neighbor upsampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data.preprocess import ModelInput
from .encoder import ViTEncoder
from .errors import DataError


@dataclass
class FeatureProjection:
    components: np.ndarray  # k x D, rows orthonormal
    projected: np.ndarray  # N x k scores
    explained_variance: np.ndarray  # k, non-increasing


def pca_project_features(features: np.ndarray, k: int = 3) -> FeatureProjection:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DataError(f"features must be N x D, got shape {features.shape}")
    n, d = features.shape
    if n <= k:
        raise DataError(f"need more than {k} rows to fit {k} components, got {n}")
    if not np.isfinite(features).all():
        raise DataError("features contain non-finite values")
    centered = features - features.mean(axis=0, keepdims=True)
    # Singular vectors of the centered matrix are covariance eigenvectors;
    # singular values give the explained variance.
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k]
    variance = (singular[:k] ** 2) / (n - 1)
    for i in range(components.shape[0]):
        pivot = np.argmax(np.abs(components[i]))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    projected = centered @ components.T
    return FeatureProjection(
        components=components,
        projected=projected,
        explained_variance=variance,
    )


def _nearest_indices(out_len: int, in_len: int) -> np.ndarray:
    return (np.arange(out_len) * in_len) // out_len


def render_rgb_map(
    projection: FeatureProjection,
    grid_shape: tuple[int, int],
    output_size: tuple[int, int],
) -> np.ndarray:
    """Scores -> H x W x 3 uint8 image at ``output_size``."""
    rows, cols = grid_shape
    scores = projection.projected
    if scores.shape[0] != rows * cols:
        raise DataError(
            f"{scores.shape[0]} patches do not fill a {rows}x{cols} grid"
        )
    if scores.shape[1] < 3:
        raise DataError(f"need 3 score channels, got {scores.shape[1]}")
    channels = np.empty((rows * cols, 3), dtype=np.uint8)
    for c in range(3):
        column = scores[:, c]
        low, high = float(column.min()), float(column.max())
        if high == low:
            channels[:, c] = 128
        else:
            scaled = (column - low) / (high - low) * 255.0
            channels[:, c] = np.clip(np.round(scaled), 0, 255).astype(np.uint8)
    grid = channels.reshape(rows, cols, 3)
    out_h, out_w = output_size
    if out_h < 1 or out_w < 1:
        raise DataError(f"output size must be positive, got {output_size}")
    row_idx = _nearest_indices(out_h, rows)
    col_idx = _nearest_indices(out_w, cols)
    return grid[row_idx][:, col_idx]


def visualize_sample(
    encoder: ViTEncoder,
    sample: ModelInput,
    tap_index: int = -1,
    crop_to_valid: bool = True,
) -> tuple[np.ndarray, FeatureProjection]:
    """RGB principal-component map of one preprocessed sample's patch
    features.  ``tap_index`` selects among the encoder's tap layers."""
    encoder.eval()
    with torch.no_grad():
        taps = encoder.forward_with_taps(sample.image.unsqueeze(0))
    grid = taps.grids[tap_index][0]
    rows, cols, dim = grid.shape
    projection = pca_project_features(grid.reshape(-1, dim).numpy())
    image = render_rgb_map(projection, (rows, cols), (sample.height, sample.width))
    if crop_to_valid:
        mask = sample.valid_mask.numpy()
        valid_h = int(mask.any(axis=1).sum())
        valid_w = int(mask.any(axis=0).sum())
        image = image[:valid_h, :valid_w]
    return image, projection
