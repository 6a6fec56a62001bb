"""Turn raw single-channel grids into model-ready inputs.

Pipeline per sample: per-sample min-max normalization to [0, 1], channel
triplication, standardization with the encoder's pretraining statistics,
then reflection padding up to the next multiple of the 14-pixel patch
lattice (bottom/right), tracked by a validity mask.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DataError
from .registry import PATCH_SIZE, pad_to_multiple

# Channel statistics the pretrained encoder was trained with (ImageNet).
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class ModelInput:
    image: torch.Tensor  # float32, 3 x H x W
    label: torch.Tensor  # int64, H x W
    valid_mask: torch.Tensor  # bool, H x W; False on padded pixels
    sample_id: str = ""
    slice_index: int | None = None

    @property
    def height(self) -> int:
        return self.image.shape[-2]

    @property
    def width(self) -> int:
        return self.image.shape[-1]


def normalize_minmax(grid: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1]; a constant grid maps to all-0.5."""
    grid = np.asarray(grid, dtype=np.float32)
    if not np.isfinite(grid).all():
        raise DataError("non-finite values in input grid")
    lo = float(grid.min())
    hi = float(grid.max())
    if hi == lo:
        return np.full_like(grid, 0.5)
    return (grid - lo) / (hi - lo)


def standardize(image3: np.ndarray) -> np.ndarray:
    """Per-channel affine standardization with the pretraining constants."""
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(IMAGENET_STD, dtype=np.float32).reshape(3, 1, 1)
    return (image3 - mean) / std


def preprocess_sample(
    raw_image: np.ndarray,
    label: np.ndarray,
    class_count: int,
    sample_id: str = "",
    slice_index: int | None = None,
) -> ModelInput:
    """Normalize, triplicate, standardize, and pad one sample."""
    if raw_image.ndim != 2:
        raise DataError(f"expected a 2-D image, got shape {raw_image.shape}")
    if raw_image.shape != label.shape:
        raise DataError(
            f"label shape {label.shape} does not match image shape {raw_image.shape}"
        )
    label = np.asarray(label)
    if label.min() < 0 or label.max() >= class_count:
        raise DataError(
            f"label values in [{label.min()}, {label.max()}] outside "
            f"[0, {class_count})"
        )

    normalized = normalize_minmax(raw_image)
    image3 = standardize(np.repeat(normalized[None, :, :], 3, axis=0))

    h, w = raw_image.shape
    target_h, target_w = pad_to_multiple(h), pad_to_multiple(w)
    # reflect padding needs pad <= dim - 1; only sub-8-pixel grids can violate it
    if target_h - h > h - 1 or target_w - w > w - 1:
        raise DataError(
            f"image {raw_image.shape} too small to reflection-pad to the "
            f"{PATCH_SIZE}-pixel lattice"
        )
    image_t = torch.from_numpy(np.ascontiguousarray(image3))
    label_t = torch.from_numpy(np.ascontiguousarray(label.astype(np.int64)))
    mask_t = torch.ones((h, w), dtype=torch.bool)
    if (target_h, target_w) != (h, w):
        pad = (0, target_w - w, 0, target_h - h)  # bottom/right
        image_t = F.pad(image_t.unsqueeze(0), pad, mode="reflect").squeeze(0)
        label_t = F.pad(label_t.unsqueeze(0).unsqueeze(0).float(), pad, mode="reflect")
        label_t = label_t.squeeze(0).squeeze(0).long()
        mask_t = F.pad(mask_t.unsqueeze(0).unsqueeze(0).float(), pad, value=0.0)
        mask_t = mask_t.squeeze(0).squeeze(0).bool()
    return ModelInput(
        image=image_t,
        label=label_t,
        valid_mask=mask_t,
        sample_id=sample_id,
        slice_index=slice_index,
    )


def resize_pair(
    image: np.ndarray, label: np.ndarray, target: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear-resize the image and nearest-neighbor-resize the label.

    The label convention is source index = floor(out_index * in / out), so
    the resized label value set is a subset of the original's.
    """
    if image.shape != label.shape:
        raise DataError(
            f"image shape {image.shape} does not match label shape {label.shape}"
        )
    th, tw = target
    if th <= 0 or tw <= 0:
        raise DataError(f"target size must be positive, got {target}")
    if (th, tw) == image.shape:
        return image.copy(), label.copy()

    image_t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    resized = F.interpolate(
        image_t.unsqueeze(0).unsqueeze(0),
        size=(th, tw),
        mode="bilinear",
        align_corners=False,
    )
    rows = (np.arange(th) * image.shape[0]) // th
    cols = (np.arange(tw) * image.shape[1]) // tw
    label_out = np.asarray(label)[np.ix_(rows, cols)]
    return resized.squeeze(0).squeeze(0).numpy(), label_out.copy()


def augment_flip(sample: ModelInput, coin: float) -> ModelInput:
    """Mirror image, label, and mask about the vertical axis when coin < 0.5."""
    if coin >= 0.5:
        return sample
    return replace(
        sample,
        image=torch.flip(sample.image, dims=[-1]),
        label=torch.flip(sample.label, dims=[-1]),
        valid_mask=torch.flip(sample.valid_mask, dims=[-1]),
    )
