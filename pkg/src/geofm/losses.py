"""Inverse-frequency weighted soft Dice loss.

The loss is ``1 - sum_k w_k * dice_k`` over the classes present in the
labels, where ``dice_k`` is the soft Dice score of class ``k`` and the
weights are proportional to inverse pixel counts (rarer classes weigh
more), renormalized to sum to one.  Classes absent from the labels are
excluded entirely.  Pixels outside the valid mask (padding) contribute
nothing.  The loss consumes per-pixel class probabilities; a softmax
convenience wrapper handles raw logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import DataError

EPSILON = 1e-6
PROBABILITY_TOLERANCE = 1e-6


@dataclass
class LossBreakdown:
    total: torch.Tensor  # differentiable scalar
    per_class_dice: torch.Tensor  # length C
    per_class_weight: torch.Tensor  # length C, zero for absent classes


def _as_batch(tensor: torch.Tensor, ndim: int) -> torch.Tensor:
    if tensor.ndim == ndim - 1:
        return tensor.unsqueeze(0)
    return tensor


def class_weights(
    label: torch.Tensor, class_count: int, valid_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Inverse-frequency weights over the classes present in the labels.

    Absent classes get weight zero; present weights sum to one.
    """
    label = torch.as_tensor(label)
    if valid_mask is not None:
        valid_mask = torch.as_tensor(valid_mask, dtype=torch.bool)
        if valid_mask.shape != label.shape:
            raise DataError(
                f"valid_mask shape {tuple(valid_mask.shape)} does not match "
                f"label shape {tuple(label.shape)}"
            )
        label = label[valid_mask]
    flat = label.reshape(-1).long()
    if flat.numel() == 0:
        raise DataError("empty label grid")
    if int(flat.min()) < 0 or int(flat.max()) >= class_count:
        raise DataError(
            f"labels span [{int(flat.min())}, {int(flat.max())}] outside "
            f"[0, {class_count})"
        )
    counts = torch.bincount(flat, minlength=class_count).double()
    present = counts > 0
    inverse = torch.where(present, 1.0 / counts.clamp(min=1.0), torch.zeros(()).double())
    return inverse / inverse.sum()


def weighted_dice_loss(
    probabilities: torch.Tensor,
    label: torch.Tensor,
    valid_mask: torch.Tensor | None = None,
    epsilon: float = EPSILON,
) -> LossBreakdown:
    """Weighted soft Dice loss over per-pixel class probabilities.

    ``probabilities`` is ``(B x) C x H x W`` and must lie in [0, 1] (softmax
    upstream); ``label`` is ``(B x) H x W`` integer.  Soft Dice per class uses
    ``2 * sum(p * g) / (sum(p) + sum(g))`` over valid pixels, smoothed by
    ``epsilon`` in numerator and denominator.
    """
    probabilities = _as_batch(torch.as_tensor(probabilities), 4)
    label = _as_batch(torch.as_tensor(label), 3)
    if probabilities.ndim != 4:
        raise DataError(
            f"probabilities must be (B x) C x H x W, got shape "
            f"{tuple(probabilities.shape)}"
        )
    if label.shape != (probabilities.shape[0], *probabilities.shape[2:]):
        raise DataError(
            f"label shape {tuple(label.shape)} does not match probabilities "
            f"{tuple(probabilities.shape)}"
        )
    with torch.no_grad():
        low = float(probabilities.min())
        high = float(probabilities.max())
    if low < -PROBABILITY_TOLERANCE or high > 1.0 + PROBABILITY_TOLERANCE:
        raise DataError(
            f"probabilities span [{low:.3g}, {high:.3g}]; expected [0, 1]"
        )
    if valid_mask is None:
        valid_mask = torch.ones_like(label, dtype=torch.bool)
    else:
        valid_mask = _as_batch(torch.as_tensor(valid_mask, dtype=torch.bool), 3)
        if valid_mask.shape != label.shape:
            raise DataError(
                f"valid_mask shape {tuple(valid_mask.shape)} does not match "
                f"label shape {tuple(label.shape)}"
            )
    if not bool(valid_mask.any()):
        raise DataError("no valid pixels in batch")
    class_count = probabilities.shape[1]
    weights = class_weights(label, class_count, valid_mask).to(probabilities.dtype)
    mask = valid_mask.unsqueeze(1).to(probabilities.dtype)
    one_hot = (
        F.one_hot(label.long().clamp(min=0), class_count)
        .permute(0, 3, 1, 2)
        .to(probabilities.dtype)
    )
    probs = probabilities * mask
    one_hot = one_hot * mask
    dims = (0, 2, 3)
    intersection = (probs * one_hot).sum(dim=dims)
    prob_sum = probs.sum(dim=dims)
    label_sum = one_hot.sum(dim=dims)
    dice = (2.0 * intersection + epsilon) / (prob_sum + label_sum + epsilon)
    total = 1.0 - (weights * dice).sum()
    return LossBreakdown(total=total, per_class_dice=dice, per_class_weight=weights)


def weighted_dice_from_logits(
    logits: torch.Tensor,
    label: torch.Tensor,
    valid_mask: torch.Tensor | None = None,
    epsilon: float = EPSILON,
) -> LossBreakdown:
    return weighted_dice_loss(
        torch.softmax(logits, dim=-3), label, valid_mask, epsilon
    )
