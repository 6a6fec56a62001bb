"""Segmentation decoder heads over encoder feature taps.

Four interchangeable heads:

* ``linear`` -- per-token linear probe on the final tap.
* ``pup`` -- progressive upsampling: stacked 3x3 conv stages, each
  followed by a 2x bilinear upsample.
* ``mla`` -- multi-level aggregation: all taps reduced to a common width,
  summed top-down, refined per stream, concatenated and fused.
* ``dpt`` -- dense-prediction fusion: taps are projected, resampled to a
  resolution pyramid, and merged coarse-to-fine through residual fusion
  blocks.

Every head maps a batch of feature taps to logits at a requested output
size; predicted labels come from an argmax that resolves ties toward the
lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import FeatureTaps
from .errors import ConfigError

DECODER_KINDS = ("linear", "pup", "mla", "dpt")
DECODER_DEFAULT_WIDTHS = {"pup": 128, "mla": 256, "dpt": 256}
MULTI_TAP_COUNT = 4


@dataclass(frozen=True)
class DecoderConfig:
    kind: str
    class_count: int
    channel_width: int | None = None  # None picks the kind's default
    embed_dim: int = 384
    stage_count: int = 4  # pup only

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ConfigError(
                f"unknown decoder kind {self.kind!r}; expected one of {DECODER_KINDS}"
            )
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.stage_count < 1:
            raise ConfigError(f"stage_count must be >= 1, got {self.stage_count}")
        width = self.effective_width
        if width is not None and width < 2:
            raise ConfigError(f"channel_width must be >= 2, got {width}")
        if self.kind == "dpt" and width % 2:
            raise ConfigError(f"dpt channel_width must be even, got {width}")

    @property
    def effective_width(self) -> int | None:
        if self.channel_width is not None:
            return self.channel_width
        return DECODER_DEFAULT_WIDTHS.get(self.kind)


@dataclass
class LogitMap:
    """Per-pixel class scores (B x C x H x W) with argmax prediction."""

    logits: torch.Tensor

    @property
    def class_count(self) -> int:
        return self.logits.shape[1]

    def predictions(self) -> np.ndarray:
        scores = self.logits.detach().cpu().numpy()
        return np.argmax(scores, axis=1)  # ties resolve to the lowest index

    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=1)


def _gn(channels: int) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


def _conv3(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)


def _resize_logits(logits: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(logits.shape[-2:]) == tuple(size):
        return logits
    return F.interpolate(logits, size=size, mode="bilinear", align_corners=False)


def _channel_grids(taps: FeatureTaps, expected: int | None = None) -> list[torch.Tensor]:
    if expected is not None and len(taps.grids) != expected:
        raise ConfigError(
            f"decoder expects {expected} feature taps, got {len(taps.grids)}"
        )
    return [grid.permute(0, 3, 1, 2) for grid in taps.grids]


class LinearDecoder(nn.Module):
    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        self.classify = nn.Linear(config.embed_dim, config.class_count)

    def forward(self, taps: FeatureTaps, output_size: tuple[int, int]) -> torch.Tensor:
        logits = self.classify(taps.final).permute(0, 3, 1, 2)
        return _resize_logits(logits, output_size)


class ProgressiveDecoder(nn.Module):
    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        width = config.effective_width
        stages = []
        in_ch = config.embed_dim
        for _ in range(config.stage_count):
            stages.append(
                nn.Sequential(_conv3(in_ch, width), _gn(width), nn.ReLU(inplace=True))
            )
            in_ch = width
        self.stages = nn.ModuleList(stages)
        self.classify = nn.Conv2d(width, config.class_count, kernel_size=1)

    def forward(self, taps: FeatureTaps, output_size: tuple[int, int]) -> torch.Tensor:
        x = taps.final.permute(0, 3, 1, 2)
        for stage in self.stages:
            x = stage(x)
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return _resize_logits(self.classify(x), output_size)


class MultiLevelDecoder(nn.Module):
    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        width = config.effective_width
        self.reduce = nn.ModuleList(
            nn.Conv2d(config.embed_dim, width, kernel_size=1)
            for _ in range(MULTI_TAP_COUNT)
        )
        self.refine = nn.ModuleList(
            nn.Sequential(
                _conv3(width, width),
                _gn(width),
                nn.ReLU(inplace=True),
                _conv3(width, width),
                _gn(width),
                nn.ReLU(inplace=True),
            )
            for _ in range(MULTI_TAP_COUNT)
        )
        self.fuse = nn.Sequential(
            _conv3(MULTI_TAP_COUNT * width, 2 * width),
            _gn(2 * width),
            nn.ReLU(inplace=True),
        )
        self.narrow = nn.Sequential(
            _conv3(2 * width, width), _gn(width), nn.ReLU(inplace=True)
        )
        self.classify = nn.Conv2d(width, config.class_count, kernel_size=1)

    def forward(self, taps: FeatureTaps, output_size: tuple[int, int]) -> torch.Tensor:
        grids = _channel_grids(taps, MULTI_TAP_COUNT)
        reduced = [red(grid) for red, grid in zip(self.reduce, grids)]
        # Top-down aggregation: each level adds everything deeper than it.
        agg = list(reduced)
        for i in range(MULTI_TAP_COUNT - 2, -1, -1):
            agg[i] = agg[i] + agg[i + 1]
        streams = [
            F.interpolate(
                refine(a), scale_factor=4, mode="bilinear", align_corners=False
            )
            for refine, a in zip(self.refine, agg)
        ]
        x = self.fuse(torch.cat(streams, dim=1))
        x = self.narrow(x)
        return _resize_logits(self.classify(x), output_size)


class ResidualConvUnit(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReLU(inplace=False),
            _conv3(width, width),
            _gn(width),
            nn.ReLU(inplace=False),
            _conv3(width, width),
            _gn(width),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class FusionBlock(nn.Module):
    """Merge a coarse path with a skip feature, then upsample 2x."""

    def __init__(self, width: int):
        super().__init__()
        self.rcu_skip = ResidualConvUnit(width)
        self.rcu_out = ResidualConvUnit(width)
        self.project = nn.Conv2d(width, width, kernel_size=1)

    def forward(self, path: torch.Tensor | None, skip: torch.Tensor) -> torch.Tensor:
        x = self.rcu_skip(skip)
        if path is not None:
            if path.shape[-2:] != skip.shape[-2:]:
                path = F.interpolate(
                    path, size=skip.shape[-2:], mode="bilinear", align_corners=False
                )
            x = x + path
        x = self.rcu_out(x)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.project(x)


class DensePredictionDecoder(nn.Module):
    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        width = config.effective_width
        self.project = nn.ModuleList(
            nn.Conv2d(config.embed_dim, width, kernel_size=1)
            for _ in range(MULTI_TAP_COUNT)
        )
        # Shallow taps are upsampled, the deepest is downsampled, forming a
        # resolution pyramid at 4x, 2x, 1x, and 0.5x of the patch grid.
        self.resample = nn.ModuleList(
            [
                nn.ConvTranspose2d(width, width, kernel_size=4, stride=4),
                nn.ConvTranspose2d(width, width, kernel_size=2, stride=2),
                nn.Identity(),
                nn.Conv2d(width, width, kernel_size=3, stride=2, padding=1),
            ]
        )
        self.layer_rn = nn.ModuleList(
            _conv3(width, width) for _ in range(MULTI_TAP_COUNT)
        )
        self.fusions = nn.ModuleList(
            FusionBlock(width) for _ in range(MULTI_TAP_COUNT)
        )
        half = width // 2
        self.head = nn.Sequential(_conv3(width, half), _gn(half), nn.ReLU(inplace=True))
        self.classify = nn.Conv2d(half, config.class_count, kernel_size=1)

    def forward(self, taps: FeatureTaps, output_size: tuple[int, int]) -> torch.Tensor:
        grids = _channel_grids(taps, MULTI_TAP_COUNT)
        feats = [
            rn(res(proj(grid)))
            for proj, res, rn, grid in zip(
                self.project, self.resample, self.layer_rn, grids
            )
        ]
        path: torch.Tensor | None = None
        for fusion, feat in zip(reversed(self.fusions), reversed(feats)):
            path = fusion(path, feat)
        x = self.head(path)
        return _resize_logits(self.classify(x), output_size)


_DECODER_CLASSES = {
    "linear": LinearDecoder,
    "pup": ProgressiveDecoder,
    "mla": MultiLevelDecoder,
    "dpt": DensePredictionDecoder,
}


def build_decoder(config: DecoderConfig) -> nn.Module:
    return _DECODER_CLASSES[config.kind](config)


def decoder_param_count(decoder: nn.Module) -> int:
    return sum(p.numel() for p in decoder.parameters())
