"""A compact encoder-decoder convnet trained from scratch as the baseline.

Classic U-shape: double-conv blocks with group norm, max-pool downsampling,
transposed-conv upsampling with skip concatenation, and a 1x1 classifier.
Inputs are padded to a multiple of 2**depth internally and the logits are
cropped back, so any spatial size is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError


@dataclass(frozen=True)
class UnetConfig:
    class_count: int
    in_channels: int = 3
    base_width: int = 24
    depth: int = 4

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if self.base_width < 1:
            raise ConfigError(f"base_width must be positive, got {self.base_width}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")


def _gn(channels: int) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


class DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
            _gn(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, kernel_size=3, padding=1),
            _gn(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class Unet(nn.Module):
    def __init__(self, config: UnetConfig):
        super().__init__()
        self.config = config
        widths = [config.base_width * (2**i) for i in range(config.depth)]
        self.down = nn.ModuleList()
        in_ch = config.in_channels
        for w in widths:
            self.down.append(DoubleConv(in_ch, w))
            in_ch = w
        bottleneck_width = widths[-1] * 2
        self.bottleneck = DoubleConv(widths[-1], bottleneck_width)
        self.up = nn.ModuleList()
        self.up_conv = nn.ModuleList()
        in_ch = bottleneck_width
        for w in reversed(widths):
            self.up.append(nn.ConvTranspose2d(in_ch, w, kernel_size=2, stride=2))
            self.up_conv.append(DoubleConv(2 * w, w))
            in_ch = w
        self.classify = nn.Conv2d(widths[0], config.class_count, kernel_size=1)

    @property
    def stride(self) -> int:
        return 2**self.config.depth

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        s = self.stride
        pad_h = (-h) % s
        pad_w = (-w) % s
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, kernel_size=2)
        x = self.bottleneck(x)
        for upsample, block, skip in zip(self.up, self.up_conv, reversed(skips)):
            x = upsample(x)
            x = block(torch.cat([x, skip], dim=1))
        logits = self.classify(x)
        return logits[..., :h, :w]

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
