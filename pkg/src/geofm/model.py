"""Model assembly: adapted encoder + decoder head, or the convnet baseline.

Both variants map a batch of images to per-pixel class logits at the input
resolution, so the trainer and evaluator treat them interchangeably.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .decoders import DecoderConfig, build_decoder
from .encoder import (
    EncoderConfig,
    ViTEncoder,
    build_encoder,
    load_pretrained_weights,
)
from .errors import ConfigError
from .lora import FinetunePolicy, apply_policy
from .unet import Unet, UnetConfig

MODEL_KINDS = ("linear", "pup", "mla", "dpt", "unet")


@dataclass(frozen=True)
class ParamCounts:
    encoder_total: int
    encoder_trainable: int
    decoder_total: int
    decoder_trainable: int

    @property
    def total(self) -> int:
        return self.encoder_total + self.decoder_total

    @property
    def trainable(self) -> int:
        return self.encoder_trainable + self.decoder_trainable


class AdaptedSegmenter(nn.Module):
    def __init__(self, encoder: ViTEncoder, decoder: nn.Module):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        taps = self.encoder.forward_with_taps(images)
        return self.decoder(taps, tuple(images.shape[-2:]))


def count_trainable_params(model: nn.Module) -> ParamCounts:
    """Parameter totals split between encoder and decoder.  The scratch
    baseline has no pretrained encoder, so everything counts as decoder."""

    def tally(module: nn.Module) -> tuple[int, int]:
        total = sum(p.numel() for p in module.parameters())
        trainable = sum(p.numel() for p in module.parameters() if p.requires_grad)
        return total, trainable

    if isinstance(model, AdaptedSegmenter):
        enc_total, enc_train = tally(model.encoder)
        dec_total, dec_train = tally(model.decoder)
        return ParamCounts(enc_total, enc_train, dec_total, dec_train)
    total, trainable = tally(model)
    return ParamCounts(0, 0, total, trainable)


def build_model(
    decoder_kind: str,
    class_count: int,
    policy: FinetunePolicy | None = None,
    encoder_config: EncoderConfig | None = None,
    channel_width: int | None = None,
    pretrained: str | None = None,
    seed: int | None = None,
) -> nn.Module:
    """Assemble a segmenter.  ``unet`` builds the scratch baseline; the other
    kinds pair a (possibly adapted) encoder with the named decoder head.
    Pretrained encoder weights load before adapters are injected."""
    if decoder_kind not in MODEL_KINDS:
        raise ConfigError(
            f"unknown model kind {decoder_kind!r}; expected one of {MODEL_KINDS}"
        )
    if seed is not None:
        torch.manual_seed(seed)
    if decoder_kind == "unet":
        return Unet(UnetConfig(class_count=class_count))
    encoder = build_encoder(encoder_config)
    if pretrained is not None:
        load_pretrained_weights(pretrained, encoder)
    embed_dim = encoder.config.embed_dim
    decoder = build_decoder(
        DecoderConfig(
            kind=decoder_kind,
            class_count=class_count,
            channel_width=channel_width,
            embed_dim=embed_dim,
        )
    )
    if policy is not None:
        apply_policy(encoder, policy)
    return AdaptedSegmenter(encoder, decoder)
