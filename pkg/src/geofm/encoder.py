"""Vision-transformer encoder (patch size 14) with multi-depth feature taps.

The default geometry is ViT-S/14: 12 pre-norm blocks, 384-dim embeddings,
6 heads, taps after blocks 3, 6, 9, and 12 (1-based).  Intermediate taps
are raw block outputs; the final tap passes through the output
normalization first.  Attention uses separate query/key/value projections
so adapters can wrap them individually.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigError
from .tensorio import read_tensors

PATCH_SIZE = 14


@dataclass(frozen=True)
class EncoderConfig:
    patch_size: int = PATCH_SIZE
    embed_dim: int = 384
    depth: int = 12
    head_count: int = 6
    tap_layers: tuple[int, ...] = (3, 6, 9, 12)  # 1-based block indices
    mlp_ratio: float = 4.0
    pos_grid: int = 16  # side of the square grid the position table is stored for

    def __post_init__(self):
        if self.embed_dim % self.head_count:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by head_count "
                f"{self.head_count}"
            )
        taps = tuple(self.tap_layers)
        if not taps:
            raise ConfigError("tap_layers must not be empty")
        if any(t < 1 or t > self.depth for t in taps):
            raise ConfigError(
                f"tap_layers {taps} must lie within [1, {self.depth}]"
            )
        if any(b <= a for a, b in zip(taps, taps[1:])):
            raise ConfigError(f"tap_layers {taps} must be strictly increasing")
        object.__setattr__(self, "tap_layers", taps)


@dataclass
class FeatureTaps:
    layers: tuple[int, ...]
    grids: list[torch.Tensor]  # each B x rows x cols x embed_dim
    class_tokens: list[torch.Tensor]  # each B x embed_dim
    grid_shape: tuple[int, int]

    def __post_init__(self):
        if len(self.grids) != len(self.layers):
            raise ValueError("one grid per tap layer required")

    @property
    def final(self) -> torch.Tensor:
        return self.grids[-1]

    @property
    def embed_dim(self) -> int:
        return self.grids[-1].shape[-1]


@dataclass
class LoadReport:
    matched: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    ignored: list[str] = field(default_factory=list)
    encoder_param_count: int = 0


class Attention(nn.Module):
    def __init__(self, dim: int, head_count: int):
        super().__init__()
        self.head_count = head_count
        self.head_dim = dim // head_count
        self.scale = self.head_dim**-0.5
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape

        def heads(t: torch.Tensor) -> torch.Tensor:
            return t.reshape(b, n, self.head_count, self.head_dim).transpose(1, 2)

        q = heads(self.q_proj(x))
        k = heads(self.k_proj(x))
        v = heads(self.v_proj(x))
        attn = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.out_proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, head_count: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, head_count)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


def interpolate_pos_embed(
    stored: torch.Tensor, target_grid: tuple[int, int]
) -> torch.Tensor:
    """Resample a (1 + g*g) x dim position table to a (1 + r*c) x dim one.

    The patch block is resized bicubically; the class-token row is copied
    unchanged.  Identity targets return the table as-is.
    """
    rows, cols = target_grid
    if rows <= 0 or cols <= 0:
        raise ConfigError(f"target grid must be positive, got {target_grid}")
    n_stored = stored.shape[0] - 1
    base = int(round(math.sqrt(n_stored)))
    if base * base != n_stored:
        raise ConfigError(
            f"stored position table has {n_stored} patch rows; expected a square grid"
        )
    if (rows, cols) == (base, base):
        return stored
    cls_row = stored[:1]
    patch = stored[1:].reshape(1, base, base, -1).permute(0, 3, 1, 2)
    patch = F.interpolate(
        patch, size=(rows, cols), mode="bicubic", align_corners=False
    )
    patch = patch.permute(0, 2, 3, 1).reshape(rows * cols, -1)
    return torch.cat([cls_row, patch], dim=0)


class ViTEncoder(nn.Module):
    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config or EncoderConfig()
        cfg = self.config
        self.patch_embed = nn.Conv2d(
            3, cfg.embed_dim, kernel_size=cfg.patch_size, stride=cfg.patch_size
        )
        self.cls_token = nn.Parameter(torch.zeros(1, 1, cfg.embed_dim))
        self.pos_embed = nn.Parameter(
            torch.zeros(cfg.pos_grid * cfg.pos_grid + 1, cfg.embed_dim)
        )
        self.blocks = nn.ModuleList(
            Block(cfg.embed_dim, cfg.head_count, cfg.mlp_ratio)
            for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.embed_dim)
        self._init_weights()

    def _init_weights(self):
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02)
                nn.init.zeros_(module.bias)

    def _grid_shape(self, x: torch.Tensor) -> tuple[int, int]:
        p = self.config.patch_size
        h, w = x.shape[-2], x.shape[-1]
        if h % p or w % p:
            raise ConfigError(
                f"input {h}x{w} is not a multiple of the patch size {p}"
            )
        return h // p, w // p

    def patchify(self, x: torch.Tensor) -> torch.Tensor:
        """Tokenize a B x 3 x H x W batch: class token + patch tokens, with
        position embeddings added.  Token count is (H/14)*(W/14) + 1."""
        rows, cols = self._grid_shape(x)
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)  # B x N x D
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        tokens = torch.cat([cls, tokens], dim=1)
        pos = interpolate_pos_embed(self.pos_embed, (rows, cols))
        return tokens + pos.unsqueeze(0)

    def forward_with_taps(self, x: torch.Tensor) -> FeatureTaps:
        """Run all blocks, collecting patch-feature grids at the tap layers."""
        rows, cols = self._grid_shape(x)
        tokens = self.patchify(x)
        taps = set(self.config.tap_layers)
        grids: list[torch.Tensor] = []
        cls_tokens: list[torch.Tensor] = []
        for i, block in enumerate(self.blocks, start=1):
            tokens = block(tokens)
            if i in taps:
                tapped = self.norm(tokens) if i == self.config.depth else tokens
                cls_tokens.append(tapped[:, 0])
                grids.append(
                    tapped[:, 1:].reshape(x.shape[0], rows, cols, -1)
                )
        return FeatureTaps(
            layers=self.config.tap_layers,
            grids=grids,
            class_tokens=cls_tokens,
            grid_shape=(rows, cols),
        )

    def forward(self, x: torch.Tensor) -> FeatureTaps:
        return self.forward_with_taps(x)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_encoder(config: EncoderConfig | None = None, seed: int | None = None) -> ViTEncoder:
    """Construct an encoder; with a seed the random init is reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    return ViTEncoder(config)


def load_pretrained_weights(
    source: str | dict[str, np.ndarray], encoder: ViTEncoder
) -> LoadReport:
    """Load tensors by canonical name from an archive path or dict.

    Returns a report of matched, missing (wanted but absent), and ignored
    (present but unused) names.  A shape mismatch on a matched name is fatal.
    """
    tensors = read_tensors(source) if isinstance(source, (str,)) or hasattr(source, "__fspath__") else dict(source)
    state = encoder.state_dict()
    report = LoadReport(encoder_param_count=encoder.param_count())
    new_state = {}
    for name, param in state.items():
        if name not in tensors:
            report.missing.append(name)
            continue
        value = torch.from_numpy(np.ascontiguousarray(tensors[name]))
        if tuple(value.shape) != tuple(param.shape):
            raise CheckpointError(
                f"shape mismatch for {name!r}: archive has {tuple(value.shape)}, "
                f"encoder expects {tuple(param.shape)}"
            )
        new_state[name] = value.to(param.dtype)
        report.matched.append(name)
    report.ignored = sorted(set(tensors) - set(state))
    encoder.load_state_dict(new_state, strict=False)
    return report


def convert_fused_qkv_state(
    tensors: dict[str, np.ndarray], depth: int | None = None
) -> dict[str, np.ndarray]:
    """Translate a fused-qkv ViT state dict (dinov2-style naming) to the
    canonical split q/k/v names used here.

    Handles: ``patch_embed.proj.*`` -> ``patch_embed.*``,
    ``blocks.i.attn.qkv.*`` -> split thirds, ``blocks.i.attn.proj.*`` ->
    ``blocks.i.attn.out_proj.*``, ``pos_embed``/``cls_token`` squeezed to the
    stored 2-D/3-D layouts.  Unknown names pass through untouched.
    """
    out: dict[str, np.ndarray] = {}
    for name, value in tensors.items():
        if name == "pos_embed":
            out[name] = value.reshape(value.shape[-2], value.shape[-1])
        elif name == "cls_token":
            out[name] = value.reshape(1, 1, value.shape[-1])
        elif name.startswith("patch_embed.proj."):
            out["patch_embed." + name.split(".")[-1]] = value
        elif ".attn.qkv." in name:
            prefix, leaf = name.rsplit(".qkv.", maxsplit=1)
            q, k, v = np.split(value, 3, axis=0)
            out[f"{prefix}.q_proj.{leaf}"] = q
            out[f"{prefix}.k_proj.{leaf}"] = k
            out[f"{prefix}.v_proj.{leaf}"] = v
        elif ".attn.proj." in name:
            prefix, leaf = name.rsplit(".proj.", maxsplit=1)
            out[f"{prefix}.out_proj.{leaf}"] = value
        else:
            out[name] = value
    return out
