"""Low-rank adapters for the encoder's attention projections.

An adapted linear layer computes ``W0 x + (alpha / r) * B A x`` where
``A`` is ``r x n_in`` (uniform +-1/sqrt(n_in) init) and ``B`` is
``n_out x r`` (zero init), so a freshly injected adapter is an exact
identity on top of the frozen base layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigError
from .tensorio import read_tensors, write_tensors

FINETUNE_MODES = ("full", "lora", "frozen")

_TARGET_ATTRS = {
    "query": "q_proj",
    "key": "k_proj",
    "value": "v_proj",
    "out": "out_proj",
}


@dataclass(frozen=True)
class FinetunePolicy:
    """How much of the encoder trains: everything, adapters only, or nothing."""

    mode: str = "lora"
    lora_targets: tuple[str, ...] = ("query", "key", "value")
    rank: int = 8
    alpha: float | None = None  # defaults to the rank

    def __post_init__(self):
        if self.mode not in FINETUNE_MODES:
            raise ConfigError(
                f"unknown finetune mode {self.mode!r}; expected one of {FINETUNE_MODES}"
            )
        targets = tuple(self.lora_targets)
        unknown = [t for t in targets if t not in _TARGET_ATTRS]
        if unknown:
            raise ConfigError(
                f"unknown adapter targets {unknown}; expected among "
                f"{sorted(_TARGET_ATTRS)}"
            )
        if self.mode == "lora":
            if not targets:
                raise ConfigError("adapter mode requires at least one target")
            if self.rank < 1:
                raise ConfigError(f"adapter rank must be >= 1, got {self.rank}")
        object.__setattr__(self, "lora_targets", targets)

    @property
    def effective_alpha(self) -> float:
        return float(self.rank if self.alpha is None else self.alpha)


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank update."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float | None = None):
        super().__init__()
        if rank < 1:
            raise ConfigError(f"adapter rank must be >= 1, got {rank}")
        self.base = base
        self.rank = rank
        self.alpha = float(rank if alpha is None else alpha)
        self.scaling = self.alpha / rank
        in_features = base.in_features
        out_features = base.out_features
        self.lora_A = nn.Parameter(torch.empty(rank, in_features))
        self.lora_B = nn.Parameter(torch.zeros(out_features, rank))
        bound = 1.0 / math.sqrt(in_features)
        nn.init.uniform_(self.lora_A, -bound, bound)

    @property
    def in_features(self) -> int:
        return self.base.in_features

    @property
    def out_features(self) -> int:
        return self.base.out_features

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = F.linear(F.linear(x, self.lora_A), self.lora_B)
        return F.linear(x, self.base.weight, self.base.bias) + self.scaling * update

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + self.scaling * (self.lora_B @ self.lora_A)

    def to_linear(self) -> nn.Linear:
        """Fold the low-rank update into a plain linear layer."""
        merged = nn.Linear(
            self.in_features, self.out_features, bias=self.base.bias is not None
        )
        with torch.no_grad():
            merged.weight.copy_(self.merged_weight())
            if self.base.bias is not None:
                merged.bias.copy_(self.base.bias)
        return merged


def _iter_attention_modules(encoder: nn.Module):
    for name, module in encoder.named_modules():
        if name.endswith("attn") and all(
            hasattr(module, attr) for attr in _TARGET_ATTRS.values()
        ):
            yield name, module


def inject_lora(encoder: nn.Module, policy: FinetunePolicy) -> nn.Module:
    """Wrap the targeted attention projections in every block with adapters
    and freeze everything else.  Returns the encoder (modified in place)."""
    if policy.mode != "lora":
        raise ConfigError(f"inject_lora called with mode {policy.mode!r}")
    wrapped = 0
    for p in encoder.parameters():
        p.requires_grad_(False)
    for _, attn in _iter_attention_modules(encoder):
        for target in policy.lora_targets:
            attr = _TARGET_ATTRS[target]
            base = getattr(attn, attr)
            if isinstance(base, LoRALinear):
                raise ConfigError(f"{attr} already carries an adapter")
            adapted = LoRALinear(base, policy.rank, policy.effective_alpha)
            adapted.base.weight.requires_grad_(False)
            if adapted.base.bias is not None:
                adapted.base.bias.requires_grad_(False)
            setattr(attn, attr, adapted)
            wrapped += 1
    if wrapped == 0:
        raise ConfigError("no attention projections found to adapt")
    return encoder


def merge_lora(encoder: nn.Module) -> nn.Module:
    """Replace every adapted projection with a plain merged linear layer."""
    merged = 0
    for _, attn in _iter_attention_modules(encoder):
        for attr in _TARGET_ATTRS.values():
            module = getattr(attn, attr)
            if isinstance(module, LoRALinear):
                setattr(attn, attr, module.to_linear())
                merged += 1
    if merged == 0:
        raise ConfigError("no adapters found to merge")
    return encoder


def apply_policy(encoder: nn.Module, policy: FinetunePolicy) -> nn.Module:
    """Put the encoder into the trainability state the policy describes."""
    if policy.mode == "lora":
        return inject_lora(encoder, policy)
    flag = policy.mode == "full"
    for p in encoder.parameters():
        p.requires_grad_(flag)
    return encoder


def adapter_state(encoder: nn.Module) -> dict[str, torch.Tensor]:
    """All adapter tensors keyed by their state-dict names."""
    return {
        name: tensor
        for name, tensor in encoder.state_dict().items()
        if "lora_A" in name or "lora_B" in name
    }


def adapter_param_count(encoder: nn.Module) -> int:
    return sum(t.numel() for t in adapter_state(encoder).values())


def count_trainable_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def save_adapters(
    encoder: nn.Module, path, metadata: dict[str, str] | None = None
) -> None:
    state = adapter_state(encoder)
    if not state:
        raise CheckpointError("encoder has no adapters to save")
    arrays = {name: tensor.detach().cpu().numpy() for name, tensor in state.items()}
    write_tensors(path, arrays, metadata=metadata)


def load_adapters(encoder: nn.Module, path) -> list[str]:
    """Load adapter tensors into an already-injected encoder.  Returns the
    loaded names; unknown or shape-mismatched tensors are fatal."""
    current = adapter_state(encoder)
    if not current:
        raise CheckpointError("encoder has no adapters; inject before loading")
    stored = read_tensors(path)
    missing = sorted(set(current) - set(stored))
    if missing:
        raise CheckpointError(f"adapter archive is missing tensors: {missing}")
    with torch.no_grad():
        for name, tensor in current.items():
            value = torch.from_numpy(np.ascontiguousarray(stored[name]))
            if tuple(value.shape) != tuple(tensor.shape):
                raise CheckpointError(
                    f"shape mismatch for {name!r}: archive has "
                    f"{tuple(value.shape)}, encoder expects {tuple(tensor.shape)}"
                )
    encoder.load_state_dict(
        {
            name: torch.from_numpy(np.ascontiguousarray(stored[name]))
            for name in current
        },
        strict=False,
    )
    return sorted(current)
