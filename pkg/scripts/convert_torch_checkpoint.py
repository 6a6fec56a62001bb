#!/usr/bin/env python3
"""Convert a torch ViT-S/14 checkpoint (.pth) to the named-tensor archive.

Accepts the common fused-qkv naming (``blocks.i.attn.qkv.weight``,
``patch_embed.proj.*``, 4-D ``pos_embed``) and translates it to the split
q/k/v names this package uses.  Tensors that have no counterpart in the
encoder are kept in the archive untouched and simply ignored at load time.

Example:
    python3 scripts/convert_torch_checkpoint.py dinov2_vits14.pth vits14.nta
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import torch

from geofm import build_encoder
from geofm.encoder import convert_fused_qkv_state, load_pretrained_weights
from geofm.tensorio import write_tensors


def flatten_state(obj) -> dict[str, torch.Tensor]:
    if isinstance(obj, dict):
        for key in ("model", "state_dict", "teacher"):
            if key in obj and isinstance(obj[key], dict):
                return flatten_state(obj[key])
        return {k: v for k, v in obj.items() if isinstance(v, torch.Tensor)}
    raise SystemExit("checkpoint does not contain a tensor mapping")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("source", help="torch checkpoint (.pth)")
    parser.add_argument("dest", help="output archive (.nta)")
    args = parser.parse_args()

    state = flatten_state(torch.load(args.source, map_location="cpu", weights_only=True))
    arrays = {
        name.removeprefix("module."): tensor.to(torch.float32).numpy()
        for name, tensor in state.items()
    }
    converted = convert_fused_qkv_state(arrays)
    tensors = {k: np.ascontiguousarray(v) for k, v in converted.items()}
    write_tensors(args.dest, tensors, metadata={"source": str(Path(args.source).name)})

    report = load_pretrained_weights(args.dest, build_encoder(seed=0))
    print(f"wrote {len(tensors)} tensors -> {args.dest}")
    print(
        f"encoder coverage: {len(report.matched)} matched, "
        f"{len(report.missing)} missing, {len(report.ignored)} ignored"
    )
    if report.missing:
        print("missing:", ", ".join(report.missing[:8]), "..." if len(report.missing) > 8 else "")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
