#!/usr/bin/env python3
"""Adapted-encoder vs scratch-Unet benchmark on a geobody subset.

Trains both models on the same 200-sample subset for 20 epochs (batch 32)
and compares test mIoU on a 100-sample subset.  Requires real data under
``GEOFM_DATA_ROOT`` and pretrained encoder weights via
``GEOFM_VIT_S14_CHECKPOINT`` (see scripts/convert_torch_checkpoint.py).

The expectation is directional only: the adapted model should beat the
baseline.  Both runs share the seed, schedule, loss, and augmentation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
from pathlib import Path

from geofm import build_model, preset
from geofm.config import resolve_data_root
from geofm.data import load_manifest
from geofm.evaluate import evaluate_model
from geofm.trainer import load_model_tensors, run_training

CHECKPOINT_ENV = "GEOFM_VIT_S14_CHECKPOINT"
TRAIN_SUBSET = 200
TEST_SUBSET = 100


def subset_manifest(manifest, train_n: int, test_n: int):
    keep = manifest.split_entries("train")[:train_n]
    keep += manifest.split_entries("test")[:test_n]
    return dataclasses.replace(manifest, entries=keep)


def train_and_score(model, manifest, config, out_dir: Path) -> float:
    result = run_training(model, manifest, config, out_dir=out_dir)
    if result.best_checkpoint is not None and result.best_checkpoint.exists():
        load_model_tensors(result.best_checkpoint, model)
    return evaluate_model(model, manifest, split="test").miou


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--decoder", default="pup", choices=("linear", "pup", "mla", "dpt"))
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/geobody-benchmark")
    args = parser.parse_args()

    pretrained = os.environ.get(CHECKPOINT_ENV)
    if not pretrained or not Path(pretrained).is_file():
        raise SystemExit(
            f"set {CHECKPOINT_ENV} to a converted ViT-S/14 archive "
            "(scripts/convert_torch_checkpoint.py)"
        )

    def configured(name: str):
        config = preset(name)
        return dataclasses.replace(
            config,
            seed=args.seed,
            train=dataclasses.replace(
                config.train,
                total_epochs=args.epochs,
                warmup_epochs=min(10, args.epochs - 1),
                patience=0,
            ),
        )

    adapted_config = configured(f"geobody+{args.decoder}")
    unet_config = configured("geobody+unet")
    root = resolve_data_root(adapted_config)
    manifest = subset_manifest(load_manifest(root, "geobody"), TRAIN_SUBSET, TEST_SUBSET)
    out = Path(args.out)

    adapted = build_model(
        adapted_config.decoder,
        adapted_config.class_count,
        policy=adapted_config.policy(),
        pretrained=pretrained,
        seed=args.seed,
    )
    adapted_miou = train_and_score(adapted, manifest, adapted_config, out / "adapted")

    unet = build_model("unet", unet_config.class_count, seed=args.seed)
    unet_miou = train_and_score(unet, manifest, unet_config, out / "unet")

    verdict = "PASS" if adapted_miou > unet_miou else "FAIL"
    summary = {
        "decoder": args.decoder,
        "epochs": args.epochs,
        "adapted_miou": adapted_miou,
        "unet_miou": unet_miou,
        "verdict": verdict,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0 if verdict == "PASS" else 1


if __name__ == "__main__":
    raise SystemExit(main())
