"""Command-line front end.

Verbs: ``prepare-data`` materializes a dataset manifest, ``train`` runs the
fine-tuning loop, ``evaluate`` scores a checkpoint, ``visualize-features``
renders principal-component maps of encoder features, and ``report``
collates several runs into one comparison table.

Exit codes: 0 success, 1 validation error, 2 missing prerequisite,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from pathlib import Path

from PIL import Image

from .config import (
    DATA_ROOT_ENV,
    ExperimentConfig,
    config_hash,
    parse_config,
    preset,
    resolve_data_root,
)
from .data import load_manifest, save_manifest_jsonl
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GeofmError,
    MissingArtifactError,
    TrainingDiverged,
)
from .evaluate import REPORT_NAME, evaluate_model, save_report
from .features import visualize_sample
from .model import AdaptedSegmenter, build_model
from .tensorio import read_header
from .trainer import load_model_tensors, run_training

VERBS = ("prepare-data", "train", "evaluate", "visualize-features", "report")
_VIZ_SAMPLE_CAP = 8


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to SystemExit(2)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geofm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--preset", help="named recipe '<task>+<decoder>'")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="single-threaded, bitwise-reproducible runs",
        )
        p.add_argument("--checkpoint", help="named-tensor archive to load")
        p.add_argument("--out", help="output directory")
        if verb == "report":
            p.add_argument("run_dirs", nargs="+", help="run directories to collate")
    return parser


def _load_config(args) -> ExperimentConfig:
    base = preset(args.preset) if args.preset else None
    if args.config:
        config = parse_config(args.config, base=base)
    elif base is not None:
        config = base
    else:
        raise ConfigError("provide --config or --preset")
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.deterministic:
        config = dataclasses.replace(config, deterministic=True)
    return config


def _require_data_root(config: ExperimentConfig) -> Path:
    root = resolve_data_root(config)
    if not root.is_dir():
        raise MissingArtifactError(
            f"data root {root} does not exist (set {DATA_ROOT_ENV} or data_root)"
        )
    task_dir = root / config.task
    if not task_dir.is_dir():
        raise MissingArtifactError(
            f"no data for task {config.task!r} under {root} "
            f"(expected directory {task_dir})"
        )
    return root


def _require_checkpoint(args) -> Path:
    if not args.checkpoint:
        raise MissingArtifactError("this verb requires --checkpoint <archive>")
    path = Path(args.checkpoint)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint {path} does not exist")
    return path


def _build_from_config(
    config: ExperimentConfig, pretrained: str | None = None
):
    return build_model(
        config.decoder,
        config.class_count,
        policy=config.policy(),
        channel_width=config.channel_width,
        pretrained=pretrained,
        seed=config.seed,
    )


def _out_dir(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_prepare_data(args) -> int:
    config = _load_config(args)
    root = _require_data_root(config)
    manifest = load_manifest(root, config.task)
    out = _out_dir(args, ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{config.task}-manifest.jsonl"
    save_manifest_jsonl(manifest, path)
    train_n, test_n = manifest.counts
    print(f"{config.task}: {train_n} train / {test_n} test samples -> {path}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    root = _require_data_root(config)
    manifest = load_manifest(root, config.task)
    resume_from = None
    pretrained = None
    if args.checkpoint:
        path = _require_checkpoint(args)
        infos, _ = read_header(path)
        if any(name.startswith("model.") for name in infos):
            resume_from = path  # a run checkpoint: continue training
        else:
            pretrained = str(path)  # raw encoder weights: initialize from them
    model = _build_from_config(config, pretrained=pretrained)
    out = _out_dir(args, f"runs/{config.task}+{config.decoder}")
    result = run_training(model, manifest, config, out_dir=out, resume_from=resume_from)
    print(
        f"trained {config.task}+{config.decoder}: best val mIoU "
        f"{result.best_miou:.4f} at epoch {result.best_epoch} "
        f"({result.global_step} steps) -> {out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    root = _require_data_root(config)
    checkpoint = _require_checkpoint(args)
    manifest = load_manifest(root, config.task)
    model = _build_from_config(config)
    load_model_tensors(checkpoint, model)
    report = evaluate_model(model, manifest, split="test")
    out = _out_dir(args, "eval")
    save_report(
        report,
        out,
        config_payload={
            "config": config.to_dict(),
            "config_hash": config_hash(config),
            "data_root": str(root),
        },
    )
    print(
        f"{config.task}+{config.decoder}: mIoU {report.miou:.4f} "
        f"mPA {report.mpa:.4f} -> {out / REPORT_NAME}"
    )
    return 0


def cmd_visualize_features(args) -> int:
    config = _load_config(args)
    root = _require_data_root(config)
    manifest = load_manifest(root, config.task)
    model = _build_from_config(config)
    if args.checkpoint:
        load_model_tensors(_require_checkpoint(args), model)
    encoder = model.encoder if isinstance(model, AdaptedSegmenter) else None
    if encoder is None:
        raise ConfigError("feature maps require an encoder-based model, not unet")
    from .data import iter_samples  # local import keeps CLI startup light

    out = _out_dir(args, "viz")
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for sample in iter_samples(manifest, "test", limit=_VIZ_SAMPLE_CAP):
        rgb, _ = visualize_sample(encoder, sample)
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in sample.sample_id)
        Image.fromarray(rgb).save(out / f"{safe}.png")
        written += 1
    print(f"wrote {written} feature maps -> {out}")
    return 0


def cmd_report(args) -> int:
    rows = []
    data_roots = set()
    for run_dir in args.run_dirs:
        report_path = Path(run_dir) / REPORT_NAME
        if not report_path.is_file():
            raise MissingArtifactError(
                f"run {run_dir} has no {REPORT_NAME}; evaluate it first"
            )
        payload = json.loads(report_path.read_text())
        config = payload.get("config", {})
        name = f"{config.get('task', '?')}+{config.get('decoder', Path(run_dir).name)}"
        rows.append((name, payload.get("miou"), payload.get("mpa")))
        if payload.get("data_root"):
            data_roots.add(payload["data_root"])
    if len(data_roots) > 1:
        raise ConfigError(
            f"runs mix different data roots: {sorted(data_roots)}"
        )
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'run':<{width}}  {'mIoU':>7}  {'mPA':>7}"]
    for name, miou, mpa in rows:
        lines.append(f"{name:<{width}}  {miou:7.4f}  {mpa:7.4f}")
    table = "\n".join(lines)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(table + "\n")
    return 0


_COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "visualize-features": cmd_visualize_features,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.verb](args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MissingArtifactError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.payload:
            print(json.dumps(exc.payload, indent=2), file=sys.stderr)
        return 3
    except GeofmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
