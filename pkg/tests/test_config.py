"""Experiment configs: presets carry the published recipe, parsing, hashing."""

from __future__ import annotations

import pytest

from geofm.config import (
    DATA_ROOT_ENV,
    ExperimentConfig,
    TrainSettings,
    config_from_dict,
    config_hash,
    parse_config,
    preset,
    preset_names,
    resolve_data_root,
)
from geofm.errors import ConfigError

# Published recipe: per-task batch sizes, and which task+decoder pairings
# use adapters instead of full fine-tuning.
RECIPE_BATCH = {"facies": 3, "geobody": 32, "crater": 3, "das_event": 6, "fault": 6}
RECIPE_LORA = {("facies", "dpt"), ("fault", "dpt"), ("fault", "mla")}


@pytest.mark.parametrize("task", sorted(RECIPE_BATCH))
@pytest.mark.parametrize("decoder", ["linear", "pup", "mla", "dpt"])
def test_preset_table_matches_recipe(task, decoder):
    cfg = preset(f"{task}+{decoder}")
    assert cfg.task == task
    assert cfg.decoder == decoder
    assert cfg.train.batch_size == RECIPE_BATCH[task]
    expected = "lora" if (task, decoder) in RECIPE_LORA else "full"
    assert cfg.finetune == expected
    # shared optimizer recipe
    assert cfg.train.base_lr == 1e-5
    assert cfg.train.warmup_epochs == 10
    assert cfg.train.betas == (0.9, 0.999)
    assert cfg.train.weight_decay == 0.01


def test_preset_examples():
    fault_mla = preset("fault+mla")
    assert fault_mla.finetune == "lora"
    assert fault_mla.lora_rank == 8
    geobody_pup = preset("geobody+pup")
    assert geobody_pup.finetune == "full"
    assert geobody_pup.train.batch_size == 32


def test_preset_names_cover_all_pairs():
    names = preset_names()
    assert len(names) == 5 * 5
    assert "facies+dpt" in names and "crater+unet" in names


def test_preset_validation():
    with pytest.raises(ConfigError, match="form"):
        preset("faultmla")
    with pytest.raises(ConfigError, match="unknown task"):
        preset("gravity+mla")
    with pytest.raises(ConfigError, match="unknown decoder"):
        preset("fault+fpn")


def test_policy_from_config():
    cfg = preset("fault+mla")
    policy = cfg.policy()
    assert policy.mode == "lora"
    assert policy.rank == 8
    assert policy.lora_targets == ("query", "key", "value")

    full = preset("crater+pup").policy()
    assert full.mode == "full"

    assert preset("fault+unet").policy() is None


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown task"):
        ExperimentConfig(task="mars", decoder="pup")
    with pytest.raises(ConfigError, match="unknown decoder"):
        ExperimentConfig(task="fault", decoder="segformer")
    with pytest.raises(ConfigError, match="unknown finetune"):
        ExperimentConfig(task="fault", decoder="pup", finetune="frozen")
    with pytest.raises(ConfigError, match="no encoder"):
        ExperimentConfig(task="fault", decoder="unet", finetune="lora")
    with pytest.raises(ConfigError, match="batch_size"):
        TrainSettings(batch_size=0)
    with pytest.raises(ConfigError, match="exceed"):
        TrainSettings(warmup_epochs=5, total_epochs=5)


def test_class_count_follows_task():
    assert preset("facies+pup").class_count == 6
    assert preset("fault+pup").class_count == 2


def test_config_from_dict_with_preset_key():
    cfg = config_from_dict({"preset": "fault+dpt", "seed": 3})
    assert cfg.task == "fault"
    assert cfg.decoder == "dpt"
    assert cfg.finetune == "lora"
    assert cfg.seed == 3


def test_config_from_dict_task_decoder_base():
    cfg = config_from_dict(
        {
            "task": "geobody",
            "decoder": "pup",
            "train": {"warmup_epochs": 2, "total_epochs": 5},
        }
    )
    assert cfg.train.batch_size == 32  # preset default survives the merge
    assert cfg.train.total_epochs == 5
    assert cfg.train.base_lr == 1e-5


def test_config_from_dict_unknown_keys_have_paths():
    with pytest.raises(ConfigError, match="'decodr'"):
        config_from_dict({"preset": "fault+pup", "decodr": "mla"})
    with pytest.raises(ConfigError, match="train.'momentum'"):
        config_from_dict({"preset": "fault+pup", "train": {"momentum": 0.9}})


def test_config_from_dict_requires_identity():
    with pytest.raises(ConfigError, match="requires 'task'"):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigError, match="mapping"):
        config_from_dict([1, 2])
    with pytest.raises(ConfigError, match="'train' must be a mapping"):
        config_from_dict({"preset": "fault+pup", "train": 3})


def test_config_from_dict_preset_conflict():
    with pytest.raises(ConfigError, match="both"):
        config_from_dict({"preset": "fault+pup"}, base=preset("fault+mla"))


def test_parse_config_yaml(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "preset: das_event+pup\nseed: 11\ntrain:\n  total_epochs: 30\n"
    )
    cfg = parse_config(path)
    assert cfg.task == "das_event"
    assert cfg.seed == 11
    assert cfg.train.total_epochs == 30
    assert cfg.train.batch_size == 6


def test_parse_config_empty_file_needs_base(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = parse_config(path, base=preset("fault+pup"))
    assert cfg.task == "fault"
    with pytest.raises(ConfigError, match="requires"):
        parse_config(path)


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("task: [unclosed\n")
    with pytest.raises(ConfigError, match="does not parse"):
        parse_config(bad)


def test_config_hash_stable_and_sensitive():
    a = preset("fault+mla")
    b = preset("fault+mla")
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    c = config_from_dict({"preset": "fault+mla", "seed": 1})
    assert config_hash(c) != config_hash(a)
    d = config_from_dict({"preset": "fault+mla", "train": {"total_epochs": 99}})
    assert config_hash(d) != config_hash(a)


def test_resolve_data_root_env_beats_config(monkeypatch, tmp_path):
    cfg = config_from_dict({"preset": "fault+pup", "data_root": str(tmp_path)})
    monkeypatch.delenv(DATA_ROOT_ENV, raising=False)
    assert resolve_data_root(cfg) == tmp_path

    monkeypatch.setenv(DATA_ROOT_ENV, "/elsewhere")
    assert str(resolve_data_root(cfg)) == "/elsewhere"

    bare = preset("fault+pup")
    monkeypatch.delenv(DATA_ROOT_ENV, raising=False)
    with pytest.raises(ConfigError, match="no data root"):
        resolve_data_root(bare)


def test_to_dict_roundtrips_through_config_from_dict():
    cfg = config_from_dict(
        {"preset": "facies+dpt", "seed": 9, "train": {"patience": 5}}
    )
    payload = cfg.to_dict()
    rebuilt = config_from_dict(payload)
    assert rebuilt == cfg
    assert config_hash(rebuilt) == config_hash(cfg)
