import json
from importlib import resources

import pytest

from bridgealign.config import ConfigError, RunConfig, config_from_dict, load_config


def test_defaults():
    cfg = RunConfig()
    assert (cfg.sim.C, cfg.sim.instances_per_category, cfg.sim.T, cfg.sim.d_in, cfg.sim.seed) == (20, 40, 9, 48, 7)
    assert (cfg.train.delta, cfg.train.k, cfg.train.epochs) == (0.5, 5, 50)
    assert cfg.sweep.deltas == [0.1, 0.3, 0.5, 0.7, 0.9] and cfg.sweep.frame_counts == [3, 5, 7]


def test_shipped_default_config_matches_dataclasses():
    text = resources.files("bridgealign").joinpath("configs/default.json").read_text()
    assert config_from_dict(json.loads(text)) == RunConfig()


def test_round_trip_through_dict():
    cfg = config_from_dict({"sim": {"T": 5}, "train": {"optimizer": "sgd", "learning_rate": 0.1}})
    assert cfg.sim.T == 5 and cfg.train.optimizer == "sgd"
    assert config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"sim": {"unknown": 1}},
    {"extra_section": {}},
    {"train": {"optimizer": "rmsprop"}},
    {"sim": {"C": "twenty"}},
    {"eval": {"window": 1}},
    {"sweep": {"deltas": []}},
    {"sim": {"C": 0}},
    {"train": {"epochs": 0}},
])
def test_schema_violations(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_load_config(tmp_path):
    assert load_config(None) == RunConfig()
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")
