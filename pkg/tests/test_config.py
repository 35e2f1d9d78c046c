import pytest
import yaml

from karst.config import ConfigError, ExperimentConfig, default_config_yaml, load_config, parse_config


def test_empty_config_takes_defaults():
    cfg = parse_config(None)
    assert cfg == ExperimentConfig()
    assert cfg.resolved()["train"]["r"] == 8
    assert cfg.resolved()["task"]["seed"] == cfg.train.seed


def test_default_yaml_round_trips():
    assert parse_config(yaml.safe_load(default_config_yaml())) == ExperimentConfig()


def test_partial_config():
    cfg = parse_config({"train": {"m": 4, "lr": 1}, "task": {"widths": [16, 8], "seed": 5}})
    assert cfg.train.m == 4 and cfg.train.lr == 1.0 and cfg.train.n_kernels == 2
    assert cfg.task.widths == (16, 8) and cfg.task_seed == 5


@pytest.mark.parametrize("data,msg", [
    ({"trian": {}}, "unknown top-level"),
    ({"train": {"learning_rate": 0.1}}, "unknown keys in 'train'"),
    ({"train": {"r": "8"}}, "expected int"),
    ({"train": {"r": True}}, "booleans"),
    ({"train": {"optimizer": "rmsprop"}}, "optimizer"),
    ({"task": {"recipe": "mnist"}}, "recipe"),
    ({"task": {"widths": [16, -1]}}, "positive integers"),
    ({"task": {"widths": [16]}}, "widths"),
    ({"output": "runs"}, "mapping"),
    ([1, 2], "mapping"),
])
def test_strict_rejections(data, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(data)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [unclosed")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(bad)


def test_seed_override():
    cfg = ExperimentConfig().with_seed(17)
    assert cfg.train.seed == 17 and cfg.task_seed == 17
