"""Experiment configuration files (YAML).

Schema, all keys optional; unknown keys are rejected::

    train:
      m: null            # stacking dimension; null = 8, reduced per layer to fit
      r: 8
      n_kernels: 2
      std: 0.02          # Gaussian init std of c and a
      lr: 0.001
      optimizer: adam    # adam | sgd
      epochs: 200
      batch_size: 32
      seed: 0            # overridden by --seed
      method: karst      # karst | ka | probe
    task:
      recipe: low-rank-shift   # gaussian-blobs | rotated-base | low-rank-shift
      seed: null         # null = same as train.seed
      widths: [32, 32, 8]
      n_train: 512
      n_test: 256
      shift_rank: 8
      shift_scale: 1.0
      blob_separation: 4.0
    output:
      dir: runs/default
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional

import yaml

from .training.loop import TrainConfig
from .training.tasks import RECIPES, TaskSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSection:
    recipe: str = "low-rank-shift"
    seed: Optional[int] = None
    widths: tuple[int, ...] = TaskSpec.widths
    n_train: int = TaskSpec.n_train
    n_test: int = TaskSpec.n_test
    shift_rank: int = TaskSpec.shift_rank
    shift_scale: float = TaskSpec.shift_scale
    blob_separation: float = TaskSpec.blob_separation

    def spec(self) -> TaskSpec:
        return TaskSpec(
            widths=tuple(self.widths), n_train=self.n_train, n_test=self.n_test, shift_rank=self.shift_rank,
            shift_scale=self.shift_scale, blob_separation=self.blob_separation,
        )


@dataclass(frozen=True)
class OutputSection:
    dir: str = "runs/default"


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    task: TaskSection = field(default_factory=TaskSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def task_seed(self) -> int:
        return self.train.seed if self.task.seed is None else self.task.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, seed=seed))

    def resolved(self) -> dict:
        """Plain-data view with every default filled in (embedded in all outputs)."""
        task = asdict(self.task)
        task["seed"] = self.task_seed
        task["widths"] = list(task["widths"])
        return {"train": self.train.to_dict(), "task": task, "output": asdict(self.output)}


_TYPES: dict[str, dict[str, Any]] = {
    "train": {"m": (int, type(None)), "r": int, "n_kernels": int, "std": float, "lr": float,
              "optimizer": str, "epochs": int, "batch_size": int, "seed": int, "method": str},
    "task": {"recipe": str, "seed": (int, type(None)), "widths": list, "n_train": int, "n_test": int,
             "shift_rank": int, "shift_scale": float, "blob_separation": float},
    "output": {"dir": str},
}


def _check_value(section: str, key: str, value: Any) -> Any:
    expected = _TYPES[section][key]
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: booleans are not accepted")
    if expected is float and isinstance(value, int):
        return float(value)
    if not isinstance(value, expected):
        names = expected.__name__ if isinstance(expected, type) else " or ".join(t.__name__ for t in expected)
        raise ConfigError(f"{section}.{key}: expected {names}, got {type(value).__name__} ({value!r})")
    if key == "widths":
        if not value or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value):
            raise ConfigError(f"{section}.widths must be a list of positive integers, got {value!r}")
        return tuple(value)
    return value


def parse_config(data: Any) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with sections train / task / output")
    unknown = set(data) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}; allowed: {sorted(_TYPES)}")
    parsed = {}
    for section, allowed in _TYPES.items():
        body = data.get(section) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        bad = set(body) - set(allowed)
        if bad:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}; allowed: {sorted(allowed)}")
        parsed[section] = {k: _check_value(section, k, v) for k, v in body.items()}
    if parsed["task"].get("recipe", TaskSection.recipe) not in RECIPES:
        raise ConfigError(f"task.recipe must be one of {list(RECIPES)}, got {parsed['task']['recipe']!r}")
    try:
        train = TrainConfig(**parsed["train"])
        task = TaskSection(**parsed["task"])
        task.spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(train, task, OutputSection(**parsed["output"]))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(data)


def default_config_yaml() -> str:
    data = ExperimentConfig().resolved()
    data["task"]["seed"] = None
    return yaml.safe_dump(data, sort_keys=False)
