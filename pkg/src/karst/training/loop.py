"""Seeded minibatch training of adapters on a synthetic task."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from math import gcd
from typing import Callable, Optional

import numpy as np

from ..adapter import DEFAULT_INIT_STD, AdaptedLinear, check_divisible, init_adapter, param_count
from ..numerics import spawn_rng
from ..rescale import RescaleParams
from .model import ToyModel, TrainableLinear, backward, cross_entropy, forward
from .optim import OPTIMIZERS, make_optimizer
from .tasks import SyntheticTask

log = logging.getLogger(__name__)

DEFAULT_M = 8
METHODS = ("karst", "ka", "probe")

# RNG streams derived from the run seed
_INIT_STREAM = 10
_SHUFFLE_STREAM = 11


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one run.

    ``m=None`` means the default stacking dimension 8, reduced per layer to the
    largest divisor of both layer widths that does not exceed 8. An explicit
    ``m`` is used as given and must divide every layer width.

    ``method`` selects what is trained: ``karst`` (Kronecker adapters and
    re-scaling on every layer), ``ka`` (adapters only) or ``probe`` (no adapters;
    the head's full weight and bias are trained, the rest stays frozen).
    """

    m: Optional[int] = None
    r: int = 8
    n_kernels: int = 2
    std: float = DEFAULT_INIT_STD
    lr: float = 1e-3
    optimizer: str = "adam"
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    method: str = "karst"

    def __post_init__(self) -> None:
        if self.m is not None and self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.r < 1 or self.n_kernels < 1:
            raise ValueError("r and n_kernels must be >= 1")
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {sorted(OPTIMIZERS)}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {list(METHODS)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def resolve_m(d_in: int, d_out: int, m: Optional[int]) -> int:
    if m is not None:
        check_divisible(d_in, d_out, m)
        return m
    g = gcd(d_in, d_out)
    return max(k for k in range(1, DEFAULT_M + 1) if g % k == 0)


def build_model(base: list[tuple[np.ndarray, np.ndarray]], config: TrainConfig) -> ToyModel:
    """Wrap frozen ``(W0, bias0)`` layers according to ``config.method``."""
    rng = spawn_rng(config.seed, _INIT_STREAM)
    layers = []
    for i, (w0, b0) in enumerate(base):
        d_in, d_out = w0.shape
        if config.method == "probe":
            if i == len(base) - 1:
                layers.append(TrainableLinear(w0, b0))
            else:
                layers.append(AdaptedLinear(w0, b0))
            continue
        m = resolve_m(d_in, d_out, config.m)
        adapter = init_adapter(rng, d_in, d_out, m, config.r, config.n_kernels, config.std)
        adapter.seed = config.seed
        rescale = RescaleParams.zeros(d_out) if config.method == "karst" else None
        layers.append(AdaptedLinear(w0, b0, adapter, rescale))
    return ToyModel(layers)


def model_param_count(model: ToyModel) -> int:
    total = 0
    for layer in model.layers:
        if isinstance(layer, TrainableLinear):
            total += layer.weight.size + layer.bias.size
        else:
            total += param_count(layer)
    return total


def evaluate(model: ToyModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean loss and accuracy on ``(x, y)``."""
    logits, _ = forward(model, x)
    correct = int(np.count_nonzero(np.argmax(logits, axis=1) == y))
    return cross_entropy(logits, y), correct / len(y)


def train(
    model: ToyModel,
    task: SyntheticTask,
    config: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> list[dict]:
    """Run ``config.epochs`` epochs and return one metrics row per epoch.

    Row 0 is the untrained model. Metrics are full-dataset evaluations after the
    epoch's updates.
    """
    opt = make_optimizer(config.optimizer, config.lr)
    shuffle = spawn_rng(config.seed, _SHUFFLE_STREAM)
    n_params = model_param_count(model)
    n = len(task.y_train)

    def record(epoch: int) -> dict:
        loss, acc = evaluate(model, task.x_train, task.y_train)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss at epoch {epoch} (lr={config.lr})")
        _, test_acc = evaluate(model, task.x_test, task.y_test)
        row = {
            "epoch": epoch,
            "train_loss": loss,
            "train_acc": acc,
            "test_acc": test_acc,
            "param_count": n_params,
            "seed": config.seed,
        }
        if on_epoch is not None:
            on_epoch(row)
        return row

    history = [record(0)]
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = forward(model, task.x_train[idx])
            if not np.all(np.isfinite(logits)):
                raise TrainingDiverged(f"non-finite logits in epoch {epoch} (lr={config.lr})")
            grads = backward(model, cache, task.y_train[idx])
            opt.step(model, grads)
        history.append(record(epoch))
        log.debug("epoch %d loss %.6f", epoch, history[-1]["train_loss"])
    return history
