"""Paired multi-seed runs on the low-rank-shift task."""
from __future__ import annotations

from dataclasses import dataclass, replace
from statistics import median
from typing import Sequence

from .loop import TrainConfig, build_model, train
from .tasks import TaskSpec, make_task


def final_loss(task, config: TrainConfig) -> float:
    return train(build_model(task.base, config), task, config)[-1]["train_loss"]


@dataclass
class TransferStudy:
    seeds: tuple[int, ...]
    losses: dict[str, list[float]]  # variant -> final train loss per seed

    def median(self, variant: str) -> float:
        return median(self.losses[variant])

    @property
    def beats_probe(self) -> bool:
        return all(k < p for k, p in zip(self.losses["karst_n2"], self.losses["probe"]))

    @property
    def rescale_helps(self) -> bool:
        return self.median("karst_n2") <= self.median("ka_n2")

    @property
    def kernel_trend(self) -> bool:
        meds = [self.median(f"karst_n{n}") for n in (1, 2, 4)]
        return meds[0] >= meds[1] >= meds[2]


def transfer_study(
    seeds: Sequence[int] = (0, 1, 2),
    m: int = 2,
    r: int = 2,
    base_config: TrainConfig = TrainConfig(),
    widths: tuple[int, ...] = (32, 32, 8),
) -> TransferStudy:
    """Probe vs adapter-only vs full KARST, and N in {1, 2, 4}, on a shift of rank ``2*m*r``."""
    spec = TaskSpec(widths=widths, shift_rank=2 * m * r)
    variants = {
        "probe": dict(method="probe"),
        "ka_n2": dict(method="ka", n_kernels=2),
        "karst_n1": dict(method="karst", n_kernels=1),
        "karst_n2": dict(method="karst", n_kernels=2),
        "karst_n4": dict(method="karst", n_kernels=4),
    }
    losses: dict[str, list[float]] = {v: [] for v in variants}
    for seed in seeds:
        task = make_task("low-rank-shift", seed, spec)
        for name, overrides in variants.items():
            cfg = replace(base_config, m=m, r=r, seed=seed, **overrides)
            losses[name].append(final_loss(task, cfg))
    return TransferStudy(tuple(seeds), losses)
