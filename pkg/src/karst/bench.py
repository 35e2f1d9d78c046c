"""Timing and multiply counts for the ways of applying an adapted layer."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from statistics import median
from typing import Callable

import numpy as np

from .adapter import AdaptedLinear, KarstAdapter, KronKernel, adapter_apply, adapter_flops, adapter_materialize, merge
from .kron import FlopTally
from .numerics import make_rng
from .rescale import RescaleParams

CSV_COLUMNS = ("path", "multiplies_per_input", "median_seconds", "ratio_to_plain", "d_in", "d_out", "m", "r", "n_kernels", "batch", "reps", "seed")
MERGE_RATIO_LIMIT = 1.05


@dataclass
class BenchResult:
    rows: list[dict]
    structured_tally: int
    structured_formula: int
    warnings: list[str]
    merge_ratio: float

    @property
    def flops_match(self) -> bool:
        return self.structured_tally == self.structured_formula

    def row(self, path: str) -> dict:
        return next(r for r in self.rows if r["path"] == path)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()


def random_layer(d_in: int, d_out: int, m: int, r: int, n: int, seed: int = 0) -> AdaptedLinear:
    """Layer with every factor random, as after training."""
    rng = make_rng(seed)
    kernels = [
        KronKernel(rng.standard_normal((m, m)), rng.standard_normal((d_in // m, r)), rng.standard_normal((r, d_out // m)))
        for _ in range(n)
    ]
    w0 = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
    rescale = RescaleParams(0.1 * rng.standard_normal(d_out), 0.1 * rng.standard_normal(d_out))
    return AdaptedLinear(w0, 0.1 * rng.standard_normal(d_out), KarstAdapter(kernels), rescale)


def _interleaved_medians(fns: dict[str, Callable[[], object]], reps: int, warmup: int) -> dict[str, float]:
    for fn in fns.values():
        for _ in range(warmup):
            fn()
    times: dict[str, list[float]] = {k: [] for k in fns}
    names = list(fns)
    for i in range(reps):
        # alternate the order so drift does not favour one path
        for name in names if i % 2 == 0 else reversed(names):
            t0 = time.perf_counter()
            fns[name]()
            times[name].append(time.perf_counter() - t0)
    return {k: median(v) for k, v in times.items()}


def run_bench(
    d_in: int = 768, d_out: int = 768, m: int = 8, r: int = 8, n: int = 2,
    batch: int = 64, reps: int = 50, warmup: int = 5, seed: int = 0,
) -> BenchResult:
    """Compare (a) dense delta_W, (b) structured adapter, (c) merged affine and the plain base layer."""
    if reps < 30:
        raise ValueError("use at least 30 repetitions")
    layer = random_layer(d_in, d_out, m, r, n, seed)
    x = make_rng(seed + 1).standard_normal((batch, d_in))
    delta = adapter_materialize(layer.adapter)
    w_merged, b_merged = merge(layer)
    w0, b0 = layer.w0, layer.bias0

    tally = FlopTally()
    adapter_apply(layer.adapter, x[:1], tally)
    formula = adapter_flops(layer.adapter)

    fns = {
        "materialized_delta": lambda: x @ delta,
        "structured_delta": lambda: adapter_apply(layer.adapter, x),
        "merged_affine": lambda: x @ w_merged + b_merged,
    }
    plain = lambda: x @ w0 + b0  # noqa: E731
    med, ratio = {}, {}
    for name, fn in fns.items():
        # each path is timed interleaved with the plain layer so the ratio shares conditions
        pair = _interleaved_medians({name: fn, "plain_base": plain}, reps, warmup)
        med[name] = pair[name]
        ratio[name] = pair[name] / pair["plain_base"]
        if name == "merged_affine":
            med["plain_base"] = pair["plain_base"]
    ratio["plain_base"] = 1.0
    mults = {
        "materialized_delta": d_in * d_out,
        "structured_delta": formula,
        "merged_affine": d_in * d_out,
        "plain_base": d_in * d_out,
    }
    common = dict(d_in=d_in, d_out=d_out, m=m, r=r, n_kernels=n, batch=batch, reps=reps, seed=seed)
    rows = [
        dict(path=p, multiplies_per_input=mults[p], median_seconds=f"{med[p]:.9f}",
             ratio_to_plain=f"{ratio[p]:.4f}", **common)
        for p in mults
    ]
    warnings = []
    if ratio["merged_affine"] > MERGE_RATIO_LIMIT:
        warnings.append(f"merged/plain time ratio {ratio['merged_affine']:.3f} exceeds {MERGE_RATIO_LIMIT}")
    return BenchResult(rows, tally.multiplies, formula, warnings, ratio["merged_affine"])
