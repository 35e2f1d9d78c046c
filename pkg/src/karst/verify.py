"""Self-check suite behind ``karst verify``.

Each family returns ``(passed, detail)``. Seeds are fixed so a pristine build
gives the same table every time.
"""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .adapter import AdaptedLinear, KarstAdapter, KronKernel, adapter_apply, adapter_materialize, init_adapter, merge, param_count
from .kron import KronPair, kron_apply, kron_materialize, rank_of
from .numerics import make_rng, rel_err
from .rescale import RescaleParams, rescale_apply, rescale_fold
from .serialize import load_model, model_arrays, save_model
from .training import TaskSpec, TrainConfig, build_model, gradcheck, make_task, randomize_trainables


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_pair(rng) -> KronPair:
    p1, q1, p2, q2 = rng.integers(1, 5, size=4)
    return KronPair(rng.standard_normal((p1, q1)), rng.standard_normal((p2, q2)))


def check_kron_blocks():
    rng = make_rng(100)
    worst = 0.0
    for _ in range(100):
        k = _random_pair(rng)
        full = kron_materialize(k)
        p2, q2 = k.d.shape
        for i in range(k.c.shape[0]):
            for j in range(k.c.shape[1]):
                block = full[i * p2 : (i + 1) * p2, j * q2 : (j + 1) * q2]
                worst = max(worst, float(np.max(np.abs(block - k.c[i, j] * k.d))))
    return worst == 0.0, f"max block deviation {worst:.1e} over 100 pairs"


def check_kron_apply():
    rng = make_rng(101)
    worst = 0.0
    for _ in range(100):
        k = _random_pair(rng)
        x = rng.standard_normal(k.shape[0])
        worst = max(worst, rel_err(kron_apply(k, x), kron_materialize(k).T @ x))
    return worst <= 1e-12, f"max rel err {worst:.1e} (tol 1e-12)"


def check_kron_algebra():
    rng = make_rng(102)
    worst = 0.0
    for _ in range(20):
        c1, d1 = rng.standard_normal((2, 3)), rng.standard_normal((3, 2))
        c2, d2 = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
        lhs = kron_materialize(KronPair(c1, d1)) @ kron_materialize(KronPair(c2, d2))
        worst = max(worst, rel_err(lhs, kron_materialize(KronPair(c1 @ c2, d1 @ d2))))
        alpha = rng.standard_normal()
        worst = max(worst, rel_err(kron_materialize(KronPair(alpha * c1, d1)), alpha * kron_materialize(KronPair(c1, d1))))
    return worst <= 1e-12, f"mixed-product / bilinearity max rel err {worst:.1e}"


def check_zero_init():
    rng = make_rng(103)
    ok = True
    for d_in, d_out, m in [(12, 8, 2), (16, 16, 4), (24, 6, 3)]:
        w0, b0 = rng.standard_normal((d_in, d_out)), rng.standard_normal(d_out)
        layer = AdaptedLinear(w0, b0, init_adapter(rng, d_in, d_out, m, 2, 2), RescaleParams.zeros(d_out))
        x = rng.standard_normal((200, d_in))
        ok &= not np.any(adapter_materialize(layer.adapter))
        ok &= bool(np.array_equal(layer.forward(x), x @ w0 + b0))
    return ok, "fresh layers reproduce the frozen base exactly"


def _random_layer(rng, d_in, d_out, m, r, n) -> AdaptedLinear:
    kernels = [KronKernel(rng.standard_normal((m, m)), rng.standard_normal((d_in // m, r)), rng.standard_normal((r, d_out // m))) for _ in range(n)]
    rescale = RescaleParams(rng.standard_normal(d_out), rng.standard_normal(d_out))
    return AdaptedLinear(rng.standard_normal((d_in, d_out)), rng.standard_normal(d_out), KarstAdapter(kernels), rescale)


def check_merge():
    rng = make_rng(104)
    worst = 0.0
    for d_in, d_out, m in [(12, 8, 2), (32, 16, 4), (18, 27, 3)]:
        layer = _random_layer(rng, d_in, d_out, m, 2, 2)
        w, b = merge(layer)
        x = rng.standard_normal((100, d_in))
        worst = max(worst, rel_err(x @ w + b, layer.forward(x)))
    return worst <= 1e-10, f"merged vs training forward max rel err {worst:.1e} (tol 1e-10)"


def check_rescale_fold():
    rng = make_rng(105)
    p = RescaleParams(rng.standard_normal(6), rng.standard_normal(6))
    w, b = rng.standard_normal((5, 6)), rng.standard_normal(6)
    fw, fb = rescale_fold(p, w, b)
    x = rng.standard_normal((100, 5))
    err = rel_err(x @ fw + fb, rescale_apply(p, x @ w + b))
    zw, zb = rescale_fold(RescaleParams.zeros(6), w, b)
    ident = np.array_equal(zw, w) and np.array_equal(zb, b)
    return err <= 1e-12 and ident, f"fold rel err {err:.1e}; zero fold is identity: {ident}"


def check_gradients():
    task = make_task("low-rank-shift", 0, TaskSpec(widths=(8, 8, 4), n_train=16, n_test=4, shift_rank=2))
    model = build_model(task.base, TrainConfig(m=2, r=2, n_kernels=2))
    randomize_trainables(model, make_rng(106))
    report = gradcheck(model, task.x_train, task.y_train, tolerance=1e-4, step=1e-5)
    return report.passed, f"{len(report.errors)} tensors, max rel err {report.max_error:.1e} (tol 1e-4)"


def check_rank():
    rng = make_rng(107)
    ok = True
    for _ in range(10):
        c = rng.standard_normal((3, 2)) @ rng.standard_normal((2, 3))
        d = rng.standard_normal((4, 5))
        ok &= rank_of(kron_materialize(KronPair(c, d))) == rank_of(c) * rank_of(d)
    for d_in, d_out, m, r, n in [(12, 8, 2, 1, 2), (16, 16, 2, 2, 2), (8, 8, 2, 4, 2)]:
        layer = _random_layer(rng, d_in, d_out, m, r, n)
        bound = min(n * m * r, d_in, d_out)
        ok &= rank_of(adapter_materialize(layer.adapter)) == bound
    return ok, "rank(c(x)d) = rank(c)rank(d); rank(delta_W) = min(N*m*r, d_in, d_out) on random factors"


def check_param_count():
    layer = AdaptedLinear(np.zeros((768, 768)), None, init_adapter(make_rng(0), 768, 768, 8, 8, 2), RescaleParams.zeros(768))
    n = param_count(layer)
    return n == 4736, f"param_count(768x768, m=8, r=8, N=2) = {n} (expected 4736)"


def check_serialization():
    task = make_task("low-rank-shift", 1, TaskSpec(widths=(8, 8, 4), n_train=8, n_test=4))
    model = build_model(task.base, TrainConfig(m=2, r=2))
    randomize_trainables(model, make_rng(108))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.npz"
        save_model(path, model)
        loaded, _ = load_model(path)
    a, b = model_arrays(model), model_arrays(loaded)
    same = a.keys() == b.keys() and all(a[k].tobytes() == b[k].tobytes() for k in a)
    return same, "save/load is bit-exact"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "kron-block-expansion": check_kron_blocks,
    "kron-structured-apply": check_kron_apply,
    "kron-algebra": check_kron_algebra,
    "zero-init": check_zero_init,
    "merge-equivalence": check_merge,
    "rescale-fold": check_rescale_fold,
    "gradcheck": check_gradients,
    "rank-structure": check_rank,
    "param-count": check_param_count,
    "serialization": check_serialization,
}


def run_all() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return results
