"""Multi-kernel Kronecker adapter and the adapted linear layer.

The weight update of a ``(d_in, d_out)`` layer is

    delta_W = sum_i  c_i (x) (a_i @ b_i)

with ``c_i`` of shape ``(m, m)``, ``a_i`` of shape ``(d_in/m, r)`` and ``b_i`` of
shape ``(r, d_out/m)``. No ``alpha / r`` output scaling is applied. Layers are
applied to column inputs as ``W.T @ x`` (batches as ``X @ W``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kron import FlopTally, KronPair, kron_apply_lowrank, kron_apply_transpose, kron_flops, kron_materialize
from .numerics import DTYPE, DenseMatrix, DenseVector, SeededRng, ShapeError, as_matrix, as_vector, gaussian_matrix, zeros
from .rescale import RescaleParams, rescale_apply, rescale_fold

DEFAULT_INIT_STD = 0.02


class AdapterShapeError(ShapeError):
    pass


def check_divisible(d_in: int, d_out: int, m: int) -> None:
    if m < 1 or d_in % m or d_out % m:
        raise AdapterShapeError(f"stacking dimension m={m} must divide both d_in={d_in} and d_out={d_out}")


@dataclass
class KronKernel:
    """One summand ``c (x) (a @ b)``."""

    c: DenseMatrix
    a: DenseMatrix
    b: DenseMatrix

    def __post_init__(self) -> None:
        self.c = as_matrix(self.c, "c")
        self.a = as_matrix(self.a, "a")
        self.b = as_matrix(self.b, "b")
        if self.c.shape[0] != self.c.shape[1]:
            raise AdapterShapeError(f"c must be square, got {self.c.shape}")
        if self.a.shape[1] != self.b.shape[0]:
            raise AdapterShapeError(f"a {self.a.shape} and b {self.b.shape} disagree on the rank")
        if self.a.shape[1] < 1:
            raise AdapterShapeError("rank must be at least 1")

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def r(self) -> int:
        return self.a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape[0] * self.m, self.b.shape[1] * self.m

    def pair(self) -> KronPair:
        return KronPair(self.c, self.a @ self.b)

    def copy(self) -> "KronKernel":
        return KronKernel(self.c.copy(), self.a.copy(), self.b.copy())


@dataclass
class KarstAdapter:
    kernels: list[KronKernel]
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.kernels:
            raise AdapterShapeError("an adapter needs at least one kernel")
        first = self.kernels[0]
        for i, k in enumerate(self.kernels[1:], start=1):
            if (k.c.shape, k.a.shape, k.b.shape) != (first.c.shape, first.a.shape, first.b.shape):
                raise AdapterShapeError(f"kernel {i} shapes differ from kernel 0")
        check_divisible(*first.shape, first.m)

    @property
    def n_kernels(self) -> int:
        return len(self.kernels)

    @property
    def m(self) -> int:
        return self.kernels[0].m

    @property
    def r(self) -> int:
        return self.kernels[0].r

    @property
    def d_in(self) -> int:
        return self.kernels[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.kernels[0].shape[1]

    def copy(self) -> "KarstAdapter":
        return KarstAdapter([k.copy() for k in self.kernels], self.seed)


def init_adapter(
    rng: SeededRng, d_in: int, d_out: int, m: int, r: int, n_kernels: int, std: float = DEFAULT_INIT_STD
) -> KarstAdapter:
    """Gaussian ``c`` and ``a``, zero ``b``: the initial update is exactly zero.

    Draw order per kernel is ``c`` then ``a``, each row-major.
    """
    check_divisible(d_in, d_out, m)
    if r < 1:
        raise AdapterShapeError(f"rank r must be >= 1, got {r}")
    if n_kernels < 1:
        raise AdapterShapeError(f"kernel count must be >= 1, got {n_kernels}")
    kernels = []
    for _ in range(n_kernels):
        c = gaussian_matrix(rng, m, m, std)
        a = gaussian_matrix(rng, d_in // m, r, std)
        kernels.append(KronKernel(c, a, zeros(r, d_out // m)))
    return KarstAdapter(kernels)


def adapter_apply(adapter: KarstAdapter, x: np.ndarray, tally: Optional[FlopTally] = None) -> np.ndarray:
    """``delta_W.T @ x`` kernel by kernel through the low-rank path."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != adapter.d_in:
        raise ShapeError(f"adapter expects inputs of length {adapter.d_in}, got {x.shape[-1]}")
    out = None
    for k in adapter.kernels:
        y = kron_apply_lowrank(k.c, k.a, k.b, x, tally)
        out = y if out is None else out + y
    return out


def adapter_apply_transpose(adapter: KarstAdapter, v: np.ndarray) -> np.ndarray:
    """``delta_W @ v``."""
    out = None
    for k in adapter.kernels:
        y = kron_apply_transpose(k.pair(), v)
        out = y if out is None else out + y
    return out


def adapter_flops(adapter: KarstAdapter) -> int:
    """Multiplies for one :func:`adapter_apply` call on a single vector."""
    shape_only = KronPair(adapter.kernels[0].c, zeros(adapter.d_in // adapter.m, adapter.d_out // adapter.m))
    return adapter.n_kernels * kron_flops(shape_only, adapter.r)


def adapter_materialize(adapter: KarstAdapter) -> DenseMatrix:
    """Dense ``delta_W`` of shape ``(d_in, d_out)``."""
    out = zeros(adapter.d_in, adapter.d_out)
    for k in adapter.kernels:
        out += kron_materialize(k.pair())
    return out


def adapter_param_count(adapter: KarstAdapter) -> int:
    m, r = adapter.m, adapter.r
    return adapter.n_kernels * (m * m + r * adapter.d_in // m + r * adapter.d_out // m)


class AdaptedLinear:
    """Frozen affine map with a trainable Kronecker update and output re-scaling.

    Training-time forward: ``y = (1 + s1) * ((W0 + delta_W).T @ x + bias0) + s2``.
    ``w0`` and ``bias0`` are stored read-only; ``adapter`` or ``rescale`` may be
    ``None`` to switch that part off.
    """

    def __init__(
        self,
        w0: DenseMatrix,
        bias0: Optional[DenseVector] = None,
        adapter: Optional[KarstAdapter] = None,
        rescale: Optional[RescaleParams] = None,
    ) -> None:
        w0 = as_matrix(w0, "w0").copy()
        w0.setflags(write=False)
        self._w0 = w0
        if bias0 is not None:
            bias0 = as_vector(bias0, "bias0").copy()
            if bias0.size != w0.shape[1]:
                raise ShapeError(f"bias0 has length {bias0.size}, w0 has {w0.shape[1]} outputs")
            bias0.setflags(write=False)
        self._bias0 = bias0
        if adapter is not None and (adapter.d_in, adapter.d_out) != w0.shape:
            raise ShapeError(f"adapter shape {(adapter.d_in, adapter.d_out)} does not match w0 {w0.shape}")
        if rescale is not None and rescale.d_out != w0.shape[1]:
            raise ShapeError(f"re-scaling length {rescale.d_out} does not match d_out={w0.shape[1]}")
        self.adapter = adapter
        self.rescale = rescale

    @property
    def w0(self) -> DenseMatrix:
        return self._w0

    @property
    def bias0(self) -> Optional[DenseVector]:
        return self._bias0

    @property
    def d_in(self) -> int:
        return self._w0.shape[0]

    @property
    def d_out(self) -> int:
        return self._w0.shape[1]

    def affine(self, x: np.ndarray) -> np.ndarray:
        """Pre-rescale output ``(W0 + delta_W).T @ x + bias0``."""
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"layer expects inputs of length {self.d_in}, got {x.shape[-1]}")
        z = x @ self._w0
        if self.adapter is not None:
            z = z + adapter_apply(self.adapter, x)
        if self._bias0 is not None:
            z = z + self._bias0
        return z

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = self.affine(x)
        return z if self.rescale is None else rescale_apply(self.rescale, z)

    __call__ = forward

    def copy(self) -> "AdaptedLinear":
        return AdaptedLinear(
            self._w0,
            self._bias0,
            None if self.adapter is None else self.adapter.copy(),
            None if self.rescale is None else self.rescale.copy(),
        )


def merge(layer: AdaptedLinear) -> tuple[DenseMatrix, Optional[DenseVector]]:
    """Fold the adapter and re-scaling into one plain affine map ``(W, b)``.

    ``W.T @ x + b`` reproduces ``layer.forward(x)``. ``b`` is ``None`` only when
    the layer has no base bias and no nonzero shift.
    """
    w = layer.w0.copy()
    if layer.adapter is not None:
        w += adapter_materialize(layer.adapter)
    bias = None if layer.bias0 is None else layer.bias0.copy()
    if layer.rescale is None:
        return w, bias
    if bias is None and not np.any(layer.rescale.s2):
        return w * layer.rescale.gain, None
    return rescale_fold(layer.rescale, w, bias)


def param_count(layer: AdaptedLinear) -> int:
    """Trainable parameters: adapter factors plus ``s1`` and ``s2``."""
    n = 0 if layer.adapter is None else adapter_param_count(layer.adapter)
    if layer.rescale is not None:
        n += 2 * layer.rescale.d_out
    return n
