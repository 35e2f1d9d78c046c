"""Channel-wise re-scaling of a layer output: ``y = (1 + s1) * z + s2``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DenseMatrix, DenseVector, ShapeError, as_matrix, as_vector, zeros_vec


@dataclass
class RescaleParams:
    s1: DenseVector
    s2: DenseVector

    def __post_init__(self) -> None:
        self.s1 = as_vector(self.s1, "s1")
        self.s2 = as_vector(self.s2, "s2")
        if self.s1.shape != self.s2.shape:
            raise ShapeError(f"s1 has length {self.s1.size} but s2 has length {self.s2.size}")

    @classmethod
    def zeros(cls, d_out: int) -> "RescaleParams":
        """Identity re-scaling; the layer output is left unchanged."""
        return cls(zeros_vec(d_out), zeros_vec(d_out))

    @property
    def d_out(self) -> int:
        return self.s1.size

    @property
    def gain(self) -> DenseVector:
        return 1.0 + self.s1

    def copy(self) -> "RescaleParams":
        return RescaleParams(self.s1.copy(), self.s2.copy())


def rescale_apply(p: RescaleParams, z: np.ndarray) -> np.ndarray:
    """Apply to one output vector or a batch of rows."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != p.d_out:
        raise ShapeError(f"expected {p.d_out} channels, got {z.shape[-1]}")
    return p.gain * z + p.s2


def rescale_fold(
    p: RescaleParams, w: DenseMatrix, bias: Optional[DenseVector] = None
) -> tuple[DenseMatrix, DenseVector]:
    """Fold the re-scaling into a preceding affine map stored as ``(d_in, d_out)``.

    Returns ``(w * (1 + s1), (1 + s1) * bias + s2)``; a missing bias is treated
    as zero, so the folded bias is then exactly ``s2``.
    """
    w = as_matrix(w, "w")
    if w.shape[1] != p.d_out:
        raise ShapeError(f"weight has {w.shape[1]} output columns, re-scaling has {p.d_out}")
    if bias is None:
        return w * p.gain, p.s2.copy()
    bias = as_vector(bias, "bias")
    if bias.size != p.d_out:
        raise ShapeError(f"bias has length {bias.size}, re-scaling has {p.d_out}")
    return w * p.gain, p.gain * bias + p.s2


def compose(first: RescaleParams, second: RescaleParams) -> RescaleParams:
    """Parameters equivalent to applying ``first`` then ``second``."""
    gain = first.gain * second.gain
    return RescaleParams(gain - 1.0, second.gain * first.s2 + second.s2)
