"""Kronecker products: block construction, structured application, rank.

Layout conventions
------------------
A layer weight is stored as ``(d_in, d_out)`` and applied to a column input as
``W.T @ x``. For a product ``K = c (x) d`` with ``c`` of shape ``(p1, q1)`` and
``d`` of shape ``(p2, q2)`` the structured path uses the column-major vec identity

    (c (x) d).T @ vec(X) = vec(d.T @ X @ c),    X = unvec(x), shape (p2, p1)

With row-major numpy storage ``unvec`` is ``x.reshape(p1, p2).T``, so the same
identity reads ``K.T @ x == (c.T @ x.reshape(p1, p2) @ d).ravel()``, which is what
the code evaluates. ``K`` itself is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DTYPE, DenseMatrix, ShapeError, as_matrix

DEFAULT_RANK_TOL = 1e-10


class FlopTally:
    """Counts scalar multiplies issued through :meth:`mm`."""

    def __init__(self) -> None:
        self.multiplies = 0

    def mm(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.matmul(a, b)
        # a: (..., i, k), b: (..., k, j); broadcast batch dims count once each
        i, k = a.shape[-2:]
        j = b.shape[-1]
        batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
        self.multiplies += batch * i * k * j
        return out


def _mm(tally: Optional[FlopTally], a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.matmul(a, b) if tally is None else tally.mm(a, b)


@dataclass(frozen=True)
class KronPair:
    """Factors of ``c (x) d``."""

    c: DenseMatrix
    d: DenseMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", as_matrix(self.c, "c"))
        object.__setattr__(self, "d", as_matrix(self.d, "d"))
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.d))):
            raise FloatingPointError("Kronecker factors must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        (p1, q1), (p2, q2) = self.c.shape, self.d.shape
        return p1 * p2, q1 * q2


def kron_materialize(k: KronPair) -> DenseMatrix:
    """Dense ``c (x) d``: block ``(i, j)`` is ``c[i, j] * d``."""
    (p1, q1), (p2, q2) = k.c.shape, k.d.shape
    blocks = k.c[:, None, :, None] * k.d[None, :, None, :]  # (p1, p2, q1, q2)
    return np.ascontiguousarray(blocks.reshape(p1 * p2, q1 * q2))


def _split_input(x: np.ndarray, p1: int, p2: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=DTYPE)
    single = x.ndim == 1
    if x.shape[-1] != p1 * p2:
        raise ShapeError(
            f"input length {x.shape[-1]} does not match the factorization p1*p2 = {p1}*{p2} = {p1 * p2}"
        )
    return x.reshape(-1, p1, p2), single


def kron_apply(k: KronPair, x: np.ndarray, tally: Optional[FlopTally] = None) -> np.ndarray:
    """``(c (x) d).T @ x`` without materializing the product.

    ``x`` is a vector of length ``p1*p2`` or a batch of such rows; the result has
    length ``q1*q2`` (per row).
    """
    (p1, q1), (p2, q2) = k.c.shape, k.d.shape
    xs, single = _split_input(x, p1, p2)
    n = xs.shape[0]
    t = _mm(tally, xs.reshape(n * p1, p2), k.d).reshape(n, p1, q2)
    out = _mm(tally, k.c.T, t).reshape(n, q1 * q2)
    return out[0] if single else out


def kron_apply_lowrank(
    c: DenseMatrix, a: DenseMatrix, b: DenseMatrix, x: np.ndarray, tally: Optional[FlopTally] = None
) -> np.ndarray:
    """``(c (x) (a @ b)).T @ x`` with ``d.T = b.T @ a.T`` applied as two thin products."""
    p1, q1 = c.shape
    p2, r = a.shape
    if b.shape[0] != r:
        raise ShapeError(f"low-rank factors {a.shape} and {b.shape} do not chain")
    q2 = b.shape[1]
    xs, single = _split_input(x, p1, p2)
    n = xs.shape[0]
    t = _mm(tally, xs.reshape(n * p1, p2), a)
    t = _mm(tally, t, b).reshape(n, p1, q2)
    out = _mm(tally, c.T, t).reshape(n, q1 * q2)
    return out[0] if single else out


def kron_apply_transpose(k: KronPair, v: np.ndarray) -> np.ndarray:
    """``(c (x) d) @ v``, the adjoint of :func:`kron_apply` (used when backpropagating)."""
    (p1, q1), (p2, q2) = k.c.shape, k.d.shape
    v = np.asarray(v, dtype=DTYPE)
    single = v.ndim == 1
    if v.shape[-1] != q1 * q2:
        raise ShapeError(f"input length {v.shape[-1]} does not match q1*q2 = {q1}*{q2} = {q1 * q2}")
    vs = v.reshape(-1, q1, q2)
    out = (k.c @ (vs @ k.d.T)).reshape(-1, p1 * p2)
    return out[0] if single else out


def kron_flops(k: KronPair, low_rank_r: Optional[int] = None) -> int:
    """Multiplies spent by one structured application to a single vector.

    Dense ``d`` path: ``p1*p2*q2 + q1*p1*q2``. With ``low_rank_r`` the second
    factor is taken as ``(p2 x r) @ (r x q2)``: ``p1*p2*r + p1*r*q2 + q1*p1*q2``.
    Forming ``d`` itself is not counted.
    """
    (p1, q1), (p2, q2) = k.c.shape, k.d.shape
    tail = q1 * p1 * q2
    if low_rank_r is None:
        return p1 * p2 * q2 + tail
    r = int(low_rank_r)
    return p1 * p2 * r + p1 * r * q2 + tail


def materialized_flops(k: KronPair) -> int:
    """Multiplies for ``K.T @ x`` with ``K`` already formed."""
    rows, cols = k.shape
    return rows * cols


def rank_of(mat: DenseMatrix, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank: singular values above ``tol * sigma_max`` (SVD)."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    mat = np.asarray(mat, dtype=DTYPE)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
