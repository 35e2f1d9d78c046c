"""Dense float64 arithmetic and seeded sampling shared by the rest of the package.

Matrices and vectors are plain C-contiguous ``numpy.ndarray`` objects of dtype
float64 (row-major). Randomness always flows through a ``numpy.random.Generator``
backed by PCG64, whose bit stream and ``standard_normal`` (ziggurat) output are
specified by numpy and identical across platforms.
"""
from __future__ import annotations

import numpy as np

DenseMatrix = np.ndarray
DenseVector = np.ndarray
SeededRng = np.random.Generator

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def make_rng(seed: int) -> SeededRng:
    """PCG64 generator for a non-negative 64-bit seed."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(x, name: str = "matrix") -> DenseMatrix:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(x, name: str = "vector") -> DenseVector:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")
    return arr


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Checked dense product ``a @ b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return check_finite(a @ b, "matmul result")


def gaussian_matrix(rng: SeededRng, rows: int, cols: int, std: float) -> DenseMatrix:
    """I.i.d. N(0, std^2) entries, drawn in row-major order."""
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    if rows < 0 or cols < 0:
        raise ShapeError(f"negative shape ({rows}, {cols})")
    return std * rng.standard_normal((rows, cols), dtype=DTYPE)


def zeros(rows: int, cols: int) -> DenseMatrix:
    return np.zeros((rows, cols), dtype=DTYPE)


def zeros_vec(n: int) -> DenseVector:
    return np.zeros(n, dtype=DTYPE)


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius relative error ``|a - b| / |b|`` (absolute when ``b`` is zero)."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    denom = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / denom) if denom > 0 else float(diff)


def spawn_rng(seed: int, stream: int) -> SeededRng:
    """Independent PCG64 stream ``stream`` derived from ``seed`` via SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))
