"""Deterministic synthetic transfer tasks.

Every task ships its own frozen "pre-trained" backbone (``base``): a random tanh
network. Labels come either from data clusters or from a *teacher* network that
is the backbone after a structured change of its hidden-layer weights, which
plays the role of a downstream domain shift.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..numerics import spawn_rng

RECIPES = ("gaussian-blobs", "rotated-base", "low-rank-shift")


@dataclass(frozen=True)
class TaskSpec:
    widths: tuple[int, ...] = (32, 32, 8)
    n_train: int = 512
    n_test: int = 256
    shift_rank: int = 8
    shift_scale: float = 1.0
    blob_separation: float = 4.0

    def __post_init__(self) -> None:
        if len(self.widths) < 2:
            raise ValueError("widths needs an input width and at least one layer output width")
        if self.widths[-1] < 2:
            raise ValueError("need at least two classes")


@dataclass
class SyntheticTask:
    recipe: str
    seed: int
    spec: TaskSpec
    base: list[tuple[np.ndarray, np.ndarray]]
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    teacher: Optional[list[tuple[np.ndarray, np.ndarray]]] = field(default=None, repr=False)

    @property
    def n_classes(self) -> int:
        return self.spec.widths[-1]

    def describe(self) -> dict:
        return {"recipe": self.recipe, "seed": self.seed, **asdict(self.spec)}


def _forward(layers, x: np.ndarray) -> np.ndarray:
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
    return h


def _backbone(rng: np.random.Generator, widths) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        w = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
        b = 0.1 * rng.standard_normal(d_out)
        layers.append((w, b))
    return layers


def _low_rank_shift(rng, w: np.ndarray, rank: int, scale: float) -> np.ndarray:
    u = rng.standard_normal((w.shape[0], rank))
    v = rng.standard_normal((rank, w.shape[1]))
    s = u @ v
    return w + scale * np.linalg.norm(w) * s / np.linalg.norm(s)


def _subspace_rotation(rng, w: np.ndarray, rank: int, scale: float) -> np.ndarray:
    """``w @ Q`` with ``Q`` a rotation acting on a random ``rank``-dim output subspace.

    ``w @ (Q - I)`` has rank ``rank``, or ``rank - 1`` when ``rank`` is odd (an
    odd-dimensional rotation keeps one axis fixed).
    """
    d = w.shape[1]
    k = min(rank, d)
    basis, _ = np.linalg.qr(rng.standard_normal((d, k)))
    skew = rng.standard_normal((k, k))
    skew = scale * (skew - skew.T) / np.linalg.norm(skew - skew.T, 2)
    # Cayley transform of a skew-symmetric matrix is orthogonal
    eye = np.eye(k)
    rot_k = np.linalg.solve(eye - skew, eye + skew)
    q = np.eye(d) + basis @ (rot_k - np.eye(k)) @ basis.T
    return w @ q


def make_task(recipe: str, seed: int, spec: Optional[TaskSpec] = None) -> SyntheticTask:
    """Build the dataset for ``recipe`` deterministically from ``seed``.

    ``low-rank-shift`` adds a rank ``shift_rank`` perturbation to every hidden
    layer of the backbone; ``rotated-base`` rotates the output space of every
    hidden layer inside a ``shift_rank``-dim subspace. In both the head is left
    as is and labels are the teacher's argmax. ``gaussian-blobs`` labels points
    by the isotropic cluster they were drawn from.
    """
    if recipe not in RECIPES:
        raise ValueError(f"unknown task recipe {recipe!r}; available recipes: {', '.join(RECIPES)}")
    spec = spec or TaskSpec()
    base_rng, data_rng, shift_rng = (spawn_rng(seed, s) for s in (0, 1, 2))
    base = _backbone(base_rng, spec.widths)
    n = spec.n_train + spec.n_test
    d, k = spec.widths[0], spec.widths[-1]

    teacher = None
    if recipe == "gaussian-blobs":
        centers = spec.blob_separation * data_rng.standard_normal((k, d)) / np.sqrt(2.0)
        labels = np.arange(n) % k
        labels = labels[data_rng.permutation(n)]
        x = centers[labels] + data_rng.standard_normal((n, d))
    else:
        x = data_rng.standard_normal((n, d))
        shift = _low_rank_shift if recipe == "low-rank-shift" else _subspace_rotation
        teacher = [
            (shift(shift_rng, w, spec.shift_rank, spec.shift_scale), b) if i < len(base) - 1 else (w.copy(), b.copy())
            for i, (w, b) in enumerate(base)
        ]
        if len(base) == 1:
            # single-layer backbone: the head itself is the only place to shift
            w, b = base[0]
            teacher = [(shift(shift_rng, w, spec.shift_rank, spec.shift_scale), b)]
        labels = np.argmax(_forward(teacher, x), axis=1)

    return SyntheticTask(
        recipe=recipe,
        seed=int(seed),
        spec=spec,
        base=base,
        x_train=x[: spec.n_train],
        y_train=labels[: spec.n_train].astype(np.int64),
        x_test=x[spec.n_train :],
        y_test=labels[spec.n_train :].astype(np.int64),
        teacher=teacher,
    )
