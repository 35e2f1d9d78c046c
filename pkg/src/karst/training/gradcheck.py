"""Central finite-difference check of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import GradientSet, ToyModel, backward, forward, loss_fn

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


@dataclass
class GradcheckReport:
    errors: dict[str, float]
    tolerance: float
    step: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def lines(self) -> list[str]:
        return [
            f"{'FAIL' if name in self.failures else 'ok  '} {name:32s} {err:.3e}"
            for name, err in self.errors.items()
        ]


def numerical_gradient(loss: Callable[[], float], p: np.ndarray, step: float) -> np.ndarray:
    g = np.zeros_like(p)
    flat, gflat = p.reshape(-1), g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        up = loss()
        flat[j] = orig - step
        down = loss()
        flat[j] = orig
        gflat[j] = (up - down) / (2 * step)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entrywise error, relative to the tensor's largest gradient magnitude.

    Normalising by the tensor scale instead of each entry keeps entries whose
    gradient is (near) zero from turning finite-difference round-off into
    spurious failures.
    """
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)))
    diff = float(np.max(np.abs(analytic - numeric), initial=0.0))
    return diff / scale if scale > 0 else diff


def gradcheck(
    model: ToyModel,
    x: np.ndarray,
    y: np.ndarray,
    tolerance: float = DEFAULT_TOL,
    step: float = DEFAULT_STEP,
    grad_fn: Optional[Callable[[ToyModel, np.ndarray, np.ndarray], GradientSet]] = None,
) -> GradcheckReport:
    """Compare analytic gradients of the mean loss on ``(x, y)`` with central differences.

    ``grad_fn`` replaces the analytic gradient (fault injection); it defaults to
    forward + :func:`backward`. A tensor passes when its error is at most
    ``tolerance``.
    """
    if grad_fn is None:
        def grad_fn(mdl, xb, yb):
            _, cache = forward(mdl, xb)
            return backward(mdl, cache, yb)

    analytic = grad_fn(model, x, y)
    errors, failures = {}, []
    for name, p in model.named_parameters():
        numeric = numerical_gradient(lambda: loss_fn(model, x, y), p, step)
        err = relative_error(analytic[name], numeric)
        errors[name] = err
        if not err <= tolerance:
            failures.append(name)
    model.touch()
    return GradcheckReport(errors, tolerance, step, failures)


def randomize_trainables(model: ToyModel, rng: np.random.Generator, scale: float = 0.3) -> ToyModel:
    """Fill every trainable array with Gaussian values so no gradient vanishes identically."""
    for _, p in model.named_parameters():
        p[...] = scale * rng.standard_normal(p.shape)
    model.touch()
    return model
