"""Multi-kernel Kronecker weight adaptation with output re-scaling, in numpy."""

from .adapter import (
    AdaptedLinear,
    AdapterShapeError,
    KarstAdapter,
    KronKernel,
    adapter_apply,
    adapter_materialize,
    init_adapter,
    merge,
    param_count,
)
from .kron import KronPair, kron_apply, kron_flops, kron_materialize, rank_of
from .numerics import ShapeError, gaussian_matrix, make_rng, matmul, zeros, zeros_vec
from .rescale import RescaleParams, rescale_apply, rescale_fold

__version__ = "0.1.0"
