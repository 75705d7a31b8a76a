"""Hyperspectral/multispectral fusion with fully-connected tensor network factors."""

__version__ = "0.1.0"

from .fctn import (
    FctnFactors,
    composite_except,
    contract_full,
    factor_unfold,
    random_init,
    rank_matrix,
)
from .graph import SpectralGraph, build_weights, wgr_value
from .metrics import MetricReport, ergas, evaluate, psnr, sam, uiqi
from .solver import FusionConfig, FusionError, FusionState, fuse, objective
from .synthetic import make_scene, nearest_upsample, noisy_benchmark
from .tensor import cg_solve, fold, mode_n_product, permute, reshape, unfold
from .tensorize import (
    DegradationModel,
    TensorizationPlan,
    add_noise,
    detensorize,
    downsample_first_factor,
    spatial_downsample,
    spectral_downsample,
    tensorize,
)

__all__ = [
    "DegradationModel",
    "FctnFactors",
    "FusionConfig",
    "FusionError",
    "FusionState",
    "MetricReport",
    "SpectralGraph",
    "TensorizationPlan",
    "add_noise",
    "build_weights",
    "cg_solve",
    "composite_except",
    "contract_full",
    "detensorize",
    "downsample_first_factor",
    "ergas",
    "evaluate",
    "factor_unfold",
    "fold",
    "fuse",
    "make_scene",
    "mode_n_product",
    "nearest_upsample",
    "noisy_benchmark",
    "objective",
    "permute",
    "psnr",
    "random_init",
    "rank_matrix",
    "reshape",
    "sam",
    "spatial_downsample",
    "spectral_downsample",
    "tensorize",
    "uiqi",
    "unfold",
    "wgr_value",
]
