"""Tucker cross approximation by DEIM fiber sampling and low-rank time integration."""

from .cross import (CrossConfig, CrossResult, FiberSampleSet, SingularSpectrum, absolute_error,
                    adapt_rank, core_from_intersection, deim_fs, deim_fs_iterative, error_proxy,
                    factors_from_fibers, fstd, hosvd, relative_error, sample_fibers)
from .deim import deim_indices
from .dlra import (DlraState, IntegratorConfig, core_rhs, dlra_reference_rhs, factor_rhs,
                   initial_state, integrate, step_rk4)
from .errors import (ConfigError, DegenerateBasisError, IllConditionedIntersectionError,
                     SingularCoreError)
from .oracles import DenseOracle, FiberOracle, GridFunctionOracle
from .tensor import (TuckerTensor, fold, frobenius_norm, mode_product, reconstruct, subtensor,
                     truncated_svd, unfold)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CrossConfig", "CrossResult", "DegenerateBasisError", "DenseOracle", "DlraState",
    "FiberOracle", "FiberSampleSet", "GridFunctionOracle", "IllConditionedIntersectionError",
    "IntegratorConfig", "SingularCoreError", "SingularSpectrum", "TuckerTensor", "absolute_error",
    "adapt_rank", "core_from_intersection", "core_rhs", "deim_fs", "deim_fs_iterative",
    "deim_indices", "dlra_reference_rhs", "error_proxy", "factor_rhs", "factors_from_fibers", "fold",
    "frobenius_norm", "fstd", "hosvd", "initial_state", "integrate", "mode_product", "reconstruct",
    "relative_error", "sample_fibers", "step_rk4", "subtensor", "truncated_svd", "unfold",
]
