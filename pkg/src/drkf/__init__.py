"""Distributionally robust Kalman filtering under Wasserstein-2 ambiguity."""
from .errors import (
    DRKFError,
    GammaTooSmall,
    Infeasible,
    InstabilityDetected,
    IterationCap,
    ModelError,
    NonConvergence,
    NonPositiveSample,
    NotPD,
    NumericalFailure,
    OrderCapExceeded,
    RootNearCircle,
    SingularResolvent,
    SingularSystem,
)
from .finite import FiniteConfig, FiniteSynthesisResult, fw_solve_finite, worst_case_mse_finite
from .freq import InfiniteConfig, InfiniteSynthesisResult, solve_infinite, worst_case_mse_freq
from .sslib import FrequencyGrid, StateSpaceModel, build_block_toeplitz, scalar_model, solve_dare, tracking_model

__version__ = "0.1.0"
