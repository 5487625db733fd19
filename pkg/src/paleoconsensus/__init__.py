"""Bayesian consensus of paleoclimate reconstructions with scale-space trend maps."""

__version__ = "0.1.0"

from .chronology import (
    AnomalySeries,
    JointChronology,
    ProxySeries,
    bin_dates,
    center,
    merge_chronologies,
    smooth_date_errors,
)
from .estimators import ConsensusModel, ScaleSpaceAnalyzer
from .exceptions import (
    BinCollisionError,
    ConfigurationError,
    InvalidInputError,
    NumericalError,
    UnsupportedModeError,
)
from .model import ConsensusState, ModelConfig
from .sampler import Chain, SamplerConfig, run_chain
from .scale_space import (
    CredibilityMap,
    build_credibility_map,
    derivative_samples,
    flag_joint_credible,
    posterior_mean_smooth,
    record_contributions,
)
from .splines import build_derivative_matrix, build_roughness_matrix, smooth

__all__ = [
    "AnomalySeries",
    "BinCollisionError",
    "Chain",
    "ConfigurationError",
    "ConsensusModel",
    "ConsensusState",
    "CredibilityMap",
    "InvalidInputError",
    "JointChronology",
    "ModelConfig",
    "NumericalError",
    "ProxySeries",
    "SamplerConfig",
    "ScaleSpaceAnalyzer",
    "UnsupportedModeError",
    "bin_dates",
    "build_credibility_map",
    "build_derivative_matrix",
    "build_roughness_matrix",
    "center",
    "derivative_samples",
    "flag_joint_credible",
    "merge_chronologies",
    "posterior_mean_smooth",
    "record_contributions",
    "run_chain",
    "smooth",
    "smooth_date_errors",
]
