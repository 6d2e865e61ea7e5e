"""Random wave functions from the canonical ensemble GAP(rho_beta) and their regularity."""
from .errors import (InvalidParameterError, NodeError, ResourceLimitError,
                     StripDivergenceError, UnsupportedModelError)
from .models import (SpectralModel, ThermalSpectrum, build_box_model, build_circle_model,
                     build_custom_model, kernel, kernel_mixed_derivative, thermalize)
from .rng import RandomSeed
from .sampler import (CovarianceEstimate, WaveFunction, estimate_covariance, sample_g,
                      sample_ga, sample_gap)

__all__ = [
    "InvalidParameterError", "NodeError", "ResourceLimitError", "StripDivergenceError",
    "UnsupportedModelError", "SpectralModel", "ThermalSpectrum", "build_box_model",
    "build_circle_model", "build_custom_model", "kernel", "kernel_mixed_derivative",
    "thermalize", "RandomSeed", "CovarianceEstimate", "WaveFunction", "estimate_covariance",
    "sample_g", "sample_ga", "sample_gap",
]
