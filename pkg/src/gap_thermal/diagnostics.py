"""Regularity functionals of random wave functions and their expectations.

Empirical sums act on a :class:`WaveFunction` (one value per sample in a
batch). Spectrum-level sums and closed-form expectations act on a
:class:`ThermalSpectrum`. Under any measure with covariance rho,
``E sum_n w_n |c_n|^2 = sum_n w_n p_n`` (see :func:`expected_sum`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidParameterError, UnsupportedModelError
from .models import ThermalSpectrum, kernel
from .rng import as_generator
from .sampler import WaveFunction, complex_normal, sample_batches

SQRT_PI_2 = math.sqrt(math.pi) / 2.0


@dataclass
class DiagnosticEntry:
    value: float
    expectation: Optional[float] = None
    stderr: Optional[float] = None
    params: dict = field(default_factory=dict)
    check: Optional[bool] = None  # overrides the z-score test when set

    @property
    def z_score(self) -> Optional[float]:
        if self.expectation is None or not self.stderr:
            return None
        return abs(self.value - self.expectation) / self.stderr

    def passed(self, n_se: float = 5.0) -> Optional[bool]:
        if self.check is not None:
            return bool(self.check)
        z = self.z_score
        return None if z is None else bool(z <= n_se)

    def to_dict(self) -> dict:
        return {"value": self.value, "expectation": self.expectation,
                "stderr": self.stderr, "params": self.params,
                "passed": self.passed()}


@dataclass
class DiagnosticsReport:
    entries: dict = field(default_factory=dict)

    def add(self, name: str, entry: DiagnosticEntry) -> None:
        if not (entry.value >= 0 and math.isfinite(entry.value)):
            raise ValueError(f"diagnostic {name} is not a finite nonnegative number: {entry.value}")
        self.entries[name] = entry

    def __getitem__(self, name):
        return self.entries[name]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.entries.items()}


@dataclass
class HolderEstimate:
    exponent: float
    intercept: float
    dq: np.ndarray
    rms: np.ndarray
    degenerate: bool = False
    # sample-path bound K' dq^(p/2) |log dq|^(1+delta): p = 2 for a smooth kernel
    annotations: dict = field(default_factory=lambda: {"p_over_2": 1.0, "delta": "unidentified"})


# -- empirical sums -------------------------------------------------------

def _norms(spectrum: ThermalSpectrum) -> np.ndarray:
    model = spectrum.model
    if model.kind == "custom" and model.basis != "circle":
        raise UnsupportedModelError("mode norms need a circle or box model")
    return spectrum.mode_norms()


def sobolev_weights(spectrum: ThermalSpectrum, ell: float) -> np.ndarray:
    if ell < 0:
        raise InvalidParameterError("Sobolev order must be >= 0")
    n = _norms(spectrum)
    return np.ones_like(n) if ell == 0 else n ** (2 * ell)


def exp_weights(spectrum: ThermalSpectrum, alpha: float) -> np.ndarray:
    if not alpha > 0:
        raise InvalidParameterError("alpha must be > 0")
    return np.exp(2.0 * alpha * _norms(spectrum))


def weighted_sum(psi: WaveFunction, weights: np.ndarray):
    return np.sum(weights * np.abs(psi.coefficients) ** 2, axis=-1)


def sobolev_sum(psi: WaveFunction, ell: float):
    """sum_n ||n||^(2 ell) |c_n|^2 over the retained modes (energy-side labels)."""
    return weighted_sum(psi, sobolev_weights(psi.spectrum, ell))


def exp_weighted_sum(psi: WaveFunction, alpha: float):
    """sum_n exp(2 alpha ||n||) |c_n|^2."""
    return weighted_sum(psi, exp_weights(psi.spectrum, alpha))


def expected_sum(spectrum: ThermalSpectrum, weight: Union[Callable, Sequence[float]]) -> float:
    """sum_n weight(n) p_n, the exact mean of sum_n weight(n) |c_n|^2 under covariance rho.

    ``weight`` is an array aligned with the retained modes or a callable on
    a mode index tuple.
    """
    if callable(weight):
        w = np.array([weight(spectrum.mode(i)) for i in range(spectrum.size)], dtype=float)
    else:
        w = np.asarray(weight, dtype=float)
    if w.shape != (spectrum.size,):
        raise InvalidParameterError("weight must have one entry per retained mode")
    if np.any(w < 0):
        raise InvalidParameterError("weights must be nonnegative")
    return float(np.sum(w * spectrum.weights))


def spectral_values(spectrum: ThermalSpectrum, f: Callable) -> np.ndarray:
    p = spectrum.weights
    vals = np.array([0.0 if x == 0 else f(x) for x in p], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidParameterError("spectral function is not finite on the retained weights")
    return vals


def spectral_domain_sum(psi: WaveFunction, f: Callable):
    """sum_n f(p_n)^2 |c_n|^2, with f(0) := 0."""
    return weighted_sum(psi, spectral_values(psi.spectrum, f) ** 2)


def trace_condition(spectrum: ThermalSpectrum, f: Callable) -> float:
    """tr(rho f(rho)^2) over the retained modes."""
    return float(np.sum(spectrum.weights * spectral_values(spectrum, f) ** 2))


def energy_power_function(spectrum: ThermalSpectrum, ell: int, offset: Optional[float] = None) -> Callable:
    """f(x) = (-(1/beta) log x + E0)^ell, which maps rho_beta to H^ell.

    With the default offset E0 = -(1/beta) log Z_trunc, f(p_n) = E_n^ell exactly.
    """
    if spectrum.beta is None:
        raise UnsupportedModelError("spectrum has no inverse temperature")
    beta = spectrum.beta
    e0 = spectrum.energy_offset if offset is None else offset
    return lambda x: (-math.log(x) / beta + e0) ** ell


def domain_power_sum(psi: WaveFunction, ell: int):
    """sum_n E_n^(2 ell) |c_n|^2 = ||H^ell psi||^2 in the truncated model."""
    if ell < 1:
        raise InvalidParameterError("ell must be >= 1")
    return weighted_sum(psi, psi.spectrum.energies ** (2 * ell))


def analytic_vector_sum(psi: WaveFunction, epsilon: float):
    """sum_n exp(epsilon E_n) |c_n| (first power of the moduli)."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be > 0")
    return np.sum(np.exp(epsilon * psi.spectrum.energies) * np.abs(psi.coefficients), axis=-1)


def analytic_vector_expectation(spectrum: ThermalSpectrum, epsilon: float) -> float:
    """E_G sum_n exp(eps E_n)|c_n| = (sqrt(pi)/2) sum_n exp(eps E_n) sqrt(p_n)."""
    return float(SQRT_PI_2 * np.sum(np.exp(epsilon * spectrum.energies) * np.sqrt(spectrum.weights)))


def analytic_vector_in_regime(spectrum: ThermalSpectrum, epsilon: float, beta0: float = 0.0) -> bool:
    """Whether 0 < epsilon < beta/2 - beta0, where the almost-sure bound applies."""
    if spectrum.beta is None:
        return False
    return 0 < epsilon < spectrum.beta / 2.0 - beta0


def smoothness_condition(spectrum: ThermalSpectrum, ell: int = 0, alpha: Optional[float] = None) -> float:
    """sum_n ||grad^ell phi_n||_inf sqrt(p_n), or with alpha the analytic variant sum_n ||phi_n|_K||_inf sqrt(p_n)."""
    model = spectrum.model
    if not model.has_derivatives:
        raise UnsupportedModelError("model provides no eigenfunction sup-norm bounds")
    if alpha is None:
        if ell < 0:
            raise InvalidParameterError("ell must be >= 0")
        sup = model.sup_derivative_bound(spectrum.indices, ell)
    else:
        if not alpha > 0:
            raise InvalidParameterError("alpha must be > 0")
        sup = model.sup_analytic_bound(spectrum.indices, alpha)
    return float(np.sum(sup * np.sqrt(spectrum.weights)))


def gaussian_modulus_moment(sigma: float) -> float:
    """E|Z| = (sqrt(pi)/2) sigma for circular complex Gaussian Z with E|Z|^2 = sigma^2."""
    if sigma < 0:
        raise InvalidParameterError("sigma must be >= 0")
    return SQRT_PI_2 * sigma


def gaussian_modulus_stderr(sigma: float, M: int) -> float:
    """Standard error of the mean of |Z| over M draws: sigma sqrt((4 - pi)/4)/sqrt(M)."""
    return sigma * math.sqrt((4.0 - math.pi) / 4.0) / math.sqrt(M)


def gaussian_modulus_monte_carlo(sigma: float, M: int, seed) -> tuple:
    """Monte Carlo E|Z|: returns (mean, stderr)."""
    z = complex_normal(as_generator(seed), sigma**2, M)
    a = np.abs(z)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(M))


def increment_variance(spectrum: ThermalSpectrum, q: float, dq: float) -> float:
    """E|Psi(q + dq) - Psi(q)|^2 = rho(q+dq, q+dq) - 2 Re rho(q, q+dq) + rho(q, q)."""
    if spectrum.model.config_dim != 1:
        raise UnsupportedModelError("increment variance needs a one-dimensional model")
    if dq == 0:
        raise InvalidParameterError("dq must be nonzero")
    r11 = kernel(spectrum, q + dq, q + dq).real
    r01 = kernel(spectrum, q, q + dq).real
    r00 = kernel(spectrum, q, q).real
    return float(r11 - 2.0 * r01 + r00)


def increments(psi: WaveFunction, q: float, dq) -> np.ndarray:
    """Psi(q + dq) - Psi(q) for each dq (and each sample in a batch)."""
    dq = np.atleast_1d(np.asarray(dq, dtype=float))
    phi0 = psi.spectrum.eigenfunctions(np.array([q]))
    phi1 = psi.spectrum.eigenfunctions(q + dq)
    return psi.coefficients @ (phi1 - phi0).T


def holder_fit(spectrum: ThermalSpectrum, q: float, dq_grid, M: int, seed,
               sampler: str = "G") -> HolderEstimate:
    """Least-squares slope of log RMS increment against log dq, over M samples."""
    if spectrum.model.config_dim != 1:
        raise UnsupportedModelError("Hölder fit needs a one-dimensional model")
    dq = np.sort(np.asarray(dq_grid, dtype=float))[::-1]
    if len(dq) < 2 or np.any(dq <= 0) or len(np.unique(dq)) != len(dq):
        raise InvalidParameterError("dq grid needs distinct positive values")
    if math.log10(dq[0] / dq[-1]) < 2 - 1e-9:
        raise InvalidParameterError("dq grid must span at least two decades")
    if M < 1000:
        raise InvalidParameterError("Hölder fit needs at least 1000 samples")
    ms = np.zeros(len(dq))
    for batch in sample_batches(sampler, spectrum, M, seed):
        ms += np.sum(np.abs(increments(batch, q, dq)) ** 2, axis=0)
    rms = np.sqrt(ms / M)
    if np.all(rms <= 1e-300) or np.any(rms == 0):
        return HolderEstimate(float("nan"), float("nan"), dq, rms, degenerate=True)
    slope, intercept = np.polyfit(np.log(dq), np.log(rms), 1)
    return HolderEstimate(float(slope), float(intercept), dq, rms)


def monte_carlo_mean(functional: Callable, sampler: str, spectrum: ThermalSpectrum,
                     M: int, seed) -> tuple:
    """Mean and standard error of a per-sample functional over M draws."""
    s1 = s2 = 0.0
    for batch in sample_batches(sampler, spectrum, M, seed):
        v = np.asarray(functional(batch), dtype=float)
        s1 += v.sum()
        s2 += (v**2).sum()
    mean = s1 / M
    var = max(s2 / M - mean**2, 0.0) * M / (M - 1)
    return mean, math.sqrt(var / M)
