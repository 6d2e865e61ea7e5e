"""Random wave functions from G(rho), GA(rho) and GAP(rho).

Coefficients are taken in the eigenbasis of ``rho`` (the retained modes of a
:class:`~gap_thermal.models.ThermalSpectrum`). Under G they are independent
circular complex Gaussians with ``E|c_n|^2 = p_n``. GA reweights G by
``||psi||^2`` and GAP normalizes a GA draw to the unit sphere.

All samplers accept ``size`` for vectorized batches; a batch is a single
:class:`WaveFunction` whose coefficient array has a leading sample axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidParameterError
from .models import ThermalSpectrum
from .rng import RandomSeed, as_generator

PROVENANCES = ("G", "GA", "GAP", "derived")
MIN_COVARIANCE_SAMPLES = 100


@dataclass(frozen=True, eq=False)
class WaveFunction:
    spectrum: ThermalSpectrum
    coefficients: np.ndarray
    provenance: str = "derived"
    seed: Optional[RandomSeed] = None
    mixture_mode: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.shape[-1:] != (self.spectrum.size,):
            raise InvalidParameterError(
                f"{c.shape[-1] if c.ndim else 0} coefficients for {self.spectrum.size} modes")
        if self.provenance not in PROVENANCES:
            raise InvalidParameterError(f"unknown provenance {self.provenance!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def is_batch(self) -> bool:
        return self.coefficients.ndim > 1

    def __len__(self):
        return self.coefficients.shape[0] if self.is_batch else 1

    def __getitem__(self, i) -> "WaveFunction":
        if not self.is_batch:
            raise TypeError("not a batch")
        mm = None if self.mixture_mode is None else self.mixture_mode[i]
        return WaveFunction(self.spectrum, self.coefficients[i], self.provenance, self.seed, mm)

    def norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.coefficients) ** 2, axis=-1)

    def with_coefficients(self, c, provenance="derived") -> "WaveFunction":
        return WaveFunction(self.spectrum, c, provenance, self.seed)

    @classmethod
    def eigenstate(cls, spectrum: ThermalSpectrum, k: int) -> "WaveFunction":
        c = np.zeros(spectrum.size, dtype=complex)
        c[k] = 1.0
        return cls(spectrum, c)


def complex_normal(rng: np.random.Generator, variance, size=None) -> np.ndarray:
    """Circular complex Gaussians with E|z|^2 = variance."""
    variance = np.asarray(variance, dtype=float)
    shape = variance.shape if size is None else (size,) + variance.shape
    xy = rng.standard_normal(shape + (2,))
    return np.sqrt(variance / 2.0) * (xy[..., 0] + 1j * xy[..., 1])


def _g(spectrum, rng, size):
    return complex_normal(rng, spectrum.weights, size)


def _ga(spectrum, rng, size):
    """Exact GA draw via the size-biased mixture.

    The density ||c||^2 prod_n g_n(c_n) equals sum_K p_K [(|c_K|^2/p_K) g_K(c_K)]
    prod_{n != K} g_n(c_n): pick K with probability p_K, size-bias coordinate K
    (|c_K|^2 ~ Gamma(2, p_K), uniform phase), keep the others Gaussian.
    """
    p = spectrum.weights
    single = size is None
    M = 1 if single else size
    c = complex_normal(rng, p, M)
    K = rng.choice(len(p), size=M, p=p)
    r2 = rng.gamma(2.0, p[K])
    theta = rng.uniform(0.0, 2.0 * math.pi, size=M)
    c[np.arange(M), K] = np.sqrt(r2) * np.exp(1j * theta)
    if single:
        return c[0], K[0]
    return c, K


def sample_g(spectrum: ThermalSpectrum, seed, size: Optional[int] = None) -> WaveFunction:
    rng = as_generator(seed)
    c = _g(spectrum, rng, size)
    return WaveFunction(spectrum, c, "G", seed if isinstance(seed, RandomSeed) else None)


def sample_ga(spectrum: ThermalSpectrum, seed, size: Optional[int] = None) -> WaveFunction:
    rng = as_generator(seed)
    c, K = _ga(spectrum, rng, size)
    return WaveFunction(spectrum, c, "GA", seed if isinstance(seed, RandomSeed) else None,
                        np.asarray(K))


def sample_gap(spectrum: ThermalSpectrum, seed, size: Optional[int] = None) -> WaveFunction:
    rng = as_generator(seed)
    c, K = _ga(spectrum, rng, size)
    c = np.atleast_2d(c)
    K = np.atleast_1d(K)
    norm = np.sqrt(np.sum(np.abs(c) ** 2, axis=-1))
    bad = ~(norm > 0)
    if np.any(bad):
        # probability zero; one retry for the offending rows
        c2, K2 = _ga(spectrum, rng, int(bad.sum()))
        c[bad], K[bad] = c2, K2
        norm = np.sqrt(np.sum(np.abs(c) ** 2, axis=-1))
        if not np.all(norm > 0):
            raise RuntimeError("GA sampler produced a zero vector twice")
    c = c / norm[:, None]
    if size is None:
        c, K = c[0], K[0]
    return WaveFunction(spectrum, c, "GAP", seed if isinstance(seed, RandomSeed) else None,
                        np.asarray(K))


SAMPLERS = {"G": sample_g, "GA": sample_ga, "GAP": sample_gap}


def get_sampler(sampler: Union[str, Callable]) -> Callable:
    if callable(sampler):
        return sampler
    try:
        return SAMPLERS[sampler]
    except KeyError:
        raise InvalidParameterError(f"unknown sampler {sampler!r}") from None


@dataclass
class CovarianceEstimate:
    p_hat: np.ndarray
    stderr: np.ndarray
    M: int
    offdiag: dict = field(default_factory=dict)
    offdiag_stderr: dict = field(default_factory=dict)

    def z_scores(self, p) -> np.ndarray:
        return np.abs(self.p_hat - p) / self.stderr


def sample_batches(sampler, spectrum, M: int, seed, chunk: int = 1 << 21):
    """Yield WaveFunction batches totalling M samples from one generator."""
    draw = get_sampler(sampler)
    rng = as_generator(seed)
    per = max(1, chunk // max(spectrum.size, 1))
    done = 0
    while done < M:
        n = min(per, M - done)
        yield draw(spectrum, rng, size=n)
        done += n


def estimate_covariance(sampler, spectrum: ThermalSpectrum, M: int, seed,
                        pairs: Sequence = ()) -> CovarianceEstimate:
    """Monte Carlo estimate of the covariance E|c_n|^2 (and E c_j conj(c_k) for ``pairs``).

    Standard errors are empirical (sample std / sqrt(M)); under G they
    approach p_n/sqrt(M) because E|z|^4 = 2 (E|z|^2)^2 for circular Gaussians.
    """
    if M < MIN_COVARIANCE_SAMPLES:
        raise InvalidParameterError(f"need at least {MIN_COVARIANCE_SAMPLES} samples, got {M}")
    K = spectrum.size
    s1 = np.zeros(K)
    s2 = np.zeros(K)
    pairs = [tuple(pk) for pk in pairs]
    o1 = {pk: 0j for pk in pairs}
    o2 = {pk: 0.0 for pk in pairs}
    for batch in sample_batches(sampler, spectrum, M, seed):
        c = np.atleast_2d(batch.coefficients)
        a = np.abs(c) ** 2
        s1 += a.sum(axis=0)
        s2 += (a**2).sum(axis=0)
        for j, k in pairs:
            x = c[:, j] * np.conj(c[:, k])
            o1[(j, k)] += x.sum()
            o2[(j, k)] += np.sum(np.abs(x) ** 2)
    mean = s1 / M
    var = np.maximum(s2 / M - mean**2, 0.0) * M / (M - 1)
    est = CovarianceEstimate(mean, np.sqrt(var / M), M)
    for pk in pairs:
        m = o1[pk] / M
        v = max(o2[pk] / M - abs(m) ** 2, 0.0) * M / (M - 1)
        est.offdiag[pk] = m
        est.offdiag_stderr[pk] = math.sqrt(v / M)
    return est
