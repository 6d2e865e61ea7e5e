"""Pointwise evaluation of wave functions given by eigen-coefficients.

Everything here is a truncated sum ``sum_n c_n phi_n(q)`` (or a derivative /
complex continuation of it), evaluated directly. Batched wave functions give
an extra leading axis on the output.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (InvalidParameterError, StripDivergenceError,
                     UnsupportedModelError)
from .models import ThermalSpectrum, permutation_sign, sector_expansion, thermalize
from .sampler import WaveFunction


def _single_point(model, q) -> bool:
    return np.ndim(q) == (0 if model.config_dim == 1 else 1)


def _contract(psi: WaveFunction, phi: np.ndarray, single: bool):
    out = psi.coefficients @ phi.T  # (..., P)
    return out[..., 0] if single else out


def evaluate(psi: WaveFunction, q):
    """psi(q) for real configuration point(s) q."""
    model = psi.spectrum.model
    pts = model.points(q)
    if np.iscomplexobj(pts):
        raise InvalidParameterError("use evaluate_complex for complex points")
    model.check_domain(pts)
    return _contract(psi, psi.spectrum.eigenfunctions(pts), _single_point(model, q))


def evaluate_derivative(psi: WaveFunction, q, ell: int = 1, direction=None):
    """Partial derivative of psi at real point(s), differentiating term by term.

    For the circle ``ell`` is the order. For the box, ``direction`` is the
    multi-index of per-coordinate derivative counts (length N*d) and must sum
    to ``ell``.
    """
    model = psi.spectrum.model
    if not model.has_derivatives:
        raise UnsupportedModelError("model has no analytic derivatives")
    if ell < 0:
        raise InvalidParameterError("derivative order must be >= 0")
    D = model.config_dim
    if direction is None:
        if D == 1:
            direction = (ell,)
        elif ell == 0:
            direction = (0,) * D
        else:
            raise InvalidParameterError("box derivatives need a direction multi-index")
    direction = tuple(int(x) for x in np.atleast_1d(direction))
    if len(direction) != D or min(direction) < 0 or sum(direction) != ell:
        raise InvalidParameterError(f"direction {direction} does not match order {ell} in {D} dims")
    pts = model.points(q)
    model.check_domain(pts)
    return _contract(psi, psi.spectrum.eigenfunctions(pts, orders=direction), _single_point(model, q))


def tail_estimate(psi: WaveFunction, z, shell_fraction: float = 0.25) -> np.ndarray:
    """Crude size of the outermost retained terms at complex points z.

    Largest |c_n| exp(||n|| ||Im z||) over the outer shell of retained modes
    (||n|| above (1 - shell_fraction) of the cutoff), times the number of
    modes in that shell. One value per sample in a batch.
    """
    spec = psi.spectrum
    norms = spec.mode_norms()
    top = norms.max() if len(norms) else 0.0
    shell = norms >= (1.0 - shell_fraction) * top
    pts = spec.model.points(z)
    im = float(np.max(np.linalg.norm(np.imag(pts), axis=1))) if pts.size else 0.0
    amp = np.abs(psi.coefficients[..., shell]) * np.exp(norms[shell] * im)
    return amp.max(axis=-1) * shell.sum()


def evaluate_complex(psi: WaveFunction, z, tol: float = 1e-6):
    """Analytic continuation of psi to complex point(s).

    Returns ``(values, tail)`` where ``tail`` is :func:`tail_estimate`.
    Raises StripDivergenceError when the tail estimate exceeds ``tol``.
    Box models are continued through their 2 pi-periodic extension.
    """
    model = psi.spectrum.model
    if not (model.is_periodic or model.kind == "box"):
        raise UnsupportedModelError("model has no analytic continuation")
    pts = model.points(np.asarray(z, dtype=complex))
    model.check_domain(pts, periodic_ok=True)
    tail = tail_estimate(psi, pts)
    if np.any(tail > tol):
        raise StripDivergenceError(
            f"tail estimate {np.max(tail):.3g} exceeds {tol:.3g}; strip too wide for this cutoff",
            tail)
    vals = _contract(psi, psi.spectrum.eigenfunctions(pts), _single_point(model, z))
    return vals, tail


@dataclass(frozen=True, eq=False)
class FourierImage:
    """Coefficients c_k of the periodic extension in the orthonormal torus basis (2 pi)^(-D/2) exp(i k.q)."""

    ks: np.ndarray
    coefficients: np.ndarray

    def evaluate(self, q):
        pts = np.asarray(q, dtype=float).reshape(-1, self.ks.shape[1])
        basis = np.exp(1j * pts @ self.ks.T.astype(float)) / (2 * math.pi) ** (self.ks.shape[1] / 2)
        return self.coefficients @ basis.T

    def weighted_sum(self, weight: np.ndarray):
        return np.sum(weight * np.abs(self.coefficients) ** 2, axis=-1)


def fourier_from_energy(psi: WaveFunction) -> FourierImage:
    """Full Z^(N d) Fourier image of a box wave function.

    c_k = (-i)^D prod_j sign(k_j) <phi_|k||psi>; the k with a zero component
    have c_k = 0 and are omitted from the stored support.
    """
    spec = psi.spectrum
    model = spec.model
    if model.kind != "box":
        raise UnsupportedModelError("Fourier image is defined for box models")
    if model.symmetry != "none":
        psi = lift_to_product(psi)
        spec = psi.spectrum
    D = model.config_dim
    signs = np.array(list(itertools.product((1, -1), repeat=D)))
    ks = (spec.indices[:, None, :] * signs[None, :, :]).reshape(-1, D)
    sgn = np.prod(signs, axis=1)
    factor = (-1j) ** D * sgn
    c = psi.coefficients[..., :, None] * factor[None, :] if psi.is_batch else psi.coefficients[:, None] * factor
    return FourierImage(ks, c.reshape(c.shape[:-2] + (-1,)))


def energy_from_fourier(image: FourierImage, spectrum: ThermalSpectrum) -> WaveFunction:
    """Inverse of :func:`fourier_from_energy` on an unsymmetrized box spectrum."""
    D = spectrum.model.config_dim
    pos = {tuple(int(x) for x in k): i for i, k in enumerate(image.ks)}
    rows = [pos[tuple(int(x) for x in n)] for n in spectrum.indices]
    a = image.coefficients[..., rows] / (-1j) ** D
    return WaveFunction(spectrum, a)


def _permutation_maps(spectrum: ThermalSpectrum):
    model = spectrum.model
    N, d = model.N, model.d
    pos = spectrum.position()
    idx = spectrum.indices
    maps = []
    for perm in itertools.permutations(range(N)):
        cols = np.concatenate([np.arange(p * d, (p + 1) * d) for p in perm])
        target = []
        for n in idx[:, cols]:
            key = tuple(int(x) for x in n)
            if key not in pos:
                raise InvalidParameterError("retained mode set is not closed under particle permutations")
            target.append(pos[key])
        maps.append((np.array(target), permutation_sign(perm)))
    return maps


def symmetrize(psi: WaveFunction, sector: str) -> WaveFunction:
    """Apply the (anti)symmetrization projector in coefficient space.

    (P c)_n = (1/N!) sum_sigma sgn(sigma) c_{sigma n}, sigma permuting the
    particle index blocks. The result is not renormalized.
    """
    spec = psi.spectrum
    model = spec.model
    if model.kind != "box" or model.symmetry != "none":
        raise UnsupportedModelError("symmetrize acts on unsymmetrized box wave functions")
    if sector not in ("symmetric", "antisymmetric"):
        raise InvalidParameterError(f"unknown sector {sector!r}")
    if model.N == 1:
        return psi.with_coefficients(psi.coefficients)
    c = psi.coefficients
    out = np.zeros_like(c)
    maps = _permutation_maps(spec)
    for target, s in maps:
        out = out + (s if sector == "antisymmetric" else 1) * c[..., target]
    return psi.with_coefficients(out / len(maps))


def product_spectrum(spectrum: ThermalSpectrum) -> ThermalSpectrum:
    """Unsymmetrized box spectrum with the same beta and cutoff radius."""
    model = spectrum.model
    from .models import build_box_model
    base = build_box_model(model.N, model.d, model.m, model.hbar)
    return thermalize(base, spectrum.beta, spectrum.tail_mass or 1e-12, cutoff=spectrum.radius)


def sector_embedding(sector: ThermalSpectrum, product: ThermalSpectrum) -> np.ndarray:
    """Matrix U with orthonormal columns: sector mode r -> product-basis coefficients."""
    exp_idx, owner, coef = sector_expansion(sector.model, sector.indices)
    pos = product.position()
    U = np.zeros((product.size, sector.size))
    for n, r, w in zip(exp_idx, owner, coef):
        U[pos[tuple(int(x) for x in n)], r] = w
    return U


def lift_to_product(psi: WaveFunction, product: ThermalSpectrum = None) -> WaveFunction:
    """Rewrite a sector wave function in the unsymmetrized product basis."""
    if product is None:
        product = product_spectrum(psi.spectrum)
    U = sector_embedding(psi.spectrum, product)
    return WaveFunction(product, psi.coefficients @ U.T, psi.provenance, psi.seed)
