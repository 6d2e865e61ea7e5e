"""Exactly diagonalizable Hamiltonians and their canonical (Boltzmann) spectra.

Three model kinds are supported:

``circle``
    A particle on the circle, ``H = -(hbar^2/2m) d^2/dq^2`` with
    eigenfunctions ``exp(i n q)/sqrt(2 pi)`` for ``n`` in Z.
``box``
    ``N`` free particles in ``[0, pi]^d`` with Dirichlet walls. Eigenfunctions
    are products of sines labelled by ``n`` in N^(N d), optionally restricted
    to the (anti)symmetric sector.
``custom``
    A finite list of weights, optionally attached to circle plane waves or to
    user-supplied eigenfunction callables.

A :class:`SpectralModel` knows about modes and eigenfunctions;
:func:`thermalize` turns it into a :class:`ThermalSpectrum`, the finite list
of retained modes with renormalized weights ``p_n = exp(-beta E_n)/Z``.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erfc, gammaln

from .errors import InvalidParameterError, ResourceLimitError, UnsupportedModelError

KINDS = ("circle", "box", "custom")
SYMMETRIES = ("none", "symmetric", "antisymmetric")

DEFAULT_TAIL_MASS = 1e-20  # amplitude-level tails ~ sqrt(1e-20) = 1e-10
MAX_MODES = 2_000_000

ModeIndex = tuple  # tuple of ints, length == model.index_dim


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralModel:
    kind: str
    N: int = 1
    d: int = 1
    m: float = 1.0
    hbar: float = 1.0
    symmetry: str = "none"
    # custom-model payload
    basis: Optional[str] = None
    eigenfunction_table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown model kind {self.kind!r}")
        if not (self.m > 0 and math.isfinite(self.m)):
            raise InvalidParameterError(f"mass must be positive, got {self.m}")
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise InvalidParameterError(f"hbar must be positive, got {self.hbar}")
        if self.N < 1 or self.d < 1:
            raise InvalidParameterError("N and d must be >= 1")
        if self.symmetry not in SYMMETRIES:
            raise InvalidParameterError(f"unknown symmetry sector {self.symmetry!r}")
        if self.symmetry != "none" and self.kind != "box":
            raise InvalidParameterError("symmetry sectors exist only for the box model")
        if self.kind == "circle" and (self.N != 1 or self.d != 1):
            raise InvalidParameterError("the circle model has N = d = 1")

    @property
    def index_dim(self) -> int:
        return self.N * self.d if self.kind == "box" else 1

    @property
    def config_dim(self) -> int:
        if self.kind == "box":
            return self.N * self.d
        return 1

    @property
    def energy_scale(self) -> float:
        """hbar^2 / 2m."""
        return self.hbar**2 / (2.0 * self.m)

    @property
    def volume(self) -> float:
        """Lebesgue measure of the configuration space."""
        if self.kind == "box":
            return math.pi ** (self.N * self.d)
        return 2.0 * math.pi

    @property
    def has_derivatives(self) -> bool:
        return self.kind in ("circle", "box") or self.basis == "circle"

    @property
    def is_periodic(self) -> bool:
        return self.kind == "circle" or self.basis == "circle"

    # -- spectrum ----------------------------------------------------------

    def energies(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=float).reshape(len(indices), -1)
        if self.kind == "custom" and self.basis != "circle":
            raise UnsupportedModelError("custom models carry explicit energies")
        return self.energy_scale * np.sum(idx**2, axis=1)

    def mode_norms(self, indices) -> np.ndarray:
        """|n| on the circle, Euclidean ||n|| for the box."""
        idx = np.asarray(indices, dtype=float).reshape(len(indices), -1)
        return np.sqrt(np.sum(idx**2, axis=1))

    def enumerate_modes(self, radius: int) -> np.ndarray:
        """All retained mode indices with ||n|| <= radius, energy-sorted."""
        radius = int(radius)
        if self.kind == "circle":
            n = np.arange(-radius, radius + 1)
            order = np.lexsort((n, n**2))
            return n[order].reshape(-1, 1)
        if self.kind == "box":
            estimate = _orthant_ball_count(self.N * self.d, radius)
            if estimate > MAX_MODES:
                raise ResourceLimitError(
                    f"box cutoff {radius} in {self.N * self.d} dimensions needs "
                    f"~{estimate:.3g} modes (limit {MAX_MODES})"
                )
            modes = _box_modes(self.N, self.d, radius, self.symmetry)
            if len(modes) == 0:
                return np.zeros((0, self.N * self.d), dtype=int)
            arr = np.array(modes, dtype=int)
            sq = np.sum(arr**2, axis=1)
            keys = [arr[:, j] for j in range(arr.shape[1] - 1, -1, -1)] + [sq]
            return arr[np.lexsort(keys)]
        raise UnsupportedModelError("custom models have a fixed mode list")

    # -- eigenfunctions ----------------------------------------------------

    def points(self, q) -> np.ndarray:
        """Coerce configuration point(s) into a (P, D) array."""
        q = np.asarray(q)
        D = self.config_dim
        if D == 1:
            return q.reshape(-1, 1)
        if q.shape[-1] != D:
            raise InvalidParameterError(f"points must have {D} components, got shape {q.shape}")
        return q.reshape(-1, D)

    def eigenfunctions(self, indices, q, orders=None) -> np.ndarray:
        """Values (or partial derivatives) of eigenfunctions at points.

        ``orders`` is a length-D tuple of derivative counts per coordinate
        (for the circle, a 1-tuple or an int). Returns shape (P, K).
        """
        pts = self.points(q)
        indices = np.asarray(indices).reshape(len(indices), -1)
        if orders is None:
            orders = (0,) * self.config_dim
        elif np.isscalar(orders):
            orders = (int(orders),)
        orders = tuple(int(o) for o in orders)
        if len(orders) != self.config_dim or min(orders) < 0:
            raise InvalidParameterError(f"derivative multi-index {orders} invalid for this model")

        if self.kind == "circle" or (self.kind == "custom" and self.basis == "circle"):
            n = indices[:, 0].astype(float)
            ell = orders[0]
            phase = np.exp(1j * pts[:, :1] * n[None, :])
            return (1j * n[None, :]) ** ell * phase / math.sqrt(2.0 * math.pi)
        if self.kind == "box":
            if self.symmetry == "none":
                return _box_product(indices, pts, orders)
            exp_idx, rep, coef = sector_expansion(self, indices)
            prod = _box_product(exp_idx, pts, orders) * coef[None, :]
            starts = np.flatnonzero(np.r_[True, rep[1:] != rep[:-1]])
            return np.add.reduceat(prod, starts, axis=1)
        if self.eigenfunction_table is None:
            raise UnsupportedModelError("custom model has no eigenfunction table")
        if any(orders):
            raise UnsupportedModelError("custom eigenfunction tables carry no derivatives")
        flat = pts[:, 0] if pts.shape[1] == 1 else pts
        cols = [np.broadcast_to(np.asarray(self.eigenfunction_table[int(i[0])](flat), dtype=complex), (len(pts),))
                for i in indices]
        return np.stack(cols, axis=1)

    def sup_derivative_bound(self, indices, ell: int) -> np.ndarray:
        """Upper bound on sup_q |grad^ell phi_n(q)| for each mode.

        Exact for the circle (|n|^ell/sqrt(2 pi)). For the box the full
        derivative tensor norm is bounded by (2/pi)^(D/2) ||n||^ell, times
        sqrt(number of distinct block permutations) in a symmetry sector.
        """
        indices = np.asarray(indices).reshape(len(indices), -1)
        norms = self.mode_norms(indices)
        if self.is_periodic:
            return norms**ell / math.sqrt(2.0 * math.pi)
        if self.kind == "box":
            D = self.N * self.d
            bound = (2.0 / math.pi) ** (D / 2.0) * norms**ell
            if self.symmetry != "none":
                bound = bound * np.sqrt(_distinct_permutations(indices, self.N, self.d))
            return bound
        raise UnsupportedModelError("model provides no derivative bounds")

    def sup_analytic_bound(self, indices, alpha: float) -> np.ndarray:
        """Upper bound on |phi_n| over the complex neighbourhood of half-width alpha.

        Circle: the disk/strip value exp(alpha |n|)/sqrt(2 pi). Box: the
        polystrip ``|Im q_j| <= alpha`` bound prod cosh(alpha n_j).
        """
        indices = np.asarray(indices).reshape(len(indices), -1)
        if self.is_periodic:
            return np.exp(alpha * np.abs(indices[:, 0])) / math.sqrt(2.0 * math.pi)
        if self.kind == "box":
            D = self.N * self.d
            bound = (2.0 / math.pi) ** (D / 2.0) * np.prod(np.cosh(alpha * indices), axis=1)
            if self.symmetry != "none":
                bound = bound * np.sqrt(_distinct_permutations(indices, self.N, self.d))
            return bound
        raise UnsupportedModelError("model provides no analytic continuation bounds")

    def check_domain(self, pts: np.ndarray, *, periodic_ok: bool = False) -> None:
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("configuration points must be finite")
        if self.kind == "box" and not periodic_ok:
            tol = 1e-12
            if np.any(pts.real < -tol) or np.any(pts.real > math.pi + tol):
                raise InvalidParameterError("box points must lie in [0, pi]^(N d)")

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.N, "d": self.d, "m": self.m,
                "hbar": self.hbar, "symmetry": self.symmetry, "basis": self.basis}


def _box_product(indices, pts, orders) -> np.ndarray:
    D = pts.shape[1]
    n = indices.astype(float)
    k = np.asarray(orders, dtype=float)
    # d^k/dx^k sin(n x) = n^k sin(n x + k pi/2)
    arg = pts[:, None, :] * n[None, :, :] + (k * math.pi / 2.0)[None, None, :]
    vals = np.prod(np.sin(arg) * (n**k)[None, :, :], axis=2)
    return (2.0 / math.pi) ** (D / 2.0) * vals


def _orthant_ball_count(D: int, radius: float) -> float:
    log_vol = (D / 2.0) * math.log(math.pi) - gammaln(D / 2.0 + 1.0) + D * math.log(max(radius, 1)) - D * math.log(2)
    return math.exp(log_vol)


def _box_modes(N, d, radius, symmetry):
    D = N * d
    r2 = radius * radius
    out = []

    def rec(prefix, rem):
        j = len(prefix)
        if j == D:
            out.append(tuple(prefix))
            return
        left = D - j - 1  # remaining coordinates after this one need >= 1 each
        v = 1
        while v * v + left <= rem:
            prefix.append(v)
            rec(prefix, rem - v * v)
            prefix.pop()
            v += 1

    rec([], r2)
    if symmetry == "none" or N == 1:
        return out
    keep = []
    for n in out:
        blocks = [n[i * d:(i + 1) * d] for i in range(N)]
        if symmetry == "symmetric" and all(blocks[i] <= blocks[i + 1] for i in range(N - 1)):
            keep.append(n)
        elif symmetry == "antisymmetric" and all(blocks[i] < blocks[i + 1] for i in range(N - 1)):
            keep.append(n)
    return keep


def _blocks(n, N, d):
    return tuple(tuple(int(x) for x in n[i * d:(i + 1) * d]) for i in range(N))


def _distinct_permutations(indices, N, d) -> np.ndarray:
    out = np.empty(len(indices))
    for r, n in enumerate(indices):
        mult = Counter(_blocks(n, N, d)).values()
        out[r] = math.factorial(N) / math.prod(math.factorial(c) for c in mult)
    return out


def permutation_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


_SECTOR_CACHE: dict = {}


def sector_expansion(model: SpectralModel, indices):
    """Expand (anti)symmetrized sector modes into product-basis modes.

    Returns ``(product_indices, owner, coef)``: the normalized sector state
    for representative ``r`` equals ``sum(coef[l] * phi[product_indices[l]]
    for l where owner[l] == r)``. ``owner`` is nondecreasing.
    """
    N, d = model.N, model.d
    indices = np.ascontiguousarray(np.asarray(indices, dtype=np.int64).reshape(len(indices), -1))
    key = (N, d, model.symmetry, indices.shape, indices.tobytes())
    if key in _SECTOR_CACHE:
        return _SECTOR_CACHE[key]
    anti = model.symmetry == "antisymmetric"
    rows, owner, coef = [], [], []
    for r, n in enumerate(indices):
        blocks = _blocks(n, N, d)
        mult = Counter(blocks).values()
        norm = math.sqrt(math.prod(math.factorial(c) for c in mult) / math.factorial(N))
        seen = {}
        for perm in itertools.permutations(range(N)):
            key = tuple(blocks[p] for p in perm)
            if key in seen:
                continue
            s = permutation_sign(perm) if anti else 1
            seen[key] = s
        for key, s in seen.items():
            rows.append([x for b in key for x in b])
            owner.append(r)
            coef.append(s * norm)
    result = (np.array(rows, dtype=int), np.array(owner, dtype=int), np.array(coef, dtype=float))
    if len(_SECTOR_CACHE) > 64:
        _SECTOR_CACHE.clear()
    _SECTOR_CACHE[key] = result
    return result


@dataclass(frozen=True, eq=False)
class ThermalSpectrum:
    """Retained modes of a model with their Boltzmann weights.

    ``weights`` sum to one after renormalization over the retained set;
    ``tail_bound`` is a rigorous upper bound on the discarded Boltzmann mass
    ``sum_{dropped} exp(-beta E_n)``.
    """

    model: SpectralModel
    beta: Optional[float]
    indices: np.ndarray
    energies: np.ndarray
    weights: np.ndarray
    z_trunc: float
    tail_bound: float = 0.0
    tail_mass: float = 0.0
    radius: Optional[int] = None
    energy_offset: float = 0.0
    labels: Optional[tuple] = field(default=None)

    def __post_init__(self):
        for name in ("indices", "energies", "weights"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self):
        return len(self.weights)

    @property
    def size(self) -> int:
        return len(self.weights)

    def mode_norms(self) -> np.ndarray:
        return self.model.mode_norms(self.indices)

    def eigenfunctions(self, q, orders=None) -> np.ndarray:
        return self.model.eigenfunctions(self.indices, q, orders)

    def position(self) -> dict:
        """Map ModeIndex tuple -> row position."""
        return {tuple(int(x) for x in n): i for i, n in enumerate(self.indices)}

    def mode(self, i) -> ModeIndex:
        return tuple(int(x) for x in self.indices[i])


def build_circle_model(m: float = 1.0, hbar: float = 1.0) -> SpectralModel:
    """Particle on a circle; the cutoff is chosen later by :func:`thermalize`."""
    return SpectralModel("circle", 1, 1, m, hbar)


def build_box_model(N: int = 1, d: int = 1, m: float = 1.0, hbar: float = 1.0,
                    symmetry: str = "none") -> SpectralModel:
    return SpectralModel("box", int(N), int(d), m, hbar, symmetry)


def build_custom_model(weights: Sequence, eigenfunctions=None, energies=None,
                       beta: Optional[float] = None, m: float = 1.0, hbar: float = 1.0):
    """Finite spectrum from explicit ``(label, p_n)`` pairs.

    ``eigenfunctions`` may be ``None`` (coefficient-level work only),
    ``"circle"`` (integer labels are circle wave numbers, energies follow
    ``hbar^2 n^2/2m``), or a sequence of callables ``phi(q)`` aligned with
    ``weights``.

    Returns ``(model, spectrum)``.
    """
    labels = [w[0] for w in weights]
    p = np.array([float(w[1]) for w in weights])
    if len(p) == 0:
        raise InvalidParameterError("custom model needs at least one weight")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidParameterError("weights must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise InvalidParameterError(f"weights sum to {p.sum()!r}, not 1")

    table = None
    if eigenfunctions is None:
        basis = None
    elif isinstance(eigenfunctions, str):
        if eigenfunctions != "circle":
            raise InvalidParameterError(f"unknown eigenfunction basis {eigenfunctions!r}")
        basis = "circle"
    else:
        table = tuple(eigenfunctions)
        if len(table) != len(p):
            raise InvalidParameterError("one eigenfunction per weight required")
        basis = "table"
    model = SpectralModel("custom", 1, 1, m, hbar, basis=basis, eigenfunction_table=table)

    if basis == "circle":
        idx = np.array([[int(lab)] for lab in labels], dtype=int)
        if len(set(idx[:, 0])) != len(idx):
            raise InvalidParameterError("duplicate circle wave numbers")
        E = model.energies(idx)
    else:
        # table rows are addressed by position
        idx = np.arange(len(p)).reshape(-1, 1)
        E = np.zeros(len(p)) if energies is None else np.asarray(energies, dtype=float)
    if energies is not None and basis == "circle":
        E = np.asarray(energies, dtype=float)

    order = np.argsort(E, kind="stable")
    if table is not None:
        # keep table aligned with the reordered rows
        model = SpectralModel("custom", 1, 1, m, hbar, basis=basis,
                              eigenfunction_table=tuple(table[i] for i in order))
        idx = np.arange(len(p)).reshape(-1, 1)
    else:
        idx = idx[order]
    p = p[order] / p.sum()
    spectrum = ThermalSpectrum(model, beta, idx, E[order], p, z_trunc=1.0,
                               labels=tuple(labels[i] for i in order))
    return model, spectrum


def _theta_tail_1d(a: float, start: int) -> float:
    """sum_{n > start} exp(-a n^2) <= integral_{start}^inf exp(-a x^2) dx."""
    return 0.5 * math.sqrt(math.pi / a) * float(erfc(math.sqrt(a) * start))


def _theta_sum_1d(a: float) -> float:
    """sum_{n >= 1} exp(-a n^2) to machine precision."""
    total, n = 0.0, 1
    while True:
        t = math.exp(-a * n * n)
        total += t
        if t < 1e-18 * total or t == 0.0:
            return total
        n += 1


def box_tail_bound(a: float, D: int, radius: float) -> float:
    """Upper bound on sum_{n in N^D, ||n|| > R} exp(-a ||n||^2).

    Uses exp(-a||n||^2) <= exp(-a(1-s)R^2) exp(-a s ||n||^2) on the tail,
    minimized over a grid of s in (0, 1).
    """
    best = math.inf
    for s in np.linspace(0.02, 0.98, 49):
        log_b = -a * (1 - s) * radius**2 + D * math.log(_theta_sum_1d(a * s))
        best = min(best, log_b)
    return math.exp(best)


def thermalize(model: SpectralModel, beta: float, tail_mass: float = DEFAULT_TAIL_MASS,
               cutoff: Optional[int] = None) -> ThermalSpectrum:
    """Canonical weights over the smallest radius whose analytic tail bound is below ``tail_mass * Z_trunc``.

    Passing ``cutoff`` fixes the radius instead (used for cutoff-stability
    comparisons); the reported ``tail_bound`` is then whatever that radius
    achieves.
    """
    if not (beta is not None and beta > 0 and math.isfinite(beta)):
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if not (tail_mass > 0):
        raise InvalidParameterError(f"tail mass must be positive, got {tail_mass}")
    if model.kind == "custom":
        raise UnsupportedModelError("custom models are built with build_custom_model")

    a = beta * model.energy_scale
    D = model.index_dim

    def bound(R):
        if model.kind == "circle":
            return 2.0 * _theta_tail_1d(a, R)
        return box_tail_bound(a, D, R)

    if cutoff is None:
        z_full = (2.0 * _theta_sum_1d(a) + 1.0) if model.kind == "circle" else _theta_sum_1d(a) ** D
        R = 0 if model.kind == "circle" else int(math.isqrt(D))
        while True:
            b = bound(R)
            # z_trunc <= z_full, so this is a necessary condition
            if b <= tail_mass * z_full:
                idx = model.enumerate_modes(R)
                if len(idx):
                    E = model.energies(idx)
                    z = float(np.sum(np.exp(-beta * E)))
                    if b <= tail_mass * z:
                        break
            R += 1
            if model.kind == "box" and _orthant_ball_count(D, R) > MAX_MODES:
                raise ResourceLimitError(
                    f"tail mass {tail_mass} at beta={beta} needs more than {MAX_MODES} modes")
    else:
        R = int(cutoff)
        idx = model.enumerate_modes(R)
        if len(idx) == 0:
            raise InvalidParameterError(f"cutoff {cutoff} retains no modes")
        b = bound(R)

    E = model.energies(idx)
    boltz = np.exp(-beta * E)
    z = float(np.sum(boltz))
    p = boltz / z
    return ThermalSpectrum(model, float(beta), idx, E, p, z_trunc=z, tail_bound=b,
                           tail_mass=float(tail_mass), radius=R,
                           energy_offset=-math.log(z) / beta)


def kernel(spectrum: ThermalSpectrum, q, q2) -> np.ndarray:
    """Position-space density matrix rho(q, q') = sum_n p_n phi_n(q) conj(phi_n(q'))."""
    model = spectrum.model
    p1, p2 = model.points(q), model.points(q2)
    model.check_domain(p1)
    model.check_domain(p2)
    a = spectrum.eigenfunctions(p1)
    b = spectrum.eigenfunctions(p2)
    vals = np.sum(spectrum.weights * a * np.conj(b), axis=-1)
    return vals[0] if np.ndim(q) == (0 if model.config_dim == 1 else 1) else vals


def kernel_mixed_derivative(spectrum: ThermalSpectrum, q) -> np.ndarray:
    """d^2 rho / dq dq' at q' = q, i.e. sum_n p_n |phi_n'(q)|^2 (one-dimensional models)."""
    model = spectrum.model
    if model.config_dim != 1:
        raise UnsupportedModelError("mixed kernel derivative is defined for 1-D models")
    if not model.has_derivatives:
        raise UnsupportedModelError("model has no analytic derivatives")
    pts = model.points(q)
    model.check_domain(pts)
    dphi = spectrum.eigenfunctions(pts, orders=(1,))
    vals = np.sum(spectrum.weights * np.abs(dphi) ** 2, axis=-1)
    return vals[0] if np.ndim(q) == 0 else vals
