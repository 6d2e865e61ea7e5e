"""Bohmian velocity field and trajectories for eigen-expanded wave functions.

The wave function evolves freely in its eigenbasis,
``c_n(t) = exp(-i E_n t / hbar) c_n(0)``, and configurations follow
``dQ_j/dt = (hbar/m_j) Im(conj(psi) d_j psi) / |psi|^2``. The field is
undefined at nodes; close approaches shrink the step and, if the step floor is
reached, the integration stops with a ``node-abort`` status.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameterError, NodeError, UnsupportedModelError
from .sampler import WaveFunction

NODE_THRESHOLD = 1e-10

# Runge-Kutta-Fehlberg 4(5): propagate the 4th-order solution
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def evolve_coefficients(psi: WaveFunction, t: float) -> WaveFunction:
    """Free evolution: c_n -> exp(-i E_n t/hbar) c_n."""
    if not math.isfinite(t):
        raise InvalidParameterError("t must be finite")
    if t == 0:
        return psi
    hbar = psi.spectrum.model.hbar
    phase = np.exp(-1j * psi.spectrum.energies * (t / hbar))
    return WaveFunction(psi.spectrum, psi.coefficients * phase, psi.provenance, psi.seed,
                        psi.mixture_mode)


def _masses(model, masses) -> np.ndarray:
    """Per-coordinate mass vector."""
    if masses is None:
        masses = [model.m] * model.N
    masses = np.atleast_1d(np.asarray(masses, dtype=float))
    if len(masses) != model.N or np.any(masses <= 0):
        raise InvalidParameterError(f"need {model.N} positive masses")
    return np.repeat(masses, model.d if model.kind == "box" else 1)


def node_threshold(psi: WaveFunction, relative: float = NODE_THRESHOLD) -> float:
    """relative * spatial mean of |psi|^2, the latter being ||psi||^2 / volume."""
    return relative * float(np.sum(np.abs(psi.coefficients) ** 2)) / psi.spectrum.model.volume


class _Field:
    """Velocity field of one (non-batched) wave function at arbitrary times."""

    def __init__(self, psi: WaveFunction, masses=None):
        spec = psi.spectrum
        model = spec.model
        if psi.is_batch:
            raise InvalidParameterError("velocity needs a single wave function")
        if not model.has_derivatives:
            raise UnsupportedModelError("model has no analytic derivatives")
        self.spec = spec
        self.model = model
        self.c0 = psi.coefficients
        self.w = spec.energies / model.hbar
        self.hbar_over_m = model.hbar / _masses(model, masses)
        D = model.config_dim
        self.directions = [tuple(int(i == j) for i in range(D)) for j in range(D)]

    def __call__(self, t: float, y: np.ndarray):
        """Velocities (B, D) and densities (B,) at configurations y (B, D)."""
        c = self.c0 if t == 0 else self.c0 * np.exp(-1j * self.w * t)
        if self.model.kind == "box" and (np.any(y < 0) or np.any(y > math.pi)):
            # outside the box the flow is undefined; report a node
            return np.zeros_like(y), np.zeros(len(y))
        psi = self.spec.eigenfunctions(y) @ c
        grad = np.stack([self.spec.eigenfunctions(y, orders=o) @ c for o in self.directions], axis=1)
        dens = np.abs(psi) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.hbar_over_m * np.imag(np.conj(psi)[:, None] * grad) / dens[:, None]
        return v, dens


def velocity(psi: WaveFunction, q, masses=None, threshold: Optional[float] = None) -> np.ndarray:
    """Bohmian velocity (length N*d vector, or shape (P, N*d) for several points)."""
    fld = _Field(psi, masses)
    model = psi.spectrum.model
    pts = model.points(q)
    model.check_domain(pts)
    v, dens = fld(0.0, pts)
    thr = node_threshold(psi) if threshold is None else threshold
    near = dens < thr
    if np.any(near):
        where = pts[np.flatnonzero(near)[0]]
        raise NodeError(f"|psi|^2 = {dens[near][0]:.3g} below node threshold {thr:.3g} at q = {where}",
                        where, float(dens[near][0]))
    single = np.ndim(q) == (0 if model.config_dim == 1 else 1)
    return v[0] if single else v


@dataclass
class TrajectoryState:
    t: float
    q: np.ndarray
    density: float
    step: float
    min_density: float
    rejected_steps: int


@dataclass
class Trajectory:
    states: list
    status: str = "ok"
    seed: Optional[object] = None
    message: str = ""
    unwrapped: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.q for s in self.states])


def _rkf45(fld, y0, t_grid, tol, thr, h_init, h_floor, max_steps):
    """Adaptive RKF45 over a shared step for an ensemble y (B, D).

    Yields (t, y, dens, h, min_dens, rejected, status) at every grid time.
    """
    y = np.array(y0, dtype=float)
    t = float(t_grid[0])
    v, dens = fld(t, y)
    if np.any(dens < thr):
        yield t, y, dens, 0.0, float(dens.min()), 0, "node-abort"
        return
    min_dens = float(dens.min())
    rejected = 0
    h = h_init
    steps = 0
    yield t, y.copy(), dens, 0.0, min_dens, rejected, "ok"
    h_used = 0.0
    for t_next in t_grid[1:]:
        while t < t_next:
            clipped = h >= t_next - t
            if clipped:
                h = t_next - t
            k = [v]
            stage_dens = []
            node = False
            for s in range(1, 6):
                ys = y + h * sum(a * kk for a, kk in zip(_A[s], k))
                ks, ds = fld(t + _C[s] * h, ys)
                stage_dens.append(ds)
                if np.any(ds < thr):
                    node = True
                    break
                k.append(ks)
            steps += 1
            if steps > max_steps:
                yield t, y, dens, h, min_dens, rejected, "step-floor-abort"
                return
            if node:
                rejected += 1
                h *= 0.5
                if h < h_floor:
                    yield t, y, dens, h, min(min_dens, float(np.min(stage_dens[-1]))), rejected, "node-abort"
                    return
                continue
            y4 = y + h * sum(b * kk for b, kk in zip(_B4, k))
            y5 = y + h * sum(b * kk for b, kk in zip(_B5, k))
            err = float(np.max(np.abs(y5 - y4))) if y.size else 0.0
            if err > tol:
                rejected += 1
                h *= max(0.1, 0.9 * (tol / err) ** 0.2)
                if h < h_floor:
                    yield t, y, dens, h, min_dens, rejected, "step-floor-abort"
                    return
                continue
            t_new = t_next if clipped else t + h
            v_new, d_new = fld(t_new, y4)
            if np.any(d_new < thr):
                rejected += 1
                h *= 0.5
                if h < h_floor:
                    yield t, y, dens, h, min(min_dens, float(d_new.min())), rejected, "node-abort"
                    return
                continue
            t, y, v, dens = t_new, y4, v_new, d_new
            min_dens = min(min_dens, float(dens.min()), *(float(d.min()) for d in stage_dens))
            grow = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (tol / err) ** 0.2))
            h_used = h
            h = h * grow
        yield t, y.copy(), dens, h_used, min_dens, rejected, "ok"


def _check_grid(t_grid):
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("time grid must be strictly increasing")
    return t_grid


def integrate_trajectory(psi: WaveFunction, q0, t_grid, masses=None, tol: float = 1e-8,
                         node_relative: float = NODE_THRESHOLD, h_floor: float = 1e-12,
                         max_steps: int = 1_000_000) -> Trajectory:
    """Integrate dQ/dt = v^psi(t)(Q) from q0, reporting states at ``t_grid``.

    Circle positions are reported modulo 2 pi (the lift is kept in
    ``Trajectory.unwrapped``).
    """
    model = psi.spectrum.model
    t_grid = _check_grid(t_grid)
    y0 = model.points(q0)[:1].astype(float)
    model.check_domain(y0)
    fld = _Field(psi, masses)
    thr = node_threshold(psi, node_relative)
    span = max(t_grid[-1] - t_grid[0], 1.0)
    out = Trajectory([], seed=psi.seed)
    for t, y, dens, h, md, rej, status in _rkf45(fld, y0, t_grid, tol, thr, 0.01 * span,
                                                  h_floor * span, max_steps):
        if status != "ok":
            out.status = status
            out.message = f"stopped at t = {t!r}"
            break
        q = y[0].copy()
        out.unwrapped.append(q.copy())
        if model.is_periodic:
            q = np.mod(q, 2 * math.pi)
        out.states.append(TrajectoryState(float(t), q, float(dens[0]), float(h), md, rej))
    return out


def integrate_ensemble(psi: WaveFunction, q0s, t_grid, masses=None, tol: float = 1e-8,
                       node_relative: float = NODE_THRESHOLD, h_floor: float = 1e-12,
                       max_steps: int = 1_000_000):
    """Integrate many starting points together with a shared adaptive step.

    Returns ``(positions, status)`` with positions of shape (len(t_grid), B, D)
    (circle positions taken modulo 2 pi). On an abort the positions array is
    truncated at the last completed grid time.
    """
    model = psi.spectrum.model
    t_grid = _check_grid(t_grid)
    y0 = model.points(q0s).astype(float)
    model.check_domain(y0)
    fld = _Field(psi, masses)
    thr = node_threshold(psi, node_relative)
    span = max(t_grid[-1] - t_grid[0], 1.0)
    frames, status = [], "ok"
    for t, y, dens, h, md, rej, st in _rkf45(fld, y0, t_grid, tol, thr, 0.01 * span,
                                              h_floor * span, max_steps):
        if st != "ok":
            status = st
            break
        frames.append(np.mod(y, 2 * math.pi) if model.is_periodic else y)
    return np.array(frames), status


def sample_from_density(psi: WaveFunction, n: int, seed, grid: int = 1 << 14) -> np.ndarray:
    """Draw n circle positions with density proportional to |psi|^2 (inverse CDF on a fine grid)."""
    from .fields import evaluate
    from .rng import as_generator

    model = psi.spectrum.model
    if not model.is_periodic:
        raise UnsupportedModelError("density sampling is implemented for circle models")
    q = np.linspace(0.0, 2 * math.pi, grid + 1)
    dens = np.abs(evaluate(psi, q)) ** 2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(q))])
    cdf /= cdf[-1]
    u = as_generator(seed).uniform(size=n)
    return np.interp(u, cdf, q)
