"""Time stepping for the regularised Aw-Rascle system.

Continuity (grid field rho)::

    rho_t + div(rho w) = div((epsilon + S_kappa[rho_k p'(rho_k)]) grad rho)

Momentum (w in X_n, tested against every phi in X_n)::

    d/dt <rho w, phi> = <F (x) w : grad phi> - delta <grad w : grad phi>,
    F = rho w - coefficient * grad rho

with ``(a (x) b) : grad phi = sum_jl a_j b_l d_j phi_l``.

One step is first-order IMEX inside a Picard loop.  Each sweep freezes the
diffusion coefficient at the current density iterate, solves the
variable-coefficient Helmholtz problem for rho by preconditioned CG, forms
the mass flux ``F`` and updates ``rho = rho_old - dt div F``, then solves
``(A[rho] + dt delta K) c = <rho_old w_old, phi> + dt <F (x) w_it : grad phi>``.
Using the same flux in both equations makes the step conserve mass and
``integral rho w`` exactly, keep constant ``w`` constant, and dissipate
``integral rho |w|^2`` whenever ``n <= points // 6``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg

from . import spectral as sp
from .galerkin import MassMatrix, MassMatrixError, basis_for
from .model import Params, pressure, pressure_derivative, q_flux, rho_truncated

__all__ = [
    "SolverError",
    "State",
    "Trajectory",
    "StepStats",
    "diffusion_coefficient",
    "continuity_rhs",
    "momentum_rhs",
    "picard_step",
    "run",
    "cfl_limit",
    "MAX_HALVINGS",
    "CFL_NUMBER",
]

log = logging.getLogger(__name__)

MAX_HALVINGS = 10
CFL_NUMBER = 0.4
HELMHOLTZ_RTOL = 1e-10


class SolverError(RuntimeError):
    """Step failure; ``provenance`` holds the time, step size and iterate history."""

    def __init__(self, message, provenance=None):
        super().__init__(message)
        self.provenance = provenance or {}


def _frozen(a):
    # read-only float arrays are shared; anything else is copied before freezing
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable:
        return a
    return np.array(a, dtype=float)


@dataclass(frozen=True, eq=False)
class State:
    """Density and preferred velocity at time ``t``.

    ``rho`` has shape ``grid`` and ``w`` has shape ``(dim,) + grid``.
    Spectral data are computed lazily and cached.
    """

    t: float
    rho: np.ndarray
    w: np.ndarray
    gamma: float
    floor_activations: int = 0

    def __post_init__(self):
        rho, w = _frozen(self.rho), _frozen(self.w)
        if w.shape != (rho.ndim,) + rho.shape:
            raise ValueError(f"w must have shape {(rho.ndim,) + rho.shape}, got {w.shape}")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(w))):
            raise ValueError("state contains NaN or Inf")
        rho.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.rho.ndim

    @property
    def points(self) -> int:
        return self.rho.shape[0]

    @property
    def torus(self) -> sp.Torus:
        return sp.Torus(self.dim, self.points)

    @cached_property
    def rho_hat(self) -> sp.SpectralField:
        return sp.to_spectral(self.rho)

    @cached_property
    def w_hat(self) -> list[sp.SpectralField]:
        return [sp.to_spectral(c) for c in self.w]

    @cached_property
    def q(self) -> np.ndarray:
        return q_flux(self.rho, self.gamma)

    @cached_property
    def grad_q(self) -> np.ndarray:
        return sp.grad(self.q)

    @cached_property
    def grad_p(self) -> np.ndarray:
        return sp.grad(pressure(self.rho, self.gamma))

    @cached_property
    def velocity(self) -> np.ndarray:
        return self.w + self.grad_p

    def check_caches(self, rtol: float = 1e-13) -> None:
        """Round-trip check of the cached spectral data (debug aid)."""
        pairs = [(self.rho, self.rho_hat)] + list(zip(self.w, self.w_hat))
        for f, F in pairs:
            err = np.abs(sp.to_physical(F) - f).max()
            if err > rtol * max(1.0, np.abs(f).max()):
                raise AssertionError(f"spectral cache out of sync (error {err:.3e})")

    def at(self, t=None, rho=None, w=None, floor_activations=None) -> "State":
        return replace(
            self,
            t=self.t if t is None else t,
            rho=self.rho if rho is None else rho,
            w=self.w if w is None else w,
            floor_activations=self.floor_activations if floor_activations is None else floor_activations,
        )


@dataclass
class StepStats:
    """Per-call bookkeeping filled by :func:`picard_step`."""

    iterations: list[int] = field(default_factory=list)
    distances: list[list[float]] = field(default_factory=list)
    substeps: int = 0
    halvings: int = 0
    floor_clipped: int = 0


@dataclass
class Trajectory:
    final: State
    records: list[list]
    times: list[float]
    steps: int
    stats: StepStats


def _norm(f, cells) -> float:
    """Discrete L2 norm on the unit torus; vector components are summed."""
    return float(np.sqrt(np.sum(np.square(f)) / cells))


def diffusion_coefficient(rho, params: Params) -> np.ndarray:
    """``epsilon + S_kappa[rho_k p'(rho_k)]`` on the grid."""
    rk = rho_truncated(np.maximum(rho, params.rho_floor), params.kappa)
    base = rk * pressure_derivative(rk, params.gamma)
    return params.epsilon + sp.smooth(base, params.kappa)


def _flux_check(f, what, t):
    if not np.all(np.isfinite(f)):
        raise SolverError(f"non-finite {what} at t = {t}", {"t": t})
    return f


def continuity_rhs(state: State, params: Params) -> np.ndarray:
    """``-div(rho w) + div(coefficient grad rho)`` with dealiased products."""
    coef = diffusion_coefficient(state.rho, params)
    grad_rho = sp.grad(state.rho)
    flux = np.stack([sp.dealias(state.rho * wj) - sp.dealias(coef * gj) for wj, gj in zip(state.w, grad_rho)])
    return _flux_check(-sp.div(flux), "continuity right side", state.t)


def momentum_rhs(state: State, drho_dt, params: Params) -> np.ndarray:
    """Galerkin right side ``r`` of ``A c' = r``, shape ``(dim, *mode_shape)``.

    ``r_i = <rho w (x) w : grad phi_i> - <coef grad rho (x) w : grad phi_i>
    - delta <grad w : grad phi_i> - <rho_t w . phi_i>``.
    """
    b = basis_for(state.dim, state.points, params.n_modes)
    coef = diffusion_coefficient(state.rho, params)
    grad_rho = sp.grad(state.rho)
    flux = state.rho * state.w - coef * grad_rho
    c = b.analyze(state.w)
    drho_dt = np.asarray(drho_dt, dtype=float)
    r = np.empty((state.dim,) + b.mode_shape)
    for l in range(state.dim):
        acc = -b.analyze(drho_dt * state.w[l]) - params.delta * b.stiffness * c[l]
        for j in range(state.dim):
            acc = acc + b.analyze(flux[j] * state.w[l], deriv=j)
        r[l] = acc
    return _flux_check(r, "momentum right side", state.t)


def cfl_limit(state: State) -> float:
    """Largest step allowed by ``dt <= 0.4 dx / max|u|`` with ``u = w + grad p``."""
    speed = float(np.sqrt(np.sum(state.velocity**2, axis=0)).max())
    return math.inf if speed == 0 else CFL_NUMBER / (state.points * speed)


def _helmholtz(rhs, coef, dt, guess):
    """Solve ``rho - dt div(coef grad rho) = rhs`` by CG with a spectral preconditioner."""
    shape = rhs.shape
    size = rhs.size
    lap_mult = sp.laplacian_symbol(shape)
    pre_mult = 1.0 / (1.0 - dt * float(coef.mean()) * lap_mult)
    axes = tuple(range(len(shape)))

    def apply(v):
        v = v.reshape(shape)
        return (v - dt * sp.div(coef * sp.grad(v))).reshape(-1)

    def precondition(v):
        return np.fft.irfftn(pre_mult * np.fft.rfftn(v.reshape(shape)), s=shape, axes=axes).reshape(-1)

    op = scipy.sparse.linalg.LinearOperator((size, size), matvec=apply, dtype=float)
    pre = scipy.sparse.linalg.LinearOperator((size, size), matvec=precondition, dtype=float)
    # solve for the correction so the tolerance is relative to the actual fluctuation
    guess = guess.reshape(-1)
    r0 = rhs.reshape(-1) - apply(guess)
    if not np.any(r0):
        return guess.reshape(shape)
    x, info = scipy.sparse.linalg.cg(op, r0, rtol=HELMHOLTZ_RTOL, atol=0.0, M=pre, maxiter=500)
    if info != 0:
        raise SolverError(f"Helmholtz solve did not converge (info={info})")
    return (guess + x).reshape(shape)


def _sweep_once(state, params, dt, basis, rho_it, w_it, momentum0):
    coef = diffusion_coefficient(rho_it, params)
    adv = np.stack([sp.dealias(state.rho * wj) for wj in w_it])
    target = state.rho - dt * sp.div(adv)
    rho_sol = _helmholtz(target, coef, dt, rho_it)
    grad_rho = sp.grad(rho_sol)
    flux = adv - np.stack([sp.dealias(coef * g) for g in grad_rho])
    rho_new = state.rho - dt * sp.div(flux)
    rhs = momentum0.copy()
    for l in range(state.dim):
        for j in range(state.dim):
            rhs[l] += dt * basis.analyze(flux[j] * w_it[l], deriv=j)
    if rho_new.min() <= 0:
        mm = MassMatrix(basis, np.maximum(rho_new, params.rho_floor))
    else:
        mm = MassMatrix(basis, rho_new)
    coeffs = mm.solve(rhs, shift=dt * params.delta)
    return rho_new, basis.synthesize(coeffs)


def _single_step(state, params, dt, stats):
    basis = basis_for(state.dim, state.points, params.n_modes)
    momentum0 = basis.analyze(state.rho * state.w)
    rho_it = state.rho
    w_it = state.w
    history = []
    for k in range(1, params.picard_max_iter + 1):
        rho_new, w_new = _sweep_once(state, params, dt, basis, rho_it, w_it, momentum0)
        if not (np.all(np.isfinite(rho_new)) and np.all(np.isfinite(w_new))):
            history.append(math.nan)
            break
        d = max(_norm(w_new - w_it, rho_new.size), _norm(rho_new - rho_it, rho_new.size))
        history.append(d)
        rho_it, w_it = rho_new, w_new
        if d < params.picard_tol:
            stats.iterations.append(k)
            stats.distances.append(history)
            return rho_it, w_it
    raise _PicardFailure(history)


class _PicardFailure(Exception):
    def __init__(self, history):
        self.history = history


def _advance(state, params, dt, stats, level):
    try:
        rho, w = _single_step(state, params, dt, stats)
    except (_PicardFailure, SolverError, MassMatrixError) as exc:
        history = getattr(exc, "history", [])
        if level >= MAX_HALVINGS:
            raise SolverError(
                f"Picard loop failed at t = {state.t:.6g} after {MAX_HALVINGS} halvings (dt = {dt:.3e})",
                {"t": state.t, "dt": dt, "iterate_distances": history, "cause": repr(exc)},
            ) from None
        log.info("step rejected at t=%.6g dt=%.3e (%s); halving", state.t, dt, type(exc).__name__)
        stats.halvings += 1
        mid = _advance(state, params, dt / 2, stats, level + 1)
        return _advance(mid, params, dt / 2, stats, level + 1)
    clipped = rho < params.rho_floor
    count = int(clipped.sum())
    if count:
        log.warning("density floor activated at %d points (t=%.6g, min rho %.3e)", count, state.t + dt, rho.min())
        rho = np.where(clipped, params.rho_floor, rho)
        stats.floor_clipped += count
    return state.at(t=state.t + dt, rho=rho, w=w, floor_activations=state.floor_activations + count)


def picard_step(state: State, params: Params, dt: float | None = None, stats: StepStats | None = None) -> State:
    """Advance ``state`` by ``dt`` (default ``params.dt``).

    The step is split into equal substeps when the CFL bound is violated, and
    halved recursively (up to :data:`MAX_HALVINGS` times) when the Picard
    loop fails to converge.
    """
    dt = params.dt if dt is None else dt
    stats = StepStats() if stats is None else stats
    pieces = max(1, math.ceil(dt / cfl_limit(state) - 1e-12))
    stats.substeps += pieces
    h = dt / pieces
    t_target = state.t + dt
    for _ in range(pieces):
        state = _advance(state, params, h, stats, 0)
    return state.at(t=t_target)


def run(
    initial: State,
    params: Params,
    observers: Sequence[Callable] = (),
    cadence: int = 1,
    stats: StepStats | None = None,
) -> Trajectory:
    """Integrate from ``initial.t`` to ``params.t_end``.

    Each observer is called as ``observer(state, params)`` at the initial
    time, every ``cadence`` steps and at the final time; its return values are
    collected in ``Trajectory.records[i]``.
    """
    if cadence < 1:
        raise ValueError(f"cadence must be >= 1, got {cadence}")
    stats = StepStats() if stats is None else stats
    records: list[list] = [[] for _ in observers]
    times: list[float] = []

    def observe(s):
        times.append(s.t)
        for i, obs in enumerate(observers):
            records[i].append(obs(s, params))

    observe(initial)
    remaining = params.t_end - initial.t
    if remaining <= 0:
        return Trajectory(initial, records, times, 0, stats)
    steps = max(1, round(remaining / params.dt))
    dt = remaining / steps
    state = initial
    for k in range(1, steps + 1):
        state = picard_step(state, params, dt, stats)
        if k % cadence == 0 or k == steps:
            observe(state)
    return Trajectory(state, records, times, steps, stats)
