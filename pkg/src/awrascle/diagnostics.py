"""Monitored functionals: energies, dissipation, relative energy, Jensen gap.

All spatial integrals are grid means on the unit torus, which is exact for
trigonometric polynomials below the Nyquist frequency.  Time integrals run
over the observer cadence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import spectral as sp
from .model import (
    DomainError,
    Params,
    bregman_energy,
    internal_energy,
    pressure,
    pressure_derivative,
    q_flux,
    q_flux_derivative,
)

__all__ = [
    "DiagnosticsRecord",
    "RelativeEnergyReport",
    "GronwallResult",
    "record",
    "energy_balance_residual",
    "energy_inequality_residual",
    "relative_energy",
    "relative_energy_direct",
    "gronwall_check",
    "jensen_gap",
    "total_energy",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "t",
    "mass",
    "momentum_energy",
    "internal_energy",
    "q_dissipation",
    "cross_term",
    "grad_w_norm",
    "min_rho",
    "max_rho",
    "floor_activations",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    momentum_energy: float
    lp_moments: tuple[tuple[float, float], ...]
    internal_energy: float
    q_dissipation: float
    cross_term: float
    grad_w_norm: float
    min_rho: float
    max_rho: float
    floor_activations: int
    flagged: bool = False

    def lp_moment(self, p: float) -> float:
        for q, v in self.lp_moments:
            if q == p:
                return v
        raise KeyError(f"moment p = {p} was not recorded")

    def header(self) -> list[str]:
        return list(CSV_COLUMNS) + [f"lp_moment_p{p:g}" for p, _ in self.lp_moments]

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS] + [v for _, v in self.lp_moments]


def _integral(f) -> float:
    return float(np.mean(f))


def _grad_sq(v) -> np.ndarray:
    """Pointwise ``|grad v|^2`` summed over the components of a stacked field."""
    return sum(np.sum(sp.grad(c) ** 2, axis=0) for c in v)


def record(state, params: Params) -> DiagnosticsRecord:
    """Evaluate every monitored functional on ``state``."""
    rho = state.rho
    w = state.w
    # overflow shows up as a flagged record, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        speed2 = np.sum(w * w, axis=0)
        grad_q = state.grad_q
        moments = tuple((p, _integral(rho * speed2 ** (p / 2))) for p in params.lp_moments)
        values = dict(
            mass=_integral(rho),
            momentum_energy=_integral(rho * speed2),
            internal_energy=_integral(internal_energy(rho, params.gamma)),
            q_dissipation=_integral(np.sum(grad_q**2, axis=0)),
            cross_term=_integral(np.sqrt(rho) * np.sum(w * grad_q, axis=0)),
            grad_w_norm=_integral(_grad_sq(w)),
        )
    flagged = not all(math.isfinite(v) for v in values.values())
    return DiagnosticsRecord(
        t=float(state.t),
        lp_moments=moments,
        min_rho=float(rho.min()),
        max_rho=float(rho.max()),
        floor_activations=int(state.floor_activations),
        flagged=flagged,
        **values,
    )


def total_energy(state) -> float:
    """``integral (rho |w|^2 / 2 + E(rho))``."""
    return _integral(0.5 * state.rho * np.sum(state.w**2, axis=0) + internal_energy(state.rho, state.gamma))


def _series(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


def _times(records):
    if len(records) < 2:
        raise ValueError(f"need at least 2 records, got {len(records)}")
    t = _series(records, "t")
    if np.any(np.diff(t) <= 0):
        raise ValueError("records must be strictly time-ordered")
    return t


def energy_balance_residual(records: Sequence[DiagnosticsRecord], params: Params) -> np.ndarray:
    """Per-interval residual of ``integral rho |w|^2``.

    ``ME(t2) - ME(t1) + 2 delta integral_{t1}^{t2} grad_w_norm dt`` for
    consecutive records; it vanishes for exact solutions because testing the
    momentum equation with ``w`` gives ``d/dt ME = -2 delta integral |grad w|^2``.
    """
    t = _times(records)
    me = _series(records, "momentum_energy")
    g = _series(records, "grad_w_norm")
    return np.diff(me) + 2 * params.delta * np.diff(cumulative_trapezoid(g, t, initial=0.0))


def _time_integral(values, t, rule):
    if rule == "trapezoid":
        return cumulative_trapezoid(values, t, initial=0.0)
    if rule == "right":
        return np.concatenate([[0.0], np.cumsum(np.diff(t) * values[1:])])
    raise ValueError(f"unknown quadrature rule {rule!r}; use 'right' or 'trapezoid'")


def energy_inequality_residual(records: Sequence[DiagnosticsRecord], params: Params, rule: str = "right") -> np.ndarray:
    """Cumulative residual of the internal-energy inequality at each record.

    ``IE(tau) - IE(0) + int_0^tau q_dissipation - int_0^tau cross_term``;
    a nonpositive value means the inequality holds.

    ``rule="right"`` integrates in time with the right-endpoint rule, which
    matches the implicit step: convexity of E then makes every per-step
    contribution nonpositive up to the explicit transport lag.
    On a uniform cadence ``rule="trapezoid"`` exceeds it by exactly
    ``dt/2 [(q - c)(0) - (q - c)(tau)]`` with ``q`` the dissipation and ``c``
    the cross term, which is positive whenever the dissipation decays.
    """
    t = _times(records)
    ie = _series(records, "internal_energy")
    q = _time_integral(_series(records, "q_dissipation"), t, rule)
    c = _time_integral(_series(records, "cross_term"), t, rule)
    return ie - ie[0] + q - c


# ----------------------------------------------------------------------------
# relative energy


@dataclass(frozen=True)
class RelativeEnergyReport:
    t: float
    rel_energy: float
    q_rel_dissipation: float
    remainder_terms: tuple[float, ...]
    gronwall_ratio: float = math.nan
    kinetic: float = math.nan
    bregman: float = math.nan

    @property
    def remainder(self) -> float:
        return float(sum(self.remainder_terms))

    def with_ratio(self, e0: float) -> "RelativeEnergyReport":
        ratio = self.rel_energy / e0 if e0 > 0 else math.nan
        return RelativeEnergyReport(**{**{f.name: getattr(self, f.name) for f in fields(self)}, "gronwall_ratio": ratio})


def _check_reference(ref, bound):
    if bound <= 0:
        raise ValueError(f"reference density bound must be positive, got {bound}")
    low = ref.rho < bound
    if low.any():
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(low)), ref.rho.shape))
        raise DomainError(
            f"reference density {ref.rho[idx]:.3e} at grid index {idx} is below the required bound {bound:.3e}"
        )


def _check_pair(state, ref):
    if state.rho.shape != ref.rho.shape:
        raise ValueError(f"incompatible grids: {state.rho.shape} vs {ref.rho.shape}")


class _Pair:
    """Shared pointwise ingredients of the relative-energy expressions."""

    def __init__(self, state, ref, gamma):
        self.rho = rho = state.rho
        self.rb = rb = ref.rho
        self.w = state.w
        self.wb = ref.w
        self.sr = np.sqrt(rho)
        self.srb = np.sqrt(rb)
        self.gq = sp.grad(q_flux(rho, gamma))
        self.gqb = sp.grad(q_flux(rb, gamma))
        self.gp = sp.grad(pressure(rho, gamma))
        self.gpb = sp.grad(pressure(rb, gamma))
        # transport velocity of the continuity equation rho_t + div(rho (w - grad p)) = 0
        self.ub = self.wb - self.gpb
        self.W = self.w - self.wb
        self.D = self.gq - np.sqrt(rho / rb) * self.gqb
        # G[i, j] = d_j wbar_i
        self.G = np.stack([sp.grad(c) for c in self.wb])


def _dot(a, b):
    return np.sum(a * b, axis=0)


def _remainder_terms(pr: _Pair, gamma):
    rho, rb, sr, srb = pr.rho, pr.rb, pr.sr, pr.srb
    W, D, G, wb, ub, gqb = pr.W, pr.D, pr.G, pr.wb, pr.ub, pr.gqb
    t1 = -_integral(rho * np.einsum("i...,j...,ij...->...", W, W, G))
    t2 = _integral(sr * np.einsum("i...,j...,ij...->...", W, D, G))
    t3 = _integral(sr * _dot(W, D))
    t4 = _integral((sr - srb) * _dot(wb, D))
    t5 = _integral((1 - np.sqrt(rho / rb)) * _dot(gqb, D))
    q_breg = q_flux(rho, gamma) - q_flux(rb, gamma) - (rho - rb) * q_flux_derivative(rb, gamma)
    t6 = -_integral(q_breg * sp.div(srb * ub))
    sqrt_breg = sr - srb - (rho - rb) / (2 * srb)
    t7 = -_integral(sqrt_breg * _dot(ub, gqb))
    return (t1, t2, t3, t4, t5, t6, t7)


def relative_energy(state, ref, params: Params, rho_bound: float | None = None, e0: float | None = None):
    """Relative energy of ``state`` with respect to the strong reference ``ref``.

    Returns a :class:`RelativeEnergyReport` holding the energy, the relative
    ``Q`` dissipation and the seven remainder terms.  ``rho_bound`` (default
    ``params.rho_floor``) is the required lower bound on the reference
    density.
    """
    _check_pair(state, ref)
    bound = params.rho_floor if rho_bound is None else rho_bound
    _check_reference(ref, bound)
    gamma = params.gamma
    pr = _Pair(state, ref, gamma)
    kinetic = _integral(0.5 * state.rho * np.sum(pr.W**2, axis=0))
    breg = _integral(bregman_energy(state.rho, ref.rho, gamma))
    report = RelativeEnergyReport(
        t=float(state.t),
        rel_energy=kinetic + breg,
        q_rel_dissipation=_integral(np.sum(pr.D**2, axis=0)),
        remainder_terms=tuple(float(v) for v in _remainder_terms(pr, gamma)),
        kinetic=kinetic,
        bregman=breg,
    )
    return report if e0 is None else report.with_ratio(e0)


def relative_energy_direct(state, ref, params: Params, rho_bound: float | None = None) -> float:
    """Un-rearranged remainder of the relative energy inequality.

    Sums the transport term ``integral rho (ubar - u) . grad wbar . (w - wbar)``
    and the four pressure-side integrals before they are regrouped; equals
    ``sum(relative_energy(...).remainder_terms)`` up to quadrature error.
    """
    _check_pair(state, ref)
    _check_reference(ref, params.rho_floor if rho_bound is None else rho_bound)
    gamma = params.gamma
    pr = _Pair(state, ref, gamma)
    u = pr.w - pr.gp
    lin = _integral(pr.rho * np.einsum("j...,i...,ij...->...", pr.ub - u, pr.W, pr.G))
    i1 = _integral(pr.sr * _dot(pr.W, pr.D))
    i2 = _integral(pr.sr * _dot(pr.wb, pr.D))
    i3 = -_integral(np.sqrt(pr.rho / pr.rb) * _dot(pr.gqb, pr.D))
    i4 = _integral((pr.rho - pr.rb) * pressure_derivative(pr.rb, gamma) * sp.div(pr.rb * pr.ub))
    return lin + i1 + i2 + i3 + i4


# ----------------------------------------------------------------------------
# Gronwall and Jensen


@dataclass(frozen=True)
class GronwallResult:
    rate: float
    passed: bool
    mode: str
    margin: float
    min_rate: float
    ref_norms: tuple[float, ...] = field(default_factory=tuple)
    max_rel_energy: float = math.nan


def gronwall_check(
    reports: Sequence[RelativeEnergyReport],
    ref_norms: Sequence[float] = (),
    margin: float = 0.1,
    tol: float = 1e-10,
) -> GronwallResult:
    """Fit ``E(t) ~ E(0) exp(C t)`` and test the envelope ``exp((C + margin) t)``.

    ``C`` is the least-squares slope of ``log(E/E0)`` through the origin.
    When ``E(0) <= tol`` the check runs in coincidence mode and passes iff
    every sample stays ``<= tol``.  ``min_rate`` is the smallest rate whose
    envelope covers all samples.
    """
    if not reports:
        raise ValueError("no relative-energy reports")
    t = np.array([r.t for r in reports], dtype=float) - reports[0].t
    e = np.array([r.rel_energy for r in reports], dtype=float)
    norms = tuple(float(v) for v in ref_norms)
    if e[0] <= tol:
        ok = bool(np.all(e <= tol))
        return GronwallResult(0.0, ok, "coincidence", margin, 0.0, norms, float(e.max()))
    later = t > 0
    if not later.any():
        raise ValueError("need at least one report after the initial time")
    if np.any(e[later] <= 0):
        return GronwallResult(-math.inf, True, "envelope", margin, -math.inf, norms, float(e.max()))
    logs = np.log(e[later] / e[0])
    tt = t[later]
    rate = float(np.sum(tt * logs) / np.sum(tt * tt))
    min_rate = float(np.max(logs / tt))
    passed = bool(np.all(logs <= (rate + margin) * tt))
    return GronwallResult(rate, passed, "envelope", margin, min_rate, norms, float(e.max()))


def jensen_gap(ensemble, alpha: float):
    """Pointwise ``mean(rho_i**alpha) - mean(rho_i)**alpha`` and its integral.

    Evaluated as the ensemble mean of ``f(rho_i) - f(m) - f'(m)(rho_i - m)``
    with ``f(t) = t**alpha`` and ``m`` the pointwise mean, which is the same
    quantity without the cancellation of the two-term form.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    members = [np.asarray(f, dtype=float) for f in ensemble]
    if not members:
        raise ValueError("empty ensemble")
    shape = members[0].shape
    if any(m.shape != shape for m in members):
        raise ValueError("ensemble members must share one grid")
    stack = np.stack(members)
    if np.any(stack < 0):
        raise DomainError("ensemble densities must be >= 0")
    m = np.mean(stack, axis=0)
    # mean of Bregman divergences of t**alpha about the mean; each summand is >= 0
    terms = stack**alpha - m**alpha - alpha * m ** (alpha - 1) * (stack - m)
    gap = np.mean(np.maximum(terms, 0.0), axis=0)
    return gap, _integral(gap)
