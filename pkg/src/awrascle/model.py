"""Constitutive functions of the multi-dimensional Aw-Rascle system.

The cost (velocity offset) is a power law ``p(rho) = rho**gamma`` and the
actual velocity is ``u = w + grad p(rho)``.  Everything here is a pure
function of scalars or numpy arrays; fields are plain ``ndarray`` values
sampled on a :class:`~awrascle.spectral.Torus` grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "Params",
    "pressure",
    "pressure_derivative",
    "internal_energy",
    "q_flux",
    "q_flux_derivative",
    "rho_truncated",
    "velocity_from",
    "bregman_energy",
]


class DomainError(ValueError):
    """Raised when a field leaves the admissible set of a constitutive law."""


@dataclass(frozen=True)
class Params:
    """Model and scheme parameters.

    ``n_modes`` defaults to ``grid_points // 3``.  Invalid combinations raise
    ``ValueError`` at construction.
    """

    gamma: float
    grid_points: int
    dt: float
    t_end: float
    epsilon: float = 0.0
    delta: float = 0.0
    kappa: float = 0.0
    n_modes: int | None = None
    dim: int = 2
    rho_floor: float = 1e-8
    picard_tol: float = 1e-9
    picard_max_iter: int = 50
    lp_moments: tuple[float, ...] = field(default=(2.0, 4.0))

    def __post_init__(self):
        if self.n_modes is None:
            object.__setattr__(self, "n_modes", max(1, self.grid_points // 3))
        object.__setattr__(self, "lp_moments", tuple(float(p) for p in self.lp_moments))
        for problem in self.violations():
            raise ValueError(problem)

    def violations(self) -> list[str]:
        """Return a description of every violated constraint (empty if valid)."""
        out = []
        if not np.isfinite(self.gamma) or self.gamma < 1:
            out.append(f"gamma = {self.gamma}: the power law p(rho) = rho**gamma requires gamma >= 1")
        for name in ("epsilon", "delta", "kappa"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                out.append(f"{name} = {v}: must be >= 0")
        if self.dim not in (1, 2, 3):
            out.append(f"dim = {self.dim}: must be 1, 2 or 3")
        if self.n_modes < 1:
            out.append(f"n_modes = {self.n_modes}: must be >= 1")
        if self.grid_points < 2 * self.n_modes:
            out.append(
                f"grid_points = {self.grid_points} < 2*n_modes = {2 * self.n_modes}: "
                "the Galerkin projection would not be representable"
            )
        if not self.dt > 0:
            out.append(f"dt = {self.dt}: must be > 0")
        if not self.t_end > 0:
            out.append(f"t_end = {self.t_end}: must be > 0")
        if not 0 < self.rho_floor < 1:
            out.append(f"rho_floor = {self.rho_floor}: must lie in (0, 1)")
        if not self.picard_tol > 0:
            out.append(f"picard_tol = {self.picard_tol}: must be > 0")
        if self.picard_max_iter < 1:
            out.append(f"picard_max_iter = {self.picard_max_iter}: must be >= 1")
        if any(p < 1 for p in self.lp_moments):
            out.append(f"lp_moments = {self.lp_moments}: exponents must be >= 1")
        return out

    @property
    def gamma_is_one(self) -> bool:
        # gamma = 1 sits outside the existence theorem (gamma > 1); runs are tagged
        return self.gamma == 1


def _check_nonnegative(rho, what="rho"):
    rho = np.asarray(rho, dtype=float)
    bad = ~(rho >= 0)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), rho.shape) if rho.ndim else ()
        raise DomainError(f"{what} must be finite and >= 0; got {rho[idx]!r} at grid index {idx}")
    return rho


def pressure(rho, gamma):
    """Cost function ``p(rho) = rho**gamma``."""
    return _check_nonnegative(rho) ** gamma


def pressure_derivative(rho, gamma):
    """``p'(rho) = gamma * rho**(gamma - 1)``."""
    rho = _check_nonnegative(rho)
    if gamma == 1:
        return np.ones_like(rho)
    return gamma * rho ** (gamma - 1)


def internal_energy(rho, gamma):
    """``E(rho) = rho**(gamma+1) / (gamma+1)``, the primitive of p vanishing at 0."""
    return _check_nonnegative(rho) ** (gamma + 1) / (gamma + 1)


def q_flux(rho, gamma):
    r"""Primitive of :math:`\sqrt{\rho}\,p'(\rho)` anchored at ``Q(0) = 0``.

    Equals ``2 gamma / (2 gamma + 1) * rho**(gamma + 1/2)``.
    """
    rho = _check_nonnegative(rho)
    return 2 * gamma / (2 * gamma + 1) * rho ** (gamma + 0.5)


def q_flux_derivative(rho, gamma):
    """``Q'(rho) = sqrt(rho) * p'(rho)``."""
    rho = _check_nonnegative(rho)
    return gamma * rho ** (gamma - 0.5)


def rho_truncated(rho, kappa):
    """Truncated density ``sqrt(rho^2+k^2) / (1 + k sqrt(rho^2+k^2))``.

    Bounded by ``1/kappa`` for ``kappa > 0`` and equal to ``rho`` for
    ``kappa = 0``.
    """
    if kappa < 0:
        raise DomainError(f"kappa must be >= 0, got {kappa}")
    rho = _check_nonnegative(rho)
    if kappa == 0:
        return rho.copy() if isinstance(rho, np.ndarray) else rho
    s = np.sqrt(rho * rho + kappa * kappa)
    return s / (1 + kappa * s)


def velocity_from(w, grad_p):
    """Actual velocity ``u = w + grad p(rho)`` for stacked vector fields."""
    w = np.asarray(w, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    if w.shape != grad_p.shape:
        raise ValueError(f"dimension mismatch: w has shape {w.shape}, grad p has shape {grad_p.shape}")
    return w + grad_p


def bregman_energy(rho, rho_ref, gamma):
    """Pointwise ``E(rho) - E(rho_ref) - p(rho_ref) (rho - rho_ref)``.

    Non-negative for ``gamma >= 1``.  The ``gamma = 1`` case is returned in
    the cancellation-free form ``(rho - rho_ref)**2 / 2``; other exponents
    accumulate the three terms in extended precision.
    """
    rho = _check_nonnegative(rho)
    rho_ref = _check_nonnegative(rho_ref, "rho_ref")
    if gamma == 1:
        return 0.5 * (rho - rho_ref) ** 2
    r = np.asarray(rho, dtype=np.longdouble)
    rb = np.asarray(rho_ref, dtype=np.longdouble)
    g = np.longdouble(gamma)
    out = (r ** (g + 1) - rb ** (g + 1)) / (g + 1) - rb**g * (r - rb)
    # roundoff can leave tiny negatives where rho == rho_ref
    return np.maximum(out.astype(float), 0.0)
