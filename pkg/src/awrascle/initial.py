"""Initial-data generators and weak-strong perturbations."""
from __future__ import annotations

import numpy as np

from . import spectral as sp
from .galerkin import assemble_mass_matrix, basis_for
from .model import DomainError, Params
from .solver import State

__all__ = ["GENERATORS", "make_initial", "perturb", "galerkin_velocity"]

_COMMON = {"velocity", "w_amplitude"}

GENERATORS = {
    "constant": {"rho"} | _COMMON,
    "gaussian_blob": {"background", "amplitude", "width", "center"} | _COMMON,
    "sine_mixture": {"mean", "amplitudes", "modes"} | _COMMON,
    "random_smooth": {"mean", "amplitude", "kmax"} | _COMMON,
}


def _velocity_vector(options, dim):
    v = options.get("velocity", (0.0,) * dim)
    v = tuple(float(c) for c in np.atleast_1d(v))
    if len(v) != dim:
        raise ValueError(f"velocity needs {dim} components, got {len(v)}")
    return v


def _shear(x, dim, amplitude):
    # w_l = a sin(2 pi x_{l+1}); divergence-free for dim > 1
    return [amplitude * np.sin(2 * np.pi * x[(l + 1) % dim]) for l in range(dim)]


def _random_field(rng, x, kmax, count=8):
    f = np.zeros_like(x[0])
    for _ in range(count):
        k = rng.integers(-kmax, kmax + 1, size=len(x))
        phase = rng.uniform(0, 2 * np.pi)
        f = f + rng.normal() * np.cos(2 * np.pi * sum(ki * xi for ki, xi in zip(k, x)) + phase)
    scale = np.abs(f).max()
    return f / scale if scale > 0 else f


def galerkin_velocity(rho, w, n: int) -> np.ndarray:
    """Velocity in X_n carrying the same discrete momentum moments as ``rho w``."""
    b = basis_for(rho.ndim, rho.shape[0], n)
    mm = assemble_mass_matrix(rho, n)
    return b.synthesize(mm.solve(b.analyze(rho * w)))


def make_initial(name: str, params: Params, seed: int | None = None, **options) -> State:
    """Build the initial :class:`State` for generator ``name``.

    Densities are truncated to the 2/3-rule band and must stay positive;
    velocities are mapped into X_n by a density-weighted projection.
    """
    if name not in GENERATORS:
        raise ValueError(f"unknown initial condition {name!r}; choose from {sorted(GENERATORS)}")
    unknown = set(options) - GENERATORS[name]
    if unknown:
        raise ValueError(f"{name} does not accept {sorted(unknown)}")
    dim = params.dim
    torus = sp.Torus(dim, params.grid_points)
    x = torus.coordinates()
    rng = np.random.default_rng(seed)
    v = _velocity_vector(options, dim)
    w_amp = float(options.get("w_amplitude", 0.0))

    if name == "constant":
        rho = np.full(torus.shape, float(options.get("rho", 1.0)))
    elif name == "gaussian_blob":
        center = np.broadcast_to(np.asarray(options.get("center", 0.5), dtype=float), (dim,))
        width = float(options.get("width", 0.1))
        # periodic distance to the centre
        r2 = sum((((xi - c) + 0.5) % 1.0 - 0.5) ** 2 for xi, c in zip(x, center))
        rho = float(options.get("background", 0.5)) + float(options.get("amplitude", 0.5)) * np.exp(
            -r2 / (2 * width**2)
        )
    elif name == "sine_mixture":
        amps = [float(a) for a in np.atleast_1d(options.get("amplitudes", (0.3,)))]
        modes = options.get("modes", [(1,) + (0,) * (dim - 1)] * len(amps))
        if len(modes) != len(amps):
            raise ValueError(f"{len(amps)} amplitudes but {len(modes)} modes")
        rho = np.full(torus.shape, float(options.get("mean", 1.0)))
        for a, k in zip(amps, modes):
            k = tuple(np.atleast_1d(k))
            if len(k) != dim:
                raise ValueError(f"mode {k} needs {dim} components")
            rho = rho + a * np.sin(2 * np.pi * sum(ki * xi for ki, xi in zip(k, x)))
    else:
        kmax = int(options.get("kmax", 3))
        rho = float(options.get("mean", 1.0)) + float(options.get("amplitude", 0.2)) * _random_field(rng, x, kmax)

    if name != "constant":
        rho = sp.dealias(rho)
    if not rho.min() > 0:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(rho)), rho.shape))
        raise DomainError(f"{name} produces rho = {rho[idx]:.3e} <= 0 at grid index {idx}")

    if w_amp == 0:
        w = np.stack([np.full(torus.shape, c) for c in v])
    else:
        if name == "random_smooth":
            kmax = min(int(options.get("kmax", 3)), params.n_modes)
            raw = [v[l] + w_amp * _random_field(rng, x, kmax) for l in range(dim)]
        else:
            raw = [v[l] + s for l, s in enumerate(_shear(x, dim, w_amp))]
        w = galerkin_velocity(rho, np.stack(raw), params.n_modes)
    return State(0.0, rho, w, params.gamma)


def perturb(state: State, amplitude: float, params: Params) -> State:
    """Add ``amplitude sin(2 pi x_1)`` to rho and a low-mode shear to w, then re-floor."""
    x = state.torus.coordinates()
    rho = np.maximum(state.rho + amplitude * np.sin(2 * np.pi * x[0]), params.rho_floor)
    dim = state.dim
    extra = [amplitude * np.cos(2 * np.pi * x[(l + 1) % dim]) for l in range(dim)]
    w = state.w + np.stack(extra)
    return state.at(rho=rho, w=w)
