"""Density-only limit: degenerate (porous-medium) diffusion in one dimension.

With w = 0 and no regularisation the continuity equation reduces to
rho_t = (rho p'(rho) rho_x)_x.  The spectral solution on 64 points is
compared with a fine explicit finite-difference solution.
"""
import numpy as np

from awrascle import Params, State, run

gamma, amp, t_end = 2.0, 0.5, 0.01
x = np.arange(64) / 64
params = Params(gamma=gamma, grid_points=64, dim=1, n_modes=1, dt=1e-5, t_end=t_end)
spectral = run(State(0.0, 1 + amp * np.sin(2 * np.pi * x), np.zeros((1, 64)), gamma), params).final.rho

fine = 1024
xf = np.arange(fine) / fine
rho = 1 + amp * np.sin(2 * np.pi * xf)
dx = 1 / fine
steps = int(np.ceil(t_end / (0.4 * dx**2 / (gamma * (1 + amp) ** gamma))))
h = t_end / steps
for _ in range(steps):
    phi = gamma / (gamma + 1) * rho ** (gamma + 1)
    rho = rho + h * (np.roll(phi, -1) - 2 * phi + np.roll(phi, 1)) / dx**2

err = np.linalg.norm(spectral - rho[:: fine // 64]) / np.linalg.norm(rho[:: fine // 64])
print(f"relative L2 difference at t = {t_end}: {err:.2e}")
print(f"mass: spectral {spectral.mean():.15f}, finite difference {rho.mean():.15f}")
