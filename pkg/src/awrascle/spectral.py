"""Fourier pseudospectral operators on the unit periodic torus.

Two layers are provided.  :class:`SpectralField` with :func:`to_spectral`,
:func:`to_physical`, :func:`gradient`, :func:`divergence`,
:func:`laplacian`, :func:`project_n` and :func:`mollify` is the explicit
coefficient-space API.  The lowercase helpers (:func:`grad`, :func:`div`,
:func:`lap`, :func:`dealias`, :func:`smooth`, :func:`truncate`) act directly
on real grid arrays through real FFTs and are what the time stepper uses.

Coefficients are normalised so that the zero mode equals the spatial mean,
i.e. ``coeffs = fftn(f) / f.size``.  Odd derivatives drop the Nyquist mode,
which keeps the discrete gradient skew-adjoint on every grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Torus",
    "SpectralField",
    "to_spectral",
    "to_physical",
    "gradient",
    "divergence",
    "laplacian",
    "project_n",
    "mollify",
    "dealias_product",
    "resample",
    "dealias_cutoff",
    "laplacian_symbol",
    "grad",
    "div",
    "lap",
    "dealias",
    "smooth",
    "truncate",
    "inner",
]

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class Torus:
    """Collocation grid ``x_j = j / points`` on ``[0, 1)^dim``."""

    dim: int
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points < 2:
            raise ValueError(f"points must be >= 2, got {self.points}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def spacing(self) -> float:
        return 1.0 / self.points

    @property
    def volume(self) -> float:
        return 1.0

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.points) / self.points
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def integrate(self, f) -> float:
        """Trapezoidal (spectrally exact) integral of a grid field."""
        return float(np.mean(f)) * self.volume

    def check(self, f, components: int | None = None):
        f = np.asarray(f, dtype=float)
        expected = self.shape if components is None else (components,) + self.shape
        if f.shape != expected:
            raise ValueError(f"size mismatch: expected {expected}, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("field contains NaN or Inf")
        return f


# ----------------------------------------------------------------------------
# wavenumber tables


@lru_cache(maxsize=32)
def _full_wavenumbers(shape):
    """Integer wavenumbers per axis in numpy FFT order, broadcastable."""
    d = len(shape)
    out = []
    for ax, n in enumerate(shape):
        k = np.fft.fftfreq(n, 1.0 / n)
        s = [1] * d
        s[ax] = n
        out.append(k.reshape(s))
    return tuple(out)


@lru_cache(maxsize=32)
def _rfft_tables(shape):
    """Real-FFT layout tables: (i 2 pi k per axis, -|2 pi k|^2, |k| per axis)."""
    d = len(shape)
    ks = []
    for ax, n in enumerate(shape):
        if ax == d - 1:
            k = np.fft.rfftfreq(n, 1.0 / n)
        else:
            k = np.fft.fftfreq(n, 1.0 / n)
        s = [1] * d
        s[ax] = k.size
        ks.append(k.reshape(s))
    deriv = []
    for ax, (k, n) in enumerate(zip(ks, shape)):
        kd = k.copy()
        if n % 2 == 0:
            kd[np.abs(kd) == n // 2] = 0.0
        deriv.append(1j * TWO_PI * kd)
    lap_mult = -sum(m.imag**2 for m in deriv)
    absk = [np.abs(k) for k in ks]
    return tuple(deriv), lap_mult, tuple(absk)


@lru_cache(maxsize=64)
def _rfft_mask(shape, n):
    _, _, absk = _rfft_tables(shape)
    mask = True
    for a in absk:
        mask = mask & (a <= n)
    return mask


@lru_cache(maxsize=64)
def _rfft_heat(shape, kappa):
    _, _, absk = _rfft_tables(shape)
    return np.exp(-kappa * sum((TWO_PI * a) ** 2 for a in absk))


def laplacian_symbol(shape) -> np.ndarray:
    """``-|2 pi k|^2`` in the real-FFT layout of a grid of ``shape``."""
    return _rfft_tables(tuple(shape))[1]


def dealias_cutoff(points: int) -> int:
    """Largest retained wavenumber under the 2/3 rule."""
    return points // 3


# ----------------------------------------------------------------------------
# coefficient-space API


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a periodic field (zero mode = mean)."""

    coeffs: np.ndarray
    real: bool = True

    @property
    def shape(self):
        return self.coeffs.shape

    @property
    def dim(self):
        return self.coeffs.ndim

    def wavenumbers(self):
        return _full_wavenumbers(self.shape)

    def is_conjugate_symmetric(self, atol: float = 1e-14) -> bool:
        c = self.coeffs
        flipped = c
        for ax in range(c.ndim):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        return bool(np.allclose(c, np.conj(flipped), rtol=0, atol=atol * max(1.0, np.abs(c).max())))

    def norm(self) -> float:
        """Coefficient l2 norm; equals the discrete L2 norm of the field."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))


def to_spectral(f) -> SpectralField:
    f = np.asarray(f)
    if f.ndim not in (1, 2, 3):
        raise ValueError(f"expected a 1-3 dimensional grid field, got shape {f.shape}")
    real = not np.iscomplexobj(f)
    return SpectralField(np.fft.fftn(f) / f.size, real=real)


def to_physical(F: SpectralField) -> np.ndarray:
    f = np.fft.ifftn(F.coeffs * F.coeffs.size)
    return f.real.copy() if F.real else f


def _odd_multipliers(shape):
    d = len(shape)
    ks = _full_wavenumbers(shape)
    out = []
    for ax in range(d):
        k = ks[ax].copy()
        n = shape[ax]
        if n % 2 == 0:
            k[np.abs(k) == n // 2] = 0.0
        out.append(1j * TWO_PI * k)
    return out


def gradient(F: SpectralField) -> list[SpectralField]:
    """Spectral gradient, one :class:`SpectralField` per axis."""
    return [SpectralField(m * F.coeffs, F.real) for m in _odd_multipliers(F.shape)]


def divergence(V) -> SpectralField:
    V = list(V)
    if len(V) != V[0].dim:
        raise ValueError(f"divergence needs {V[0].dim} components, got {len(V)}")
    mult = _odd_multipliers(V[0].shape)
    return SpectralField(sum(m * v.coeffs for m, v in zip(mult, V)), all(v.real for v in V))


def laplacian(F: SpectralField) -> SpectralField:
    # same truncated wavenumbers as gradient, so div(grad f) == lap(f) exactly
    lap_mult = sum(m.imag**2 for m in _odd_multipliers(F.shape))
    return SpectralField(-lap_mult * F.coeffs, F.real)


def project_n(F: SpectralField, n: int) -> SpectralField:
    """Orthogonal projection onto modes with every ``|k_j| <= n``."""
    half = min(F.shape) // 2
    if not 0 <= n <= half:
        raise ValueError(f"n = {n} out of range [0, {half}]")
    mask = np.ones(F.shape, dtype=bool)
    for k in _full_wavenumbers(F.shape):
        mask = mask & (np.abs(k) <= n)
    return SpectralField(np.where(mask, F.coeffs, 0), F.real)


def mollify(F: SpectralField, kappa: float) -> SpectralField:
    """Heat-kernel smoothing: mode ``k`` is damped by ``exp(-kappa |2 pi k|^2)``."""
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        return F
    k2 = sum((TWO_PI * k) ** 2 for k in _full_wavenumbers(F.shape))
    return SpectralField(np.exp(-kappa * k2) * F.coeffs, F.real)


def resample(f, points: int) -> np.ndarray:
    """Restrict a real grid field to ``points`` per axis by spectral truncation.

    Modes with ``|k_j| < points / 2`` are kept; the coarse Nyquist mode is
    dropped so the result stays real.
    """
    f = np.asarray(f, dtype=float)
    fine = f.shape[0]
    if points > fine:
        raise ValueError(f"cannot restrict {fine} points to {points}")
    k = np.fft.fftfreq(points, 1.0 / points).astype(int)
    keep = np.abs(k) < points / 2
    F = np.fft.fftn(f) / f.size
    C = F[np.ix_(*([k % fine] * f.ndim))]
    mask = keep
    for _ in range(f.ndim - 1):
        mask = np.multiply.outer(mask, keep)
    C = np.where(mask, C, 0)
    return np.fft.ifftn(C * points**f.ndim).real


def dealias_product(a, b) -> np.ndarray:
    """Product of two grid fields under the 2/3 rule.

    Both factors and the result are truncated to ``|k_j| <= points // 3``,
    which makes the result the exact truncated convolution.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    return dealias(dealias(a) * dealias(b))


# ----------------------------------------------------------------------------
# real-array helpers


def _irfft(fh, shape):
    return np.fft.irfftn(fh, s=shape, axes=tuple(range(len(shape))))


def grad(f: np.ndarray) -> np.ndarray:
    """Gradient of a real scalar grid field, stacked as ``(dim, *shape)``."""
    shape = f.shape
    deriv, _, _ = _rfft_tables(shape)
    fh = np.fft.rfftn(f)
    return np.stack([_irfft(m * fh, shape) for m in deriv])


def div(v: np.ndarray) -> np.ndarray:
    """Divergence of a stacked real vector field ``(dim, *shape)``."""
    shape = v.shape[1:]
    if v.shape[0] != len(shape):
        raise ValueError(f"divergence needs {len(shape)} components, got {v.shape[0]}")
    deriv, _, _ = _rfft_tables(shape)
    acc = 0
    for m, comp in zip(deriv, v):
        acc = acc + m * np.fft.rfftn(comp)
    return _irfft(acc, shape)


def lap(f: np.ndarray) -> np.ndarray:
    _, lap_mult, _ = _rfft_tables(f.shape)
    return _irfft(lap_mult * np.fft.rfftn(f), f.shape)


def truncate(f: np.ndarray, n: int) -> np.ndarray:
    """Zero every mode with some ``|k_j| > n`` (real-array form of project_n)."""
    return _irfft(_rfft_mask(f.shape, n) * np.fft.rfftn(f), f.shape)


def dealias(f: np.ndarray) -> np.ndarray:
    return truncate(f, dealias_cutoff(f.shape[0]))


def smooth(f: np.ndarray, kappa: float) -> np.ndarray:
    """Real-array form of :func:`mollify`."""
    if kappa == 0:
        return f
    return _irfft(_rfft_heat(f.shape, float(kappa)) * np.fft.rfftn(f), f.shape)


def inner(f, g) -> float:
    """Discrete L2 inner product on the unit torus (grid mean of ``f g``)."""
    return float(np.mean(np.asarray(f) * np.asarray(g)))
