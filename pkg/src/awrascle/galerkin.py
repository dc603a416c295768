"""Real trigonometric Galerkin space X_n and density-weighted mass matrices.

The one-dimensional basis on ``[0, 1)`` is::

    phi_0 = 1,  phi_{2m-1} = sqrt(2) cos(2 pi m x),  phi_{2m} = sqrt(2) sin(2 pi m x)

for ``m = 1..n``; X_n is spanned by tensor products, so it has
``(2n + 1)**dim`` members.  All integrals are grid quadratures (mean over
the collocation points), under which the basis is exactly orthonormal as
long as ``n < points / 2``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

__all__ = [
    "GalerkinBasis",
    "MassMatrix",
    "MassMatrixError",
    "basis_for",
    "assemble_mass_matrix",
    "DENSE_MODE_LIMIT",
    "DENSE_SIZE_LIMIT",
]

DENSE_MODE_LIMIT = 32
DENSE_SIZE_LIMIT = 3000


class MassMatrixError(np.linalg.LinAlgError):
    """The weighted Gram matrix is not numerically positive definite."""


def _tables_1d(points, n):
    x = np.arange(points) / points
    m = np.arange(1, n + 1)
    arg = 2 * np.pi * np.outer(x, m)
    size = 2 * n + 1
    B = np.empty((points, size))
    dB = np.empty((points, size))
    B[:, 0] = 1.0
    dB[:, 0] = 0.0
    root2 = np.sqrt(2.0)
    B[:, 1::2] = root2 * np.cos(arg)
    B[:, 2::2] = root2 * np.sin(arg)
    dB[:, 1::2] = -root2 * 2 * np.pi * m * np.sin(arg)
    dB[:, 2::2] = root2 * 2 * np.pi * m * np.cos(arg)
    freq = np.zeros(size, dtype=int)
    freq[1::2] = m
    freq[2::2] = m
    return B, dB, freq


def _contract(arr, mats, lead):
    """Apply ``mats[a]`` along axis ``lead + a`` of ``arr`` for every spatial axis."""
    for ax, mat in enumerate(mats):
        arr = np.moveaxis(np.tensordot(mat, arr, axes=([1], [lead + ax])), 0, lead + ax)
    return arr


class GalerkinBasis:
    """Tensor trigonometric basis sampled on a ``points**dim`` grid.

    Parameters
    ----------
    dim : int
        Spatial dimension.
    points : int
        Grid points per axis.
    n : int
        Highest retained frequency per axis.

    Coefficient arrays have shape ``(2n+1,)*dim`` (one scalar field) or
    ``(k,) + (2n+1,)*dim`` for ``k`` stacked fields.
    """

    def __init__(self, dim: int, points: int, n: int):
        if not 1 <= n < points / 2:
            raise ValueError(f"n = {n} needs 1 <= n < points/2 = {points / 2}")
        self.dim = dim
        self.points = points
        self.n = n
        self.B, self.dB, self.freq = _tables_1d(points, n)
        self.width = 2 * n + 1
        self.mode_shape = (self.width,) * dim
        self.size = self.width**dim
        self.grid_shape = (points,) * dim
        k2 = 0
        for ax in range(dim):
            s = [1] * dim
            s[ax] = self.width
            k2 = k2 + ((2 * np.pi * self.freq) ** 2).reshape(s)
        self.stiffness = np.broadcast_to(k2, self.mode_shape).copy()

    def _lead(self, arr, trailing):
        lead = arr.ndim - self.dim
        if lead < 0 or arr.shape[lead:] != trailing:
            raise ValueError(f"expected trailing shape {trailing}, got {arr.shape}")
        return lead

    def synthesize(self, coeffs, deriv: int | None = None) -> np.ndarray:
        """Grid values of ``sum c_i phi_i`` (or its derivative along ``deriv``)."""
        coeffs = np.asarray(coeffs, dtype=float)
        lead = self._lead(coeffs, self.mode_shape)
        mats = [self.dB if ax == deriv else self.B for ax in range(self.dim)]
        return _contract(coeffs, mats, lead)

    def analyze(self, values, deriv: int | None = None) -> np.ndarray:
        """Quadrature moments ``<f, phi_i>`` (or ``<f, d_deriv phi_i>``)."""
        values = np.asarray(values, dtype=float)
        lead = self._lead(values, self.grid_shape)
        mats = [(self.dB if ax == deriv else self.B).T for ax in range(self.dim)]
        return _contract(values, mats, lead) / self.points**self.dim

    def project(self, values) -> np.ndarray:
        """L2-orthogonal projection P_n of grid values onto X_n."""
        return self.synthesize(self.analyze(values))

    def gradient(self, coeffs) -> np.ndarray:
        """Exact gradient of a Galerkin field, shape ``(dim,) + coeffs.shape[:-dim] + grid``."""
        return np.stack([self.synthesize(coeffs, deriv=ax) for ax in range(self.dim)])

    def weighted_matrix(self, weight) -> np.ndarray:
        """Dense Gram matrix ``A_ij = <weight phi_i, phi_j>`` of size ``(size, size)``."""
        weight = np.asarray(weight, dtype=float)
        BB = self.B[:, :, None] * self.B[:, None, :]
        T = weight
        for _ in range(self.dim):
            T = np.tensordot(T, BB, axes=([0], [0]))
        # axes are now (a1, i1, a2, i2, ...); regroup rows and columns
        order = list(range(0, 2 * self.dim, 2)) + list(range(1, 2 * self.dim, 2))
        A = T.transpose(order).reshape(self.size, self.size)
        return A / self.points**self.dim

    def weighted_diagonal(self, weight) -> np.ndarray:
        weight = np.asarray(weight, dtype=float)
        return _contract(weight, [(self.B**2).T] * self.dim, 0).reshape(-1) / self.points**self.dim


@lru_cache(maxsize=16)
def basis_for(dim: int, points: int, n: int) -> GalerkinBasis:
    return GalerkinBasis(dim, points, n)


class MassMatrix:
    """Density-weighted Gram matrix ``A_ij = integral rho phi_i phi_j`` on X_n.

    Below :data:`DENSE_MODE_LIMIT` modes per axis and :data:`DENSE_SIZE_LIMIT`
    unknowns the matrix is assembled and Cholesky-factored.  Larger systems
    stay matrix-free and are solved by preconditioned conjugate gradients with
    the diagonal as preconditioner.

    :meth:`solve` accepts a ``shift`` for ``(A + shift K)`` where ``K`` is the
    diagonal stiffness matrix ``integral grad phi_i . grad phi_j``.
    """

    def __init__(self, basis: GalerkinBasis, rho, dense: bool | None = None):
        self.basis = basis
        self.rho = np.asarray(rho, dtype=float)
        if dense is None:
            dense = basis.n <= DENSE_MODE_LIMIT and basis.size <= DENSE_SIZE_LIMIT
        self.dense = dense
        self._matrix = basis.weighted_matrix(self.rho) if dense else None
        self._factors: dict[float, tuple] = {}

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = self.basis.weighted_matrix(self.rho)
        return self._matrix

    @property
    def shape(self):
        return (self.basis.size, self.basis.size)

    def matvec(self, c) -> np.ndarray:
        """``A c`` for coefficient arrays of shape ``(..., *mode_shape)``."""
        b = self.basis
        return b.analyze(self.rho * b.synthesize(c))

    def diagonal(self) -> np.ndarray:
        return self.basis.weighted_diagonal(self.rho)

    def min_eigenvalue(self) -> float:
        return float(scipy.linalg.eigvalsh(self.matrix, subset_by_index=[0, 0])[0])

    def symmetry_error(self) -> float:
        A = self.matrix
        return float(np.abs(A - A.T).max() / max(np.abs(A).max(), 1e-300))

    def _factor(self, shift):
        if shift not in self._factors:
            A = self._matrix + shift * np.diag(self.basis.stiffness.reshape(-1))
            try:
                self._factors[shift] = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                lam = float(scipy.linalg.eigvalsh(A, subset_by_index=[0, 0])[0])
                raise MassMatrixError(
                    f"mass matrix lost positive definiteness: min eigenvalue {lam:.3e}, "
                    f"min rho {self.rho.min():.3e}"
                ) from None
        return self._factors[shift]

    def solve(self, rhs, shift: float = 0.0, rtol: float = 1e-13) -> np.ndarray:
        """Solve ``(A + shift K) c = rhs`` for one or several stacked right sides."""
        rhs = np.asarray(rhs, dtype=float)
        b = self.basis
        lead = rhs.shape[: rhs.ndim - b.dim]
        flat = rhs.reshape(-1, b.size).T
        if self.dense:
            sol = scipy.linalg.cho_solve(self._factor(float(shift)), flat, check_finite=False)
        else:
            sol = np.column_stack([self._cg(col, shift, rtol) for col in flat.T])
        return sol.T.reshape(lead + b.mode_shape)

    def _cg(self, rhs, shift, rtol):
        b = self.basis
        k = b.stiffness.reshape(-1)
        diag = self.diagonal() + shift * k
        if diag.min() <= 0:
            raise MassMatrixError(f"non-positive diagonal entry {diag.min():.3e}")

        def apply(v):
            return self.matvec(v.reshape(b.mode_shape)).reshape(-1) + shift * k * v

        op = scipy.sparse.linalg.LinearOperator(self.shape, matvec=apply, dtype=float)
        pre = scipy.sparse.linalg.LinearOperator(self.shape, matvec=lambda v: v / diag, dtype=float)
        x, info = scipy.sparse.linalg.cg(op, rhs, rtol=rtol, atol=0.0, M=pre, maxiter=10 * b.size)
        if info != 0:
            raise MassMatrixError(f"mass-matrix CG did not converge (info={info})")
        return x


def assemble_mass_matrix(rho, n: int, dense: bool | None = None) -> MassMatrix:
    """Weighted Gram matrix of X_n for the density grid field ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise ValueError("rho contains NaN or Inf")
    if rho.min() <= 0:
        idx = np.unravel_index(int(np.argmin(rho)), rho.shape)
        raise MassMatrixError(f"rho must be positive; got {rho[idx]:.3e} at grid index {idx}")
    points = rho.shape[0]
    if any(s != points for s in rho.shape):
        raise ValueError(f"grid must be cubic, got {rho.shape}")
    mm = MassMatrix(basis_for(rho.ndim, points, n), rho, dense=dense)
    if mm.dense:
        mm._factor(0.0)
    return mm
