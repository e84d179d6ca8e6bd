"""Krylov helpers shared by the stationary, linear-spectrum and BdG solvers.

Complex fields are handled by the nonlinear solvers as real vectors
``[Re f, Im f]`` (plus optional bordering scalars) because the Jacobian of the
logarithmic nonlinearity contains ``conj(delta)`` and is only R-linear.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .errors import StagnationError
from .grid import Grid2


def pack(f: np.ndarray, *extra: float) -> np.ndarray:
    flat = f.ravel()
    return np.concatenate([flat.real, flat.imag, np.asarray(extra, dtype=float)])


def unpack(v: np.ndarray, shape: tuple[int, int], n_extra: int = 0):
    n = shape[0] * shape[1]
    f = (v[:n] + 1j * v[n : 2 * n]).reshape(shape)
    if n_extra == 0:
        return f
    return f, v[2 * n : 2 * n + n_extra]


class FourierPreconditioner:
    """Apply ``(c - lap)^(-1)``; diagonal in Fourier space."""

    def __init__(self, grid: Grid2, c: float):
        if c <= 0:
            raise ValueError("preconditioner shift must be positive")
        self.grid = grid
        self.c = float(c)
        self._inv = 1.0 / (self.c + grid.k2)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return sfft.ifft2(self._inv * sfft.fft2(f))


class OscillatorPreconditioner:
    """Apply ``(c - lap + x^2 + y^2)^(-1)`` exactly.

    The operator is a Kronecker sum of two 1D spectral oscillators, so it is
    diagonalised by their (real orthogonal) eigenvector matrices.
    """

    def __init__(self, grid: Grid2, c: float):
        if c <= 0:
            raise ValueError("preconditioner shift must be positive")
        self.grid = grid
        self.c = float(c)
        ex, self._qx = _oscillator_1d(grid.x, grid.kx)
        ey, self._qy = _oscillator_1d(grid.y, grid.ky)
        self._inv = 1.0 / (ex[:, None] + ey[None, :] + self.c)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        qx, qy = self._qx, self._qy
        g = qx.T @ f @ qy
        g *= self._inv
        return qx @ g @ qy.T


def second_derivative_matrix(k: np.ndarray) -> np.ndarray:
    n = len(k)
    return np.real(sfft.ifft(-(k**2)[:, None] * sfft.fft(np.eye(n), axis=0), axis=0))


def first_derivative_matrix(k: np.ndarray) -> np.ndarray:
    n = len(k)
    sym = np.array(k, dtype=float)
    sym[n // 2] = 0.0
    return np.real(sfft.ifft(1j * sym[:, None] * sfft.fft(np.eye(n), axis=0), axis=0))


def _oscillator_1d(x: np.ndarray, k: np.ndarray):
    a = -second_derivative_matrix(k) + np.diag(x**2)
    a = 0.5 * (a + a.T)
    return np.linalg.eigh(a)


def make_preconditioner(grid: Grid2, kind: str, c: float):
    if kind == "fourier":
        return FourierPreconditioner(grid, c)
    if kind == "oscillator":
        return OscillatorPreconditioner(grid, c)
    raise ValueError(f"unknown preconditioner {kind!r}")


def pcg(apply_a, b: np.ndarray, apply_m=None, *, rtol: float = 1e-3, maxiter: int = 2000,
        x0: np.ndarray | None = None, stall_window: int = 200):
    """Preconditioned conjugate gradients for a symmetric positive (semi)definite operator.

    Returns ``(x, n_iter, relative_residual)``; at ``maxiter`` the last iterate
    is returned and the caller judges it. Raises :class:`StagnationError` if the
    residual has not improved over ``stall_window`` iterations.
    """
    if apply_m is None:
        apply_m = lambda v: v  # noqa: E731
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_a(x) if x0 is not None else b.copy()
    z = apply_m(r)
    p = z.copy()
    rz = r @ z
    best = np.linalg.norm(r) / bnorm
    best_it = it = 0
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        pap = p @ ap
        if pap <= 0:
            # semidefinite operator: direction in the null space, nothing left to gain
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rel = np.linalg.norm(r) / bnorm
        if rel < best:
            best, best_it = rel, it
        if rel <= rtol:
            return x, it, rel
        if it - best_it > stall_window:
            raise StagnationError("inner CG stagnated", iterations=it, best_residual=best)
        z = apply_m(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, float(np.linalg.norm(r) / bnorm)
