"""Uniform periodic 2D grid with spectral derivatives and quadrature.

Fields are plain ``numpy`` arrays of shape ``(nx, ny)`` indexed as
``f[j, k] ~ f(x_j, y_k)``; a :class:`Grid2` carries everything needed to
differentiate or integrate them.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft


class EdgeDecayWarning(UserWarning):
    """Field is not negligible on the boundary ring of the periodic box."""


EDGE_DECAY_RATIO = 1e-8


@dataclass(frozen=True)
class Grid2:
    nx: int
    ny: int
    lx: float
    ly: float
    x: np.ndarray = field(repr=False, compare=False)
    y: np.ndarray = field(repr=False, compare=False)
    kx: np.ndarray = field(repr=False, compare=False)
    ky: np.ndarray = field(repr=False, compare=False)

    @property
    def dx(self) -> float:
        return 2.0 * self.lx / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def dA(self) -> float:
        return self.dx * self.dy

    @cached_property
    def _mesh(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        X.setflags(write=False)
        Y.setflags(write=False)
        return X, Y

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X, Y)`` of shape ``(nx, ny)`` (read-only)."""
        return self._mesh

    @cached_property
    def dkx(self) -> np.ndarray:
        """First-derivative symbol along x (Nyquist entry zeroed)."""
        return _odd_symbol(self.kx)

    @cached_property
    def dky(self) -> np.ndarray:
        return _odd_symbol(self.ky)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky = np.meshgrid(self.kx, self.ky, indexing="ij")
        return kx**2 + ky**2

    def mirror(self, f: np.ndarray) -> np.ndarray:
        """Return ``f(-r)`` sampled on the grid.

        Index 0 (coordinate ``-lx``) has no mirror partner inside the box; it
        is mapped onto itself and callers comparing mirror pairs should skip
        the first row and column (see :meth:`mirror_mask`).
        """
        return np.roll(f[::-1, ::-1], 1, axis=(0, 1))

    def mirror_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[0, :] = False
        mask[:, 0] = False
        return mask


def make_grid(nx: int, ny: int, lx: float, ly: float) -> Grid2:
    """Build the grid on ``[-lx, lx) x [-ly, ly)``.

    >>> g = make_grid(128, 128, 8.0, 8.0)
    >>> g.dx
    0.125
    """
    for name, n in (("nx", nx), ("ny", ny)):
        if int(n) != n or n < 16 or n % 2:
            raise ValueError(f"{name} must be an even integer >= 16, got {n!r}")
    for name, half in (("lx", lx), ("ly", ly)):
        if not np.isfinite(half) or half <= 0:
            raise ValueError(f"{name} must be a positive finite half-width, got {half!r}")
    nx, ny, lx, ly = int(nx), int(ny), float(lx), float(ly)
    dx, dy = 2 * lx / nx, 2 * ly / ny
    x = -lx + dx * np.arange(nx)
    y = -ly + dy * np.arange(ny)
    kx = 2 * np.pi * sfft.fftfreq(nx, d=dx)
    ky = 2 * np.pi * sfft.fftfreq(ny, d=dy)
    for a in (x, y, kx, ky):
        a.setflags(write=False)
    return Grid2(nx, ny, lx, ly, x, y, kx, ky)


def fft2(f: np.ndarray) -> np.ndarray:
    return sfft.fft2(f)


def ifft2(f: np.ndarray) -> np.ndarray:
    return sfft.ifft2(f)


def laplacian(grid: Grid2, f: np.ndarray) -> np.ndarray:
    return sfft.ifft2(-grid.k2 * sfft.fft2(f))


def _odd_symbol(k: np.ndarray) -> np.ndarray:
    # Nyquist mode dropped so that real fields have real first derivatives
    out = np.array(k, dtype=float)
    out[len(k) // 2] = 0.0
    return out


def gradient(grid: Grid2, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fh = sfft.fft2(f)
    fx = sfft.ifft2(1j * grid.dkx[:, None] * fh)
    fy = sfft.ifft2(1j * grid.dky[None, :] * fh)
    return fx, fy


def check_edge_decay(grid: Grid2, f: np.ndarray, ratio: float = EDGE_DECAY_RATIO) -> float:
    """Warn when the boundary ring carries more than ``ratio`` of the peak.

    Returns the measured ratio.
    """
    a = np.abs(f)
    peak = a.max()
    if peak == 0:
        return 0.0
    ring = max(a[0, :].max(), a[-1, :].max(), a[:, 0].max(), a[:, -1].max())
    measured = float(ring / peak)
    if measured > ratio:
        warnings.warn(
            f"field does not decay at the box edge (edge/peak = {measured:.2e}); "
            "periodic images may alias",
            EdgeDecayWarning,
            stacklevel=2,
        )
    return measured


def integrate(grid: Grid2, f: np.ndarray, *, check: bool = True) -> float:
    """Rectangle-rule quadrature ``dx*dy*sum(f)`` of a real-valued field."""
    f = np.asarray(f)
    if np.iscomplexobj(f):
        raise TypeError("integrate expects a real-valued field")
    if check:
        check_edge_decay(grid, f)
    return float(grid.dA * f.sum())
