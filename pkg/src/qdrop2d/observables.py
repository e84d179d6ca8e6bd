"""Diagnostics of a wave function: norm, quasi-energy, power flow, winding, shape."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .grid import Grid2, gradient, integrate
from .potential import ModelParams, PotentialFields
from .stationary import RHO_FLOOR, rotation_term

WINDING_SAMPLES = 720
WINDING_MAX_RESIDUAL = 0.25


class ContourError(ValueError):
    """The winding contour passes through a zero or the winding is ambiguous."""


def norm(grid: Grid2, psi: np.ndarray) -> float:
    return integrate(grid, np.abs(psi) ** 2, check=False)


def quasi_energy(grid: Grid2, psi: np.ndarray, fields: PotentialFields, p: ModelParams) -> complex:
    """``int |grad psi|^2 + (V + iW)|psi|^2 + (sigma/4)(2 ln|psi|^2 - 1)|psi|^4``.

    For ``omega != 0`` the rotating-frame term ``int conj(psi) i omega (y d_x - x d_y) psi``
    is added, which makes the functional conserved by the rotating-frame flow.
    """
    rho = np.abs(psi) ** 2
    gx, gy = gradient(grid, psi)
    lg = np.zeros_like(rho)
    np.log(rho, out=lg, where=rho >= RHO_FLOOR)
    dens = (np.abs(gx) ** 2 + np.abs(gy) ** 2 + fields.v * rho
            + 0.25 * p.sigma * (2 * lg - 1) * rho**2)
    e = integrate(grid, dens, check=False) + 1j * integrate(grid, fields.w * rho, check=False)
    if p.omega != 0:
        e += grid.dA * np.vdot(psi, rotation_term(grid, psi, p.omega))
    return complex(e)


def poynting(grid: Grid2, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Power-flow density ``S = (i/2)(phi grad conj(phi) - conj(phi) grad phi) = Im(conj(phi) grad phi)``."""
    gx, gy = gradient(grid, phi)
    return np.imag(np.conj(phi) * gx), np.imag(np.conj(phi) * gy)


def divergence(grid: Grid2, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    return gradient(grid, fx)[0] + gradient(grid, fy)[1]


def continuity_residual(grid: Grid2, phi: np.ndarray, fields: PotentialFields,
                        omega: float = 0.0) -> np.ndarray:
    """``div S - W|phi|^2 - (omega/2)(y d_x - x d_y)|phi|^2`` for a stationary state.

    This is the imaginary part of ``conj(phi)`` times the stationary equation,
    so it vanishes (to discretisation error) on any solution: power flows from
    gain (``W > 0``) to loss regions.
    """
    rho = np.abs(phi) ** 2
    res = divergence(grid, *poynting(grid, phi)) - fields.w * rho
    if omega != 0:
        X, Y = grid.mesh()
        rx, ry = gradient(grid, rho)
        res = res - 0.5 * omega * (Y * rx - X * ry)
    return res


class Winding(NamedTuple):
    charge: int
    residual: float


def _bilinear(grid: Grid2, f: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Periodic bilinear interpolation of ``f`` at the points ``(xs, ys)``."""
    u = (xs - grid.x[0]) / grid.dx
    v = (ys - grid.y[0]) / grid.dy
    i0 = np.floor(u).astype(int)
    j0 = np.floor(v).astype(int)
    a, b = u - i0, v - j0
    i0, j0 = i0 % grid.nx, j0 % grid.ny
    i1, j1 = (i0 + 1) % grid.nx, (j0 + 1) % grid.ny
    return ((1 - a) * (1 - b) * f[i0, j0] + a * (1 - b) * f[i1, j0]
            + (1 - a) * b * f[i0, j1] + a * b * f[i1, j1])


def winding(grid: Grid2, phi: np.ndarray, radius: float, center=(0.0, 0.0),
            samples: int = WINDING_SAMPLES, floor: float = 1e-8) -> Winding:
    """Phase winding of ``phi`` counterclockwise around a circle.

    Raises :class:`ContourError` if ``|phi|`` on the contour drops below
    ``floor * max|phi|`` or the accumulated phase is further than 0.25 from
    an integer multiple of ``2 pi``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    t = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    z = _bilinear(grid, phi, center[0] + radius * np.cos(t), center[1] + radius * np.sin(t))
    scale = np.abs(phi).max()
    if scale == 0 or np.abs(z).min() < floor * scale:
        raise ContourError(f"contour of radius {radius} crosses a zero of the field")
    total = np.sum(np.angle(np.roll(z, -1) * np.conj(z))) / (2 * np.pi)
    m = int(round(total))
    res = abs(total - m)
    if res > WINDING_MAX_RESIDUAL:
        raise ContourError(f"ambiguous winding {total:.3f}")
    return Winding(m, float(res))


def asymmetry(grid: Grid2, phi: np.ndarray) -> float:
    """``|| |phi(r)| - |phi(-r)| ||_2 / ||phi||_2`` over grid points whose mirror is on the grid."""
    a = np.abs(phi)
    total = math.sqrt(np.sum(a**2))
    if total == 0:
        return 0.0
    mask = grid.mirror_mask()
    diff = (a - np.abs(grid.mirror(phi)))[mask]
    return float(np.sqrt(np.sum(diff**2)) / total)


@dataclass(frozen=True)
class Component:
    centroid: tuple[float, float]
    peak: float
    area: float
    norm: float


def contour_components(grid: Grid2, psi: np.ndarray, fraction: float = 0.5) -> list[Component]:
    """Connected regions of ``|psi|^2 >= fraction * max|psi|^2``.

    Regions are labelled with 8-connectivity and joined across the periodic
    box edges. ``norm`` is the integral of ``|psi|^2`` over the region itself.
    Components are sorted by centroid ``x`` then ``y``.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rho = np.abs(psi) ** 2
    peak = rho.max()
    if peak == 0:
        return []
    labels, n = ndimage.label(rho >= fraction * peak, structure=np.ones((3, 3), dtype=int))
    labels = _join_periodic(labels)
    out = []
    X, Y = grid.mesh()
    for lab in np.unique(labels[labels > 0]):
        sel = labels == lab
        w = rho[sel]
        # circular mean keeps a region that straddles the box edge in one piece
        cx = _periodic_mean(X[sel], w, grid.lx)
        cy = _periodic_mean(Y[sel], w, grid.ly)
        out.append(Component((cx, cy), float(w.max()), float(sel.sum() * grid.dA),
                             float(w.sum() * grid.dA)))
    return sorted(out, key=lambda c: c.centroid)


def _join_periodic(labels: np.ndarray) -> np.ndarray:
    labels = labels.copy()
    for a, b in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for la, lb in zip(a, b):
            if la and lb and la != lb:
                labels[labels == lb] = la
                a[a == lb] = la
                b[b == lb] = la
    return labels


def _periodic_mean(x: np.ndarray, w: np.ndarray, half: float) -> float:
    ang = np.pi * x / half
    c = np.sum(w * np.exp(1j * ang)) / np.sum(w)
    return float(np.angle(c) * half / np.pi)


def assign_norms(grid: Grid2, psi: np.ndarray, centroids) -> list[float]:
    """Split ``int |psi|^2`` among the given centroids by nearest-centroid cells."""
    X, Y = grid.mesh()
    pts = np.asarray(centroids, dtype=float)
    if pts.size == 0:
        return []
    d2 = (X[..., None] - pts[:, 0]) ** 2 + (Y[..., None] - pts[:, 1]) ** 2
    owner = np.argmin(d2, axis=-1)
    rho = np.abs(psi) ** 2
    return [float(rho[owner == k].sum() * grid.dA) for k in range(len(pts))]


@dataclass(frozen=True)
class Diagnostics:
    t: float
    n: float
    quasi_energy: complex
    peak: float
    com: tuple[float, float]
    asymmetry: float


def diagnostics(grid: Grid2, psi: np.ndarray, fields: PotentialFields, p: ModelParams,
                t: float = 0.0) -> Diagnostics:
    rho = np.abs(psi) ** 2
    n = integrate(grid, rho, check=False)
    X, Y = grid.mesh()
    if n > 0:
        com = (integrate(grid, X * rho, check=False) / n, integrate(grid, Y * rho, check=False) / n)
    else:
        com = (0.0, 0.0)
    return Diagnostics(t, n, quasi_energy(grid, psi, fields, p), float(rho.max()), com,
                       asymmetry(grid, psi))
