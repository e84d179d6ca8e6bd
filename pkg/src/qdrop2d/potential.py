"""Complex PT-symmetric harmonic-oscillator-Gaussian potential and the exact droplet."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .grid import Grid2
from .special import erf


@dataclass(frozen=True)
class ModelParams:
    """Model coefficients.

    ``sigma`` is the logarithmic (LHY) nonlinearity strength, ``omega`` the
    rotation frequency, ``v0``/``v1`` shape the real trap and ``w0`` sets the
    gain-loss amplitude. ``mu`` is only read by stationary solvers.

    Negative ``omega`` is accepted: it is the same rotation in the opposite
    sense (mirror ``x <-> y``), and continuation in ``omega`` may cross zero.
    """

    sigma: float = 1.0
    omega: float = 0.0
    v0: float = -1.0 / 16.0
    v1: float = 1.0
    w0: float = 1.0
    mu: float = 2.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{k} must be finite, got {v!r}")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def require_positive_sigma(p: ModelParams) -> None:
    if not p.sigma > 0:
        raise ValueError(f"sigma must be > 0, got {p.sigma}")


@dataclass(frozen=True)
class PotentialFields:
    v: np.ndarray
    w: np.ndarray

    @property
    def complex(self) -> np.ndarray:
        return self.v + 1j * self.w


def build_pt_hog(grid: Grid2, p: ModelParams) -> PotentialFields:
    X, Y = grid.mesh()
    r2 = X**2 + Y**2
    v = r2 * (1.0 + p.v1 * np.exp(-r2)) + p.v0 * (np.exp(-2 * X**2) + np.exp(-2 * Y**2))
    w = p.w0 * (X * np.exp(-X**2) + Y * np.exp(-Y**2))
    return PotentialFields(v=v, w=w)


@dataclass(frozen=True)
class PTReport:
    v_symmetry: float
    w_antisymmetry: float

    def ok(self, tol: float = 1e-12) -> bool:
        return self.v_symmetry < tol and self.w_antisymmetry < tol


def check_pt(grid: Grid2, fields: PotentialFields) -> PTReport:
    """Max violations of ``V(-r) = V(r)`` and ``W(-r) = -W(r)`` over mirror pairs."""
    mask = grid.mirror_mask()
    dv = np.abs(fields.v - grid.mirror(fields.v))[mask]
    dw = np.abs(fields.w + grid.mirror(fields.w))[mask]
    return PTReport(float(dv.max()), float(dw.max()))


def exact_phase(grid: Grid2, w0: float, center=(0.0, 0.0)) -> np.ndarray:
    X, Y = grid.mesh()
    return -(math.sqrt(math.pi) * w0 / 8.0) * (erf(X - center[0]) + erf(Y - center[1]))


def exact_droplet(grid: Grid2, w0: float, center=(0.0, 0.0)) -> np.ndarray:
    """Exact stationary droplet ``exp(-r^2/2 + i*theta)`` with ``|phi|^2 = exp(-r^2)``.

    The phase is ``theta = -(sqrt(pi) w0 / 8) (erf(x) + erf(y))``, whose flux
    ``|phi|^2 grad(theta)`` balances the gain-loss profile exactly. It solves
    the stationary equation only with :func:`exact_params` and ``center = (0, 0)``;
    other centres give the displaced profile used for collision inputs.
    """
    X, Y = grid.mesh()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    return np.exp(-r2 / 2.0 + 1j * exact_phase(grid, w0, center))


def exact_params(sigma: float, w0: float) -> ModelParams:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return ModelParams(sigma=sigma, omega=0.0, v0=-(w0**2) / 16.0, v1=sigma, w0=w0, mu=2.0)
