"""Time evolution in the rotating frame by second-order operator splitting.

One step of length ``dt`` is

    local(dt/2) . [x-sweep(dt/2) . y-sweep(dt) . x-sweep(dt/2)] . local(dt/2)

The local factor integrates ``i psi_t = (sigma ln|psi|^2 |psi|^2 + V + iW) psi``
exactly: the density grows as ``exp(2 W t)`` and the phase integral of the
logarithmic term has a closed form. The kinetic plus rotation part is split by
direction; ``-d_x^2 + i omega y d_x`` is diagonal in the mixed ``(k_x, y)``
representation and ``-d_y^2 - i omega x d_y`` in ``(x, k_y)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import SimulationBlowup
from .grid import Grid2
from .observables import Component, contour_components, diagnostics
from .potential import ModelParams, PotentialFields, exact_droplet
from .stationary import RHO_FLOOR, StationaryState

log = logging.getLogger(__name__)

OVERLAP_WARN = 1e-3


class SplitStepPropagator:
    """Precomputed factors for steps of fixed length ``dt``."""

    def __init__(self, grid: Grid2, fields: PotentialFields, p: ModelParams, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.fields, self.p, self.dt = grid, fields, p, float(dt)
        X, Y = grid.mesh()
        kx, ky = grid.kx[:, None], grid.ky[None, :]
        dkx, dky = grid.dkx[:, None], grid.dky[None, :]
        om = p.omega
        if om == 0:
            self._kin = np.exp(-1j * dt * grid.k2)
        else:
            self._xhalf = np.exp(-0.5j * dt * (kx**2 - om * Y * dkx))
            self._yfull = np.exp(-1j * dt * (ky**2 + om * X * dky))

    def kinetic(self, psi: np.ndarray) -> np.ndarray:
        if self.p.omega == 0:
            return sfft.ifft2(self._kin * sfft.fft2(psi))
        psi = sfft.ifft(self._xhalf * sfft.fft(psi, axis=0), axis=0)
        psi = sfft.ifft(self._yfull * sfft.fft(psi, axis=1), axis=1)
        return sfft.ifft(self._xhalf * sfft.fft(psi, axis=0), axis=0)

    def local(self, psi: np.ndarray, tau: float) -> np.ndarray:
        return local_flow(psi, self.fields, self.p.sigma, tau)

    def step(self, psi: np.ndarray) -> np.ndarray:
        h = 0.5 * self.dt
        return self.local(self.kinetic(self.local(psi, h)), h)

    def advance(self, psi: np.ndarray, nsteps: int, t0: float = 0.0) -> np.ndarray:
        """``nsteps`` steps, merging adjacent local half-steps into full ones."""
        if nsteps <= 0:
            return psi
        h = 0.5 * self.dt
        psi = self.local(psi, h)
        for k in range(nsteps):
            psi = self.kinetic(psi)
            psi = self.local(psi, self.dt if k < nsteps - 1 else h)
            if not np.isfinite(psi).all():
                t = t0 + (k + 1) * self.dt
                raise SimulationBlowup(f"non-finite field at t={t:.6g}", t=t)
        return psi


def local_flow(psi: np.ndarray, fields: PotentialFields, sigma: float, tau: float) -> np.ndarray:
    """Exact solution of ``i psi_t = (sigma ln|psi|^2 |psi|^2 + V + iW) psi`` after time ``tau``."""
    rho0 = np.abs(psi) ** 2
    a = 2.0 * fields.w
    growth = np.exp(a * tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(a != 0, np.expm1(a * tau) / np.where(a != 0, a, 1.0), tau)
    lg = np.zeros_like(rho0)
    live = rho0 >= RHO_FLOOR
    np.log(rho0, out=lg, where=live)
    # integral of rho ln(rho) over the sub-step, rho = rho0 * exp(a t)
    phase_int = np.where(live, rho0 * ((lg - 1.0) * e + tau * growth), 0.0)
    return psi * np.sqrt(growth) * np.exp(-1j * (fields.v * tau + sigma * phase_int))


def step(grid: Grid2, psi: np.ndarray, p: ModelParams, fields: PotentialFields, dt: float) -> np.ndarray:
    """One Strang step; see :class:`SplitStepPropagator` for repeated steps."""
    out = SplitStepPropagator(grid, fields, p, dt).step(psi)
    if not np.isfinite(out).all():
        raise SimulationBlowup(f"non-finite field at t={dt:.6g}", t=dt)
    return out


@dataclass
class EvolutionRun:
    initial: np.ndarray = field(repr=False)
    params: ModelParams
    dt: float
    t_final: float
    snapshot_stride: int
    frames: list = field(default_factory=list, repr=False)
    diagnostics: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([d.t for d in self.diagnostics])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics])


def perturb(psi: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """``psi * (1 + amplitude * (xi + i eta))`` with ``xi, eta`` uniform on ``[-1, 1]``."""
    xi = rng.uniform(-1.0, 1.0, psi.shape) + 1j * rng.uniform(-1.0, 1.0, psi.shape)
    return psi * (1.0 + amplitude * xi)


def evolve(grid: Grid2, psi0: np.ndarray, p: ModelParams, fields: PotentialFields, dt: float,
           t_final: float, snapshot_every: float = 0.25, noise: float = 0.0,
           rng: np.random.Generator | None = None, keep_frames: bool = True) -> EvolutionRun:
    """Evolve ``psi0`` to ``t_final`` recording diagnostics every ``snapshot_every``.

    ``dt`` is adjusted down so that a whole number of steps fits between
    snapshots. With ``noise > 0`` the initial field is multiplied by
    ``1 + noise * (xi + i eta)`` (uniform random ``xi``, ``eta``) first.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    if not dt > 0 or not snapshot_every > 0:
        raise ValueError("dt and snapshot_every must be positive")
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != grid.shape:
        raise ValueError(f"field shape {psi.shape} does not match grid {grid.shape}")
    if noise > 0:
        psi = perturb(psi, noise, rng if rng is not None else np.random.default_rng(0))
    stride = max(1, math.ceil(snapshot_every / dt - 1e-9))
    dt = snapshot_every / stride
    n_frames = math.ceil(t_final / snapshot_every - 1e-9)
    prop = SplitStepPropagator(grid, fields, p, dt)
    run = EvolutionRun(psi.copy(), p, dt, n_frames * snapshot_every, stride)

    def record(t, f):
        run.diagnostics.append(diagnostics(grid, f, fields, p, t))
        if keep_frames:
            run.frames.append((t, f.copy()))

    record(0.0, psi)
    for k in range(n_frames):
        t0 = k * snapshot_every
        psi = prop.advance(psi, stride, t0)
        record(t0 + snapshot_every, psi)
    return run


def track_peaks(grid: Grid2, frame: np.ndarray, level_fraction: float = 0.5) -> list[Component]:
    return contour_components(grid, frame, level_fraction)


def collision_ic(grid: Grid2, p: ModelParams, a: float, b: float, r0=(3.0, 0.0),
                 extra: StationaryState | None = None) -> np.ndarray:
    """``a [phi1(r - r0) + phi1(r + r0)] + b phi(r)`` with ``phi1`` the exact droplet.

    ``phi`` comes from ``extra`` and is required when ``b != 0``. Warns when
    the two displaced droplets overlap by more than ``1e-3`` of the peak.
    """
    if b != 0 and extra is None:
        raise ValueError("b != 0 needs a stationary state for the central droplet")
    r0 = (float(r0[0]), float(r0[1]))
    left = exact_droplet(grid, p.w0, (-r0[0], -r0[1]))
    right = exact_droplet(grid, p.w0, r0)
    overlap = float(np.max(np.abs(left) * np.abs(right)))
    if a != 0 and overlap > OVERLAP_WARN:
        log.warning("displaced droplets overlap: max |phi1(r-r0) phi1(r+r0)| = %.2e", overlap)
    psi = a * (left + right)
    if b != 0:
        if extra.grid.shape != grid.shape:
            raise ValueError("extra state lives on a different grid")
        psi = psi + b * extra.phi
    return psi


@dataclass
class CollisionReport:
    counts: list
    times: np.ndarray
    collision_time: float
    merged_at: float | None
    separated_at: float | None
    recovery_time: float | None
    input_peaks: list
    output_peaks: list
    input_norms: list
    output_norms: list

    @property
    def sequence(self) -> list:
        """Component counts with consecutive repeats removed."""
        out = []
        for c in self.counts:
            if not out or out[-1] != c:
                out.append(c)
        return out

    def shape_errors(self) -> tuple[float, float]:
        """Worst relative change of per-component peak and norm at recovery."""
        if self.recovery_time is None or len(self.output_peaks) != len(self.input_peaks):
            return math.inf, math.inf
        pk = max(abs(o / i - 1) for i, o in zip(self.input_peaks, self.output_peaks))
        nm = max(abs(o / i - 1) for i, o in zip(self.input_norms, self.output_norms))
        return pk, nm

    def elastic(self, tol: float = 0.1) -> bool:
        return max(self.shape_errors()) <= tol


def collision_report(grid: Grid2, run: EvolutionRun, fraction: float = 0.5) -> CollisionReport:
    """Component counts per frame and shape recovery after the collision.

    The collision time is the frame of largest peak density (constructive
    interference). ``merged_at`` is the first frame with fewer components than
    the input and ``separated_at`` the first later frame with the input count
    again. Recovery is measured at the frame after the collision, with the
    input count, where the components are furthest apart; per-component norms
    are split by nearest centroid.
    """
    from .observables import assign_norms

    comps = [track_peaks(grid, f, fraction) for _, f in run.frames]
    counts = [len(c) for c in comps]
    times = np.array([t for t, _ in run.frames])
    n0 = counts[0]
    kc = int(np.argmax(run.series("peak")))
    merged = next((k for k, c in enumerate(counts) if c < n0), None)
    sep = None
    if merged is not None:
        sep = next((k for k in range(merged, len(counts)) if counts[k] == n0), None)
    in_peaks = [c.peak for c in comps[0]]
    in_norms = assign_norms(grid, run.frames[0][1], [c.centroid for c in comps[0]])
    out_peaks, out_norms, krec = [], [], None
    later = [k for k in range(kc + 1, len(counts)) if counts[k] == n0]
    if later:
        krec = max(later, key=lambda j: _spread(comps[j]))
        out_peaks = [c.peak for c in comps[krec]]
        out_norms = assign_norms(grid, run.frames[krec][1], [c.centroid for c in comps[krec]])
    return CollisionReport(counts, times, float(times[kc]),
                           float(times[merged]) if merged is not None else None,
                           float(times[sep]) if sep is not None else None,
                           float(times[krec]) if krec is not None else None,
                           in_peaks, out_peaks, in_norms, out_norms)


def _spread(comps: list[Component]) -> float:
    pts = np.array([c.centroid for c in comps])
    return float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) if len(pts) else 0.0


def peak_variation(run: EvolutionRun) -> float:
    """``max |peak(t) / peak(0) - 1|`` over the recorded diagnostics."""
    pk = run.series("peak")
    return float(np.max(np.abs(pk / pk[0] - 1.0)))


def deviation_growth(grid: Grid2, run: EvolutionRun, state: StationaryState) -> np.ndarray:
    """``||psi(t) - phi exp(-i mu t) e^{i a}||_2`` with the best global phase ``a`` per frame."""
    out = []
    for t, f in run.frames:
        ref = state.phi * np.exp(-1j * state.params.mu * t)
        ov = np.vdot(ref, f)
        rot = ov / abs(ov) if ov != 0 else 1.0
        out.append(math.sqrt(grid.dA) * np.linalg.norm(f - rot * ref))
    return np.array(out)
