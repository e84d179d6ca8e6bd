"""Stationary droplets: residual, Newton-CG solver and pseudo-arclength continuation.

The stationary equation in the rotating frame is

    mu*phi = -lap(phi) + i*omega*(y*d_x - x*d_y)(phi) + sigma*ln|phi|^2 |phi|^2 phi + (V + iW)*phi

and the solvers work on ``F(phi) = rhs - mu*phi``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .errors import ConvergenceError, DivergenceError, StagnationError, StepSizeUnderflow
from .grid import Grid2, gradient, integrate, laplacian
from .linalg import make_preconditioner, pack, pcg, unpack
from .potential import ModelParams, PotentialFields, build_pt_hog, require_positive_sigma

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-300
# a converged field this much smaller than its seed is the trivial root phi = 0
TRIVIAL_FRACTION = 1e-6
COMPONENT_NAMES = {1: "one-component", 2: "two-component", 3: "three-component", 4: "four-component"}


# ---------------------------------------------------------------------------
# pointwise pieces


def _log_rho(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    live = rho >= RHO_FLOOR
    lg = np.zeros_like(rho)
    np.log(rho, out=lg, where=live)
    return lg, live


def log_nonlinearity(phi: np.ndarray, sigma: float) -> np.ndarray:
    """``sigma*ln(|phi|^2)|phi|^2 phi``, zero where ``|phi|^2`` underflows."""
    rho = np.abs(phi) ** 2
    lg, live = _log_rho(rho)
    return np.where(live, sigma * lg * rho, 0.0) * phi


def linearised_coefficients(phi: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``(g1, g2)`` of ``delta -> g1*delta + g2*conj(delta)``.

    ``g1 = sigma|phi|^2 (2 ln|phi|^2 + 1)`` and ``g2 = sigma phi^2 (ln|phi|^2 + 1)``.
    """
    rho = np.abs(phi) ** 2
    lg, live = _log_rho(rho)
    g1 = np.where(live, sigma * rho * (2 * lg + 1), 0.0)
    g2 = np.where(live, sigma * (lg + 1), 0.0) * phi**2
    return g1, g2


def rotation_term(grid: Grid2, f: np.ndarray, omega: float) -> np.ndarray:
    """``i*omega*(y*d_x f - x*d_y f)``."""
    if omega == 0:
        return np.zeros_like(f, dtype=complex)
    X, Y = grid.mesh()
    fx, fy = gradient(grid, f)
    return 1j * omega * (Y * fx - X * fy)


def apply_linear_part(grid: Grid2, fields: PotentialFields, omega: float, f: np.ndarray,
                      conj_potential: bool = False) -> np.ndarray:
    w = -fields.w if conj_potential else fields.w
    return -laplacian(grid, f) + rotation_term(grid, f, omega) + (fields.v + 1j * w) * f


def residual(grid: Grid2, fields: PotentialFields, p: ModelParams, phi: np.ndarray) -> np.ndarray:
    require_positive_sigma(p)
    return (apply_linear_part(grid, fields, p.omega, phi)
            + log_nonlinearity(phi, p.sigma) - p.mu * phi)


def param_derivative(grid: Grid2, p: ModelParams, phi: np.ndarray, name: str) -> np.ndarray:
    """Partial derivative of the residual with respect to ``mu`` or ``omega``."""
    if name == "mu":
        return -phi
    if name == "omega":
        return rotation_term(grid, phi, 1.0)
    raise ValueError(f"cannot sweep parameter {name!r}")


class Jacobian:
    """Frechet derivative of the residual at ``phi`` and its real-inner-product adjoint.

    ``J d = L1 d + g2 conj(d)`` with ``L1 = H_rot + g1 - mu``; the adjoint is
    ``J^T r = L1^H r + g2 conj(r)``. ``H_rot`` is self-adjoint apart from ``iW``.
    """

    def __init__(self, grid: Grid2, fields: PotentialFields, p: ModelParams, phi: np.ndarray):
        self.grid, self.fields, self.p = grid, fields, p
        self.g1, self.g2 = linearised_coefficients(phi, p.sigma)

    def __call__(self, d: np.ndarray) -> np.ndarray:
        return (apply_linear_part(self.grid, self.fields, self.p.omega, d)
                + (self.g1 - self.p.mu) * d + self.g2 * np.conj(d))

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return (apply_linear_part(self.grid, self.fields, self.p.omega, r, conj_potential=True)
                + (self.g1 - self.p.mu) * r + self.g2 * np.conj(r))


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class StationaryState:
    grid: Grid2
    phi: np.ndarray = field(repr=False)
    params: ModelParams
    norm: float
    residual_inf: float
    family_tag: str = ""
    stability: Optional[str] = None
    iterations: int = 0

    def with_stability(self, verdict: str) -> "StationaryState":
        return replace(self, stability=verdict)


def count_components(grid: Grid2, phi: np.ndarray, fraction: float = 0.5) -> int:
    """Number of local maxima of ``|phi|^2`` above ``fraction*max``."""
    rho = np.abs(phi) ** 2
    peak = rho.max()
    if peak == 0:
        return 0
    local = ndimage.maximum_filter(rho, size=3, mode="wrap") == rho
    return int(np.count_nonzero(local & (rho >= fraction * peak)))


def family_tag(grid: Grid2, phi: np.ndarray) -> str:
    n = count_components(grid, phi)
    return COMPONENT_NAMES.get(n, f"{n}-component")


def make_state(grid, fields, p, phi, iterations=0) -> StationaryState:
    res = residual(grid, fields, p, phi)
    return StationaryState(
        grid=grid, phi=phi, params=p,
        norm=integrate(grid, np.abs(phi) ** 2, check=False),
        residual_inf=float(np.abs(res).max()),
        family_tag=family_tag(grid, phi),
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Newton-CG


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    inner_rtol: float = 1e-3
    inner_maxiter: int = 3000
    preconditioner: str = "oscillator"
    precond_shift: Optional[float] = None
    max_backtracks: int = 8
    divergence_window: int = 3


def _precond_shift(p: ModelParams, opts: NewtonOptions) -> float:
    return opts.precond_shift if opts.precond_shift is not None else max(abs(p.mu), 1.0)


def _gauge_fix(d: np.ndarray, phi: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Remove the phase-rotation component so that ``Re<i*ref, d> = 0``."""
    den = np.vdot(ref, phi).real
    if den == 0:
        return d
    alpha = np.vdot(1j * ref, d).real / den
    return d - alpha * 1j * phi


def _solve_normal(jac: Jacobian, rhs: np.ndarray, minv, rtol: float, maxiter: int):
    """Least-squares Newton correction: ``J^T M^-1 J d = J^T M^-1 rhs`` by PCG."""
    shape = rhs.shape

    def a(v):
        d = unpack(v, shape)
        return pack(jac.adjoint(minv(jac(d))))

    def m(v):
        return pack(minv(unpack(v, shape)))

    b = pack(jac.adjoint(minv(rhs)))
    x, it, rel = pcg(a, b, m, rtol=rtol, maxiter=maxiter)
    return unpack(x, shape), it, rel


def newton_cg_solve(grid: Grid2, seed: np.ndarray, p: ModelParams,
                    fields: PotentialFields | None = None,
                    opts: NewtonOptions | None = None) -> StationaryState:
    """Solve the stationary equation from ``seed`` at fixed ``mu`` and ``omega``."""
    opts = opts or NewtonOptions()
    require_positive_sigma(p)
    seed = np.asarray(seed, dtype=complex)
    if seed.shape != grid.shape:
        raise ValueError(f"seed shape {seed.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(seed)):
        raise ValueError("seed contains non-finite values")
    if not np.any(seed):
        raise ValueError("seed is identically zero")
    fields = fields if fields is not None else build_pt_hog(grid, p)
    minv = make_preconditioner(grid, opts.preconditioner, _precond_shift(p, opts))

    phi = seed.copy()
    ref = seed
    seed_norm = np.linalg.norm(seed)
    F = residual(grid, fields, p, phi)
    rinf = float(np.abs(F).max())
    r2 = float(np.linalg.norm(F))
    best = rinf
    growth = 0
    for it in range(opts.max_iter + 1):
        if rinf < opts.tol:
            if np.linalg.norm(phi) < TRIVIAL_FRACTION * seed_norm:
                raise ConvergenceError("Newton iteration collapsed onto the trivial solution",
                                       iterations=it, best_residual=best)
            return make_state(grid, fields, p, phi, iterations=it)
        if it == opts.max_iter:
            break
        jac = Jacobian(grid, fields, p, phi)
        d, n_inner, rel = _solve_normal(jac, -F, minv, opts.inner_rtol, opts.inner_maxiter)
        d = _gauge_fix(d, phi, ref)
        step = 1.0
        for _ in range(opts.max_backtracks + 1):
            trial = phi + step * d
            Ft = residual(grid, fields, p, trial)
            r2t = float(np.linalg.norm(Ft))
            if r2t < r2:
                break
            step *= 0.5
        grew = r2t >= r2
        phi, F, r2 = trial, Ft, r2t
        rinf = float(np.abs(F).max())
        best = min(best, rinf)
        log.debug("newton it=%d |F|inf=%.3e step=%.3g cg=%d rel=%.1e", it + 1, rinf, step, n_inner, rel)
        growth = growth + 1 if grew else 0
        if growth >= opts.divergence_window or not np.isfinite(rinf):
            raise DivergenceError("Newton iteration diverged", iterations=it + 1, best_residual=best)
    raise ConvergenceError("Newton iteration limit reached", iterations=opts.max_iter, best_residual=best)


def seed_from_linear(spec, mode_index: int, amplitude: float) -> np.ndarray:
    """``amplitude * Phi_mode`` from a :class:`~qdrop2d.linspec.LinearSpectrum`."""
    if not 0 <= mode_index < len(spec.eigenmodes):
        raise IndexError(f"mode_index {mode_index} outside spectrum of {len(spec.eigenmodes)} modes")
    return amplitude * spec.eigenmodes[mode_index]


# ---------------------------------------------------------------------------
# bordered Newton (one extra scalar unknown plus one scalar constraint)


def _solve_bordered(jac: Jacobian, fp: np.ndarray, gphi: np.ndarray, gp: float,
                    rhs_f: np.ndarray, rhs_g: float, minv, rtol: float, maxiter: int):
    """Least-squares solve of ``[[J, fp], [gphi^T, gp]] (d, dq) = (rhs_f, rhs_g)``.

    ``gphi^T d`` means ``Re<gphi, d>``. The constraint row is scaled to unit norm.
    """
    shape = rhs_f.shape
    scale = 1.0 / max(math.sqrt(np.vdot(gphi, gphi).real + gp * gp), 1e-300)
    gphi, gp, rhs_g = gphi * scale, gp * scale, rhs_g * scale
    minv_fp = minv(fp)
    dq_diag = np.vdot(fp, minv_fp).real + gp * gp

    def forward(d, dq):
        return jac(d) + fp * dq, np.vdot(gphi, d).real + gp * dq

    def transpose(r1, r2):
        return jac.adjoint(r1) + gphi * r2, np.vdot(fp, r1).real + gp * r2

    def a(v):
        d, dq = unpack(v, shape, 1)
        r1, r2 = forward(d, dq[0])
        t1, t2 = transpose(minv(r1), r2)
        return pack(t1, t2)

    def m(v):
        d, dq = unpack(v, shape, 1)
        return pack(minv(d), dq[0] / dq_diag)

    t1, t2 = transpose(minv(rhs_f), rhs_g)
    x, it, rel = pcg(a, pack(t1, t2), m, rtol=rtol, maxiter=maxiter)
    d, dq = unpack(x, shape, 1)
    return d, float(dq[0]), it, rel


def _with_param(p: ModelParams, name: str, value: float) -> ModelParams:
    return replace(p, **{name: value})


def bordered_newton(grid: Grid2, fields: PotentialFields, p: ModelParams, phi0: np.ndarray,
                    name: str, constraint: Callable, opts: NewtonOptions, ref: np.ndarray):
    """Solve ``F(phi, q) = 0`` together with ``constraint(phi, q) = 0``.

    ``constraint`` returns ``(g, gphi, gq)``: the value and its derivatives with
    respect to ``phi`` (real inner product) and the swept parameter ``q``.
    Returns ``(phi, q, iterations)``.
    """
    phi = phi0.copy()
    q = getattr(p, name)
    pq = _with_param(p, name, q)
    F = residual(grid, fields, pq, phi)
    g = constraint(phi, q)[0]
    best = float(np.abs(F).max())
    growth = 0
    merit = math.hypot(float(np.linalg.norm(F)), g)
    for it in range(opts.max_iter + 1):
        rinf = float(np.abs(F).max())
        if rinf < opts.tol and abs(g) < opts.tol:
            return phi, q, it
        if it == opts.max_iter:
            break
        jac = Jacobian(grid, fields, pq, phi)
        minv = make_preconditioner(grid, opts.preconditioner, _precond_shift(pq, opts))
        _, gphi, gq = constraint(phi, q)
        fp = param_derivative(grid, pq, phi, name)
        d, dq, n_inner, rel = _solve_bordered(jac, fp, gphi, gq, -F, -g, minv,
                                              opts.inner_rtol, opts.inner_maxiter)
        d = _gauge_fix(d, phi, ref)
        step = 1.0
        for _ in range(opts.max_backtracks + 1):
            phit, qt = phi + step * d, q + step * dq
            pt = _with_param(p, name, qt)
            Ft = residual(grid, fields, pt, phit)
            gt = constraint(phit, qt)[0]
            mt = math.hypot(float(np.linalg.norm(Ft)), gt)
            if mt < merit:
                break
            step *= 0.5
        grew = mt >= merit
        phi, q, pq, F, g, merit = phit, qt, pt, Ft, gt, mt
        best = min(best, float(np.abs(F).max()))
        log.debug("bordered it=%d %s=%.8f |F|inf=%.3e g=%.1e step=%.3g cg=%d",
                  it + 1, name, q, np.abs(F).max(), g, step, n_inner)
        growth = growth + 1 if grew else 0
        if growth >= opts.divergence_window or not np.isfinite(merit):
            raise DivergenceError("bordered Newton diverged", iterations=it + 1, best_residual=best)
    raise ConvergenceError("bordered Newton iteration limit reached",
                           iterations=opts.max_iter, best_residual=best)


def solve_at_norm(grid: Grid2, seed: np.ndarray, p: ModelParams, target_norm: float,
                  fields: PotentialFields | None = None,
                  opts: NewtonOptions | None = None) -> StationaryState:
    """Solve for ``(phi, mu)`` with the norm pinned to ``target_norm``.

    Used to land on a family at a chosen point without knowing its ``mu``.
    """
    opts = opts or NewtonOptions()
    fields = fields if fields is not None else build_pt_hog(grid, p)
    dA = grid.dA

    def constraint(phi, q):
        return dA * np.vdot(phi, phi).real - target_norm, 2 * dA * phi, 0.0

    phi, mu, it = bordered_newton(grid, fields, p, np.asarray(seed, dtype=complex), "mu",
                                  constraint, opts, ref=seed)
    return make_state(grid, fields, replace(p, mu=mu), phi, iterations=it)


# ---------------------------------------------------------------------------
# continuation


@dataclass
class ContinuationOptions:
    ds: float = 0.05
    ds_min: float = 1e-4
    ds_max: float = 0.5
    max_points: int = 400
    direction: int = 1
    min_norm: float = 1e-3
    stop_at_fold: bool = False
    refine_folds: int = 3
    fast_iterations: int = 3
    slow_iterations: int = 6
    newton: NewtonOptions = field(default_factory=lambda: NewtonOptions(max_iter=15))


@dataclass
class FamilyPoint:
    param: float
    norm: float
    state: StationaryState
    stable: Optional[bool] = None


@dataclass
class FamilyCurve:
    swept: str
    points: list = field(default_factory=list)
    folds: list = field(default_factory=list)
    termination: str = ""

    @property
    def fold(self) -> Optional[float]:
        return self.folds[0] if self.folds else None

    def params(self) -> np.ndarray:
        return np.array([pt.param for pt in self.points])

    def norms(self) -> np.ndarray:
        return np.array([pt.norm for pt in self.points])


def _weighted_norm(dA, dphi, dq):
    return math.sqrt(dA * np.vdot(dphi, dphi).real + dq * dq)


def _initial_tangent(grid, fields, state, name, opts):
    """Tangent ``(a, 1)`` with ``J a = -dF/dq``, normalised."""
    p = state.params
    jac = Jacobian(grid, fields, p, state.phi)
    minv = make_preconditioner(grid, opts.preconditioner, _precond_shift(p, opts))
    fp = param_derivative(grid, p, state.phi, name)
    a, _, _ = _solve_normal(jac, -fp, minv, 1e-8, 20 * opts.inner_maxiter)
    a = _gauge_fix(a, state.phi, state.phi)
    nrm = _weighted_norm(grid.dA, a, 1.0)
    return a / nrm, 1.0 / nrm


def _fold_location(s: np.ndarray, q: np.ndarray) -> float:
    """Extremum of the parabola through three ``(s, q)`` samples."""
    c2, c1, c0 = np.polyfit(s, q, 2)
    if c2 == 0:
        return float(q[1])
    s_star = -c1 / (2 * c2)
    return float(c0 + c1 * s_star + c2 * s_star**2)


def _arclength_step(grid, fields, base, sweep, phi, q, tphi, tq, ds, nopts):
    dA = grid.dA
    phi_pred = phi + ds * tphi
    q_pred = q + ds * tq

    def constraint(f, qq):
        g = dA * np.vdot(tphi, f - phi_pred).real + tq * (qq - q_pred)
        return g, dA * tphi, tq

    return bordered_newton(grid, fields, _with_param(base, sweep, q_pred), phi_pred, sweep,
                           constraint, nopts, ref=phi)


def _refine_fold(grid, fields, base, sweep, phi_a, p_a, phi_b, q_b, seg, opts, guess):
    """Re-walk the segment ``a -> b`` around a fold with finer arclength steps.

    Each level splits the step in four, walks until the swept parameter turns,
    and restarts from the last point before the turn. Returns the parabolic
    extremum from the finest level, or ``guess`` if refinement fails.
    """
    dA = grid.dA
    q_a = getattr(p_a, sweep)
    fold = guess
    for _ in range(opts.refine_folds):
        d_phi, d_q = phi_b - phi_a, q_b - q_a
        length = _weighted_norm(dA, d_phi, d_q)
        tphi, tq = d_phi / length, d_q / length
        h = seg / 4.0
        pts = [(0.0, phi_a, q_a)]
        s_acc = 0.0
        phi, q = phi_a, q_a
        try:
            for _ in range(16):
                nphi, nq, _ = _arclength_step(grid, fields, base, sweep, phi, q, tphi, tq, h,
                                              opts.newton)
                step = _weighted_norm(dA, nphi - phi, nq - q)
                ntphi, ntq = (nphi - phi) / step, (nq - q) / step
                s_acc += step
                pts.append((s_acc, nphi, nq))
                if ntq * tq < 0 and len(pts) >= 3:
                    break
                phi, q, tphi, tq = nphi, nq, ntphi, ntq
            else:
                return fold
        except (ConvergenceError, DivergenceError, StagnationError):
            return fold
        s3 = np.array([t[0] for t in pts[-3:]])
        q3 = np.array([t[2] for t in pts[-3:]])
        fold = _fold_location(s3, q3)
        _, phi_a, q_a = pts[-3]
        _, phi_b, q_b = pts[-2]
        seg = s3[1] - s3[0]
    return fold


def continue_family(grid: Grid2, start: StationaryState, sweep: str, target: float,
                    opts: ContinuationOptions | None = None,
                    fields: PotentialFields | None = None,
                    stability: Callable[[StationaryState], bool] | None = None) -> FamilyCurve:
    """Pseudo-arclength continuation of ``start`` in ``mu`` or ``omega``.

    The predictor is the secant (the first step uses the linearised tangent,
    oriented by ``opts.direction``); the corrector is a bordered Newton-CG
    solve with the arclength constraint. Turning points of the swept parameter
    are located by a parabolic fit in arclength and recorded in ``folds``.
    Stops when the parameter reaches ``target``, the norm collapses below
    ``opts.min_norm``, after the first fold if ``opts.stop_at_fold``, or after
    ``opts.max_points`` points.
    """
    opts = opts or ContinuationOptions()
    if sweep not in ("mu", "omega"):
        raise ValueError("sweep must be 'mu' or 'omega'")
    fields = fields if fields is not None else build_pt_hog(grid, start.params)
    nopts = opts.newton
    dA = grid.dA

    curve = FamilyCurve(swept=sweep)

    def record(state):
        stable = stability(state) if stability is not None else None
        curve.points.append(FamilyPoint(getattr(state.params, sweep), state.norm, state, stable))

    record(start)
    arc = [0.0]
    tphi, tq = _initial_tangent(grid, fields, start, sweep, nopts)
    sign = 1.0 if opts.direction >= 0 else -1.0
    tphi, tq = sign * tphi, sign * tq
    phi, q = start.phi, getattr(start.params, sweep)
    q0 = q
    heading_up = target >= q0
    ds = opts.ds

    while len(curve.points) < opts.max_points:
        phi_pred = phi + ds * tphi
        q_pred = q + ds * tq

        def constraint(f, qq, tphi=tphi, tq=tq, phi_pred=phi_pred, q_pred=q_pred):
            g = dA * np.vdot(tphi, f - phi_pred).real + tq * (qq - q_pred)
            return g, dA * tphi, tq

        p_pred = _with_param(start.params, sweep, q_pred)
        try:
            new_phi, new_q, iters = bordered_newton(grid, fields, p_pred, phi_pred, sweep,
                                                    constraint, nopts, ref=phi)
        except (ConvergenceError, DivergenceError, StagnationError) as exc:
            ds *= 0.5
            log.debug("corrector failed (%s); ds -> %.2e", exc, ds)
            if ds < opts.ds_min:
                raise StepSizeUnderflow("continuation step underflow", param=q, ds=ds) from exc
            continue

        if np.vdot(phi, new_phi).real < 0:
            # sign flip: the step went through the trivial solution, so the family has ended
            curve.termination = "norm-collapse"
            return curve
        new_state = make_state(grid, fields, _with_param(start.params, sweep, new_q), new_phi, iters)
        dphi, dq = new_phi - phi, new_q - q
        step_len = _weighted_norm(dA, dphi, dq)
        new_tphi, new_tq = dphi / step_len, dq / step_len
        record(new_state)
        arc.append(arc[-1] + step_len)
        log.info("%s=%.6f N=%.6f ds=%.3g it=%d", sweep, new_q, new_state.norm, ds, iters)

        if tq * new_tq < 0 and len(curve.points) >= 3:
            s3 = np.array(arc[-3:])
            q3 = np.array([pt.param for pt in curve.points[-3:]])
            fold = _fold_location(s3, q3)
            if opts.refine_folds:
                prev = curve.points[-3].state
                fold = _refine_fold(grid, fields, start.params, sweep, prev.phi,
                                    prev.params, phi, q, arc[-2] - arc[-3], opts, fold)
            curve.folds.append(fold)
            log.info("fold near %s=%.6f", sweep, curve.folds[-1])
            if opts.stop_at_fold:
                curve.termination = "fold"
                return curve
        phi, q, tphi, tq = new_phi, new_q, new_tphi, new_tq

        if new_state.norm < opts.min_norm:
            curve.termination = "norm-collapse"
            return curve
        if (heading_up and q >= target) or (not heading_up and q <= target):
            curve.termination = "target"
            return curve

        if iters <= opts.fast_iterations:
            ds = min(ds * 1.5, opts.ds_max)
        elif iters >= opts.slow_iterations:
            ds = max(ds * 0.5, opts.ds_min)
    curve.termination = "max-points"
    return curve
