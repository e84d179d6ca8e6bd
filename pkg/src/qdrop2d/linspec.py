"""Linear non-Hermitian spectrum ``H = -lap + V + iW`` and PT-breaking phase boundary."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SolverError
from .grid import Grid2, integrate, laplacian
from .linalg import OscillatorPreconditioner, second_derivative_matrix
from .potential import ModelParams, PotentialFields, build_pt_hog

log = logging.getLogger(__name__)

DENSE_MAX_POINTS = 48 * 48
BREAKING_TOL = 1e-6


def apply_h(grid: Grid2, fields: PotentialFields, f: np.ndarray) -> np.ndarray:
    return -laplacian(grid, f) + (fields.v + 1j * fields.w) * f


@dataclass
class LinearSpectrum:
    eigenvalues: np.ndarray
    eigenmodes: list
    residuals: np.ndarray
    params: ModelParams | None = None
    n_requested: int = 0
    method: str = ""

    def __len__(self) -> int:
        return len(self.eigenvalues)


def dense_h(grid: Grid2, fields: PotentialFields) -> np.ndarray:
    """Assemble ``H`` as a dense matrix in the row-major flattening of the grid."""
    d2x = second_derivative_matrix(grid.kx)
    d2y = second_derivative_matrix(grid.ky)
    h = -(np.kron(d2x, np.eye(grid.ny)) + np.kron(np.eye(grid.nx), d2y)).astype(complex)
    h[np.diag_indices_from(h)] += (fields.v + 1j * fields.w).ravel()
    return h


def order_eigenvalues(ev: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices ordering by real part; near-equal real parts put +Im first."""
    idx = np.argsort(ev.real, kind="stable")
    out = list(idx)
    i = 0
    while i < len(out):
        j = i + 1
        while j < len(out) and abs(ev[out[j]].real - ev[out[i]].real) <= tol * max(1.0, abs(ev[out[i]])):
            j += 1
        out[i:j] = sorted(out[i:j], key=lambda k: -ev[k].imag)
        i = j
    return np.array(out, dtype=int)


def _finish(grid, fields, vals, vecs, n, params, method) -> LinearSpectrum:
    order = order_eigenvalues(vals)[:n]
    vals = vals[order]
    modes, res = [], []
    for k in order:
        f = vecs[:, k].reshape(grid.shape)
        f = f / np.sqrt(integrate(grid, np.abs(f) ** 2, check=False))
        # fix the arbitrary phase: largest-modulus entry made real positive
        imax = np.argmax(np.abs(f))
        f = f * np.exp(-1j * np.angle(f.flat[imax]))
        modes.append(f)
    for lam, f in zip(vals, modes):
        r = apply_h(grid, fields, f) - lam * f
        res.append(np.linalg.norm(r) / np.linalg.norm(f))
    return LinearSpectrum(vals, modes, np.array(res), params, n, method)


def _dense_eigs(grid, fields, n, params):
    vals, vecs = sla.eig(dense_h(grid, fields), overwrite_a=True, check_finite=False)
    return _finish(grid, fields, vals, vecs, n, params, "dense")


def _shift_invert_op(grid, fields, shift, inner_tol):
    n = grid.size
    shape = grid.shape
    prec = OscillatorPreconditioner(grid, 1.0)

    def a(v):
        return (apply_h(grid, fields, v.reshape(shape)) - shift * v.reshape(shape)).ravel()

    def m(v):
        return prec(v.reshape(shape)).ravel()

    a_op = spla.LinearOperator((n, n), matvec=a, dtype=complex)
    m_op = spla.LinearOperator((n, n), matvec=m, dtype=complex)

    def solve(b):
        x, info = spla.gmres(a_op, b, M=m_op, rtol=inner_tol, atol=0.0, restart=80, maxiter=50)
        if info != 0:
            raise ConvergenceError("inner GMRES failed in shift-invert", info=int(info))
        return x

    return spla.LinearOperator((n, n), matvec=solve, dtype=complex)


def _arnoldi_eigs(grid, fields, n, params, *, extra=4, tol=1e-12, inner_tol=1e-13,
                  max_restarts=3, rng=None):
    rng = np.random.default_rng(0) if rng is None else rng
    shift = float(fields.v.min()) - 1.0
    op = _shift_invert_op(grid, fields, shift, inner_tol)
    N = grid.size

    def h_mv(v):
        return apply_h(grid, fields, v.reshape(grid.shape)).ravel()

    h_op = spla.LinearOperator((N, N), matvec=h_mv, dtype=complex)
    k = min(n + extra, N - 2)
    best = None
    for attempt in range(max_restarts):
        v0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        try:
            vals, vecs = spla.eigs(h_op, k=k, sigma=shift, which="LM", OPinv=op, v0=v0,
                                   tol=tol, ncv=min(max(2 * k + 1, 20), N - 1))
            return _finish(grid, fields, vals, vecs, n, params, "arnoldi")
        except spla.ArpackNoConvergence as exc:
            best = exc
            log.warning("Arnoldi attempt %d did not converge (%d pairs)", attempt + 1,
                        len(exc.eigenvalues))
    res = []
    if best is not None and len(best.eigenvalues):
        part = _finish(grid, fields, best.eigenvalues, best.eigenvectors, n, params, "arnoldi")
        res = part.residuals.tolist()
    raise ConvergenceError("Arnoldi did not converge", best_residuals=res)


def linear_eigs(grid: Grid2, fields: PotentialFields, n: int, method: str = "auto",
                params: ModelParams | None = None, **kwargs) -> LinearSpectrum:
    """The ``n`` eigenpairs of ``H`` with smallest real part.

    ``method`` is ``"dense"`` (grids up to 48x48), ``"arnoldi"`` (shift-invert
    ARPACK with preconditioned GMRES inner solves) or ``"auto"``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= grid.size // 4:
        raise ValueError("n must be much smaller than the number of grid points")
    if method == "auto":
        method = "dense" if grid.size <= DENSE_MAX_POINTS else "arnoldi"
    if method == "dense":
        if grid.size > DENSE_MAX_POINTS:
            raise ValueError(f"dense eigensolve limited to {DENSE_MAX_POINTS} grid points")
        return _dense_eigs(grid, fields, n, params)
    if method == "arnoldi":
        return _arnoldi_eigs(grid, fields, n, params, **kwargs)
    raise ValueError(f"unknown method {method!r}")


def is_unbroken(spec: LinearSpectrum, tol: float = BREAKING_TOL) -> bool:
    if len(spec.eigenvalues) == 0:
        raise ValueError("empty spectrum")
    return bool(np.max(np.abs(spec.eigenvalues.imag)) < tol)


def conjugate_pairing_error(eigenvalues: np.ndarray) -> float:
    """Max over complex eigenvalues of the distance from ``conj(lam)`` to the set."""
    ev = np.asarray(eigenvalues)
    worst = 0.0
    for lam in ev:
        if abs(lam.imag) > BREAKING_TOL:
            worst = max(worst, float(np.min(np.abs(ev - np.conj(lam)))))
    return worst


@dataclass
class BoundaryPoint:
    v0: float
    w0_crit: float | None
    bracket: tuple = ()
    error: str | None = None


@dataclass
class PhaseBoundary:
    v1: float
    points: list = field(default_factory=list)

    def records(self):
        for pt in self.points:
            if pt.w0_crit is None:
                yield {"v0": pt.v0, "w0_crit": None, "error": pt.error}
            else:
                for s in (1, -1):
                    yield {"v0": pt.v0, "w0_crit": s * pt.w0_crit, "error": None}


def critical_w0(grid: Grid2, base: ModelParams, w_max: float, n_eigs: int = 10,
                dw: float = 1e-2, tol: float = BREAKING_TOL, method: str = "auto",
                w_lo: float = 0.0):
    """Bisection on ``W0`` for the onset of complex eigenvalues.

    The threshold is symmetric in the sign of ``W0`` (mirror ``x -> -x``,
    ``y -> -y`` maps ``W0`` to ``-W0``), so only ``W0 >= 0`` is scanned.
    Returns ``(w_crit, (lo, hi))`` with ``w_crit`` the bracket midpoint, or
    ``(None, (lo, w_max))`` if the spectrum stays real up to ``w_max``.
    """
    def unbroken(w):
        p = base.with_(w0=w)
        return is_unbroken(linear_eigs(grid, build_pt_hog(grid, p), n_eigs, method), tol)

    lo, hi = w_lo, w_max
    if not unbroken(lo):
        raise SolverError("spectrum already complex at the lower end of the W0 bracket", w0=lo)
    if unbroken(hi):
        return None, (lo, hi)
    while hi - lo > dw:
        mid = 0.5 * (lo + hi)
        if unbroken(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), (lo, hi)


def phase_boundary(grid: Grid2, v0_values, w_max: float, v1: float = 1.0, n_eigs: int = 10,
                   dw: float = 1e-2, method: str = "auto", threads: int = 1) -> PhaseBoundary:
    """Critical ``|W0|`` for each ``V0`` sample; failures are recorded and the scan continues."""
    v0_values = list(v0_values)
    if not v0_values:
        raise ValueError("empty V0 range")
    if w_max <= 0:
        raise ValueError("w_max must be positive")

    def one(v0):
        base = ModelParams(sigma=1.0, omega=0.0, v0=v0, v1=v1, w0=0.0, mu=0.0)
        try:
            wc, br = critical_w0(grid, base, w_max, n_eigs, dw, method=method)
            return BoundaryPoint(v0, wc, br)
        except SolverError as exc:
            log.warning("V0=%g failed: %s", v0, exc)
            return BoundaryPoint(v0, None, (), str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pts = list(pool.map(one, v0_values))
    else:
        pts = [one(v) for v in v0_values]
    return PhaseBoundary(v1=v1, points=pts)
