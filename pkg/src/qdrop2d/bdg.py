"""Bogoliubov-de Gennes linear stability of stationary droplets.

Perturbing ``psi = exp(-i mu t) [phi + u exp(-i eps t) + conj(v) exp(i conj(eps) t)]``
gives the block eigenproblem

    eps u =  L1 u + L2 v
    eps v = -conj(L2) u - L1* v

with ``L1 = -lap + i omega (y d_x - x d_y) + V + iW + g1 - mu`` and ``L2 = g2``
(``g1``, ``g2`` as in the Newton Jacobian). ``L1*`` is ``L1`` with every
coefficient conjugated. Spectra are symmetric under ``eps -> -conj(eps)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConvergenceError
from .grid import Grid2
from .linalg import OscillatorPreconditioner, first_derivative_matrix, second_derivative_matrix
from .potential import PotentialFields, build_pt_hog
from .stationary import StationaryState, apply_linear_part, linearised_coefficients

log = logging.getLogger(__name__)

DENSE_MAX_POINTS = 32 * 32
DENSE_HARD_LIMIT = 48 * 48
GOLDSTONE_RADIUS = 1e-3


@dataclass
class BdgSpectrum:
    """Computed BdG eigenvalues of one state.

    ``max_im`` excludes the phase (Goldstone) pair, whose eigenvalues sit in a
    Jordan block at zero and split by roughly the square root of the state's
    residual; ``goldstone`` holds that pair for inspection. ``eigenvalues``
    are the requested ones nearest the origin, while ``max_im``,
    ``most_unstable`` and ``n_computed`` refer to everything the solver returned.
    """

    eigenvalues: np.ndarray
    max_im: float
    state_ref: StationaryState
    n_computed: int
    method: str
    goldstone: np.ndarray
    residuals: np.ndarray
    most_unstable: complex | None = None
    pairing: float = 0.0

    def quartet_error(self) -> float:
        """Worst ``(eps, -conj(eps))`` mismatch over all computed eigenvalues."""
        return self.pairing


def _coefficients(state: StationaryState, fields: PotentialFields):
    g1, g2 = linearised_coefficients(state.phi, state.params.sigma)
    return g1 - state.params.mu, g2


def apply_bdg(state: StationaryState, u: np.ndarray, v: np.ndarray,
              fields: PotentialFields | None = None):
    """Return ``(L1 u + L2 v, -conj(L2) u - L1* v)``."""
    grid, p = state.grid, state.params
    fields = fields if fields is not None else build_pt_hog(grid, p)
    c1, g2 = _coefficients(state, fields)
    l1u = apply_linear_part(grid, fields, p.omega, u) + c1 * u
    # L1* v = conj(L1 conj(v)): conjugates iW and the rotation coefficient
    l1sv = np.conj(apply_linear_part(grid, fields, p.omega, np.conj(v)) + c1 * np.conj(v))
    return l1u + g2 * v, -np.conj(g2) * u - l1sv


def dense_bdg(state: StationaryState, fields: PotentialFields | None = None) -> np.ndarray:
    """Assemble the ``2n x 2n`` BdG matrix (row-major flattening of each block)."""
    grid, p = state.grid, state.params
    fields = fields if fields is not None else build_pt_hog(grid, p)
    ix, iy = np.eye(grid.nx), np.eye(grid.ny)
    lap = np.kron(second_derivative_matrix(grid.kx), iy) + np.kron(ix, second_derivative_matrix(grid.ky))
    l1 = -lap.astype(complex)
    if p.omega != 0:
        X, Y = grid.mesh()
        dx = np.kron(first_derivative_matrix(grid.kx), iy)
        dy = np.kron(ix, first_derivative_matrix(grid.ky))
        l1 += 1j * p.omega * (Y.ravel()[:, None] * dx - X.ravel()[:, None] * dy)
    c1, g2 = _coefficients(state, fields)
    l1[np.diag_indices_from(l1)] += (fields.v + 1j * fields.w + c1).ravel()
    l2 = np.diag(g2.ravel())
    return np.block([[l1, l2], [-np.conj(l2), -np.conj(l1)]])


def pairing_error(eigenvalues: np.ndarray, radius: float | None = None) -> float:
    """Max over eigenvalues of the distance from ``-conj(eps)`` to the computed set.

    With ``radius`` only eigenvalues with ``|eps| <= radius`` are checked, for
    partial spectra whose partners near the edge may be missing.
    """
    ev = np.asarray(eigenvalues)
    probe = ev if radius is None else ev[np.abs(ev) <= radius]
    if probe.size == 0:
        return 0.0
    return float(max(np.min(np.abs(ev + np.conj(lam))) for lam in probe))


def _goldstone_mask(grid: Grid2, state: StationaryState, vals, vecs,
                    min_overlap: float = 0.5) -> np.ndarray:
    """Flag near-zero eigenpairs aligned with the phase mode ``(phi, -conj(phi))``.

    The phase mode is defective, so a numerical solver returns a small cluster
    of approximations (two per Arnoldi shift), all close to that vector.
    """
    phi = state.phi.ravel()
    z0 = np.concatenate([phi, -np.conj(phi)])
    z0 /= np.linalg.norm(z0)
    mask = np.zeros(len(vals), dtype=bool)
    for k in np.flatnonzero(np.abs(vals) < GOLDSTONE_RADIUS):
        overlap = abs(np.vdot(z0, vecs[:, k])) / np.linalg.norm(vecs[:, k])
        mask[k] = overlap >= min_overlap
    return mask


def _finish(state, fields, vals, vecs, n, method) -> BdgSpectrum:
    """Classify on every computed eigenvalue, keep the ``n`` smallest in modulus."""
    grid = state.grid
    gmask = _goldstone_mask(grid, state, vals, vecs)
    others = vals[~gmask]
    if others.size:
        worst = others[np.argmax(np.abs(others.imag))]
        max_im = float(abs(worst.imag))
    else:
        worst, max_im = None, 0.0
    order = np.argsort(np.abs(vals), kind="stable")[:n]
    res = []
    for k in order:
        u = vecs[: grid.size, k].reshape(grid.shape)
        v = vecs[grid.size :, k].reshape(grid.shape)
        bu, bv = apply_bdg(state, u, v, fields)
        r = np.concatenate([(bu - vals[k] * u).ravel(), (bv - vals[k] * v).ravel()])
        res.append(np.linalg.norm(r) / np.linalg.norm(vecs[:, k]))
    radius = None if method == "dense" else 0.5 * float(np.abs(vals).max())
    return BdgSpectrum(vals[order], max_im, state, len(vals), method, vals[gmask],
                       np.array(res), worst, pairing_error(others, radius))


def _dense(state, fields, n):
    vals, vecs = sla.eig(dense_bdg(state, fields), overwrite_a=True, check_finite=False)
    return _finish(state, fields, vals, vecs, n, "dense")


def _bdg_op(state, fields):
    grid = state.grid
    n = grid.size

    def mv(z):
        u = z[:n].reshape(grid.shape)
        v = z[n:].reshape(grid.shape)
        bu, bv = apply_bdg(state, u, v, fields)
        return np.concatenate([bu.ravel(), bv.ravel()])

    return spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)


def _shift_invert(state, fields, shift, inner_tol, precond_shift):
    grid = state.grid
    n = grid.size
    b_op = _bdg_op(state, fields)
    a_op = spla.LinearOperator((2 * n, 2 * n), matvec=lambda z: b_op.matvec(z) - shift * z,
                               dtype=complex)
    prec = OscillatorPreconditioner(grid, precond_shift)

    def m(z):
        u = prec(z[:n].reshape(grid.shape))
        v = prec(z[n:].reshape(grid.shape))
        return np.concatenate([u.ravel(), -v.ravel()])

    m_op = spla.LinearOperator((2 * n, 2 * n), matvec=m, dtype=complex)
    counts = []

    def solve(b):
        it = [0]

        def cb(_):
            it[0] += 1

        x, info = spla.gmres(a_op, b, M=m_op, rtol=inner_tol, atol=0.0, restart=200,
                             maxiter=20, callback=cb, callback_type="pr_norm")
        counts.append(it[0])
        if info != 0:
            # a shift close to an eigenvalue stalls the preconditioned residual
            # while the true residual is already acceptable
            rel = np.linalg.norm(a_op.matvec(x) - b) / np.linalg.norm(b)
            if rel > 100 * inner_tol:
                raise ConvergenceError("inner GMRES failed in BdG shift-invert",
                                       info=int(info), residual=float(rel))
        return x

    return spla.LinearOperator((2 * n, 2 * n), matvec=solve, dtype=complex), counts


def _arnoldi(state, fields, n, shifts, *, tol=1e-10, inner_tol=1e-10, rng=None,
             precond_shift=None):
    grid = state.grid
    rng = np.random.default_rng(0) if rng is None else rng
    b_op = _bdg_op(state, fields)
    dim = 2 * grid.size
    c = precond_shift if precond_shift is not None else max(abs(state.params.mu), 1.0)
    vals_all, vecs_all = [], []
    for shift in shifts:
        op, counts = _shift_invert(state, fields, shift, inner_tol, c)
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        try:
            vals, vecs = spla.eigs(b_op, k=n, sigma=shift, which="LM", OPinv=op, v0=v0, tol=tol,
                                   ncv=min(max(2 * n + 1, 30), dim - 1))
        except spla.ArpackNoConvergence as exc:
            res = []
            if len(exc.eigenvalues):
                part = _finish(state, fields, exc.eigenvalues, exc.eigenvectors,
                               len(exc.eigenvalues), "arnoldi")
                res = part.residuals.tolist()
            raise ConvergenceError("BdG Arnoldi did not converge", shift=complex(shift),
                                   best_residuals=res) from exc
        log.debug("BdG shift %s: %d inner solves, mean %.1f GMRES its", shift, len(counts),
                  np.mean(counts) if counts else 0.0)
        vals_all.append(vals)
        vecs_all.append(vecs)
    vals = np.concatenate(vals_all)
    vecs = np.concatenate(vecs_all, axis=1)
    # drop duplicates found by both shifts
    keep = []
    for k, lam in enumerate(vals):
        if all(abs(lam - vals[j]) > 1e-8 * max(1.0, abs(lam)) for j in keep):
            keep.append(k)
    keep = np.array(keep)
    return _finish(state, fields, vals[keep], vecs[:, keep], len(keep), "arnoldi")


def bdg_spectrum(state: StationaryState, n: int = 20, method: str = "auto",
                 fields: PotentialFields | None = None, shifts=None, **kwargs) -> BdgSpectrum:
    """BdG eigenvalues of ``state`` nearest the origin.

    ``"dense"`` solves the assembled matrix (default up to 32x32, allowed up
    to 48x48) and keeps the ``n`` smallest in modulus; ``max_im`` is then taken
    over the whole spectrum, which is what stability verdicts need, since the
    unstable quartets of large droplets sit far out along the real axis. ``"arnoldi"`` runs shift-invert ARPACK once per
    entry of ``shifts`` (default: one shift near zero and one up the imaginary
    axis, so oscillatory instabilities with sizeable ``Re eps`` are not missed)
    and merges the results.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = state.grid
    fields = fields if fields is not None else build_pt_hog(grid, state.params)
    if method == "auto":
        method = "dense" if grid.size <= DENSE_MAX_POINTS else "arnoldi"
    if method == "dense":
        if grid.size > DENSE_HARD_LIMIT:
            raise ValueError(f"dense BdG limited to {DENSE_HARD_LIMIT} grid points")
        return _dense(state, fields, n)
    if method == "arnoldi":
        if shifts is None:
            shifts = (0.05 + 0.0j, 0.05 + 0.5j)
        return _arnoldi(state, fields, n, shifts, **kwargs)
    raise ValueError(f"unknown method {method!r}")


def default_tolerance(spec: BdgSpectrum) -> float:
    return 1e-6 * max(1.0, abs(spec.state_ref.params.mu))


def classify(spec: BdgSpectrum, tol: float | None = None) -> str:
    """``"stable"`` iff ``max_im < tol`` (default ``1e-6 * max(1, |mu|)``)."""
    tol = default_tolerance(spec) if tol is None else tol
    return "stable" if spec.max_im < tol else "unstable"


def is_stable(state: StationaryState, n: int = 20, **kwargs) -> bool:
    """Convenience predicate for continuation sweeps."""
    return classify(bdg_spectrum(state, n, **kwargs)) == "stable"

