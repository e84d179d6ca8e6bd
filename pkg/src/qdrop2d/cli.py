"""Command-line entry point: ``qdrop2d <subcommand> --config FILE [--set k=v ...] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bdg import bdg_spectrum, classify
from .config import (FAMILY_MODES, SUBCOMMANDS, ConfigError, config_hash, dump_config,
                     load_config, make_rng, resolve_threads, validate)
from .dynamics import collision_ic, collision_report, evolve
from .errors import SolverError
from .fileio import SnapshotError, read_field, write_csv, write_field
from .grid import make_grid
from .linspec import linear_eigs, phase_boundary
from .observables import norm, winding
from .potential import ModelParams, build_pt_hog, check_pt, exact_droplet, exact_params
from .stationary import (ContinuationOptions, NewtonOptions, continue_family, count_components,
                         newton_cg_solve, residual, solve_at_norm)

log = logging.getLogger("qdrop2d")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# independent random streams derived from rng_seed
STREAM_SOLVE_NOISE, STREAM_EVOLVE_NOISE, STREAM_ARNOLDI = 1, 2, 3


class Run:
    """Resolved configuration plus the objects every subcommand needs."""

    def __init__(self, cfg: dict, subcommand: str, out: Path):
        self.cfg = cfg
        self.sub = subcommand
        self.out = out
        self.task = cfg["task"]
        g = cfg["grid"]
        self.grid = make_grid(int(g["nx"]), int(g["ny"]), float(g["lx"]), float(g["ly"]))
        self.params = ModelParams(**{k: float(v) for k, v in cfg["model"].items()})
        s = cfg["solver"]
        self.newton = NewtonOptions(tol=s["tol"], max_iter=int(s["max_iter"]),
                                    inner_rtol=s["inner_rtol"], preconditioner=s["preconditioner"])
        self.threads = int(cfg["threads"])
        self.hash = config_hash(cfg)

    def meta(self, **extra) -> dict:
        g = self.grid
        m = {"qdrop2d": __version__, "subcommand": self.sub, "config_hash": self.hash,
             "grid": [g.nx, g.ny, g.lx, g.ly], "params": self.params.as_dict()}
        m.update(extra)
        return m

    def path(self, name: str) -> Path:
        return self.out / name

    def snapshot(self, name: str, phi, params=None, t=0.0, **extra) -> Path:
        return write_field(self.path(name), phi, self.grid, params or self.params, t,
                           dict(extra, config_hash=self.hash))

    def summary(self, name: str, data: dict) -> Path:
        path = self.path(name)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        return path

    def rng(self, stream: int) -> np.random.Generator:
        return make_rng(int(self.cfg["rng_seed"]), stream)

    def load_state_field(self, path) -> np.ndarray:
        phi, header = read_field(path)
        if phi.shape != self.grid.shape:
            raise ConfigError([f"state file {path} has shape {phi.shape}, grid is {self.grid.shape}"])
        return phi

    def seed_field(self) -> np.ndarray:
        """Initial field for solve/bdg/evolve: a state file, the exact droplet or a linear mode."""
        t = self.task
        if t.get("state"):
            return self.load_state_field(t["state"])
        if t.get("seed", "exact") == "exact":
            return exact_droplet(self.grid, self.params.w0)
        spec = linear_eigs(self.grid, build_pt_hog(self.grid, self.params), int(t.get("mode", 0)) + 1)
        return float(t.get("amplitude", 0.1)) * spec.eigenmodes[int(t.get("mode", 0))]

    def stationary(self, seed=None):
        fields = build_pt_hog(self.grid, self.params)
        seed = self.seed_field() if seed is None else seed
        noise = float(self.task.get("noise", 0.0)) if self.sub == "solve" else 0.0
        if noise > 0:
            r = self.rng(STREAM_SOLVE_NOISE)
            seed = seed * (1 + noise * (r.uniform(-1, 1, seed.shape) + 1j * r.uniform(-1, 1, seed.shape)))
        target = self.task.get("target_norm")
        if target is not None:
            return solve_at_norm(self.grid, seed, self.params, float(target), fields, self.newton)
        return newton_cg_solve(self.grid, seed, self.params, fields, self.newton)


# ---------------------------------------------------------------------------
# subcommands


def _w0_values(task) -> list[float]:
    if task.get("w0_range") is not None:
        start, stop, num = task["w0_range"]
        return [float(w) for w in np.linspace(start, stop, int(num))]
    return [float(w) for w in task["w0_values"]]


def cmd_spectrum(run: Run) -> int:
    t = run.task
    n = int(t["n_eigs"])
    values = _w0_values(t)

    def one(w0):
        p = run.params.with_(w0=w0)
        try:
            return linear_eigs(run.grid, build_pt_hog(run.grid, p), n, t.get("method", "auto"), params=p)
        except (SolverError, ValueError, ArithmeticError) as exc:
            log.error("eigensolve failed at W0=%g: %s", w0, exc)
            return exc

    with ThreadPoolExecutor(max_workers=run.threads) as pool:
        results = list(pool.map(one, values))
    rows, failed = [], []
    for w0, spec in zip(values, results):
        if isinstance(spec, Exception):
            failed.append({"w0": w0, "error": str(spec)})
            continue
        for k, (lam, r) in enumerate(zip(spec.eigenvalues, spec.residuals)):
            rows.append((w0, k, lam.real, lam.imag, r))
    write_csv(run.path("spectrum.csv"), ["w0", "index", "re", "im", "residual"], rows,
              run.meta(failures=failed))
    if len(failed) == len(values):
        raise SolverError("eigensolver failed at every W0 point", failures=failed)
    return EXIT_OK


def cmd_phase_diagram(run: Run) -> int:
    t = run.task
    v0s = np.linspace(float(t["v0_min"]), float(t["v0_max"]), int(t["v0_num"]))
    pb = phase_boundary(run.grid, v0s, float(t["w_max"]), v1=run.params.v1, n_eigs=int(t["n_eigs"]),
                        dw=float(t["dw"]), method=t.get("method", "auto"), threads=run.threads)
    rows = [(r["v0"], r["w0_crit"], r["error"]) for r in pb.records()]
    for r in rows:
        if r[2]:
            log.warning("skipped V0=%g: %s", r[0], r[2])
    write_csv(run.path("phase_boundary.csv"), ["v0", "w0_crit", "error"], rows,
              run.meta(w_max=float(t["w_max"]), dw=float(t["dw"])))
    return EXIT_OK


def _state_summary(run: Run, st) -> dict:
    return {"mu": st.params.mu, "omega": st.params.omega, "norm": st.norm,
            "residual_inf": st.residual_inf, "family": st.family_tag,
            "components": count_components(run.grid, st.phi), "iterations": st.iterations,
            "config_hash": run.hash}


def cmd_solve(run: Run) -> int:
    st = run.stationary()
    run.snapshot("state.qd2d", st.phi, st.params, family=st.family_tag)
    run.summary("solve.json", _state_summary(run, st))
    return EXIT_OK


def _family_start(run: Run):
    """Starting state for a continuation.

    A ``mu`` sweep starts near the linear limit: the named family's mode is
    scaled to ``start_norm`` and solved at that norm. An ``omega`` sweep
    starts from the fixed-``mu`` state reached by Newton from the same small
    seed, which is the low-norm branch of the family at that ``mu``.
    """
    t = run.task
    fields = build_pt_hog(run.grid, run.params)
    if t.get("state"):
        seed = run.load_state_field(t["state"])
        return newton_cg_solve(run.grid, seed, run.params, fields, run.newton)
    fam = t["family"]
    idx = FAMILY_MODES[fam] if isinstance(fam, str) else int(fam)
    spec = linear_eigs(run.grid, fields, idx + 1)
    seed = math.sqrt(float(t["start_norm"])) * spec.eigenmodes[idx]
    if t["sweep"] == "mu":
        p = run.params.with_(mu=float(spec.eigenvalues[idx].real))
        return solve_at_norm(run.grid, seed, p, float(t["start_norm"]), fields, run.newton)
    return newton_cg_solve(run.grid, seed, run.params, fields, run.newton)


def _direction(task) -> int:
    # from the low-norm start, mu decreases towards the fold while omega increases
    if task.get("direction") is not None:
        return int(task["direction"])
    return -1 if task["sweep"] == "mu" else 1


def cmd_continue(run: Run) -> int:
    t = run.task
    s = run.cfg["solver"]
    start = _family_start(run)
    fields = build_pt_hog(run.grid, run.params)
    stability = None
    if t.get("stability"):
        every = max(1, int(t.get("stability_every", 1)))
        count = [0]

        def stability(state):
            count[0] += 1
            if (count[0] - 1) % every:
                return None
            spec = bdg_spectrum(state, 20, rng=run.rng(STREAM_ARNOLDI)) \
                if run.grid.size > 32 * 32 else bdg_spectrum(state, 20)
            return classify(spec) == "stable"

    opts = ContinuationOptions(ds=s["ds"], ds_min=s["ds_min"], ds_max=s["ds_max"],
                               max_points=int(s["max_points"]), direction=_direction(t),
                               stop_at_fold=bool(t["stop_at_fold"]),
                               newton=NewtonOptions(tol=s["tol"], max_iter=15,
                                                    inner_rtol=s["inner_rtol"],
                                                    preconditioner=s["preconditioner"]))
    curve = continue_family(run.grid, start, t["sweep"], float(t["target"]), opts, fields, stability)
    rows = []
    for k, pt in enumerate(curve.points):
        rows.append((pt.param, pt.norm, pt.stable, count_components(run.grid, pt.state.phi),
                     pt.state.residual_inf))
        if t.get("save_states"):
            run.snapshot(f"state_{k:04d}.qd2d", pt.state.phi, pt.state.params)
    write_csv(run.path("family.csv"), [t["sweep"], "norm", "stable", "components", "residual"], rows,
              run.meta(folds=[float(f) for f in curve.folds], termination=curve.termination,
                       family=start.family_tag))
    return EXIT_OK


def cmd_bdg(run: Run) -> int:
    t = run.task
    st = run.stationary()
    kw = {"rng": run.rng(STREAM_ARNOLDI)} if t.get("method") == "arnoldi" or \
        (t.get("method", "auto") == "auto" and run.grid.size > 32 * 32) else {}
    spec = bdg_spectrum(st, int(t["n_eigs"]), t.get("method", "auto"), **kw)
    rows = [(k, e.real, e.imag, r) for k, (e, r) in enumerate(zip(spec.eigenvalues, spec.residuals))]
    verdict = classify(spec)
    mu = spec.most_unstable
    write_csv(run.path("bdg.csv"), ["index", "re", "im", "residual"], rows,
              run.meta(verdict=verdict, max_im=spec.max_im, method=spec.method,
                       pairing_error=spec.quartet_error(), state_norm=st.norm,
                       most_unstable=None if mu is None else [mu.real, mu.imag]))
    run.snapshot("state.qd2d", st.phi, st.params, stability=verdict)
    return EXIT_OK


_DIAG_COLUMNS = ["t", "norm", "energy_re", "energy_im", "peak", "com_x", "com_y", "asymmetry"]


def _diag_rows(run_):
    return [(d.t, d.n, d.quasi_energy.real, d.quasi_energy.imag, d.peak, d.com[0], d.com[1],
             d.asymmetry) for d in run_.diagnostics]


def _save_frames(run: Run, ev, params):
    frames = run.path("frames")
    frames.mkdir(exist_ok=True)
    for k, (tt, f) in enumerate(ev.frames):
        write_field(frames / f"frame_{k:05d}.qd2d", f, run.grid, params, tt, {"config_hash": run.hash})


def cmd_evolve(run: Run) -> int:
    t = run.task
    psi0 = run.seed_field()
    fields = build_pt_hog(run.grid, run.params)
    ev = evolve(run.grid, psi0, run.params, fields, float(t["dt"]), float(t["t_final"]),
                float(t["snapshot_every"]), float(t.get("noise", 0.0)),
                run.rng(STREAM_EVOLVE_NOISE), keep_frames=True)
    pk = ev.series("peak")
    write_csv(run.path("diagnostics.csv"), _DIAG_COLUMNS, _diag_rows(ev),
              run.meta(dt=ev.dt, peak_variation=float(np.max(np.abs(pk / pk[0] - 1)))))
    if t.get("save_frames", True):
        _save_frames(run, ev, run.params)
    tf, last = ev.frames[-1]
    run.snapshot("final.qd2d", last, t=tf)
    return EXIT_OK


def cmd_collide(run: Run) -> int:
    t = run.task
    extra = None
    if float(t["b"]) != 0:
        extra = newton_cg_solve(run.grid, run.load_state_field(t["extra_state"]), run.params,
                                build_pt_hog(run.grid, run.params), run.newton)
    psi0 = collision_ic(run.grid, run.params, float(t["a"]), float(t["b"]), tuple(t["r0"]), extra)
    fields = build_pt_hog(run.grid, run.params)
    ev = evolve(run.grid, psi0, run.params, fields, float(t["dt"]), float(t["t_final"]),
                float(t["snapshot_every"]))
    rep = collision_report(run.grid, ev, float(t["fraction"]))
    pk, nm = rep.shape_errors()
    rows = [(tt, c, d.peak, d.n) for tt, c, d in zip(rep.times, rep.counts, ev.diagnostics)]
    write_csv(run.path("collision.csv"), ["t", "components", "peak", "norm"], rows,
              run.meta(sequence=rep.sequence, collision_time=rep.collision_time,
                       merged_at=rep.merged_at, separated_at=rep.separated_at,
                       recovery_time=rep.recovery_time,
                       peak_error=None if math.isinf(pk) else pk,
                       norm_error=None if math.isinf(nm) else nm,
                       elastic=rep.elastic()))
    write_csv(run.path("diagnostics.csv"), _DIAG_COLUMNS, _diag_rows(ev), run.meta(dt=ev.dt))
    if t.get("save_frames"):
        _save_frames(run, ev, run.params)
    return EXIT_OK


def cmd_exact(run: Run) -> int:
    """The closed-form droplet at ``sigma``, ``W0`` from the config, with its residual report."""
    p = exact_params(run.params.sigma, run.params.w0)
    g = run.grid
    fields = build_pt_hog(g, p)
    phi = exact_droplet(g, p.w0)
    res = residual(g, fields, p, phi)
    n = norm(g, phi)
    pt = check_pt(g, fields)
    try:
        charge = winding(g, phi, 1.0).charge
    except ValueError:
        charge = None
    report = {"params": p.as_dict(), "residual_inf": float(np.abs(res).max()), "norm": n,
              "norm_minus_pi": n - math.pi, "pt_violation": max(pt.v_symmetry, pt.w_antisymmetry),
              "winding_r1": charge, "config_hash": run.hash}
    run.summary("exact.json", report)
    write_field(run.path("exact.qd2d"), phi, g, p, 0.0, {"config_hash": run.hash})
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum, "phase-diagram": cmd_phase_diagram, "solve": cmd_solve,
    "continue": cmd_continue, "bdg": cmd_bdg, "evolve": cmd_evolve, "collide": cmd_collide,
    "exact": cmd_exact,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdrop2d", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="YAML or JSON run configuration")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. model.omega=0.2 (repeatable)")
        sp.add_argument("--out", type=Path, help="output directory (default: output.dir)")
        sp.add_argument("--threads", type=int, help="worker threads (default: $QDROP2D_THREADS or 1)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _report(out: Path | None, code: int, exc: BaseException) -> None:
    err = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        err["errors"] = exc.errors
    if isinstance(exc, SolverError):
        err["details"] = exc.details
    text = json.dumps(err, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        cfg = load_config(args.config, args.overrides, args.subcommand)
        if args.threads is not None or "QDROP2D_THREADS" in os.environ:
            cfg["threads"] = resolve_threads(args.threads)
        if args.out is not None:
            cfg["output"]["dir"] = str(args.out)
        validate(cfg, args.subcommand)
        out = Path(cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg))
        run = Run(cfg, args.subcommand, out)
        return COMMANDS[args.subcommand](run)
    except ConfigError as exc:
        _report(out, EXIT_CONFIG, exc)
        return EXIT_CONFIG
    except (OSError, SnapshotError) as exc:
        _report(out, EXIT_IO, exc)
        return EXIT_IO
    except (SolverError, ArithmeticError) as exc:
        _report(out, EXIT_SOLVER, exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
