"""Run configuration: a nested key-value tree with defaults, overrides and validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from pathlib import Path

import numpy as np
import yaml

SUBCOMMANDS = ("spectrum", "phase-diagram", "solve", "continue", "bdg", "evolve", "collide", "exact")

# linear-mode index (in the spectrum sorted by real part) each named family bifurcates from
FAMILY_MODES = {"one": 0, "two": 2, "three": 3, "four": 5}

DEFAULTS = {
    "grid": {"nx": 64, "ny": 64, "lx": 8.0, "ly": 8.0},
    "model": {"sigma": 1.0, "v0": -0.0625, "v1": 1.0, "w0": 1.0, "mu": 2.0, "omega": 0.0},
    "solver": {
        "tol": 1e-10, "max_iter": 50, "inner_rtol": 1e-3, "preconditioner": "oscillator",
        "ds": 0.05, "ds_min": 1e-4, "ds_max": 0.5, "max_points": 400,
    },
    "task": {},
    "output": {"dir": "out", "formats": ["csv", "qd2d"]},
    "rng_seed": 0,
    "threads": 1,
}

TASK_DEFAULTS = {
    "spectrum": {"w0_values": [1.0], "n_eigs": 6, "method": "auto"},
    "phase-diagram": {"v0_min": -2.0, "v0_max": 6.0, "v0_num": 17, "w_max": 7.0, "dw": 0.01,
                      "n_eigs": 10, "method": "auto"},
    "solve": {"seed": "exact", "mode": 0, "amplitude": 0.1, "state": None, "target_norm": None,
              "noise": 0.0},
    "continue": {"family": "one", "sweep": "mu", "target": 10.0, "start_norm": 0.5,
                 "direction": None, "state": None, "stop_at_fold": False, "stability": False,
                 "stability_every": 1, "save_states": False},
    "bdg": {"state": None, "seed": "exact", "n_eigs": 20, "method": "auto"},
    "evolve": {"state": None, "seed": "exact", "dt": 1e-3, "t_final": 10.0,
               "snapshot_every": 0.25, "noise": 0.0, "save_frames": True},
    "collide": {"a": 1.0, "b": 0.0, "r0": [3.0, 0.0], "extra_state": None, "dt": 1e-3,
                "t_final": 2.0, "snapshot_every": 0.05, "fraction": 0.5, "save_frames": False},
    "exact": {},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "1e-10" (no dot) as a string; accept it as a float
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"))


def _parse(text: str):
    return yaml.load(text, Loader=_Loader)


def load_config(path=None, overrides=(), subcommand: str | None = None) -> dict:
    """Defaults, then the YAML/JSON file at ``path``, then ``key.path=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if subcommand is not None:
        cfg["task"] = copy.deepcopy(TASK_DEFAULTS.get(subcommand, {}))
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
        try:
            data = _parse(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"cannot parse config {path}: {exc}"]) from exc
        if not isinstance(data, dict):
            raise ConfigError(["config file must hold a mapping at top level"])
        cfg = _merge(cfg, data)
    errors = []
    for item in overrides:
        try:
            apply_override(cfg, item)
        except ValueError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return cfg


def apply_override(cfg: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ValueError(f"override {item!r} is not of the form key=value")
    try:
        value = _parse(raw)
    except yaml.YAMLError as exc:
        raise ValueError(f"override {item!r}: {exc}") from exc
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _num(errors, where, value, *, positive=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where} must be a number, got {value!r}")
        return
    if not math.isfinite(value):
        errors.append(f"{where} must be finite")
    elif integer and int(value) != value:
        errors.append(f"{where} must be an integer")
    elif positive and value <= 0:
        errors.append(f"{where} must be positive")
    elif minimum is not None and value < minimum:
        errors.append(f"{where} must be >= {minimum}")


def validate(cfg: dict, subcommand: str) -> None:
    """Check every block up front and raise :class:`ConfigError` listing all problems."""
    errors: list[str] = []
    if subcommand not in SUBCOMMANDS:
        errors.append(f"unknown subcommand {subcommand!r}")
    for block in ("grid", "model", "solver", "task", "output"):
        if not isinstance(cfg.get(block), dict):
            errors.append(f"missing block {block!r}")
    if errors:
        raise ConfigError(errors)
    g = cfg["grid"]
    for k in ("nx", "ny"):
        _num(errors, f"grid.{k}", g.get(k), integer=True, minimum=16)
        if isinstance(g.get(k), int) and g[k] % 2:
            errors.append(f"grid.{k} must be even")
    for k in ("lx", "ly"):
        _num(errors, f"grid.{k}", g.get(k), positive=True)
    m = cfg["model"]
    for k in ("sigma", "v0", "v1", "w0", "mu", "omega"):
        _num(errors, f"model.{k}", m.get(k))
    if isinstance(m.get("sigma"), (int, float)) and not m["sigma"] > 0:
        errors.append("model.sigma must be positive")
    if isinstance(m.get("omega"), (int, float)) and m["omega"] < 0:
        errors.append("model.omega must be >= 0")
    s = cfg["solver"]
    for k in ("tol", "inner_rtol", "ds", "ds_min", "ds_max"):
        _num(errors, f"solver.{k}", s.get(k), positive=True)
    for k in ("max_iter", "max_points"):
        _num(errors, f"solver.{k}", s.get(k), integer=True, minimum=1)
    if s.get("preconditioner") not in ("oscillator", "fourier"):
        errors.append("solver.preconditioner must be 'oscillator' or 'fourier'")
    _num(errors, "rng_seed", cfg.get("rng_seed"), integer=True, minimum=0)
    _num(errors, "threads", cfg.get("threads"), integer=True, minimum=1)
    if not isinstance(cfg["output"].get("dir"), str):
        errors.append("output.dir must be a path string")
    _validate_task(errors, cfg["task"], subcommand)
    if errors:
        raise ConfigError(errors)


def _validate_task(errors, t, sub):
    if sub == "spectrum":
        w = t.get("w0_values")
        rng_ = t.get("w0_range")
        if rng_ is not None:
            if not (isinstance(rng_, list) and len(rng_) == 3):
                errors.append("task.w0_range must be [start, stop, num]")
            else:
                for i, v in enumerate(rng_):
                    _num(errors, f"task.w0_range[{i}]", v)
                if all(isinstance(v, (int, float)) for v in rng_) and \
                        (rng_[2] < 1 or rng_[1] < rng_[0]):
                    errors.append(f"task.w0_range {rng_!r} is an empty sweep")
        elif not isinstance(w, list) or not w:
            errors.append("task.w0_values must be a non-empty list")
        else:
            for i, v in enumerate(w):
                _num(errors, f"task.w0_values[{i}]", v)
        _num(errors, "task.n_eigs", t.get("n_eigs"), integer=True, minimum=1)
    elif sub == "phase-diagram":
        _num(errors, "task.v0_num", t.get("v0_num"), integer=True, minimum=1)
        _num(errors, "task.v0_min", t.get("v0_min"))
        _num(errors, "task.v0_max", t.get("v0_max"))
        _num(errors, "task.w_max", t.get("w_max"), positive=True)
        _num(errors, "task.dw", t.get("dw"), positive=True)
        if all(isinstance(t.get(k), (int, float)) for k in ("v0_min", "v0_max")) and \
                t["v0_max"] < t["v0_min"]:
            errors.append("task.v0_max must be >= task.v0_min (empty range)")
    elif sub in ("solve", "bdg", "evolve"):
        if t.get("state") is None and t.get("seed") not in ("exact", "mode"):
            errors.append("task.seed must be 'exact' or 'mode' when no task.state is given")
    if sub == "continue":
        if t.get("sweep") not in ("mu", "omega"):
            errors.append("task.sweep must be 'mu' or 'omega'")
        fam = t.get("family")
        if t.get("state") is None and fam not in FAMILY_MODES and not isinstance(fam, int):
            errors.append(f"task.family must be one of {sorted(FAMILY_MODES)} or a mode index")
        _num(errors, "task.target", t.get("target"))
        _num(errors, "task.start_norm", t.get("start_norm"), positive=True)
        if t.get("direction") not in (None, 1, -1):
            errors.append("task.direction must be 1, -1 or null")
    if sub in ("evolve", "collide"):
        _num(errors, "task.dt", t.get("dt"), positive=True)
        _num(errors, "task.t_final", t.get("t_final"), minimum=0)
        _num(errors, "task.snapshot_every", t.get("snapshot_every"), positive=True)
    if sub == "collide":
        r0 = t.get("r0")
        if not (isinstance(r0, list) and len(r0) == 2):
            errors.append("task.r0 must be a two-element list")
        _num(errors, "task.a", t.get("a"))
        _num(errors, "task.b", t.get("b"))
        if isinstance(t.get("b"), (int, float)) and t["b"] != 0 and not t.get("extra_state"):
            errors.append("task.b != 0 needs task.extra_state")


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)


def config_hash(cfg: dict) -> str:
    """Hash of everything that can change the numbers; output location and threads excluded."""
    core = {k: v for k, v in cfg.items() if k not in ("output", "threads")}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]


def resolve_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        return max(1, int(cli_value))
    env = os.environ.get("QDROP2D_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError([f"QDROP2D_THREADS={env!r} is not an integer"]) from exc
    return 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one named stream of the run seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=stream)))
