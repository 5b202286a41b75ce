"""Run configuration: TOML loading, presets and validation.

A configuration has the blocks ``model``, ``ism``, ``solver``, ``initial`` and
``output`` plus a top-level ``seed``. Validation happens before any compute
and every error names the offending key.
"""

from __future__ import annotations

import copy
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .controls import ControlField
from .ism import IsmConfig
from .objective import ControlProblem
from .optimizers import KINDS, SolverSpec
from .problems import gpe_problem, initial_control, rotor_problem, spin_problem
from .runtime import MODES

__all__ = ["ConfigError", "load", "validate", "preset_config", "build", "PRESET_NAMES"]


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_NUM = (int, float)

MODEL_KEYS = {
    "spin": {"name": str, "n_spins": int, "T": _NUM, "steps": int, "coupling": _NUM,
             "topology": list, "source": int, "target": int, "alpha": _NUM,
             "checkpoint_stride": int},
    "rotor": {"name": str, "j_max": int, "T": _NUM, "steps": int},
    "gpe": {"name": str, "T": _NUM, "steps": int, "kappa": _NUM, "d": _NUM, "points": int,
            "x_min": _NUM, "x_max": _NUM},
}
ISM_KEYS = {"n": int, "workers": int, "mode": str, "eta": _NUM, "max_iter": int, "variant": str,
            "assemble": bool}
SOLVER_KEYS = {"kind": str, "rho": _NUM, "iterations": int, "delta": _NUM, "max_backtrack": int,
               "gmres_tol": _NUM, "gmres_restart": int, "gmres_maxiter": int, "hvp_scale": _NUM}
INITIAL_KEYS = {"kind": str, "amplitude": _NUM}
OUTPUT_KEYS = {"dir": str}
TOP_KEYS = {"model", "ism", "solver", "initial", "output", "seed"}

_PRESETS = {
    "spin": {
        "model": {"name": "spin", "n_spins": 5, "T": 14.0, "steps": 2**15, "coupling": 140.0,
                  "checkpoint_stride": 256},
        "ism": {"n": 4, "eta": 1e-3, "max_iter": 100},
        "solver": {"kind": "gradient", "rho": 1e4},
        "initial": {"kind": "spin", "amplitude": 100.0},
    },
    "spin-quick": {
        "model": {"name": "spin", "n_spins": 3, "T": 1.0 / 14.0, "steps": 2**10, "coupling": 140.0},
        "ism": {"n": 4, "eta": 1e-3, "max_iter": 10},
        "solver": {"kind": "gradient", "rho": 1e4},
        "initial": {"kind": "spin", "amplitude": 100.0},
    },
    "rotor": {
        "model": {"name": "rotor", "j_max": 30, "T": math.pi / 6.6376e-6, "steps": 2**13},
        "ism": {"n": 4, "eta": 1e-3, "max_iter": 200},
        "solver": {"kind": "monotonic"},
        "initial": {"kind": "zero"},
    },
    "rotor-quick": {
        "model": {"name": "rotor", "j_max": 10, "T": 1e5, "steps": 2**9},
        "ism": {"n": 4, "eta": 1e-3, "max_iter": 10},
        "solver": {"kind": "monotonic"},
        "initial": {"kind": "zero"},
    },
    "gpe": {
        "model": {"name": "gpe", "T": 8.0, "steps": 2**9, "kappa": 1.0, "d": 10.0, "points": 50},
        "ism": {"n": 4, "eta": 1e-3, "max_iter": 10, "variant": "split"},
        "solver": {"kind": "gradient", "rho": 0.1},
        "initial": {"kind": "gpe"},
    },
}
# the condensate benchmark is already desk-sized
_PRESETS["gpe-quick"] = copy.deepcopy(_PRESETS["gpe"])

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_config(name: str, quick: bool = False) -> dict:
    key = f"{name}-quick" if quick and not name.endswith("-quick") else name
    if key not in _PRESETS:
        raise ConfigError("preset", f"unknown preset {key!r}; available: {', '.join(PRESET_NAMES)}")
    cfg = copy.deepcopy(_PRESETS[key])
    cfg["seed"] = 0
    cfg["output"] = {"dir": "out"}
    return cfg


def load(path) -> dict:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("file", f"not valid TOML: {exc}") from exc
    return validate(data)


def _check_block(block, schema: dict, prefix: str):
    if not isinstance(block, dict):
        raise ConfigError(prefix, "must be a table")
    for key, value in block.items():
        if key not in schema:
            raise ConfigError(f"{prefix}.{key}", f"unknown key; allowed: {', '.join(sorted(schema))}")
        want = schema[key]
        if want is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{prefix}.{key}", f"expected an integer, got {value!r}")
        if want is _NUM and (isinstance(value, bool) or not isinstance(value, _NUM)):
            raise ConfigError(f"{prefix}.{key}", f"expected a number, got {value!r}")
        if want in (str, bool, list) and not isinstance(value, want):
            raise ConfigError(f"{prefix}.{key}", f"expected {want.__name__}, got {value!r}")


def validate(data: dict) -> dict:
    """Check structure and value ranges; returns a normalized deep copy."""
    if not isinstance(data, dict):
        raise ConfigError("config", "must be a table")
    cfg = copy.deepcopy(data)
    for key in cfg:
        if key not in TOP_KEYS:
            raise ConfigError(key, f"unknown top-level key; allowed: {', '.join(sorted(TOP_KEYS))}")
    if "model" not in cfg:
        raise ConfigError("model", "missing required block")
    model = cfg["model"]
    if not isinstance(model, dict):
        raise ConfigError("model", "must be a table")
    name = model.get("name")
    if name not in MODEL_KEYS:
        raise ConfigError("model.name", f"expected one of {sorted(MODEL_KEYS)}, got {name!r}")
    _check_block(model, MODEL_KEYS[name], "model")
    if name == "rotor" and "T" not in model:
        raise ConfigError("model.T", "the rotor horizon must be given")
    for key in ("T",):
        if key in model and not model[key] > 0:
            raise ConfigError(f"model.{key}", "must be positive")
    if "steps" in model and model["steps"] < 1:
        raise ConfigError("model.steps", "must be at least 1")
    if name == "rotor" and model.get("j_max", 30) < 4:
        raise ConfigError("model.j_max", "must be at least 4")

    ism = cfg.setdefault("ism", {})
    _check_block(ism, ISM_KEYS, "ism")
    if ism.get("n", 1) < 1:
        raise ConfigError("ism.n", "must be at least 1")
    if ism.get("workers", 1) < 1:
        raise ConfigError("ism.workers", "must be at least 1")
    if ism.get("mode", "sequential") not in MODES:
        raise ConfigError("ism.mode", f"expected one of {MODES}")
    if not 0 < ism.get("eta", 1e-3) <= 1:
        raise ConfigError("ism.eta", "must satisfy 0 < eta <= 1")
    if ism.get("max_iter", 0) < 0:
        raise ConfigError("ism.max_iter", "must be nonnegative")
    if ism.get("variant", "interpolated") not in ("interpolated", "split"):
        raise ConfigError("ism.variant", "expected 'interpolated' or 'split'")
    if name == "gpe" and ism.get("variant", "split") != "split":
        raise ConfigError("ism.variant", "the condensate model is nonlinear and needs the split variant")

    solver = cfg.setdefault("solver", {})
    _check_block(solver, SOLVER_KEYS, "solver")
    if solver.get("kind", "gradient") not in KINDS:
        raise ConfigError("solver.kind", f"expected one of {KINDS}")
    for key in ("rho", "gmres_tol"):
        if key in solver and not solver[key] > 0:
            raise ConfigError(f"solver.{key}", "must be positive")
    if solver.get("kind") == "monotonic" and name == "gpe":
        raise ConfigError("solver.kind", "the monotonic sweep needs a Crank-Nicolson model")

    initial = cfg.setdefault("initial", {})
    _check_block(initial, INITIAL_KEYS, "initial")
    if initial.get("kind", "spin") not in ("spin", "rotor", "zero", "gpe", "random"):
        raise ConfigError("initial.kind", "expected spin, rotor, zero, gpe or random")

    out = cfg.setdefault("output", {})
    _check_block(out, OUTPUT_KEYS, "output")
    seed = cfg.setdefault("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", f"expected an integer, got {seed!r}")
    return cfg


def build(cfg: dict) -> tuple[ControlProblem, ControlField, IsmConfig]:
    """Problem, initial field and outer-loop settings from a validated config."""
    model = dict(cfg["model"])
    name = model.pop("name")
    if name == "spin":
        if "topology" in model:
            model["topology"] = [tuple(p) for p in model["topology"]]
        problem = spin_problem(**model)
    elif name == "rotor":
        problem = rotor_problem(**model)
    else:
        problem = gpe_problem(**model)
    init = cfg.get("initial", {})
    u0 = initial_control(problem, init.get("kind"), init.get("amplitude"), cfg.get("seed"))
    ism = dict(cfg.get("ism", {}))
    ism.setdefault("variant", "split" if name == "gpe" else None)
    ism_cfg = IsmConfig(solver=SolverSpec(**cfg.get("solver", {})), **ism)
    return problem, u0, ism_cfg
