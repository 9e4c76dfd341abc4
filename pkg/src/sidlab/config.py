"""Declarative experiment configuration.

One JSON document per invocation, organized in blocks:

    kernel      which interaction potential (variant + parameters)
    grid        torus discretization (dim, n)
    solver      fixed-point enumeration parameters
    sde         simulator parameters
    flow        descent-flow parameters
    montecarlo  harness parameters
    output      artifact directory and formats

Validation is strict: unknown keys are rejected (with a spelling
suggestion), and every violation in the document is reported, not just
the first one.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Grid, make_grid
from .kernels import (
    KernelSpec,
    TranslationInvariantKernel,
    make_circle_dot,
    make_gaussian_schoenberg,
    make_grid_matrix,
    make_heat,
    make_translation_invariant,
)
from .sde import MonteCarloThresholds, SdeConfig


class ConfigError(Exception):
    """Carries the full list of validation violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


_NUMBER = (int, float)


def _is_number(v) -> bool:
    return isinstance(v, _NUMBER) and not isinstance(v, bool)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed and normalized configuration; `raw` is the document as given."""

    raw: dict
    kernel: Optional[dict] = None
    grid: Optional[dict] = None
    solver: Optional[dict] = None
    sde: Optional[dict] = None
    flow: Optional[dict] = None
    montecarlo: Optional[dict] = None
    output: dict = field(default_factory=dict)


_BLOCK_NAMES = ["kernel", "grid", "solver", "sde", "flow", "montecarlo", "output"]

_KERNEL_VARIANTS = ["circle_dot", "heat", "translation_invariant",
                    "gaussian_schoenberg", "grid_matrix", "zero"]

# per-variant keys besides "variant": name -> (checker, required, default)
_KERNEL_FIELDS = {
    "circle_dot": {"a": ("number", True, None)},
    "heat": {"a": ("number", True, None),
             "tau": ("positive", True, None),
             "k_max": ("positive_int", False, None),
             "dim": ("dim", False, None)},
    "translation_invariant": {"coeffs": ("coeffs", True, None)},
    "gaussian_schoenberg": {"beta": ("positive", True, None),
                            "sigma": ("nonzero", True, None)},
    "grid_matrix": {"path": ("string", True, None)},
    "zero": {"dim": ("dim", False, None)},
}

_GRID_FIELDS = {
    "dim": ("dim", False, 1),
    "n": ("grid_n", False, 64),
}

_SOLVER_FIELDS = {
    "n_starts": ("positive_int", False, 64),
    "tol": ("positive", False, 1e-10),
    "damping": ("unit_interval", False, 0.5),
    "dedupe_radius": ("positive", False, 1e-4),
    "eps_deg": ("positive", False, 1e-6),
    "seed": ("seed", False, 0),
}

_SDE_FIELDS = {
    "dim": ("dim", False, 1),
    "dt": ("positive", True, None),
    "t_warmup": ("positive", False, 1.0),
    "t_end": ("positive", True, None),
    "k_max": ("positive_int", True, None),
    "seed": ("seed", False, 0),
    "x0": ("position", False, 0.0),
    "record_times": ("time_list", False, ()),
}

_FLOW_FIELDS = {
    "step": ("unit_interval", False, 0.05),
    "t_end": ("positive", False, 50.0),
    "seed": ("seed", False, 0),
    "init": ("flow_init", False, "random"),
}

_MONTECARLO_FIELDS = {
    "n_runs": ("positive_int", True, None),
    "workers": ("positive_int", False, 1),
    "dist_threshold": ("positive", False, 0.1),
    "bump_threshold": ("positive", False, 0.2),
}

_OUTPUT_FIELDS = {
    "directory": ("string", False, "."),
    "formats": ("formats", False, ("csv", "json")),
}

_BLOCK_FIELDS = {
    "grid": _GRID_FIELDS,
    "solver": _SOLVER_FIELDS,
    "sde": _SDE_FIELDS,
    "flow": _FLOW_FIELDS,
    "montecarlo": _MONTECARLO_FIELDS,
    "output": _OUTPUT_FIELDS,
}


def _check_value(kind: str, value, path: str, errors: list):
    ok = True
    if kind == "number":
        ok = _is_number(value)
        if not ok:
            errors.append(f"{path}: expected a number")
    elif kind == "positive":
        if not _is_number(value):
            errors.append(f"{path}: expected a number")
            ok = False
        elif value <= 0:
            errors.append(f"{path}: must be > 0")
            ok = False
    elif kind == "nonzero":
        if not _is_number(value):
            errors.append(f"{path}: expected a number")
            ok = False
        elif value == 0:
            errors.append(f"{path}: must be nonzero")
            ok = False
    elif kind == "positive_int":
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            errors.append(f"{path}: expected an integer >= 1")
            ok = False
    elif kind == "seed":
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            errors.append(f"{path}: expected a nonnegative integer")
            ok = False
    elif kind == "dim":
        if value not in (1, 2):
            errors.append(f"{path}: must be 1 or 2")
            ok = False
    elif kind == "grid_n":
        if not isinstance(value, int) or isinstance(value, bool) or value < 8:
            errors.append(f"{path}: expected an integer >= 8")
            ok = False
    elif kind == "unit_interval":
        if not _is_number(value) or not (0.0 < value <= 1.0):
            errors.append(f"{path}: must lie in (0, 1]")
            ok = False
    elif kind == "string":
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string")
            ok = False
    elif kind == "flow_init":
        if value not in ("random", "uniform"):
            errors.append(f"{path}: must be 'random' or 'uniform'")
            ok = False
    elif kind == "position":
        if _is_number(value):
            pass
        elif isinstance(value, list) and 1 <= len(value) <= 2 and all(map(_is_number, value)):
            pass
        else:
            errors.append(f"{path}: expected a number or a list of 1-2 numbers")
            ok = False
    elif kind == "time_list":
        if not isinstance(value, list) or not all(map(_is_number, value)):
            errors.append(f"{path}: expected a list of numbers")
            ok = False
        elif any(b <= a for a, b in zip(value, value[1:])):
            errors.append(f"{path}: must be strictly increasing")
            ok = False
    elif kind == "formats":
        if not isinstance(value, list) or not value or not set(value) <= {"csv", "json"}:
            errors.append(f"{path}: expected a non-empty list drawn from ['csv', 'json']")
            ok = False
    elif kind == "coeffs":
        if not isinstance(value, dict) or not value:
            errors.append(f"{path}: expected a non-empty object of frequency -> coefficient")
            return False
        dims = set()
        for key, coeff in value.items():
            try:
                k = tuple(int(tok) for tok in str(key).split(","))
            except ValueError:
                errors.append(f"{path}.{key}: frequency must be 'k' or 'k1,k2'")
                ok = False
                continue
            dims.add(len(k))
            if not _is_number(coeff):
                errors.append(f"{path}.{key}: coefficient must be a number")
                ok = False
        if len(dims) > 1:
            errors.append(f"{path}: mixed frequency dimensions")
            ok = False
    return ok


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, list(known), n=1)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _check_block(name: str, data, fields: dict, errors: list) -> dict:
    if not isinstance(data, dict):
        errors.append(f"{name}: expected an object")
        return {}
    out = {}
    for key in sorted(data):
        if key not in fields:
            errors.append(f"{name}.{key}: unknown key{_suggest(key, fields)}")
    for key, (kind, required, default) in fields.items():
        if key in data:
            if _check_value(kind, data[key], f"{name}.{key}", errors):
                out[key] = data[key]
        elif required:
            errors.append(f"{name}.{key}: required key missing")
        elif default is not None or key in ("record_times",):
            out[key] = default
    return out


def _check_kernel(data, errors: list) -> dict:
    if not isinstance(data, dict):
        errors.append("kernel: expected an object")
        return {}
    variant = data.get("variant")
    if variant not in _KERNEL_VARIANTS:
        errors.append(
            f"kernel.variant: must be one of {_KERNEL_VARIANTS}"
            + (_suggest(str(variant), _KERNEL_VARIANTS) if variant else "")
        )
        return {}
    fields = _KERNEL_FIELDS[variant]
    out = _check_block("kernel", {k: v for k, v in data.items() if k != "variant"},
                       fields, errors)
    out["variant"] = variant
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document.

    Raises ConfigError carrying every violation found (unknown keys,
    missing required keys, type and range errors), each tagged with its
    path in the document.
    """
    errors: list = []
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"document: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["document: top level must be an object"])
    blocks = {}
    for key in sorted(raw):
        if key not in _BLOCK_NAMES:
            errors.append(f"{key}: unknown key{_suggest(key, _BLOCK_NAMES)}")
    for name in _BLOCK_NAMES:
        if name not in raw:
            continue
        if name == "kernel":
            blocks[name] = _check_kernel(raw[name], errors)
        else:
            blocks[name] = _check_block(name, raw[name], _BLOCK_FIELDS[name], errors)
    if errors:
        raise ConfigError(errors)
    output = blocks.get("output", {k: d for k, (_, _, d) in _OUTPUT_FIELDS.items()})
    output.setdefault("directory", ".")
    output.setdefault("formats", ("csv", "json"))
    output["formats"] = tuple(output["formats"])
    return ExperimentConfig(
        raw=raw,
        kernel=blocks.get("kernel"),
        grid=blocks.get("grid"),
        solver=blocks.get("solver"),
        sde=blocks.get("sde"),
        flow=blocks.get("flow"),
        montecarlo=blocks.get("montecarlo"),
        output=output,
    )


_COMMAND_BLOCKS = {
    "kernel-info": ("kernel", "grid"),
    "analyze": ("kernel", "grid", "solver"),
    "flow": ("kernel", "grid", "flow"),
    "simulate": ("kernel", "sde"),
    "montecarlo": ("kernel", "sde", "montecarlo"),
}


def require_blocks(config: ExperimentConfig, command: str) -> None:
    if command not in _COMMAND_BLOCKS:
        raise ConfigError([f"command: unknown command '{command}'"])
    missing = [b for b in _COMMAND_BLOCKS[command] if getattr(config, b.replace("-", "_")) is None]
    if missing:
        raise ConfigError([f"{b}: block required by command '{command}'" for b in missing])


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_grid(config: ExperimentConfig) -> Grid:
    blk = config.grid or {}
    return make_grid(blk.get("dim", 1), blk.get("n", 64))


def _coeffs_from_block(coeffs: dict) -> dict:
    return {tuple(int(tok) for tok in str(key).split(",")): v for key, v in coeffs.items()}


def build_kernel(config: ExperimentConfig, grid: Optional[Grid] = None,
                 dim_hint: Optional[int] = None) -> KernelSpec:
    blk = config.kernel
    if blk is None:
        raise ConfigError(["kernel: block missing"])
    variant = blk["variant"]
    dim = dim_hint or (grid.dim if grid is not None else 1)
    if variant == "circle_dot":
        return make_circle_dot(blk["a"])
    if variant == "heat":
        return make_heat(blk["a"], blk["tau"], blk.get("k_max"), dim=blk.get("dim", dim))
    if variant == "translation_invariant":
        return make_translation_invariant(_coeffs_from_block(blk["coeffs"]))
    if variant == "gaussian_schoenberg":
        if grid is None:
            raise ConfigError(["kernel: gaussian_schoenberg requires a grid block"])
        return make_gaussian_schoenberg(blk["beta"], blk["sigma"], grid)
    if variant == "grid_matrix":
        if grid is None:
            raise ConfigError(["kernel: grid_matrix requires a grid block"])
        entries = np.loadtxt(blk["path"], delimiter=",", ndmin=2)
        return make_grid_matrix(grid, entries)
    if variant == "zero":
        return TranslationInvariantKernel(dim=blk.get("dim", dim), coeffs={})
    raise ConfigError([f"kernel.variant: unsupported '{variant}'"])


def build_sde_config(config: ExperimentConfig) -> SdeConfig:
    blk = config.sde
    if blk is None:
        raise ConfigError(["sde: block missing"])
    dim = blk.get("dim", 1)
    kernel = build_kernel(config, dim_hint=dim)
    x0 = blk.get("x0", 0.0)
    x0 = tuple(x0) if isinstance(x0, list) else (float(x0),) * dim
    try:
        return SdeConfig(
            kernel=kernel,
            dim=dim,
            k_max=blk["k_max"],
            dt=blk["dt"],
            t_end=blk["t_end"],
            seed=blk.get("seed", 0),
            x0=x0,
            t_warmup=blk.get("t_warmup", 1.0),
            record_times=tuple(blk.get("record_times", ())),
        )
    except (ValueError, TypeError) as exc:
        # cross-field constraints (kernel dim vs sde.dim, k_max vs support,
        # t_end vs t_warmup, ...) are configuration errors
        raise ConfigError([f"sde: {exc}"]) from exc


def build_thresholds(config: ExperimentConfig) -> MonteCarloThresholds:
    blk = config.montecarlo or {}
    return MonteCarloThresholds(
        dist=blk.get("dist_threshold", 0.1),
        bump_mode=blk.get("bump_threshold", 0.2),
    )
