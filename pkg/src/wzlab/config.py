"""Experiment configuration: strict JSON parsing, validation and presets.

A single JSON document describes one experiment.  Unknown keys are hard
errors anywhere in the document: silent typos would corrupt rate studies.
Errors carry the key path of the offending entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .grid import SpatialGrid, gaussian_bump, trig_function, zero_function
from .noise import SCHEMES, TimeGrid, smoothed_window_steps
from .problem import CoefficientField, ProblemSpec

MODES = ("noise", "solve", "rates", "check")
PATH_KINDS = ("wiener", "linear")


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key path."""


def _require_keys(block: dict, allowed: set, required: set, path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
    for key in required:
        if key not in block:
            raise ConfigError(f"{path}.{key}: missing required key")


def _get_number(block: dict, key: str, path: str, *, integer=False, minimum=None, default=None):
    if key not in block:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}: missing required key")
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}")
    return int(v) if integer else float(v)


def _parse_coefficient(block, path: str) -> CoefficientField:
    _require_keys(block, {"const", "trig", "table"}, set(), path)
    if len(block) != 1:
        raise ConfigError(f"{path}: exactly one of const/trig/table expected")
    if "const" in block:
        v = block["const"]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.const: expected a number")
        return CoefficientField.constant(v)
    if "table" in block:
        vals = block["table"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{path}.table: expected a non-empty array")
        return CoefficientField.tabulated(vals)
    modes = block["trig"]
    if not isinstance(modes, list):
        raise ConfigError(f"{path}.trig: expected an array of [mode, cos, sin] triples")
    try:
        return CoefficientField.analytic([tuple(m) for m in modes])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.trig: {exc}") from exc


def _parse_field(block, grid: SpatialGrid, path: str):
    _require_keys(block, {"gaussian", "trig"}, set(), path)
    if len(block) != 1:
        raise ConfigError(f"{path}: exactly one of gaussian/trig expected")
    if "gaussian" in block:
        g = block["gaussian"]
        _require_keys(g, {"center", "width", "amplitude"}, {"center", "width", "amplitude"},
                      f"{path}.gaussian")
        return gaussian_bump(grid,
                             center=_get_number(g, "center", f"{path}.gaussian"),
                             width=_get_number(g, "width", f"{path}.gaussian", minimum=1e-12),
                             amplitude=_get_number(g, "amplitude", f"{path}.gaussian"))
    modes = block["trig"]
    if not isinstance(modes, list):
        raise ConfigError(f"{path}.trig: expected an array of [mode, cos, sin] triples")
    try:
        return trig_function(grid, [tuple(m) for m in modes])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.trig: {exc}") from exc


def _parse_problem(block: dict, grid: SpatialGrid, path: str = "problem") -> ProblemSpec:
    allowed = {"d1", "domain_length", "a", "a1", "a0", "b", "b0", "sigma", "u0", "f", "g"}
    _require_keys(block, allowed, {"d1", "a", "b", "u0"}, path)
    d1 = _get_number(block, "d1", path, integer=True, minimum=1)
    if "domain_length" in block:
        L = _get_number(block, "domain_length", path, minimum=1e-12)
        if abs(L - grid.domain_length) > 1e-12 * max(L, 1.0):
            raise ConfigError(f"{path}.domain_length: conflicts with space.domain_length")

    def coef(key, default_zero=True):
        if key not in block:
            if default_zero:
                return CoefficientField.constant(0.0)
            raise ConfigError(f"{path}.{key}: missing required key")
        return _parse_coefficient(block[key], f"{path}.{key}")

    def coef_list(key, required):
        if key not in block:
            if required:
                raise ConfigError(f"{path}.{key}: missing required key")
            return [CoefficientField.constant(0.0) for _ in range(d1)]
        lst = block[key]
        if not isinstance(lst, list) or len(lst) != d1:
            raise ConfigError(f"{path}.{key}: expected an array of {d1} coefficients")
        return [_parse_coefficient(c, f"{path}.{key}[{i}]") for i, c in enumerate(lst)]

    sigma = None
    if "sigma" in block and block["sigma"] is not None:
        lst = block["sigma"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError(f"{path}.sigma: expected a non-empty array of coefficients")
        sigma = [_parse_coefficient(c, f"{path}.sigma[{i}]") for i, c in enumerate(lst)]

    u0 = _parse_field(block["u0"], grid, f"{path}.u0")
    f = _parse_field(block["f"], grid, f"{path}.f") if "f" in block else zero_function(grid)
    if "g" in block:
        lst = block["g"]
        if not isinstance(lst, list) or len(lst) != d1:
            raise ConfigError(f"{path}.g: expected an array of {d1} fields")
        g = [_parse_field(fb, grid, f"{path}.g[{i}]") for i, fb in enumerate(lst)]
    else:
        g = None

    try:
        return ProblemSpec(grid=grid, d1=d1,
                           a=coef("a", default_zero=False), a1=coef("a1"), a0=coef("a0"),
                           b=coef_list("b", required=True), b0=coef_list("b0", required=False),
                           u0=u0, f=f, g=g, sigma=sigma)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str | None
    seed: int
    replicas: int
    time_grid: TimeGrid
    scheme: str | None
    n_list: tuple
    sobolev_m: int
    n_substeps: int
    record_count: int
    path_kind: str
    paths_dir: str | None
    out_dir: str | None
    gamma_target: float
    threshold: float | None
    checks: tuple | None
    d1: int
    space: SpatialGrid | None
    problem: ProblemSpec | None
    raw: dict

    def require_problem(self) -> ProblemSpec:
        if self.problem is None:
            raise ConfigError("problem: missing required block for this mode")
        return self.problem

    def require_scheme(self) -> str:
        if self.scheme is None:
            raise ConfigError("scheme: missing required key for this mode")
        return self.scheme


TOP_KEYS = {"mode", "seed", "replicas", "grid", "space", "scheme", "n_list", "sobolev_m",
            "n_substeps", "record_times", "path", "paths_dir", "out_dir", "gamma_target",
            "threshold", "checks", "d1", "problem"}


def parse_config(doc: dict) -> ExperimentConfig:
    _require_keys(doc, TOP_KEYS, set(), "config")

    mode = doc.get("mode")
    if mode is not None and mode not in MODES:
        raise ConfigError(f"config.mode: must be one of {MODES}")

    seed = _get_number(doc, "seed", "config", integer=True, minimum=0, default=0)
    replicas = _get_number(doc, "replicas", "config", integer=True, minimum=1, default=1)

    grid_block = doc.get("grid", {"T": 1.0, "n_fine": 1024})
    _require_keys(grid_block, {"T", "n_fine"}, {"T", "n_fine"}, "grid")
    try:
        time_grid = TimeGrid(T=_get_number(grid_block, "T", "grid", minimum=1e-12),
                             n_fine=_get_number(grid_block, "n_fine", "grid", integer=True, minimum=2))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    scheme = doc.get("scheme")
    if scheme is not None and scheme not in SCHEMES:
        raise ConfigError(f"config.scheme: must be one of {SCHEMES}")

    n_list = doc.get("n_list", [])
    if not isinstance(n_list, list) or any(isinstance(n, bool) or not isinstance(n, int) for n in n_list):
        raise ConfigError("config.n_list: expected an array of integers")
    if n_list != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise ConfigError("config.n_list: must be strictly increasing")
    if scheme is not None:
        for n in n_list:
            try:
                if scheme == "polygonal":
                    if n < 1 or time_grid.n_fine % n != 0:
                        raise ValueError(f"n={n} must divide n_fine={time_grid.n_fine}")
                else:
                    smoothed_window_steps(n, time_grid)
            except ValueError as exc:
                raise ConfigError(f"config.n_list: {exc}") from exc

    sobolev_m = _get_number(doc, "sobolev_m", "config", integer=True, minimum=0, default=0)
    n_substeps = _get_number(doc, "n_substeps", "config", integer=True, minimum=1, default=1)
    record_count = _get_number(doc, "record_times", "config", integer=True, minimum=2, default=33)

    path_kind = doc.get("path", "wiener")
    if path_kind not in PATH_KINDS:
        raise ConfigError(f"config.path: must be one of {PATH_KINDS}")

    paths_dir = doc.get("paths_dir")
    if paths_dir is not None and not isinstance(paths_dir, str):
        raise ConfigError("config.paths_dir: expected a string")
    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("config.out_dir: expected a string")

    gamma_target = _get_number(doc, "gamma_target", "config", default=0.5)
    threshold = None
    if doc.get("threshold") is not None:
        threshold = _get_number(doc, "threshold", "config")

    checks = doc.get("checks")
    if checks is not None:
        if not isinstance(checks, list) or any(not isinstance(c, str) for c in checks):
            raise ConfigError("config.checks: expected an array of check names")
        checks = tuple(checks)

    space = None
    problem = None
    if "space" in doc:
        _require_keys(doc["space"], {"n_x", "domain_length"}, {"n_x", "domain_length"}, "space")
        try:
            space = SpatialGrid(n_x=_get_number(doc["space"], "n_x", "space", integer=True, minimum=8),
                                domain_length=_get_number(doc["space"], "domain_length", "space",
                                                          minimum=1e-12))
        except ValueError as exc:
            raise ConfigError(f"space: {exc}") from exc
    if "problem" in doc:
        if space is None:
            raise ConfigError("space: required when a problem block is present")
        problem = _parse_problem(doc["problem"], space)

    d1 = _get_number(doc, "d1", "config", integer=True, minimum=1,
                     default=problem.d1 if problem is not None else 1)
    if problem is not None and d1 != problem.d1:
        raise ConfigError("config.d1: conflicts with problem.d1")

    return ExperimentConfig(
        mode=mode, seed=seed, replicas=replicas, time_grid=time_grid, scheme=scheme,
        n_list=tuple(n_list), sobolev_m=sobolev_m, n_substeps=n_substeps,
        record_count=record_count, path_kind=path_kind, paths_dir=paths_dir,
        out_dir=out_dir, gamma_target=gamma_target, threshold=threshold,
        checks=checks, d1=d1, space=space, problem=problem, raw=doc,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Load a config from a file path, or from the bundled presets by name."""
    p = Path(path)
    if p.is_file():
        text = p.read_text()
    else:
        preset = preset_path(str(path))
        if preset is None:
            raise ConfigError(f"config file {path} not found (and no preset of that name)")
        text = preset.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(doc)


def preset_path(name: str):
    """Resolve a bundled preset by bare name, or None."""
    if not name.endswith(".json"):
        name = name + ".json"
    ref = resources.files("wzlab").joinpath("presets").joinpath(name)
    return ref if ref.is_file() else None


def preset_names() -> list[str]:
    base = resources.files("wzlab").joinpath("presets")
    return sorted(p.name.removesuffix(".json") for p in base.iterdir() if p.name.endswith(".json"))
