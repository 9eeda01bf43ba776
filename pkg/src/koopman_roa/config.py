"""Job configuration: strict JSON loading and validation.

A configuration names the system, the truncation order, how the radii are
chosen, which truncation-error bound to use, optional user-supplied tail
constants, grid resolutions and validation settings.  Unknown keys are
rejected at every level.  Bundled examples can be loaded by name.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .bounds import BOUND_KINDS
from .errors import ConfigError
from .spectral import SystemDef

BUNDLED = ("example1", "vdp")


@dataclass(frozen=True)
class RadiusConfig:
    """Explicit S and R, or fractions of the estimated radius.

    ``grid_points`` or ``step`` set the per-axis grid of the polyradius scan.
    """

    S: float | None = None
    R: float | None = None
    f_S: float = 0.9
    f_R: float = 0.87
    grid_points: int = 101
    step: float | None = None
    select: str = "boundary"


@dataclass(frozen=True)
class GridConfig:
    gamma2_face: int = 2001
    omega_export: int | None = None
    surrogate: int = 101
    shrink: float = 0.999


@dataclass(frozen=True)
class ValidationConfig:
    samples: int = 1000
    horizon: float | None = None
    step: float | None = None
    seed: int = 0


@dataclass(frozen=True)
class JobConfig:
    name: str
    system: SystemDef
    N: int
    N_max: int = 200
    radius: RadiusConfig = field(default_factory=RadiusConfig)
    bound_kind: str = "prop2"
    constants: dict = field(default_factory=dict)
    grid: GridConfig = field(default_factory=GridConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    outputs: str | None = None
    surrogate: bool = True
    resonance_tol: float = 1e-8

    def with_overrides(self, bound_kind: str | None = None, seed: int | None = None) -> "JobConfig":
        cfg = self
        if bound_kind is not None:
            if bound_kind not in BOUND_KINDS:
                raise ConfigError(f"bound_kind: expected one of {BOUND_KINDS}, got {bound_kind!r}")
            cfg = replace(cfg, bound_kind=bound_kind)
        if seed is not None:
            cfg = replace(cfg, validation=replace(cfg.validation, seed=int(seed)))
        return cfg


_TOP_KEYS = {"name", "system", "N", "N_max", "radius", "bound_kind", "constants", "grid",
             "validation", "outputs", "surrogate", "resonance_tol"}
_SYSTEM_KEYS = {"name", "components", "domain_box", "file"}
_CONSTANT_KEYS = {"M", "M1", "M2"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed {sorted(allowed)}")


def _section(cls, data: dict | None, where: str):
    data = {} if data is None else data
    allowed = set(cls.__dataclass_fields__)
    _reject_unknown(data, allowed, where)
    return cls(**data)


def _positive(value, name: str, integer: bool = False, minimum=None):
    if integer:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    elif isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a finite number, got {value!r}")
    if minimum is None and value <= 0:
        raise ConfigError(f"{name}: must be > 0, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def _load_system(data: dict, base: Path | None, name: str) -> SystemDef:
    _reject_unknown(data, _SYSTEM_KEYS, "system")
    if "file" in data:
        if set(data) - {"file", "name"}:
            raise ConfigError("system: 'file' cannot be combined with inline components")
        path = Path(data["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        inner = _read_json(path)
        return _load_system(inner, path.parent, data.get("name", name))
    if "components" not in data:
        raise ConfigError("system: missing 'components'")
    comps = data["components"]
    if not isinstance(comps, list) or not comps:
        raise ConfigError("system.components: expected a non-empty list, one per state component")
    n = len(comps)
    for i, terms in enumerate(comps):
        if not isinstance(terms, list):
            raise ConfigError(f"system.components[{i}]: expected a list of terms")
        for j, t in enumerate(terms):
            where = f"system.components[{i}][{j}]"
            _reject_unknown(t, {"k", "c"}, where)
            if set(t) != {"k", "c"}:
                raise ConfigError(f"{where}: each term needs 'k' and 'c'")
            k = t["k"]
            if (not isinstance(k, list) or len(k) != n
                    or any(isinstance(e, bool) or not isinstance(e, int) or e < 0 for e in k)):
                raise ConfigError(f"{where}.k: expected {n} non-negative integers, got {k!r}")
            if isinstance(t["c"], bool) or not isinstance(t["c"], (int, float)):
                raise ConfigError(f"{where}.c: expected a real number, got {t['c']!r}")
    box = data.get("domain_box", [1.0] * n)
    if not isinstance(box, list):
        box = [box] * n
    if len(box) != n:
        raise ConfigError(f"system.domain_box: expected {n} entries, got {len(box)}")
    for b in box:
        _positive(b, "system.domain_box")
    try:
        return SystemDef.from_terms(comps, box, data.get("name", name))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc


def _read_json(path: Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def config_from_dict(data: dict, base: Path | None = None) -> JobConfig:
    """Validate a parsed configuration document."""
    _reject_unknown(data, _TOP_KEYS, "config")
    for key in ("system", "N"):
        if key not in data:
            raise ConfigError(f"config: missing required key '{key}'")
    name = data.get("name", "job")
    if not isinstance(name, str) or not name:
        raise ConfigError("name: expected a non-empty string")
    system = _load_system(data["system"], base, name)
    N = _positive(data["N"], "N", integer=True, minimum=2)
    N_max = _positive(data.get("N_max", max(200, N + 1)), "N_max", integer=True, minimum=1)
    if N_max <= N:
        raise ConfigError(f"N_max: must exceed N={N}, got {N_max}")

    radius = _section(RadiusConfig, data.get("radius"), "radius")
    for key in ("S", "R", "step"):
        if getattr(radius, key) is not None:
            _positive(getattr(radius, key), f"radius.{key}")
    _positive(radius.f_S, "radius.f_S")
    _positive(radius.f_R, "radius.f_R")
    _positive(radius.grid_points, "radius.grid_points", integer=True, minimum=2)
    if radius.select not in ("boundary", "argmin"):
        raise ConfigError(f"radius.select: expected 'boundary' or 'argmin', got {radius.select!r}")
    if radius.S is not None and radius.R is not None and not radius.R < radius.S:
        raise ConfigError(f"radius: ordering 0 < R < S violated (S={radius.S}, R={radius.R})")
    if radius.S is None and radius.R is None and not 0 < radius.f_R < radius.f_S <= 1:
        raise ConfigError(f"radius: fractions must satisfy 0 < f_R < f_S <= 1 "
                          f"(f_S={radius.f_S}, f_R={radius.f_R})")

    kind = data.get("bound_kind", "prop2")
    if kind not in BOUND_KINDS:
        raise ConfigError(f"bound_kind: expected one of {BOUND_KINDS}, got {kind!r}")

    constants = data.get("constants") or {}
    _reject_unknown(constants, _CONSTANT_KEYS, "constants")
    constants = {k: float(_positive(v, f"constants.{k}")) for k, v in constants.items() if v is not None}

    grid = _section(GridConfig, data.get("grid"), "grid")
    for key in ("gamma2_face", "surrogate"):
        _positive(getattr(grid, key), f"grid.{key}", integer=True, minimum=2)
    if grid.omega_export is not None:
        _positive(grid.omega_export, "grid.omega_export", integer=True, minimum=2)
    if not 0 < grid.shrink <= 1:
        raise ConfigError(f"grid.shrink: must lie in (0, 1], got {grid.shrink}")

    val = _section(ValidationConfig, data.get("validation"), "validation")
    _positive(val.samples, "validation.samples", integer=True, minimum=1)
    _positive(val.seed, "validation.seed", integer=True, minimum=0)
    for key in ("horizon", "step"):
        if getattr(val, key) is not None:
            _positive(getattr(val, key), f"validation.{key}")

    outputs = data.get("outputs")
    if outputs is not None and not isinstance(outputs, str):
        raise ConfigError("outputs: expected a directory path string")
    surrogate = data.get("surrogate", True)
    if not isinstance(surrogate, bool):
        raise ConfigError("surrogate: expected true or false")
    tol = _positive(data.get("resonance_tol", 1e-8), "resonance_tol")
    return JobConfig(name, system, N, N_max, radius, kind, constants, grid, val, outputs, surrogate, tol)


def load_config(path) -> JobConfig:
    """Load a configuration file, or a bundled example by name (``example1``, ``vdp``)."""
    if str(path) in BUNDLED and not Path(path).exists():
        text = resources.files("koopman_roa.data").joinpath(f"{path}.json").read_text(encoding="utf-8")
        return config_from_dict(json.loads(text))
    path = Path(path)
    return config_from_dict(_read_json(path), path.parent)
