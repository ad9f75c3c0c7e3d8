"""Run configuration: a YAML tree mapped onto the dataclass configs.

Schema (defaults in brackets; fields without a default are required)::

    params:                 model coefficients, all required
      gamma, k, sigma, d, eta, alpha1, c_R, d1, gamma1, q1, delta, v_max
      dim [1]
      flux_mode [cutoff]    cutoff | raw
    grid:
      x_extent [4.0]  v_extent [4.0]  nx [64]  nv [64]  t_final [0.5]  nt [60]
    initial:
      p0:  x_center [-1.0]  v_center [0.5]  x_width [0.5]  v_width [0.5]  mass [1.0]
      c0:  center [1.5]  width [1.0]  amplitude [1.0]  background [0.0]
    rho:   center [v_max / 2]  width [0.3 v_max]  amplitude [1.0]
    scheme:
      variant [A]  max_iter [25]  tol [1e-6]  beta [N + 2]  beta2 [4.0]
    output:
      snapshots [10]  plots [false]
    seed [0]

Centres may be scalars (broadcast over the N axes) or length-N lists.
Setting initial.p0.mass to 0 gives the zero density.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import ConfigError, GridSpec, ModelParams, validate_params
from .kernels import RhoSpec

_PARAM_REQUIRED = ("gamma", "k", "sigma", "d", "eta", "alpha1", "c_R", "d1", "gamma1", "q1",
                   "delta", "v_max")


@dataclass(frozen=True)
class InitialData:
    x_center: tuple = (-1.0,)
    v_center: tuple = (0.5,)
    x_width: float = 0.5
    v_width: float = 0.5
    mass: float = 1.0
    c_center: tuple = (1.5,)
    c_width: float = 1.0
    c_amplitude: float = 1.0
    background: float = 0.0


@dataclass(frozen=True)
class SchemeConfig:
    variant: str = "A"
    max_iter: int = 25
    tol: float = 1e-6
    beta: Optional[float] = None
    beta2: float = 4.0


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    grid: GridSpec
    initial: InitialData = InitialData()
    rho: Optional[RhoSpec] = None
    scheme: SchemeConfig = SchemeConfig()
    snapshots: int = 10
    plots: bool = False
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def rho_spec(self) -> RhoSpec:
        return RhoSpec.default(self.params) if self.rho is None else self.rho

    def canonical(self) -> dict:
        """Fully resolved tree, used for hashing and for the artifact headers."""
        rho = self.rho_spec
        return {
            "params": self.params.as_dict(),
            "grid": self.grid.as_dict(),
            "initial": {f.name: _jsonable(getattr(self.initial, f.name)) for f in fields(self.initial)},
            "rho": {"center": list(rho.center), "width": rho.width, "amplitude": rho.amplitude},
            "scheme": {f.name: getattr(self.scheme, f.name) for f in fields(self.scheme)},
            "snapshots": self.snapshots,
            "plots": self.plots,
            "seed": self.seed,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return RunConfig(**kw)

    def with_field(self, name: str, value) -> "RunConfig":
        """Copy with one ModelParams or GridSpec field set (used by sweeps)."""
        if name in {f.name for f in fields(ModelParams)}:
            cfg = self.replace(params=self.params.replace(**{name: _coerce(ModelParams, name, value)}))
        elif name in {f.name for f in fields(GridSpec)}:
            cfg = self.replace(grid=self.grid.replace(**{name: _coerce(GridSpec, name, value)}))
        else:
            raise ConfigError(f"{name!r} is not a ModelParams or GridSpec field")
        validate_params(cfg.params, cfg.grid)
        return cfg


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _coerce(cls, name: str, value):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    if ftype in ("int", int):
        if float(value) != int(float(value)):
            raise ConfigError(f"{name} must be an integer (got {value!r})")
        return int(float(value))
    if ftype in ("str", str):
        return str(value)
    return float(value)


def _section(tree: dict, key: str, path: str = "") -> dict:
    sub = tree.get(key, {})
    if sub is None:
        sub = {}
    if not isinstance(sub, dict):
        raise ConfigError(f"{path}{key}: expected a mapping")
    return sub


def _number(sec: dict, key: str, path: str, default: Any = None, kind=float, required: bool = False):
    if key not in sec:
        if required:
            raise ConfigError(f"{path}{key}: missing required field {key!r}")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}{key}: expected a number (got {val!r})")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f"{path}{key}: expected an integer (got {val!r})")
        return int(val)
    if not math.isfinite(val):
        raise ConfigError(f"{path}{key}: must be finite")
    return float(val)


def _vector(sec: dict, key: str, path: str, default: tuple, dim: int) -> tuple:
    val = sec.get(key, default)
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return (float(val),) * dim
    if isinstance(val, (list, tuple)) and len(val) == 1:
        return (float(val[0]),) * dim
    if not isinstance(val, (list, tuple)) or len(val) != dim:
        raise ConfigError(f"{path}{key}: expected a number or a list of {dim} numbers (got {val!r})")
    try:
        return tuple(float(x) for x in val)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{key}: entries must be numbers (got {val!r})") from None


def _check_keys(sec: dict, allowed, path: str) -> None:
    extra = sorted(set(sec) - set(allowed))
    if extra:
        raise ConfigError(f"{path}{extra[0]}: unknown field")


def parse_config(tree: Any) -> RunConfig:
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(tree, ("params", "grid", "initial", "rho", "scheme", "output", "seed"), "")
    if "params" not in tree:
        raise ConfigError("params: missing required section 'params'")

    ps = _section(tree, "params")
    _check_keys(ps, _PARAM_REQUIRED + ("dim", "flux_mode"), "params.")
    pkw = {name: _number(ps, name, "params.", required=True) for name in _PARAM_REQUIRED}
    pkw["dim"] = _number(ps, "dim", "params.", 1, int)
    flux_mode = ps.get("flux_mode", "cutoff")
    if not isinstance(flux_mode, str):
        raise ConfigError(f"params.flux_mode: expected a string (got {flux_mode!r})")
    pkw["flux_mode"] = flux_mode
    params = ModelParams(**pkw)
    dim = params.dim
    if dim not in (1, 2, 3):
        raise ConfigError(f"params.dim: must be one of 1, 2, 3 (got {dim})")

    gs = _section(tree, "grid")
    gd = GridSpec()
    _check_keys(gs, gd.as_dict(), "grid.")
    gkw = {}
    for f in fields(GridSpec):
        kind = int if f.name in ("nx", "nv", "nt") else float
        gkw[f.name] = _number(gs, f.name, "grid.", getattr(gd, f.name), kind)
    grid = GridSpec(**gkw)

    try:
        validate_params(params, grid)
    except ConfigError as exc:
        name = str(exc).split()[0]
        where = "params." if name in pkw else "grid."
        raise ConfigError(f"{where}{exc}") from None

    ini = _section(tree, "initial")
    _check_keys(ini, ("p0", "c0"), "initial.")
    p0s = _section(ini, "p0", "initial.")
    c0s = _section(ini, "c0", "initial.")
    _check_keys(p0s, ("x_center", "v_center", "x_width", "v_width", "mass"), "initial.p0.")
    _check_keys(c0s, ("center", "width", "amplitude", "background"), "initial.c0.")
    d0 = InitialData()
    initial = InitialData(
        x_center=_vector(p0s, "x_center", "initial.p0.", d0.x_center, dim),
        v_center=_vector(p0s, "v_center", "initial.p0.", d0.v_center, dim),
        x_width=_number(p0s, "x_width", "initial.p0.", d0.x_width),
        v_width=_number(p0s, "v_width", "initial.p0.", d0.v_width),
        mass=_number(p0s, "mass", "initial.p0.", d0.mass),
        c_center=_vector(c0s, "center", "initial.c0.", d0.c_center, dim),
        c_width=_number(c0s, "width", "initial.c0.", d0.c_width),
        c_amplitude=_number(c0s, "amplitude", "initial.c0.", d0.c_amplitude),
        background=_number(c0s, "background", "initial.c0.", d0.background),
    )
    for name, path in (("x_width", "initial.p0."), ("v_width", "initial.p0."), ("c_width", "initial.c0.")):
        if not getattr(initial, name) > 0:
            raise ConfigError(f"{path}{name.replace('c_', '')}: must be > 0")
    for name, path in (("mass", "initial.p0."), ("c_amplitude", "initial.c0."), ("background", "initial.c0.")):
        if getattr(initial, name) < 0:
            raise ConfigError(f"{path}{name.replace('c_', '')}: must be >= 0")

    rho = None
    if tree.get("rho") is not None:
        rs = _section(tree, "rho")
        _check_keys(rs, ("center", "width", "amplitude"), "rho.")
        dflt = RhoSpec.default(params)
        try:
            rho = RhoSpec(_vector(rs, "center", "rho.", dflt.center, dim),
                          _number(rs, "width", "rho.", dflt.width),
                          _number(rs, "amplitude", "rho.", dflt.amplitude))
        except ValueError as exc:
            raise ConfigError(f"rho: {exc}") from None

    ss = _section(tree, "scheme")
    _check_keys(ss, ("variant", "max_iter", "tol", "beta", "beta2"), "scheme.")
    sd = SchemeConfig()
    variant = ss.get("variant", sd.variant)
    if variant not in ("A", "B"):
        raise ConfigError(f"scheme.variant: must be 'A' or 'B' (got {variant!r})")
    scheme = SchemeConfig(variant, _number(ss, "max_iter", "scheme.", sd.max_iter, int),
                          _number(ss, "tol", "scheme.", sd.tol),
                          _number(ss, "beta", "scheme.", None),
                          _number(ss, "beta2", "scheme.", sd.beta2))
    if scheme.max_iter < 1 or not scheme.tol > 0:
        raise ConfigError("scheme: max_iter must be >= 1 and tol > 0")

    out = _section(tree, "output")
    _check_keys(out, ("snapshots", "plots"), "output.")
    snapshots = _number(out, "snapshots", "output.", 10, int)
    if snapshots < 1:
        raise ConfigError("output.snapshots: must be >= 1")
    plots = out.get("plots", False)
    if not isinstance(plots, bool):
        raise ConfigError(f"output.plots: expected true or false (got {plots!r})")
    seed = tree.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer (got {seed!r})")

    return RunConfig(params, grid, initial, rho, scheme, snapshots, plots, seed, raw=tree)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(tree)
