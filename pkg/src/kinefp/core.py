"""Parameters, phase-space grids, field containers and quadrature."""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import cached_property
from typing import Union

import numpy as np

# default positivity slack, relative to the sup of the field being checked
POSITIVITY_SLACK = 1e-10

FLUX_MODES = ("cutoff", "raw")
FIELD_KINDS = ("taf", "grad_taf_component", "force_component", "flux_j",
               "marginal", "anastomosis_a")


class ConfigError(ValueError):
    """A parameter or grid value outside its admissible domain."""


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 0.5      # anastomosis rate
    k: float = 1.0          # friction
    sigma: float = 0.5      # velocity diffusivity
    d: float = 1.0          # TAF diffusivity
    eta: float = 0.5        # TAF consumption
    alpha1: float = 1.0     # max branching rate
    c_R: float = 1.0        # reference concentration
    d1: float = 0.5         # chemotactic strength
    gamma1: float = 1.0     # saturation coefficient
    q1: float = 1.0         # saturation exponent
    delta: float = 1.0      # Fermi cutoff sharpness
    v_max: float = 2.0      # cutoff speed
    dim: int = 1
    flux_mode: str = "cutoff"

    def replace(self, **changes) -> "ModelParams":
        return type(self)(**{**self.as_dict(), **changes})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class GridSpec:
    x_extent: float = 4.0
    v_extent: float = 4.0
    nx: int = 64
    nv: int = 64
    t_final: float = 0.5
    nt: int = 60

    def replace(self, **changes) -> "GridSpec":
        return type(self)(**{**self.as_dict(), **changes})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def dx(self) -> float:
        return 2.0 * self.x_extent / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.v_extent / self.nv

    @property
    def dt(self) -> float:
        return self.t_final / self.nt


# Parameters that must be strictly positive for the linear operator to be
# well posed.  The coupling strengths may be zero so that reductions
# (decoupled, sink-free, branching-free) can be run.
_STRICT = ("k", "sigma", "d", "c_R", "delta", "v_max")
_NONNEG = ("gamma", "eta", "alpha1", "d1", "gamma1", "q1")


def validate_params(p: ModelParams, g: GridSpec) -> tuple[ModelParams, GridSpec]:
    for name in _STRICT:
        val = getattr(p, name)
        if not np.isfinite(val) or val <= 0:
            raise ConfigError(f"{name} must be > 0 (got {val!r})")
    for name in _NONNEG:
        val = getattr(p, name)
        if not np.isfinite(val) or val < 0:
            raise ConfigError(f"{name} must be >= 0 (got {val!r})")
    if p.dim not in (1, 2, 3) or int(p.dim) != p.dim:
        raise ConfigError(f"dim must be one of 1, 2, 3 (got {p.dim!r})")
    if p.flux_mode not in FLUX_MODES:
        raise ConfigError(f"flux_mode must be one of {FLUX_MODES} (got {p.flux_mode!r})")
    for name in ("x_extent", "v_extent", "t_final"):
        val = getattr(g, name)
        if not np.isfinite(val) or val <= 0:
            raise ConfigError(f"{name} must be > 0 (got {val!r})")
    for name in ("nx", "nv"):
        val = getattr(g, name)
        if int(val) != val or val < 4 or val % 2:
            raise ConfigError(f"{name} must be an even integer >= 4 (got {val!r})")
    if int(g.nt) != g.nt or g.nt < 1:
        raise ConfigError(f"nt must be a positive integer (got {g.nt!r})")
    return p, g


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


class PhaseGrid:
    """Tensor grid on [-Lx, Lx]^N x [-Lv, Lv]^N with cell-centred nodes.

    Arrays over phase space are laid out as (x_1, ..., x_N, v_1, ..., v_N);
    arrays over physical space as (x_1, ..., x_N).
    """

    def __init__(self, spec: GridSpec, dim: int):
        self.spec = spec
        self.dim = int(dim)
        self.dx = spec.dx
        self.dv = spec.dv
        self.dt = spec.dt
        self.nt = spec.nt
        self.x = -spec.x_extent + (np.arange(spec.nx) + 0.5) * self.dx
        self.v = -spec.v_extent + (np.arange(spec.nv) + 0.5) * self.dv
        self.wx = _trapezoid_weights(spec.nx, self.dx)
        self.wv = _trapezoid_weights(spec.nv, self.dv)

    def __repr__(self) -> str:
        return f"PhaseGrid({self.spec}, dim={self.dim})"

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.spec.t_final, self.nt + 1)

    @property
    def x_shape(self) -> tuple[int, ...]:
        return (self.spec.nx,) * self.dim

    @property
    def v_shape(self) -> tuple[int, ...]:
        return (self.spec.nv,) * self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x_shape + self.v_shape

    def _axis_array(self, values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
        shape = [1] * ndim
        shape[axis] = values.size
        return values.reshape(shape)

    def x_coord(self, i: int, phase: bool = True) -> np.ndarray:
        """Broadcastable coordinate array of x_i."""
        ndim = 2 * self.dim if phase else self.dim
        return self._axis_array(self.x, i, ndim)

    def v_coord(self, i: int) -> np.ndarray:
        """Broadcastable coordinate array of v_i (phase layout)."""
        return self._axis_array(self.v, self.dim + i, 2 * self.dim)

    def x_points(self) -> np.ndarray:
        """All x nodes as an array of shape x_shape + (N,)."""
        mesh = np.meshgrid(*([self.x] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def v_points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.v] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def speed(self) -> np.ndarray:
        """|v| on the velocity sub-grid, shaped for broadcasting against phase arrays."""
        sq = sum(self.v_coord(i) ** 2 for i in range(self.dim))
        return np.sqrt(sq)

    @cached_property
    def weights_x(self) -> np.ndarray:
        w = self.wx
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, self.wx)
        return w

    @cached_property
    def weights_v(self) -> np.ndarray:
        w = self.wv
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, self.wv)
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        return np.multiply.outer(self.weights_x, self.weights_v)

    def weights_for(self, values: np.ndarray) -> np.ndarray:
        if values.shape == self.shape:
            return self.weights
        if values.shape == self.x_shape:
            return self.weights_x
        raise ValueError(f"array of shape {values.shape} does not live on {self}")

    def v_integral(self, values: np.ndarray) -> np.ndarray:
        """Velocity quadrature over the trailing N axes."""
        axes = tuple(range(values.ndim - self.dim, values.ndim))
        return np.tensordot(values, self.weights_v, axes=(axes, tuple(range(self.dim))))


@dataclass
class PhaseField:
    values: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phase field has non-finite entries")


@dataclass
class SpatialField:
    values: np.ndarray
    kind: str = "taf"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spatial field has non-finite entries")


Field = Union[PhaseField, SpatialField, np.ndarray]


def values_of(f: Field) -> np.ndarray:
    return np.asarray(getattr(f, "values", f), dtype=float)


def positivity_slack(values: np.ndarray, rel: float = POSITIVITY_SLACK) -> float:
    return rel * float(np.max(np.abs(values), initial=0.0))


def is_density(values: np.ndarray, rel: float = POSITIVITY_SLACK) -> bool:
    return bool(np.min(values, initial=0.0) >= -positivity_slack(values, rel))


def integrate_phase(f: Field, grid: PhaseGrid) -> float:
    vals = values_of(f)
    if np.isnan(vals).any():
        raise ValueError("cannot integrate a field containing NaN")
    return float(np.sum(vals * grid.weights_for(vals)))


def lp_norm(f: Field, q: float, grid: PhaseGrid) -> float:
    if not q >= 1:
        raise ValueError(f"exponent q must be >= 1 (got {q})")
    vals = np.abs(values_of(f))
    if np.isinf(q):
        return float(vals.max(initial=0.0))
    w = grid.weights_for(vals)
    return float(np.sum(w * vals ** q) ** (1.0 / q))


def sup_norm_series(series: np.ndarray, q: float, grid: PhaseGrid) -> float:
    """max over the leading (time) axis of the L^q norm."""
    return max(lp_norm(s, q, grid) for s in series)


def gaussian_phase_density(grid: PhaseGrid, x0, v0, x_width: float, v_width: float,
                           mass: float = 1.0) -> np.ndarray:
    """Isotropic Gaussian in x and v with the given analytic mass."""
    N = grid.dim
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (N,))
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), (N,))
    expo = np.zeros(grid.shape)
    for i in range(N):
        expo = expo - (grid.x_coord(i) - x0[i]) ** 2 / (2 * x_width ** 2)
        expo = expo - (grid.v_coord(i) - v0[i]) ** 2 / (2 * v_width ** 2)
    norm = (2 * np.pi * x_width ** 2) ** (N / 2) * (2 * np.pi * v_width ** 2) ** (N / 2)
    return mass * np.exp(expo) / norm


def gaussian_bump(grid: PhaseGrid, center, width: float, amplitude: float = 1.0) -> np.ndarray:
    """amplitude * exp(-|x - center|^2 / (2 width^2)) on the x-grid."""
    N = grid.dim
    center = np.broadcast_to(np.asarray(center, dtype=float), (N,))
    r2 = sum((grid.x_coord(i, phase=False) - center[i]) ** 2 for i in range(N))
    return amplitude * np.exp(-r2 / (2 * width ** 2))
