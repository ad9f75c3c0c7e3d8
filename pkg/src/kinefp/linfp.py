"""Linear Fokker-Planck solves built on the exact Gaussian propagator.

Propagation over a step of length s applies the kernel as a quadrature
operator in scatter form: every grid node carries its mass along the
(constant-force) Ornstein-Uhlenbeck transition and the Gaussian is
deposited onto the (x_i, v_i) plane with nonnegative node weights that
reproduce its mean and covariance.  The weights sum to one, so the
operator conserves mass up to outflow through the box and preserves
order.  Axes are swept one after another; for zero force the axis
operators commute and the sweep is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import PhaseGrid, integrate_phase
from .kernels import PropagatorSpec, ou_covariance, ou_mean

# spreads at or above this many cells use Gaussian weights sampled on the grid
_WIDE = 0.75
_TAIL = 6.5


def _deposit_rule(mean: np.ndarray, s: float, h: float, origin: float):
    """Nonnegative unit-sum weights on grid nodes for a 1D Gaussian N(mean, s^2).

    Returns a list of (node index, weight) array pairs shaped like mean.
    Wide kernels (s >= 0.75 h) use the Gaussian sampled at the nodes and
    renormalised: mean and variance are then exact up to terms of order
    exp(-2 pi^2 s^2 / h^2).  Narrower kernels use the three nodes around
    the nearest one with weights matching mass, mean and variance exactly;
    where that is not possible with nonnegative weights (s^2 below the
    linear-interpolation variance) the two-node linear split is used, which
    is the smallest variance a positive mean-preserving rule can reach.
    """
    u = (mean - origin) / h
    i0 = np.rint(u).astype(np.int64)
    e = u - i0                                   # offset from the nearest node, in cells
    if s >= _WIDE * h:
        K = int(math.ceil(_TAIL * s / h)) + 1
        offs = np.arange(-K, K + 1)
        w = np.exp(-0.5 * ((offs[:, None] - e.ravel()[None, :]) * (h / s)) ** 2)
        w /= w.sum(axis=0, keepdims=True)
        return [(i0 + o, w[n].reshape(mean.shape)) for n, o in enumerate(offs)]
    second = (s / h) ** 2 + e ** 2
    ok = second >= np.abs(e)                     # three-node weights nonnegative
    wm = np.where(ok, 0.5 * (second - e), np.maximum(-e, 0.0))
    wp = np.where(ok, 0.5 * (second + e), np.maximum(e, 0.0))
    w0 = 1.0 - wm - wp
    return [(i0 - 1, wm), (i0, w0), (i0 + 1, wp)]


def transport_axis(p: np.ndarray, grid: PhaseGrid, axis: int, s: float, k: float,
                   sigma: float, force: Optional[np.ndarray] = None) -> np.ndarray:
    """Propagate along the (x_axis, v_axis) pair for time s, force frozen at the source node."""
    N = grid.dim
    nx, nv = grid.spec.nx, grid.spec.nv
    xa, va = axis, N + axis
    shape = p.shape
    var_x, cov, var_v = (float(c) for c in ou_covariance(s, k, sigma))
    slope = cov / var_v                          # regression of position on velocity
    sxc = math.sqrt(max(var_x - cov * slope, 0.0))

    xs = grid.x_coord(xa)
    vs = grid.v_coord(axis)
    F = 0.0 if force is None else force.reshape(grid.x_shape + (1,) * N)
    mean_x, mean_v = ou_mean(s, xs, vs, k, F)
    nz = p.ravel() != 0
    mean_x = np.broadcast_to(mean_x, shape).ravel()[nz]
    mean_v = np.broadcast_to(mean_v, shape).ravel()[nz]
    mass = p.ravel()[nz]

    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(len(shape))])
    idx = np.arange(p.size).reshape(shape)
    sx_idx = np.broadcast_to(np.arange(nx).reshape([-1 if i == xa else 1 for i in range(2 * N)]), shape)
    sv_idx = np.broadcast_to(np.arange(nv).reshape([-1 if i == va else 1 for i in range(2 * N)]), shape)
    base = (idx - sx_idx * strides[xa] - sv_idx * strides[va]).ravel()[nz]
    out = np.zeros(p.size)
    x0, v0 = grid.x[0], grid.v[0]
    for jv, wv in _deposit_rule(mean_v, math.sqrt(var_v), grid.dv, v0):
        okv = (jv >= 0) & (jv < nv) & (wv > 0)
        cond_x = mean_x + slope * (v0 + jv * grid.dv - mean_v)
        for jx, wx in _deposit_rule(cond_x, sxc, grid.dx, x0):
            ok = okv & (jx >= 0) & (jx < nx) & (wx > 0)
            tgt = base[ok] + jx[ok] * strides[xa] + jv[ok] * strides[va]
            out += np.bincount(tgt, weights=(mass * wv * wx)[ok], minlength=p.size)
    return out.reshape(shape)


def transport(p: np.ndarray, grid: PhaseGrid, s: float, spec: PropagatorSpec,
              force: Optional[np.ndarray] = None) -> np.ndarray:
    out = p
    for i in range(grid.dim):
        Fi = None if force is None else force[i]
        out = transport_axis(out, grid, i, s, spec.k, spec.sigma, Fi)
    return out


def propagate_free(p0: np.ndarray, t: float, spec: PropagatorSpec, grid: PhaseGrid) -> np.ndarray:
    """Apply the field-free kernel for duration t to p0 (single quadrature step)."""
    if not t > 0:
        raise ValueError("propagation time must be > 0")
    p0 = np.asarray(getattr(p0, "values", p0), dtype=float)
    if not np.any(p0):
        return np.zeros_like(p0)
    return transport(p0, grid, t, spec)


def series_truncation_bound(a_sup: float, T: float, l: int) -> float:
    if a_sup < 0 or T <= 0 or l < 0:
        raise ValueError("need a_sup >= 0, T > 0, l >= 0")
    x = a_sup * T
    return math.exp((l + 1) * math.log(x) - math.lgamma(l + 2)) if x > 0 else 0.0


class SeriesBoundError(ValueError):
    def __init__(self, bound: float, lmax: int, tol: float):
        super().__init__(f"Volterra truncation bound {bound:.3e} at level {lmax} exceeds tolerance {tol:.1e}")
        self.bound = bound


@dataclass(frozen=True)
class TimeSeries:
    """Values at the time levels t_n = n dt, n = 0..nt (leading axis)."""
    values: np.ndarray


def _sampler(obj, grid: PhaseGrid) -> Optional[Callable[[int], np.ndarray]]:
    """Turn a TimeSeries, a callable of t, or a constant into a function of the step index."""
    if obj is None:
        return None
    if isinstance(obj, TimeSeries):
        vals = obj.values
        return lambda n: vals[n]
    if callable(obj):
        return lambda n: np.asarray(obj(n * grid.dt), dtype=float)
    arr = np.asarray(obj, dtype=float)
    return lambda n: arr


@dataclass
class LinearProblem:
    """Data of the linear problem on a fixed grid.

    Each coefficient is None, a constant array, a callable of t, or a
    TimeSeries.  force has shape (N, *x_shape); potential and source
    broadcast against phase arrays.
    """
    p0: np.ndarray
    force: object = None
    potential: object = None
    source: object = None
    series_lmax: int = 20
    series_tol: float = 1e-10

    def sup_norms(self, grid: PhaseGrid) -> dict:
        out = {}
        for name in ("force", "potential", "source"):
            f = _sampler(getattr(self, name), grid)
            out[name] = 0.0 if f is None else max(float(np.max(np.abs(f(n)), initial=0.0))
                                                  for n in range(grid.nt + 1))
        return out


def _scalar_potential(prob: LinearProblem, grid: PhaseGrid) -> bool:
    if prob.potential is None:
        return True
    pot = _sampler(prob.potential, grid)
    return all(np.ndim(pot(n)) == 0 for n in (0, grid.nt))


def solve_linear(prob: LinearProblem, spec: PropagatorSpec, grid: PhaseGrid,
                 nt: Optional[int] = None) -> np.ndarray:
    """Time series p(t_n), n = 0..nt, of the linear problem.

    Each step applies p <- T_F(dt)[exp(-a dt) p + dt f] with F, a, f taken at
    the left end of the step.
    """
    if nt is not None and nt != grid.nt:
        grid = PhaseGrid(grid.spec.replace(nt=nt), grid.dim)
    p0 = np.asarray(getattr(prob.p0, "values", prob.p0), dtype=float)
    a_sup = prob.sup_norms(grid)["potential"]
    bound = series_truncation_bound(a_sup, grid.spec.t_final, prob.series_lmax)
    if bound > prob.series_tol:
        raise SeriesBoundError(bound, prob.series_lmax, prob.series_tol)
    force = _sampler(prob.force, grid)
    pot = _sampler(prob.potential, grid)
    src = _sampler(prob.source, grid)
    dt = grid.dt
    out = np.empty((grid.nt + 1,) + p0.shape)
    out[0] = p0
    if force is None and src is None and _scalar_potential(prob, grid):
        # free flow with a spatially constant potential: exact from t = 0
        decay = 0.0
        for n in range(1, grid.nt + 1):
            if pot is not None:
                decay += float(pot(n - 1)) * dt
            out[n] = math.exp(-decay) * propagate_free(p0, n * dt, spec, grid)
        return out
    p = p0
    for n in range(grid.nt):
        q = p if pot is None else np.exp(-pot(n) * dt) * p
        if src is not None:
            q = q + dt * src(n)
        p = transport(q, grid, dt, spec, None if force is None else force(n))
        out[n + 1] = p
    return out


def volterra_levels(prob: LinearProblem, spec: PropagatorSpec, grid: PhaseGrid,
                    lmax: int) -> list[np.ndarray]:
    """Successive approximations of the potential term at the level of solutions.

    Level 0 solves with a = 0; level l+1 is the Duhamel solution with source
    f - a q^l.  Returns the list of level series q^0 .. q^lmax.
    """
    force = _sampler(prob.force, grid)
    pot = _sampler(prob.potential, grid)
    src = _sampler(prob.source, grid)
    p0 = np.asarray(prob.p0, dtype=float)
    dt = grid.dt
    levels = []
    prev = None
    for _ in range(lmax + 1):
        out = np.empty((grid.nt + 1,) + p0.shape)
        out[0] = p0
        q = p0
        for n in range(grid.nt):
            rhs = q.copy()
            if src is not None:
                rhs = rhs + dt * src(n)
            if prev is not None and pot is not None:
                rhs = rhs - dt * pot(n) * prev[n]
            q = transport(rhs, grid, dt, spec, None if force is None else force(n))
            out[n + 1] = q
        levels.append(out)
        prev = out
    return levels


@dataclass
class OrderingVerdict:
    ordered: bool
    equal: bool
    worst_margin: float
    worst_time_index: int
    worst_point: tuple
    slack: float


def compare_solutions(run1: np.ndarray, run2: np.ndarray, rel_slack: float = 1e-10) -> OrderingVerdict:
    """Check run1 <= run2 + eps_pos pointwise at every stored time."""
    run1 = np.asarray(run1)
    run2 = np.asarray(run2)
    if run1.shape != run2.shape:
        raise ValueError("runs must share their grid and time levels")
    slack = rel_slack * max(np.max(np.abs(run1), initial=0.0), np.max(np.abs(run2), initial=0.0))
    gap = run2 - run1
    flat = int(np.argmin(gap))
    where = np.unravel_index(flat, gap.shape)
    worst = float(gap[where])
    return OrderingVerdict(ordered=worst >= -slack, equal=bool(np.array_equal(run1, run2)),
                           worst_margin=worst, worst_time_index=int(where[0]),
                           worst_point=tuple(int(i) for i in where[1:]), slack=slack)


def upper_solution(p0: np.ndarray, params, t: float, M_T: float, grid: PhaseGrid,
                   rho_sup: float) -> np.ndarray:
    """exp(alpha1 |rho| t) P(t) with P the 4 sigma free flow of 2^{2N} M_T p0.

    The rescaled kernel G_sigma(t, x/2, v/2; 0, xi/2, nu/2) equals
    2^{2N} G_{4 sigma}(t, x, v; 0, xi, nu), so the factor 2^{2N} and the
    wider diffusion express the same operator.
    """
    N = grid.dim
    spec4 = PropagatorSpec(params.k, 4 * params.sigma, N)
    P = propagate_free(2 ** (2 * N) * M_T * np.asarray(p0, dtype=float), t, spec4, grid)
    return math.exp(params.alpha1 * rho_sup * t) * P


def mass_series(series: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return np.array([integrate_phase(s, grid) for s in series])
