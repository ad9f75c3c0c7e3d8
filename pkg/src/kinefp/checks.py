"""Verification suites: independent checks of each module at desk scale.

Every suite returns CheckRow records.  A row carries the measured value,
the limit it is held to, and a tag naming the property or bound it tests,
so a failure points at the violated estimate.

The kernel checks use plain trapezoid quadrature on boxes adapted to the
Gaussian being integrated; they share nothing with the closed forms beyond
the evaluation of the kernel itself.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import GridSpec, ModelParams, PhaseGrid, gaussian_bump, gaussian_phase_density, integrate_phase
from .kernels import PropagatorSpec, RhoSpec, eval_G, eval_heat_kernel, log_G, ou_covariance, ou_mean

SUITES = ("kernels", "linfp", "taf", "vintegrals", "bounds")


@dataclass
class CheckRow:
    suite: str
    name: str
    value: float
    limit: float
    passed: bool
    tag: str
    seconds: float = 0.0

    @property
    def margin(self) -> float:
        return self.limit - self.value

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.suite:<10} {self.name:<34} value={self.value:<11.4g} "
                f"limit={self.limit:<11.4g} margin={self.margin:<11.4g} [{self.tag}]")


def _row(suite, name, value, limit, tag, t0, passed=None) -> CheckRow:
    ok = bool(value <= limit) if passed is None else bool(passed)
    return CheckRow(suite, name, float(value), float(limit), ok, tag, time.perf_counter() - t0)


# --- kernel quadrature oracles ------------------------------------------------------------

def _integrate_box(logf: Callable, mean: np.ndarray, sd: np.ndarray, n: int, half: float = 8.0) -> float:
    """Trapezoid integral of exp(logf) over the tensor box mean +- half * sd."""
    axes = [np.linspace(m - half * s, m + half * s, n) for m, s in zip(mean, sd)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.exp(logf(pts))
    for ax in reversed(axes):
        vals = np.trapezoid(vals, ax, axis=-1)
    return float(vals)


def _integrate_sheared(logf: Callable, mean_a: np.ndarray, mean_b: np.ndarray, var_a: float, cov: float,
                       var_b: float, n: int, half: float = 8.0) -> float:
    """Integral of exp(logf(a, b)) for an integrand concentrated like a correlated Gaussian.

    Each of the N (a, b) pairs is parametrised as b = mean_b + s,
    a = mean_a + (cov / var_b) s + u with (u, s) on a box; the shear has unit
    Jacobian, and the box follows the conditional spread of a given b, so
    strongly correlated pairs are resolved.
    """
    N = mean_a.size
    slope = cov / var_b
    sd_u = math.sqrt(max(var_a - cov * slope, 0.0))
    sd_s = math.sqrt(var_b)
    us = np.linspace(-half * sd_u, half * sd_u, n)
    ss = np.linspace(-half * sd_s, half * sd_s, n)
    axes = [us] * N + [ss] * N
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    u, sv = grid[..., :N], grid[..., N:]
    vals = np.exp(logf(mean_a + slope * sv + u, mean_b + sv))
    for ax in reversed(axes):
        vals = np.trapezoid(vals, ax, axis=-1)
    return float(vals)


def kernel_mass(spec: PropagatorSpec, s: float, xi, nu, n: int = 41) -> float:
    """int int G(s, x, v; 0, xi, nu) dx dv by quadrature over the target variables."""
    N = spec.dim
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (N,))
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (N,))
    var_x, cov, var_v = (float(c) for c in ou_covariance(s, spec.k, spec.sigma))
    mx, mv = ou_mean(s, xi, nu, spec.k)
    return _integrate_sheared(lambda a, b: log_G(s, a, b, 0.0, xi, nu, spec),
                              mx, mv, var_x, cov, var_v, n)


def kernel_source_mass(spec: PropagatorSpec, s: float, x, v, n: int = 41) -> float:
    """int int G(s, x, v; 0, xi, nu) dxi dnu, which should be exp(N k s)."""
    N = spec.dim
    x = np.broadcast_to(np.asarray(x, dtype=float), (N,))
    v = np.broadcast_to(np.asarray(v, dtype=float), (N,))
    var_x, cov, var_v = (float(c) for c in ou_covariance(s, spec.k, spec.sigma))
    e = math.exp(-spec.k * s)
    phi = -math.expm1(-spec.k * s) / spec.k
    # (x, v) = A (xi, nu) + noise with A = [[1, phi], [0, e]]; invert for the source law
    r = phi / e
    var_nu = var_v / e ** 2
    var_xi = r ** 2 * var_v - 2 * r * cov + var_x
    cov_src = (cov - r * var_v) / e
    return _integrate_sheared(lambda a, b: log_G(s, x, v, 0.0, a, b, spec),
                              x - phi * v / e, v / e, var_xi, cov_src, var_nu, n)


def chapman_kolmogorov_error(spec: PropagatorSpec, t: float, s: float, x, v, xi, nu, n: int = 161) -> float:
    """Relative error of G(t; 0) against int G(t; s) G(s; 0) over the midpoint state (N = 1)."""
    if spec.dim != 1:
        raise ValueError("composition check is implemented for N = 1")
    var_x, cov, var_v = (float(c) for c in ou_covariance(s, spec.k, spec.sigma))
    mx, mv = ou_mean(s, np.atleast_1d(xi), np.atleast_1d(nu), spec.k)

    def logf(y, w):
        return log_G(t, x, v, s, y, w, spec) + log_G(s, y, w, 0.0, xi, nu, spec)

    composed = _integrate_sheared(logf, np.asarray(mx, dtype=float), np.asarray(mv, dtype=float),
                                  var_x, cov, var_v, n, half=9.0)
    direct = float(eval_G(t, x, v, 0.0, xi, nu, spec))
    return abs(composed - direct) / direct


def kernel_pde_residual(spec: PropagatorSpec, s: float, x, v, xi, nu, h: float) -> float:
    """Max relative central-difference residual of the field-free forward equation, N = 1.

    d_t G + v d_x G - k d_v (v G) - sigma d_vv G, relative to the largest
    of the individual terms at each point.
    """
    k, sig = spec.k, spec.sigma
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)

    def G(tt, xx, vv):
        return eval_G(tt, xx, vv, 0.0, xi, nu, spec)

    gt = (G(s + h, x, v) - G(s - h, x, v)) / (2 * h)
    gx = (G(s, x + h, v) - G(s, x - h, v)) / (2 * h)
    flux = ((v + h) * G(s, x, v + h) - (v - h) * G(s, x, v - h)) / (2 * h)
    gvv = (G(s, x, v + h) - 2 * G(s, x, v) + G(s, x, v - h)) / h ** 2
    terms = np.stack([gt, v * gx, k * flux, sig * gvv])
    res = gt + v * gx - k * flux - sig * gvv
    return float(np.max(np.abs(res) / np.max(np.abs(terms), axis=0)))


def pde_residual_orders(spec: PropagatorSpec, s: float = 0.7, xi: float = 0.2, nu: float = -0.3,
                        h0: float = 0.04, levels: int = 3, n_points: int = 7, seed: int = 0):
    """Residuals at h0, h0/2, ... and the observed orders between successive levels."""
    rng = np.random.default_rng(seed)
    var_x, _, var_v = ou_covariance(s, spec.k, spec.sigma)
    mx, mv = ou_mean(s, xi, nu, spec.k)
    x = mx + math.sqrt(var_x) * rng.uniform(-1.5, 1.5, n_points)
    v = mv + math.sqrt(var_v) * rng.uniform(-1.5, 1.5, n_points)
    scale = min(math.sqrt(var_x), math.sqrt(var_v), s)
    res = np.array([kernel_pde_residual(spec, s, x, v, xi, nu, h0 * scale / 2 ** i) for i in range(levels)])
    orders = np.log2(res[:-1] / res[1:])
    return res, orders


def kernel_draws(n: int, dim: int, seed: int) -> list[tuple[float, float, float]]:
    """Random (k, sigma, t - tau) triples spanning slow to fast friction."""
    rng = np.random.default_rng(seed)
    return [(float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.1, 1.5)), float(rng.uniform(0.05, 2.0)))
            for _ in range(n)]


# --- linear solver helpers ----------------------------------------------------------------

def volterra_ratios(aT: float, grid: PhaseGrid, k: float = 1.0, sigma: float = 0.5, lmax: int = 8,
                    floor: float = 1e-12) -> list[tuple[int, float, float]]:
    """(level, measured change, bound) for a constant potential with a * T = aT.

    The change between levels l and l+1 is measured in L1 at the final time
    and compared with ||p0||_1 (a T)^{l+1} / (l+1)!.  Levels where the bound
    is below `floor` times the mass are dropped.
    """
    from .linfp import LinearProblem, series_truncation_bound, volterra_levels

    T = grid.spec.t_final
    a = aT / T
    p0 = gaussian_phase_density(grid, 0.0, 0.0, 0.6, 0.6)
    m0 = integrate_phase(p0, grid)
    spec = PropagatorSpec(k, sigma, grid.dim)
    levels = volterra_levels(LinearProblem(p0, potential=a), spec, grid, lmax + 1)
    w = grid.weights
    out = []
    for l in range(lmax + 1):
        bound = m0 * series_truncation_bound(a, T, l)
        if bound < floor * m0:
            break
        measured = float(np.sum(w * np.abs(levels[l + 1][-1] - levels[l][-1])))
        out.append((l, measured, bound))
    return out


def random_ordered_pair(rng: np.random.Generator, grid: PhaseGrid):
    """Two linear problems with ordered data and shared coefficients."""
    from .linfp import LinearProblem

    def blob():
        return gaussian_phase_density(grid, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                      rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8), rng.uniform(0.2, 1.0))

    p_lo = blob()
    p_hi = p_lo + blob()
    use_src = rng.random() < 0.5
    f_lo = 0.3 * blob() if use_src else None
    f_hi = f_lo + 0.3 * blob() if use_src else None
    amp, freq, off = rng.uniform(0, 1), rng.uniform(0.5, 2), rng.uniform(-0.5, 0.5)
    F = np.array([amp * np.sin(freq * grid.x) + off])
    a = (rng.uniform(0, 1) * (1 + np.cos(rng.uniform(0.5, 2) * grid.x)))[:, None] if rng.random() < 0.7 else None
    return (LinearProblem(p_lo, F, a, f_lo), LinearProblem(p_hi, F, a, f_hi))


# --- suites -------------------------------------------------------------------------------

def suite_kernels() -> list[CheckRow]:
    rows = []
    t0 = time.perf_counter()
    worst_mass = worst_src = 0.0
    for N, n_draws in ((1, 5), (2, 1)):
        for k, sig, s in kernel_draws(n_draws, N, seed=11 + N):
            spec = PropagatorSpec(k, sig, N)
            worst_mass = max(worst_mass, abs(kernel_mass(spec, s, 0.3, -0.2, n=33 if N == 2 else 81) - 1))
            ref = math.exp(N * k * s)
            worst_src = max(worst_src, abs(kernel_source_mass(spec, s, 0.1, 0.4, n=33 if N == 2 else 81) / ref - 1))
    rows.append(_row("kernels", "kernel_unit_mass", worst_mass, 1e-4, "kernel normalisation", t0))
    t0 = time.perf_counter()
    rows.append(_row("kernels", "kernel_propagates_one", worst_src, 1e-4, "propagation of constants", t0))

    t0 = time.perf_counter()
    spec = PropagatorSpec(0.8, 0.6, 1)
    err = max(chapman_kolmogorov_error(spec, 1.0, 0.5, xx, vv, 0.1, -0.2, n=121)
              for xx, vv in ((0.2, 0.0), (-0.1, -0.4), (0.4, 0.3)))
    rows.append(_row("kernels", "chapman_kolmogorov", err, 1e-3, "semigroup composition", t0))

    t0 = time.perf_counter()
    _, orders = pde_residual_orders(spec)
    rows.append(_row("kernels", "pde_residual_order", -float(orders.min()), -1.8,
                     "kernel solves the field-free equation", t0))

    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(4, 20, 1)) * 0.4
    a = log_G(0.6, pts[0], pts[1], 0.0, pts[2], pts[3], PropagatorSpec(1.3, 0.7, 1))
    b = log_G(0.6, pts[0], pts[1], 0.0, pts[2], pts[3], PropagatorSpec(1.3, 0.7, 1, "closed_form"))
    rows.append(_row("kernels", "closed_form_agreement", float(np.max(np.abs(a - b))), 1e-10,
                     "closed form vs covariance form", t0))

    t0 = time.perf_counter()
    y = np.linspace(-12, 12, 2001)
    mass = float(np.trapezoid(eval_heat_kernel(0.5, y, 1.0, 1), y))
    rows.append(_row("kernels", "heat_kernel_mass", abs(mass - 1), 1e-10, "heat kernel normalisation", t0))
    return rows


def suite_linfp() -> list[CheckRow]:
    from .linfp import compare_solutions, solve_linear
    from .oracle import fd_solve_fp

    rows = []
    grid = PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.3, 20), 1)
    params = ModelParams()
    spec = PropagatorSpec.from_params(params)

    t0 = time.perf_counter()
    ratios = volterra_ratios(1.0, PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.5, 100), 1), lmax=5)
    worst = max(abs(math.log10(m / b)) for _, m, b in ratios)
    rows.append(_row("linfp", "volterra_truncation", worst, 1.0, "factorial truncation of the series", t0))

    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst_gap = 0.0
    for _ in range(3):
        lo, hi = random_ordered_pair(rng, grid)
        v = compare_solutions(solve_linear(lo, spec, grid), solve_linear(hi, spec, grid))
        worst_gap = max(worst_gap, -v.worst_margin / max(v.slack, 1e-300) if not v.ordered else 0.0)
    rows.append(_row("linfp", "comparison_principle", worst_gap, 0.0, "comparison principle", t0))

    t0 = time.perf_counter()
    from .linfp import LinearProblem
    p0 = gaussian_phase_density(grid, 0.0, 0.0, 0.5, 0.5)
    F = np.array([0.3 + 0.2 * np.sin(grid.x)])
    prob = LinearProblem(p0, F, 0.4)
    prop = solve_linear(prob, spec, grid)
    fd = fd_solve_fp(p0, F, 0.4, None, params, grid)
    dist = max(float(np.sum(grid.weights * np.abs(a - b))) for a, b in zip(prop, fd.p))
    est = grid.dx ** 2 + grid.dv ** 2 + grid.dt
    rows.append(_row("linfp", "oracle_distance_constant", dist / (est * integrate_phase(p0, grid)), 5.0,
                     "propagator vs finite differences", t0))

    t0 = time.perf_counter()
    neg = float(-min(prop.min(), 0.0) / prop.max())
    rows.append(_row("linfp", "positivity", neg, 1e-10, "positivity of the propagator", t0))
    return rows


def suite_taf() -> list[CheckRow]:
    from .core import ModelParams
    from .taf import TafProblem, grad_bound_check, max_principle_ok, solve_taf, split_bound_check

    rows = []
    grid = PhaseGrid(GridSpec(x_extent=1.0, nx=200, nv=4, t_final=0.1, nt=50), 1)
    params = ModelParams(eta=0.5, d1=0.5)
    c0 = np.ones(grid.x_shape)
    j = np.broadcast_to(np.where(np.abs(grid.x) < 0.3, 1.0, 0.0), (grid.nt + 1,) + grid.x_shape).copy()
    prob = TafProblem(c0, params.d, params.eta, j, background=1.0)
    t0 = time.perf_counter()
    run = solve_taf(prob, grid)
    ok = max_principle_ok(run, c0)
    rows.append(_row("taf", "max_principle", float(run.c.max() - c0.max()), 1e-6 * c0.max(),
                     "maximum principle", t0, passed=ok))
    t0 = time.perf_counter()
    sp = split_bound_check(run, prob, grid)
    rows.append(_row("taf", "split_bound", sp.worst_ratio, 1.1, "sink part bound", t0))
    t0 = time.perf_counter()
    gv = grad_bound_check(run, params, c0, j, grid, fit_window=(0.01, 0.1))
    ratio = float(np.max(gv.lhs[1:] / gv.rhs[1:]))
    rows.append(_row("taf", "force_growth_bound", ratio, 1.0, "gradient growth bound", t0, passed=gv.passed))
    rows.append(_row("taf", "force_growth_exponent", abs(gv.exponent - 0.5), 0.05, "square-root growth in time", t0))

    t0 = time.perf_counter()
    g2 = PhaseGrid(GridSpec(x_extent=4.0, nx=64, nv=4, t_final=0.5, nt=10), 1)
    c = np.exp(-g2.x ** 2 / 0.5)
    r = solve_taf(TafProblem(c, 1.0, 0.0), g2)
    exact = np.exp(-g2.x ** 2 / (0.5 + 4 * 0.5)) * math.sqrt(0.5 / (0.5 + 2))
    rows.append(_row("taf", "heat_flow_exact", float(np.abs(r.c[-1] - exact).max()), 2e-3,
                     "heat semigroup", t0))
    return rows


def _battery_densities(grid: PhaseGrid) -> list[np.ndarray]:
    out = []
    for w in (0.5, 1.0, 2.0):
        out.append(gaussian_phase_density(grid, 0.3, -0.2, 0.7, w))
    out.append(gaussian_phase_density(grid, -1.0, 1.0, 0.4, 0.3) + gaussian_phase_density(grid, 1.0, -0.5, 0.6, 0.5))
    return out


def suite_vintegrals() -> list[CheckRow]:
    from .vintegrals import decay_inequality_suite

    rows = []
    grid = PhaseGrid(GridSpec(4.0, 6.0, 48, 96, 0.5, 10), 1)
    t0 = time.perf_counter()
    fails, worst = 0, -math.inf
    for p in _battery_densities(grid):
        for beta in (3.0, 4.0):
            for v in decay_inequality_suite(p, beta, grid):
                if v.skipped:
                    continue
                fails += not v.passed
                if v.rhs > 0:
                    worst = max(worst, v.lhs / v.rhs)
    rows.append(_row("vintegrals", "decay_inequalities_failures", fails, 0, "velocity decay inequalities", t0))
    rows.append(_row("vintegrals", "decay_inequalities_worst_ratio", worst, 1.0, "velocity decay inequalities", t0))
    return rows


def suite_bounds() -> list[CheckRow]:
    from .bounds import (MomentData, apriori_suite, horizon_monotonicity, moment_horizon,
                         weighted_sup_gronwall)
    from .picard import run_scheme, stability_probe

    rows = []
    params = ModelParams()
    grid = PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.3, 20), 1)
    p0 = gaussian_phase_density(grid, -1.0, 0.5, 0.5, 0.5)
    c0 = gaussian_bump(grid, 1.5, 1.0, 1.0)
    rho = RhoSpec.default(params)
    t0 = time.perf_counter()
    res = run_scheme(params, grid, p0, c0, rho=rho)
    rows.append(_row("bounds", "fixed_point_converged", float(res.report.diffs[-1]), 1e-6 * integrate_phase(p0, grid),
                     "fixed-point contraction", t0, passed=res.report.converged))
    for led in apriori_suite(res.state, params, grid, rho.sup):
        rows.append(CheckRow("bounds", led.name, led.lhs, led.rhs, led.passed, led.tags.get("rhs", "")))
    led = weighted_sup_gronwall(res.state, params, grid, 3.0, rho.sup, c0)
    rows.append(CheckRow("bounds", led.name, led.lhs, led.rhs, led.passed, led.tags.get("rhs", "weighted sup")))

    t0 = time.perf_counter()
    res2 = run_scheme(params, grid, p0 * (1 + 0.01 * np.exp(-(grid.x_coord(0) + 1) ** 2)), c0, rho=rho)
    ratio, ceiling, _ = stability_probe(res, res2, params, grid, rho)
    rows.append(_row("bounds", "stability_growth", ratio, ceiling, "L1 stability", t0))

    t0 = time.perf_counter()
    raw = params.replace(flux_mode="raw")
    data = MomentData.from_data(p0, c0, raw, grid, 4.0, rho.sup)
    mono = horizon_monotonicity(raw, data, 4.0)
    bad = [k for k, ok in mono.items() if not ok]
    rows.append(_row("bounds", "horizon_monotonicity", len(bad), 0, "moment horizon", t0))
    tau = moment_horizon(raw, data, 4.0).tau
    rows.append(_row("bounds", "horizon_positive", -tau, 0.0, "moment horizon", t0, passed=tau > 0))
    return rows


_DISPATCH = {"kernels": suite_kernels, "linfp": suite_linfp, "taf": suite_taf,
             "vintegrals": suite_vintegrals, "bounds": suite_bounds}


def run_suite(name: str) -> list[CheckRow]:
    if name == "all":
        return list(itertools.chain.from_iterable(_DISPATCH[s]() for s in SUITES))
    if name not in _DISPATCH:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return _DISPATCH[name]()
