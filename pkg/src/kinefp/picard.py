"""Frozen-coefficient fixed-point iteration for the coupled tip density / TAF system.

Iterate m >= 2 starting from p_1 = 0:

  c_{m-1}  heat flow of c0 with sink eta c j(p_{m-1})
  F, alpha from c_{m-1};  a_{m-1}(t, x) = int_0^t marginal(p_{m-1}) ds
  p_m      linear solve with potential gamma a_{m-1} - alpha rho   (variant A)
           or potential gamma a_{m-1} and source alpha rho p_{m-1}  (variant B)

until the sup-in-time L1 difference of consecutive iterates drops below
tol * ||p0||_1.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ModelParams, PhaseGrid, integrate_phase, positivity_slack
from .kernels import PropagatorSpec, RhoSpec, alpha_of_c, rho_on_grid
from .linfp import LinearProblem, TimeSeries, solve_linear
from .taf import TafProblem, TafRun, force_series, solve_taf
from .vintegrals import flux_j, marginal, moment, weight_beta

log = logging.getLogger(__name__)

VARIANTS = ("A", "B")


class DivergenceError(RuntimeError):
    def __init__(self, msg: str, diffs: list):
        super().__init__(msg)
        self.diffs = list(diffs)


@dataclass
class SchemeState:
    iteration: int
    p: np.ndarray                 # (nt+1, *shape)
    taf: TafRun
    j: np.ndarray                 # flux of p at every stored time
    marginal: np.ndarray
    anastomosis: np.ndarray       # a(t, x) = int_0^t marginal ds (without gamma)
    force: np.ndarray             # F(c) series, (nt+1, N, *x_shape)
    variant: str = "A"
    diffs: list = field(default_factory=list)
    c_diffs: list = field(default_factory=list)
    converged: bool = False
    grad_v_l1_sup: Optional[float] = None   # sup_{t,x} int |grad_v p| dv

    @property
    def c(self) -> np.ndarray:
        return self.taf.c


@dataclass
class RunReport:
    variant: str
    flux_mode: str
    iterations: int
    converged: bool
    diffs: list
    c_diffs: list
    mass: list
    sup: list
    min_p: float
    min_c: float
    max_c: float
    seconds: float
    horizon: Optional[dict] = None
    ledgers: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["ledgers"] = [getattr(l, "to_dict", lambda: l)() for l in self.ledgers]
        return out


@dataclass
class SchemeResult:
    state: SchemeState
    report: RunReport

    @property
    def p(self) -> np.ndarray:
        return self.state.p

    @property
    def c(self) -> np.ndarray:
        return self.state.c


def cumulative_trapezoid(series: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(series)
    if series.shape[0] > 1:
        out[1:] = np.cumsum(0.5 * dt * (series[1:] + series[:-1]), axis=0)
    return out


def l1_sup_diff(a: np.ndarray, b: np.ndarray, grid: PhaseGrid) -> float:
    w = grid.weights
    return max(float(np.sum(w * np.abs(a[n] - b[n]))) for n in range(a.shape[0]))


def grad_v_l1_sup(p_series: np.ndarray, grid: PhaseGrid) -> float:
    """sup over t and x of int |grad_v p| dv, central differences."""
    N = grid.dim
    best = 0.0
    for p in p_series:
        g = np.sqrt(sum(np.gradient(p, grid.dv, axis=N + i) ** 2 for i in range(N)))
        best = max(best, float(grid.v_integral(g).max()))
    return best


def check_entry(p0: np.ndarray, c0: np.ndarray, grid: PhaseGrid, beta: float) -> None:
    if p0.shape != grid.shape:
        raise ValueError(f"p0 has shape {p0.shape}, expected {grid.shape}")
    if c0.shape != grid.x_shape:
        raise ValueError(f"c0 has shape {c0.shape}, expected {grid.x_shape}")
    if p0.min(initial=0.0) < -positivity_slack(p0):
        raise ValueError("p0 must be nonnegative")
    if c0.min(initial=0.0) < 0:
        raise ValueError("c0 must be nonnegative")
    if not beta > grid.dim:
        raise ValueError(f"velocity decay order beta={beta} must exceed N={grid.dim}")
    Y = weight_beta(grid, beta) * p0
    if not (np.isfinite(Y).all() and np.isfinite(integrate_phase(Y, grid))):
        raise ValueError("weighted initial density is not bounded and integrable")


def _derived(p_series: np.ndarray, params: ModelParams, grid: PhaseGrid):
    j = np.stack([flux_j(p, params, grid) for p in p_series])
    j = np.clip(j, 0.0, None)
    marg = np.stack([marginal(p, grid) for p in p_series])
    return j, marg


def run_scheme(params: ModelParams, grid: PhaseGrid, p0: np.ndarray, c0: np.ndarray,
               max_iter: int = 25, tol: float = 1e-6, variant: str = "A",
               rho: Optional[RhoSpec] = None, background: float = 0.0, beta: Optional[float] = None,
               eval_strategy: str = "ou_covariance", store_gradients: bool = True,
               growth_slack: float = 1e-12) -> SchemeResult:
    """Run the fixed-point loop to convergence or max_iter iterations."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    t_start = time.perf_counter()
    p0 = np.asarray(p0, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    beta = grid.dim + 2 if beta is None else beta
    check_entry(p0, c0, grid, beta)
    rho = RhoSpec.default(params) if rho is None else rho
    rho_v = rho_on_grid(grid, rho)
    spec = PropagatorSpec.from_params(params, eval_strategy)
    nt, dt = grid.nt, grid.dt
    mass0 = integrate_phase(p0, grid)
    ones = (1,) * grid.dim

    prev = np.zeros((nt + 1,) + p0.shape)
    prev_c = None
    j_prev = np.zeros((nt + 1,) + grid.x_shape)
    marg_prev = np.zeros_like(j_prev)
    diffs, c_diffs = [], []
    growth = 0
    converged = False
    m = 1
    for m in range(2, max_iter + 2):
        taf = solve_taf(TafProblem(c0, params.d, params.eta, j_prev, background), grid)
        c = np.clip(taf.c, 0.0, None)
        F = force_series(taf, params)
        alpha = alpha_of_c(c, params)
        a_hist = cumulative_trapezoid(marg_prev, dt)
        damp = (params.gamma * a_hist).reshape(a_hist.shape + ones)
        branch = alpha.reshape(alpha.shape + ones) * rho_v
        if variant == "A":
            prob = LinearProblem(p0, TimeSeries(F), TimeSeries(damp - branch))
        else:
            prob = LinearProblem(p0, TimeSeries(F), TimeSeries(damp), TimeSeries(branch * prev))
        p_new = solve_linear(prob, spec, grid)
        diff = l1_sup_diff(p_new, prev, grid)
        diffs.append(diff)
        if prev_c is not None:
            c_diffs.append(float(np.max(np.abs(taf.c - prev_c))))
        log.info("iteration %d: diff %.3e", m, diff)
        if diff <= tol * mass0:
            converged = True
            prev, prev_c = p_new, taf.c
            break
        if len(diffs) > 1 and diff > diffs[-2] * (1 + growth_slack):
            growth += 1
            if growth > 3:
                raise DivergenceError(
                    f"iterate differences grew for {growth} consecutive iterations "
                    f"(last {diff:.3e}, mass {mass0:.3e})", diffs)
        else:
            growth = 0
        prev, prev_c = p_new, taf.c
        j_prev, marg_prev = _derived(prev, params, grid)

    p_final = prev
    j_fin, marg_fin = _derived(p_final, params, grid)
    taf_fin = solve_taf(TafProblem(c0, params.d, params.eta, j_fin, background), grid)
    state = SchemeState(m, p_final, taf_fin, j_fin, marg_fin, cumulative_trapezoid(marg_fin, dt),
                        force_series(taf_fin, params), variant, diffs, c_diffs, converged)
    if store_gradients:
        state.grad_v_l1_sup = grad_v_l1_sup(p_final, grid)
    w = grid.weights
    report = RunReport(
        variant=variant, flux_mode=params.flux_mode, iterations=m, converged=converged,
        diffs=diffs, c_diffs=c_diffs,
        mass=[float(np.sum(w * s)) for s in p_final],
        sup=[float(np.max(s)) for s in p_final],
        min_p=float(p_final.min()), min_c=float(taf_fin.c.min()), max_c=float(taf_fin.c.max()),
        seconds=time.perf_counter() - t_start)
    return SchemeResult(state, report)


def stability_probe(run1: SchemeResult, run2: SchemeResult, params: ModelParams, grid: PhaseGrid,
                    rho: Optional[RhoSpec] = None):
    """Growth of the L1 difference of two converged runs against the certified ceiling.

    Returns (ratio, ceiling, ledger) where ratio = sup_t ||p1 - p2||_1 / ||p1(0) - p2(0)||_1
    and ceiling = exp(G(T) T).
    """
    from .bounds import uniqueness_constants

    for r in (run1, run2):
        if not r.state.converged:
            raise ValueError("stability_probe needs converged runs")
    w = grid.weights
    d = np.array([float(np.sum(w * np.abs(a - b))) for a, b in zip(run1.p, run2.p)])
    ledger = uniqueness_constants(run1, run2, params, grid, rho)
    if d[0] == 0:
        ratio = 1.0 if not np.any(d) else math.inf
    else:
        ratio = float(d.max() / d[0])
    ceiling = math.exp(ledger.inputs["G"] * grid.spec.t_final)
    return ratio, ceiling, ledger


def run_scheme_raw_flux(params: ModelParams, grid: PhaseGrid, p0: np.ndarray, c0: np.ndarray,
                        beta2: float = 4.0, max_iter: int = 25, tol: float = 1e-6,
                        rho: Optional[RhoSpec] = None, variant: str = "A", **kw):
    """Cutoff-free flux run with the horizon capped by the moment blow-up estimate.

    Returns (SchemeResult, horizon) where horizon is bounds.MomentHorizon.
    """
    from .bounds import MomentData, moment_horizon

    params = params.replace(flux_mode="raw")
    N = grid.dim
    if not beta2 > max(N + 2, N * N - N):
        raise ValueError(f"beta2={beta2} must exceed max(N+2, N^2-N)={max(N + 2, N * N - N)}")
    rho = RhoSpec.default(params) if rho is None else rho
    data = MomentData.from_data(p0, c0, params, grid, beta2, rho.sup)
    hz = moment_horizon(params, data, beta2)
    notes = []
    T = grid.spec.t_final
    if T > hz.tau:
        nt_new = max(1, int(math.floor(hz.tau / grid.dt)))
        msg = f"requested T={T:.4g} exceeds the moment horizon {hz.tau:.4g}; truncated to {nt_new * grid.dt:.4g}"
        warnings.warn(msg)
        notes.append(msg)
        grid = PhaseGrid(grid.spec.replace(t_final=nt_new * grid.dt, nt=nt_new), N)
        data = MomentData.from_data(p0, c0, params, grid, beta2, rho.sup)
        hz = moment_horizon(params, data, beta2)
    res = run_scheme(params, grid, p0, c0, max_iter, tol, variant, rho, beta=beta2, **kw)
    measured = [moment(np.clip(p, 0, None), beta2, grid) for p in res.p]
    env = [hz.envelope(t) for t in grid.times]
    res.report.horizon = {"A_beta": hz.A, "B_beta": hz.B, "tau": hz.tau, "delta": hz.delta,
                          "times": grid.times.tolist(), "moment": measured, "envelope": env}
    res.report.notes.extend(notes)
    return res, hz
