"""Finite-difference reference solvers and the energy / weak-form checks.

The kinetic reference is first-order upwind in flux form for transport
and drift, central for velocity diffusion, explicit Euler in time, with
zero ghost cells at the box boundary.  It is deliberately simple: its
job is to arbitrate the propagator solver, not to be fast.

For the energy identity the discrete inner product is the uniform one,
<u, w> = dx^N dv^N sum u w.  With that product one explicit step obeys

    E(n+1) - E(n) = 2 dt <u, L u> + dt^2 ||L u||^2,

and <u, L u> splits exactly into N k E / 2, minus sigma times the squared
face gradients, the potential and source pairings, and the upwind
dissipation sum over faces of |speed| (jump)^2 / (2 h).  The solver
records these terms at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ModelParams, PhaseGrid
from .linfp import TimeSeries
from .vintegrals import marginal


class CFLError(ValueError):
    pass


def _coef(obj, n: int, t: float):
    """Coefficient value for a sub-step inside outer step n at time t."""
    if obj is None:
        return None
    if isinstance(obj, TimeSeries):
        return obj.values[n]
    if callable(obj):
        return np.asarray(obj(t), dtype=float)
    return np.asarray(obj, dtype=float)


def _sup(obj, grid: PhaseGrid) -> float:
    if obj is None:
        return 0.0
    if isinstance(obj, TimeSeries):
        return float(np.max(np.abs(obj.values)))
    if callable(obj):
        return max(float(np.max(np.abs(obj(t)))) for t in grid.times)
    return float(np.max(np.abs(obj)))


def cfl_limits(params: ModelParams, grid: PhaseGrid, force_sup: float) -> dict:
    """The separate transport, drift and diffusion step limits (with the 0.9 factor)."""
    vmax = float(np.max(np.abs(grid.v)))
    N = grid.dim
    return {"transport": 0.9 * grid.dx / vmax,
            "drift": 0.9 * grid.dv / (force_sup + params.k * vmax),
            "diffusion": 0.9 * grid.dv ** 2 / (2 * params.sigma * N)}


def combined_dt(params: ModelParams, grid: PhaseGrid, force_sup: float, a_sup: float = 0.0) -> float:
    """Step at which every update coefficient stays nonnegative (monotone scheme)."""
    vmax = float(np.max(np.abs(grid.v)))
    N = grid.dim
    rate = (N * vmax / grid.dx + N * (force_sup + params.k * (vmax + grid.dv / 2)) / grid.dv
            + 2 * N * params.sigma / grid.dv ** 2 + a_sup)
    return 0.9 / rate


def _face_jumps(u: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Left and right states at every face along axis, zero ghosts outside."""
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad)
    n = up.shape[axis]
    left = np.take(up, np.arange(n - 1), axis=axis)
    right = np.take(up, np.arange(1, n), axis=axis)
    return left, right


def _upwind_div(u: np.ndarray, speed: np.ndarray, axis: int, h: float):
    """-d/dx(speed u) with upwind face fluxes; returns (update, dissipation density)."""
    uL, uR = _face_jumps(u, axis)
    flux = np.maximum(speed, 0) * uL + np.minimum(speed, 0) * uR
    div = -np.diff(flux, axis=axis) / h
    diss = np.sum(np.abs(speed) * (uR - uL) ** 2) / (2 * h)
    return div, diss


@dataclass
class EnergyLog:
    dt: float
    vol: float
    energy: list = field(default_factory=list)        # <u, u> before each step
    grad_face: list = field(default_factory=list)     # sum of squared face gradients in v
    grad_central: list = field(default_factory=list)  # central-difference |grad_v u|^2
    potential: list = field(default_factory=list)     # <a u, u>
    source: list = field(default_factory=list)        # <u, f>
    source_sq: list = field(default_factory=list)     # <f, f>
    a_neg: list = field(default_factory=list)         # sup of the negative part of a
    dissipation: list = field(default_factory=list)   # upwind numerical dissipation
    final_energy: float = 0.0


@dataclass
class FDRun:
    times: np.ndarray
    p: np.ndarray
    dt: float
    substeps: int
    energy: Optional[EnergyLog] = None


def fd_solve_fp(p0: np.ndarray, force, potential, source, params: ModelParams, grid: PhaseGrid,
                dt: Optional[float] = None, record_energy: bool = False) -> FDRun:
    """Upwind / central explicit solve, output at the grid's time levels.

    Coefficients follow the conventions of LinearProblem.  With dt None the
    combined monotone step is used; a requested dt is checked against the
    separate CFL limits and refused with the binding one.
    """
    N = grid.dim
    if N > 2:
        raise ValueError("the finite-difference oracle supports N <= 2")
    F_sup, a_sup = _sup(force, grid), _sup(potential, grid)
    limits = cfl_limits(params, grid, F_sup)
    if dt is None:
        dt = min(combined_dt(params, grid, F_sup, a_sup), grid.dt)
    else:
        name = min(limits, key=limits.get)
        if dt > limits[name]:
            raise CFLError(f"dt = {dt:.3g} violates the {name} limit {limits[name]:.3g}")
    m = max(1, math.ceil(grid.dt / dt - 1e-12))
    h = grid.dt / m

    vol = grid.dx ** N * grid.dv ** N
    vs = [grid.v_coord(i) for i in range(N)]
    v_faces = -grid.spec.v_extent + np.arange(grid.spec.nv + 1) * grid.dv
    vf = []
    for i in range(N):
        shape = [1] * (2 * N)
        shape[N + i] = v_faces.size
        vf.append(v_faces.reshape(shape))
    log = EnergyLog(h, vol) if record_energy else None

    u = np.asarray(p0, dtype=float).copy()
    out = np.empty((grid.nt + 1,) + u.shape)
    out[0] = u
    for n in range(grid.nt):
        for sub in range(m):
            t = n * grid.dt + sub * h
            F = _coef(force, n, t)
            a = _coef(potential, n, t)
            f = _coef(source, n, t)
            Lu = np.zeros_like(u)
            diss = 0.0
            gface = 0.0
            for i in range(N):
                d, s = _upwind_div(u, vs[i], i, grid.dx)
                Lu += d
                diss += s
                Fi = 0.0 if F is None else F[i].reshape(grid.x_shape + (1,) * N)
                d, s = _upwind_div(u, Fi - params.k * vf[i], N + i, grid.dv)
                Lu += d
                diss += s
                uL, uR = _face_jumps(u, N + i)
                jump = uR - uL
                Lu += params.sigma * np.diff(jump, axis=N + i) / grid.dv ** 2
                gface += np.sum(jump ** 2) / grid.dv ** 2
            if a is not None:
                Lu -= a * u
            if f is not None:
                Lu += f
            if log is not None:
                log.energy.append(vol * np.sum(u ** 2))
                log.grad_face.append(vol * gface)
                gc = sum(np.gradient(u, grid.dv, axis=N + i, edge_order=2) ** 2 for i in range(N))
                log.grad_central.append(vol * float(np.sum(gc)))
                log.potential.append(0.0 if a is None else vol * float(np.sum(a * u * u)))
                log.source.append(0.0 if f is None else vol * float(np.sum(np.broadcast_to(f, u.shape) * u)))
                log.source_sq.append(0.0 if f is None else vol * float(np.sum(np.broadcast_to(f, u.shape) ** 2)))
                log.a_neg.append(0.0 if a is None else float(np.max(np.maximum(-a, 0.0))))
                log.dissipation.append(vol * diss)
            u = u + h * Lu
        out[n + 1] = u
    if log is not None:
        log.final_energy = vol * float(np.sum(u ** 2))
    return FDRun(grid.times, out, h, m, log)


def fd_solve_heat(c0: np.ndarray, sink, params: ModelParams, grid: PhaseGrid,
                  dt: Optional[float] = None) -> np.ndarray:
    """Explicit central heat solve with zero-flux walls and explicit sink -eta c j.

    sink is None or a j series of shape (nt+1, *x_shape); output at grid times.
    """
    N = grid.dim
    limit = 0.9 * grid.dx ** 2 / (2 * params.d * N)
    if dt is None:
        dt = limit
    elif dt > limit:
        raise CFLError(f"dt = {dt:.3g} violates the diffusion limit {limit:.3g}")
    m = max(1, math.ceil(grid.dt / dt - 1e-12))
    h = grid.dt / m
    c = np.asarray(c0, dtype=float).copy()
    out = np.empty((grid.nt + 1,) + c.shape)
    out[0] = c
    for n in range(grid.nt):
        j = None if sink is None else sink[n]
        for _ in range(m):
            lap = np.zeros_like(c)
            for i in range(N):
                cp = np.pad(c, [(1, 1) if ax == i else (0, 0) for ax in range(N)], mode="edge")
                lap += np.diff(cp, n=2, axis=i) / grid.dx ** 2
            upd = params.d * lap
            if j is not None:
                upd = upd - params.eta * c * j
            c = c + h * upd
        out[n + 1] = c
    return out


@dataclass
class EnergyReport:
    residual_steps: np.ndarray   # E(n+1) - E(n) - dt * (discrete right-hand side), per step
    residual_rate: float         # |sum of step residuals| / T
    continuum_rate: float        # same with central gradients and no upwind dissipation
    dissipation_rate: float      # time average of the upwind dissipation
    initial_energy: float
    beta: float
    l2_bound_ok: bool
    h1_bound_ok: bool
    h1_lhs: float
    h1_rhs: float


def energy_check(run: FDRun, params: ModelParams, grid: PhaseGrid) -> EnergyReport:
    log = run.energy
    if log is None:
        raise ValueError("run was made without record_energy=True")
    N = grid.dim
    E = np.array(log.energy + [log.final_energy])
    h = log.dt
    T = h * (len(E) - 1)
    if E.size == 1 or E[0] == 0 and not np.any(E):
        z = np.zeros(max(E.size - 1, 0))
        return EnergyReport(z, 0.0, 0.0, 0.0, 0.0, 0.0, True, True, 0.0, 0.0)
    g_face, g_c = np.array(log.grad_face), np.array(log.grad_central)
    pot, src, diss = np.array(log.potential), np.array(log.source), np.array(log.dissipation)
    base = N * params.k * E[:-1] - 2 * pot + 2 * src
    step = np.diff(E) - h * (base - 2 * params.sigma * g_face - 2 * diss)
    cont = np.diff(E) - h * (base - 2 * params.sigma * g_c)
    a_neg = max(log.a_neg, default=0.0)
    beta = max(2, N) * params.k + 2 * a_neg + 1
    f_int = h * float(np.sum(log.source_sq))
    t = h * np.arange(E.size)
    l2_ok = bool(np.all(E <= (E[0] + f_int) * np.exp(beta * t) * (1 + 1e-12)))
    h1_lhs = params.sigma * h * float(np.sum(g_c))
    h1_rhs = (E[0] + f_int) * math.exp(beta * T)
    return EnergyReport(step, abs(float(step.sum())) / T, abs(float(cont.sum())) / T,
                        float(diss.mean()), float(E[0]), beta, l2_ok, h1_lhs <= h1_rhs, h1_lhs, h1_rhs)


def _bump(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, (1 - s ** 2) ** 3, 0.0)


def _bump_d1(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, -6 * s * (1 - s ** 2) ** 2, 0.0)


def _bump_d2(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, -6 * (1 - s ** 2) ** 2 + 24 * s ** 2 * (1 - s ** 2), 0.0)


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x, v) = b(t / T) prod_i b((x_i - x_c) / r_x) b((v_i - v_c) / r_v), b(s) = (1 - s^2)^3."""
    x_center: tuple
    v_center: tuple
    x_radius: float
    v_radius: float

    __test__ = False  # not a pytest class

    def spatial_parts(self, grid: PhaseGrid):
        """phi, v-gradient components, x-gradient components and v-laplacian at t-factor 1."""
        N = grid.dim
        fx = [(grid.x_coord(i) - self.x_center[i]) / self.x_radius for i in range(N)]
        fv = [(grid.v_coord(i) - self.v_center[i]) / self.v_radius for i in range(N)]
        bx = [_bump(s) for s in fx]
        bv = [_bump(s) for s in fv]

        def prod(parts):
            out = 1.0
            for q in parts:
                out = out * q
            return out

        phi = prod(bx + bv)
        gx, gv, lap = [], [], 0.0
        for i in range(N):
            others_x = prod([bx[j] for j in range(N) if j != i] + bv)
            others_v = prod(bx + [bv[j] for j in range(N) if j != i])
            gx.append(_bump_d1(fx[i]) / self.x_radius * others_x)
            gv.append(_bump_d1(fv[i]) / self.v_radius * others_v)
            lap = lap + _bump_d2(fv[i]) / self.v_radius ** 2 * others_v
        return phi, gx, gv, lap


def test_function_bank(grid: PhaseGrid, seed: int = 7) -> list[TestFunction]:
    """Five C^2 bumps placed well inside the box; fixed seed for the offsets."""
    N = grid.dim
    Lx, Lv = grid.spec.x_extent, grid.spec.v_extent
    rng = np.random.default_rng(seed)
    bank = [TestFunction((0.0,) * N, (0.0,) * N, 0.75 * Lx, 0.75 * Lv)]
    for _ in range(4):
        xc = tuple(rng.uniform(-0.15, 0.15, N) * Lx)
        vc = tuple(rng.uniform(-0.15, 0.15, N) * Lv)
        bank.append(TestFunction(xc, vc, rng.uniform(0.55, 0.75) * Lx, rng.uniform(0.55, 0.75) * Lv))
    return bank


test_function_bank.__test__ = False


def weak_form_residual(p_series: np.ndarray, force_series: np.ndarray, potential_series,
                       params: ModelParams, grid: PhaseGrid, bank: list[TestFunction]) -> np.ndarray:
    """Residual of the weak formulation for each test function, relative to ||p0||_1.

    potential_series is the full zeroth-order coefficient at each stored
    time (anastomosis minus branching), broadcastable against p.  The time
    integral uses the trapezoid rule on the stored levels.
    """
    N = grid.dim
    T = grid.spec.t_final
    t = grid.times
    tb, tb1 = _bump(t / T), _bump_d1(t / T) / T
    w = grid.weights
    tw = np.full(t.size, grid.dt)
    tw[0] = tw[-1] = 0.5 * grid.dt
    mass0 = float(np.sum(w * np.abs(p_series[0])))
    out = []
    for tf in bank:
        phi, gx, gv, lap = tf.spatial_parts(grid)
        total = 0.0
        for n in range(t.size):
            p = p_series[n]
            F = force_series[n]
            a = potential_series[n] if potential_series is not None else 0.0
            integrand = tb1[n] * phi + tb[n] * params.sigma * lap - tb[n] * a * phi
            for i in range(N):
                Fi = F[i].reshape(grid.x_shape + (1,) * N)
                integrand = integrand + tb[n] * (grid.v_coord(i) * gx[i] + (Fi - params.k * grid.v_coord(i)) * gv[i])
            total += tw[n] * float(np.sum(w * p * integrand))
        total += float(np.sum(w * phi * p_series[0]))
        out.append(abs(total) / mass0 if mass0 > 0 else abs(total))
    return np.array(out)


def marginal_series(p_series: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return np.stack([marginal(p, grid) for p in p_series])
