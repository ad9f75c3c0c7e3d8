"""TAF concentration: heat flow with a flux-proportional sink.

The concentration is marched as c = c_inf + u, where c_inf is a constant
background that the heat flow leaves untouched and u decays inside the
box.  u lives on a zero-padded copy of the x-grid and each step applies
the exact semigroup of the lattice Laplacian (diagonal in Fourier space)
to the explicitly sunk field c (1 - eta dt j).  The gradient is the
central-difference symbol applied in the same transform, i.e. the
differentiated Duhamel step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ModelParams, PhaseGrid, lp_norm
from .kernels import force_from_c, heat_gradient_norm


class SinkStabilityError(ValueError):
    pass


@dataclass
class TafProblem:
    c0: np.ndarray                      # full initial field on the x-grid, background included
    d: float
    eta: float
    flux: Optional[np.ndarray] = None   # j at t_0..t_nt, shape (nt+1, *x_shape)
    background: float = 0.0

    def __post_init__(self):
        self.c0 = np.asarray(self.c0, dtype=float)
        if np.any(self.c0 < 0):
            raise ValueError("c0 must be nonnegative")
        if self.background < 0:
            raise ValueError("background must be >= 0")
        if self.flux is not None:
            self.flux = np.asarray(self.flux, dtype=float)
            if np.any(self.flux < 0):
                raise ValueError("flux j must be nonnegative")


@dataclass
class TafRun:
    times: np.ndarray
    c: np.ndarray          # (nt+1, *x_shape)
    grad: np.ndarray       # (nt+1, N, *x_shape)
    heat: np.ndarray       # pure heat evolution of c0 at the same times
    background: float = 0.0

    @property
    def split_part(self) -> np.ndarray:
        """c - heat flow of c0; zero at t = 0."""
        return self.c - self.heat


def _pad_cells(grid: PhaseGrid, d: float) -> int:
    width = 4.0 * math.sqrt(d * grid.spec.t_final)
    return max(4, int(math.ceil(width / grid.dx)))


def _symbols(n: int, h: float, dim: int):
    """Lattice Laplacian and central-difference symbols on an n^dim periodic grid."""
    kf = 2 * np.pi * np.fft.fftfreq(n)           # kappa * h, full axes
    kr = 2 * np.pi * np.fft.rfftfreq(n)          # last axis is halved by rfftn
    lap, deriv = 0.0, []
    for i in range(dim):
        kk = kr if i == dim - 1 else kf
        shape = [1] * dim
        shape[i] = kk.size
        kk = kk.reshape(shape)
        lap = lap - (2 - 2 * np.cos(kk)) / h ** 2
        deriv.append(1j * np.sin(kk) / h)
    return lap, deriv


def solve_taf(prob: TafProblem, grid: PhaseGrid, nt: Optional[int] = None) -> TafRun:
    """March c from c0 with the sink taken at the left end of each step."""
    if nt is not None and nt != grid.nt:
        grid = PhaseGrid(grid.spec.replace(nt=nt), grid.dim)
    N, nt, dt = grid.dim, grid.nt, grid.dt
    c0 = prob.c0
    if c0.shape != grid.x_shape:
        raise ValueError(f"c0 has shape {c0.shape}, expected {grid.x_shape}")
    j = prob.flux
    if j is not None:
        if j.shape != (nt + 1,) + grid.x_shape:
            raise ValueError("flux series must have shape (nt+1, *x_shape)")
        worst = prob.eta * dt * float(j.max(initial=0.0))
        if worst > 1:
            raise SinkStabilityError(
                f"explicit sink unstable: eta*dt*max(j) = {worst:.3g} > 1; increase nt")

    pad = _pad_cells(grid, prob.d)
    n = grid.spec.nx + 2 * pad
    inner = (slice(pad, pad + grid.spec.nx),) * N
    lap, deriv = _symbols(n, grid.dx, N)
    prop = np.exp(prob.d * dt * lap)
    bg = prob.background

    def dfield(uhat):
        return np.stack([np.fft.irfftn(D * uhat, s=(n,) * N, axes=tuple(range(N)))[inner] for D in deriv])

    u = np.zeros((n,) * N)
    u[inner] = c0 - bg
    u_heat = u.copy()
    times = grid.times
    c_out = np.empty((nt + 1,) + grid.x_shape)
    g_out = np.empty((nt + 1, N) + grid.x_shape)
    h_out = np.empty_like(c_out)
    c_out[0] = c0
    h_out[0] = c0
    g_out[0] = dfield(np.fft.rfftn(u))
    jp = np.zeros_like(u)
    for step in range(nt):
        g = u
        if j is not None and prob.eta > 0:
            jp[inner] = j[step]
            g = u - prob.eta * dt * jp * (bg + u)
        ghat = prop * np.fft.rfftn(g)
        u = np.fft.irfftn(ghat, s=(n,) * N, axes=tuple(range(N)))
        u_heat = np.fft.irfftn(prop * np.fft.rfftn(u_heat), s=(n,) * N, axes=tuple(range(N)))
        c_out[step + 1] = bg + u[inner]
        h_out[step + 1] = bg + u_heat[inner]
        g_out[step + 1] = dfield(ghat)
    return TafRun(times, c_out, g_out, h_out, bg)


def force_series(run: TafRun, params: ModelParams) -> np.ndarray:
    """F(c(t_n)) for every stored time, shape (nt+1, N, *x_shape)."""
    c = np.clip(run.c, 0.0, None)
    return np.stack([force_from_c(c[n], run.grad[n], params) for n in range(c.shape[0])])


@dataclass
class SplitCheck:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    passed: bool
    worst_ratio: float


def split_bound_check(run: TafRun, prob: TafProblem, grid: PhaseGrid, slack: float = 0.10) -> SplitCheck:
    """||c - heat(c0)||_2 <= eta t ||c||_inf ||j||_{L^inf_t L^2}, with relative slack."""
    c_sup = float(np.max(np.abs(run.c)))
    j_norm = 0.0 if prob.flux is None else max(lp_norm(jn, 2, grid) for jn in prob.flux)
    lhs = np.array([lp_norm(s, 2, grid) for s in run.split_part])
    rhs = prob.eta * run.times * c_sup * j_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    worst = float(ratio.max())
    return SplitCheck(run.times, lhs, rhs, worst <= 1 + slack, worst)


def max_principle_ok(run: TafRun, c0: np.ndarray, rel: float = 1e-6) -> bool:
    top = float(np.max(c0)) * (1 + rel)
    slack = rel * max(float(np.max(c0)), 1e-300)
    return bool(run.c.min() >= -slack and run.c.max() <= top)


def gradient_decay_constant(d_coef: float, dim: int, q: float) -> float:
    """C with int_0^t ||dK(s)||_{q'} ds = C t^{1/2 - N/(2q)}, q' the dual exponent."""
    if not q > dim:
        raise ValueError(f"need q > N (got q={q}, N={dim})")
    q_dual = 1.0 if np.isinf(q) else q / (q - 1)
    expo = 0.5 - dim / (2 * q) if not np.isinf(q) else 0.5
    # ||dK(s)||_{q'} s^{1/2 + N/(2q)} is scale-free; evaluate at s = 1
    return heat_gradient_norm(1.0, d_coef, dim, q_dual) / expo


@dataclass
class GradBoundVerdict:
    times: np.ndarray
    lhs: np.ndarray            # ||F(t)||_inf - d1 ||grad c0||_inf
    rhs: np.ndarray
    constant: float            # C_{N,q} from heat-kernel decay
    exponent: float            # fitted power of t
    fitted_coefficient: float  # fitted lhs / (d1 eta ||c0||_inf), i.e. C ||j||
    passed: bool


def grad_bound_check(run: TafRun, params: ModelParams, c0: np.ndarray, j_series: Optional[np.ndarray],
                     grid: PhaseGrid, q: float = np.inf, fit_window: Optional[tuple] = None,
                     rel_slack: float = 1e-6) -> GradBoundVerdict:
    """Force growth against d1 eta C ||c0||_inf t^{1/2 - N/(2q)} ||j||_{L^inf_t L^q}."""
    N = grid.dim
    C = gradient_decay_constant(params.d, N, q)
    F = force_series(run, params)
    F_sup = np.max(np.abs(F.reshape(F.shape[0], -1)), axis=1)
    g0 = float(np.max(np.abs(run.grad[0])))
    lhs = F_sup - params.d1 * g0
    c_sup = float(np.max(c0))
    j_norm = 0.0 if j_series is None else max(lp_norm(jn, q, grid) for jn in j_series)
    expo = 0.5 if np.isinf(q) else 0.5 - N / (2 * q)
    t = run.times
    rhs = params.d1 * params.eta * C * c_sup * j_norm * t ** expo
    scale = params.d1 * max(g0, float(F_sup.max()), 1e-300)
    passed = bool(np.all(lhs <= rhs + rel_slack * scale))

    exponent, coef = float("nan"), 0.0
    lo, hi = fit_window if fit_window is not None else (t[1], t[-1])
    sel = (t >= lo) & (t <= hi) & (lhs > 0)
    if sel.sum() >= 3:
        slope, icpt = np.polyfit(np.log(t[sel]), np.log(lhs[sel]), 1)
        exponent = float(slope)
        denom = params.d1 * params.eta * c_sup
        coef = float(np.exp(icpt) / denom) if denom > 0 else 0.0
    return GradBoundVerdict(t, lhs, rhs, C, exponent, coef, passed)
