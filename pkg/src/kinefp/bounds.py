"""Assembly and checking of the a-priori constants.

Every check produces a BoundLedger row: the measured left side, the
certified right side, the margin and the inputs that went into the right
side.  A failed bound is data, never an exception.  Inputs that are
calibrated rather than derived carry an "empirical" tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ModelParams, PhaseGrid, integrate_phase, lp_norm
from .kernels import RhoSpec, heat_gradient_constant, heat_gradient_norm
from .taf import gradient_decay_constant
from .vintegrals import moment, moment_marginal_constant, speed_weight_norms, weight_beta

DEFAULT_REL_SLACK = 0.05


@dataclass
class BoundLedger:
    name: str
    lhs: float
    rhs: float
    inputs: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)
    rel_slack: float = DEFAULT_REL_SLACK

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -self.rel_slack * abs(self.rhs)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "passed": self.passed, "inputs": self.inputs, "tags": self.tags}


def _worst(name: str, lhs: np.ndarray, rhs: np.ndarray, inputs: dict, tags: dict) -> BoundLedger:
    """Ledger at the time with the smallest relative margin.

    The initial time is skipped when later times exist: both sides start
    from the same data there by construction.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs > 0, (rhs - lhs) / rhs, np.where(lhs > 0, -np.inf, np.inf))
    start = 1 if rel.size > 1 else 0
    n = start + int(np.argmin(rel[start:]))
    inputs = dict(inputs, time_index=n)
    return BoundLedger(name, float(lhs[n]), float(rhs[n]), inputs, tags)


def apriori_suite(state, params: ModelParams, grid: PhaseGrid, rho_sup: float) -> list[BoundLedger]:
    """L1, sup, L2 and velocity-gradient growth bounds for the final iterate."""
    p = state.p
    t = grid.times
    N = grid.dim
    growth = params.alpha1 * rho_sup
    m1 = np.array([lp_norm(s, 1, grid) for s in p])
    minf = np.array([float(np.max(np.abs(s))) for s in p])
    m2 = np.array([lp_norm(s, 2, grid) for s in p])
    r1 = m1[0] * np.exp(growth * t)
    rinf = minf[0] * np.exp((N * params.k + growth) * t)
    out = [
        _worst("l1_growth", m1, r1, {"p0_l1": m1[0], "alpha1_rho": growth}, {"rhs": "l1 a-priori"}),
        _worst("sup_growth", minf, rinf, {"p0_sup": minf[0], "Nk": N * params.k, "alpha1_rho": growth},
               {"rhs": "sup a-priori"}),
        _worst("l2_growth", m2, np.sqrt(r1 * rinf), {"structure": "sqrt(rhs_1 * rhs_inf)"},
               {"rhs": "Lq interpolation at q = 2"}),
    ]
    # sigma int_0^T ||grad_v p||_2^2 <= ||p0||_2^2 exp(beta T)
    gsq = []
    for s in p:
        g2 = sum(np.gradient(s, grid.dv, axis=N + i) ** 2 for i in range(N))
        gsq.append(integrate_phase(g2, grid))
    gsq = np.array(gsq)
    lhs = params.sigma * float(np.sum(0.5 * grid.dt * (gsq[1:] + gsq[:-1])))
    beta = max(2, N) * params.k + 2 * growth + 1
    rhs = m2[0] ** 2 * math.exp(beta * grid.spec.t_final)
    out.append(BoundLedger("grad_v_energy", lhs, rhs, {"p0_l2_sq": m2[0] ** 2, "beta": beta},
                           {"rhs": "velocity-gradient energy"}))
    return out


# --- moment horizon for the cutoff-free flux -----------------------------------------

@dataclass
class MomentData:
    moment0: float        # || |v|^beta p0 ||_1
    p_l1: float           # sup_t ||p||_1 (a-priori)
    p_sup: float          # sup_t ||p||_inf (a-priori)
    grad_c0_lr: float     # ||grad c0||_{L^{N+beta}}
    c0_sup: float
    rho_sup: float
    T: float

    @classmethod
    def from_data(cls, p0, c0, params: ModelParams, grid: PhaseGrid, beta: float, rho_sup: float) -> "MomentData":
        N = grid.dim
        T = grid.spec.t_final
        growth = params.alpha1 * rho_sup
        p0 = np.clip(p0, 0, None)
        gc = np.stack(np.gradient(np.asarray(c0, dtype=float), grid.dx)) if N > 1 else \
            np.gradient(np.asarray(c0, dtype=float), grid.dx)[None]
        gmag = np.sqrt(np.sum(gc ** 2, axis=0))
        return cls(moment(p0, beta, grid),
                   integrate_phase(p0, grid) * math.exp(growth * T),
                   float(p0.max()) * math.exp((N * params.k + growth) * T),
                   lp_norm(gmag, N + beta, grid), float(np.max(c0)), rho_sup, T)


@dataclass
class MomentHorizon:
    A: float
    B: float
    delta: float
    tau: float
    terms: dict
    envelope: Callable[[float], float]


def flux_gradient_constant(d_coef: float, dim: int, beta: float) -> float:
    """Heat-gradient constant with ||dK(s)||_{L^q}, q = (N+beta)/beta, integrated in time."""
    q = (dim + beta) / beta
    expo = 0.5 - dim * dim / (2 * (dim + beta))
    if expo <= 0:
        raise ValueError("needs beta > N^2 - N")
    return heat_gradient_norm(1.0, d_coef, dim, q) / expo


def moment_horizon(params: ModelParams, data: MomentData, beta: float) -> MomentHorizon:
    N = params.dim
    if not beta > max(N + 2, N * N - N):
        raise ValueError(f"beta={beta} must exceed max(N+2, N^2-N)")
    for name in ("p_l1", "p_sup", "c0_sup"):
        if not getattr(data, name) > 0:
            raise ValueError(f"norm {name} must be positive")
    k, s, T = params.k, params.sigma, data.T
    C_nb = moment_marginal_constant(N, beta, beta - 1)
    C_tilde = moment_marginal_constant(N, beta, 1) * C_nb
    C_flux = flux_gradient_constant(params.d, N, beta)
    t_diff = (beta * k / 2) ** ((2 - beta) / 2) * (beta * (beta - 2 + N) * s) ** (beta / 2) * T * data.p_l1
    t_force = ((beta * k / 4) ** (1 - N - beta)
               * (beta * params.d1 * data.grad_c0_lr * C_nb) ** (N + beta) * T * data.p_sup)
    t_branch = N * T / (2 * N + beta) * (params.alpha1 * data.rho_sup) ** ((2 * N + beta) / N)
    A = data.moment0 + t_diff + t_force + t_branch
    B = (beta * params.d1 * params.eta * C_flux * data.c0_sup * T ** (0.5 - N * N / (2 * (N + beta)))
         * C_tilde * data.p_sup ** (beta / (N + beta)) + 1)
    delta = N / (N + beta)
    tau = (N + beta) / (A ** delta * B * N)

    def envelope(t: float) -> float:
        base = A ** (-delta) - delta * B * t
        return math.inf if base <= 0 else base ** (-1 / delta)

    terms = {"moment0": data.moment0, "diffusion": t_diff, "force": t_force, "branching": t_branch,
             "C_N_beta": C_nb, "C_tilde_N_beta": C_tilde, "C_flux": C_flux}
    return MomentHorizon(A, B, delta, tau, terms, envelope)


def moment_envelope_ledger(result, hz: MomentHorizon, grid: PhaseGrid, beta: float,
                           frac: float = 0.8) -> BoundLedger:
    t = grid.times
    sel = t <= frac * hz.tau
    lhs = np.array([moment(np.clip(p, 0, None), beta, grid) for p in result.p])[sel]
    rhs = np.array([hz.envelope(x) for x in t[sel]])
    led = _worst("moment_envelope", lhs, rhs, {"A_beta": hz.A, "B_beta": hz.B, "tau": hz.tau},
                 {"rhs": "moment blow-up envelope"})
    led.rel_slack = 0.0
    return led


# --- weighted sup bound ---------------------------------------------------------------

def weighted_sup_gronwall(state, params: ModelParams, grid: PhaseGrid, beta: float, rho_sup: float,
                          c0: np.ndarray) -> BoundLedger:
    """||(1+|v|^2)^{beta/2} p(t)||_inf <= A' exp((B' + C') t)."""
    N = grid.dim
    if params.flux_mode == "raw":
        if not beta > max(N + 1, N * N - N):
            raise ValueError(f"raw flux needs beta > max(N+1, N^2-N) = {max(N + 1, N * N - N)}")
    elif not beta > N:
        raise ValueError(f"needs beta > N = {N}")
    w = weight_beta(grid, beta)
    Y = np.array([float(np.max(np.abs(w * p))) for p in state.p])
    A1 = Y[0]
    gc = np.abs(np.asarray(state.taf.grad[0]))
    grad_c0 = float(gc.max())
    a_neg = params.alpha1 * rho_sup
    B1 = (params.sigma * beta * (beta + 2 + N) + (N + beta) * params.k + a_neg
          + beta * params.d1 * N * grad_c0)
    j_sup = float(np.max(state.j))
    C_heat = gradient_decay_constant(params.d, N, math.inf)  # 2M
    T = grid.spec.t_final
    C1 = beta * N * params.d1 * params.eta * C_heat * math.sqrt(T) * float(np.max(c0)) * j_sup
    rhs = A1 * np.exp((B1 + C1) * grid.times)
    led = _worst("weighted_sup", Y, rhs,
                 {"A_prime": A1, "B_prime": B1, "C_prime": C1, "grad_c0_sup": grad_c0,
                  "j_sup": j_sup, "heat_grad_const": C_heat, "beta": beta},
                 {"C_prime": "measured flux sup with q = inf"})
    led.rel_slack = 0.0
    return led


# --- uniqueness constants -------------------------------------------------------------

def uniqueness_constants(run1, run2, params: ModelParams, grid: PhaseGrid,
                         rho: Optional[RhoSpec] = None, M: Optional[float] = None,
                         sink_constant: float = 1.0) -> BoundLedger:
    """G(T) = A + (B E2 + D E) || |v| g ||_inf and the check U(t) <= U(0) exp(G t).

    sink_constant bounds the fundamental solution of the heat operator with
    a nonnegative sink by the heat kernel; 1 follows from comparison.
    """
    s1, s2 = run1.state, run2.state
    if s2.grad_v_l1_sup is None:
        raise ValueError("velocity-gradient norms were not stored; rerun with store_gradients=True")
    rho = RhoSpec.default(params) if rho is None else rho
    N = grid.dim
    T = grid.spec.t_final
    M = heat_gradient_constant(params.d, N) if M is None else M
    a1 = float(np.max(s1.anastomosis))
    grad_c1 = float(np.max(np.abs(s1.taf.grad)))
    p2_marg = float(np.max(s2.marginal))
    dv_p2 = s2.grad_v_l1_sup
    c2 = float(np.max(s2.taf.c))
    j1 = float(np.max(s1.j))
    _, wg_inf = speed_weight_norms(params, grid)
    A = params.gamma * a1 + params.alpha1 * rho.sup + T * params.gamma * p2_marg
    B = params.d1 * params.q1 * params.gamma1 * grad_c1 * dv_p2 + params.alpha1 * rho.sup / params.c_R * p2_marg
    D = params.d1 * dv_p2
    E2 = sink_constant * params.eta * T * c2
    E = 2 * params.eta * M * c2 * math.sqrt(T) + 2 * params.eta ** 2 * M * c2 * sink_constant * T ** 1.5
    G = A + (B * E2 + D * E) * wg_inf
    w = grid.weights
    U = np.maximum.accumulate(np.array([float(np.sum(w * np.abs(a - b))) for a, b in zip(s1.p, s2.p)]))
    rhs = U[0] * np.exp(G * grid.times)
    inputs = {"A": A, "B": B, "D": D, "E": E, "E2": E2, "G": G, "M": M, "sink_constant": sink_constant,
              "a_p1_sup": a1, "grad_c1_sup": grad_c1, "p2_marginal_sup": p2_marg,
              "grad_v_p2": dv_p2, "c2_sup": c2, "j_p1_sup": j1, "speed_weight_sup": wg_inf}
    led = _worst("uniqueness_growth", U, rhs, inputs,
                 {"M": "empirical", "sink_constant": "comparison with the sink-free heat kernel"})
    led.rel_slack = 0.0
    return led


def horizon_monotonicity(params: ModelParams, data: MomentData, beta: float,
                         factor: float = 1.5) -> dict[str, bool]:
    """Formula-level sanity of the horizon: tau shrinks when any input grows.

    Each entry scales one input by `factor` and records whether tau did not
    increase.  Larger moments, norms, horizons, consumption or branching can
    only make the certified window shorter.
    """
    base = moment_horizon(params, data, beta).tau
    out = {}
    for name in ("moment0", "p_l1", "p_sup", "grad_c0_lr", "c0_sup", "rho_sup", "T"):
        bumped = MomentData(**{**data.__dict__, name: getattr(data, name) * factor})
        out[name] = moment_horizon(params, bumped, beta).tau <= base * (1 + 1e-12)
    for name in ("eta", "alpha1", "d1"):
        bumped = params.replace(**{name: getattr(params, name) * factor + 1e-3})
        out[name] = moment_horizon(bumped, data, beta).tau <= base * (1 + 1e-12)
    return out
