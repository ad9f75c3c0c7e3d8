"""Velocity reductions of the tip density and the velocity-decay inequalities.

The dimensional constants of the interpolation inequalities come from
splitting the velocity integral at a radius R and minimising

    a R^m + b R^{-n}

over R, which gives (1 + m/n) (n/m)^{m/(m+n)} a^{n/(m+n)} b^{m/(m+n)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, PhaseGrid, integrate_phase, lp_norm
from .kernels import fermi_weight

# relative slack for inequalities that hold exactly on the discrete sums
_ROUNDOFF = 1e-12


def sphere_area(dim: int) -> float:
    """Measure of the unit sphere in R^dim (2 points when dim = 1)."""
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def radius_optimum(a: float, m: float, b: float, n: float) -> float:
    """min over R > 0 of a R^m + b R^{-n}, for a, b >= 0 and m, n > 0."""
    if a <= 0 or b <= 0:
        return 0.0
    s = m + n
    return (1 + m / n) * (n / m) ** (m / s) * a ** (n / s) * b ** (m / s)


def marginal(p: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return grid.v_integral(np.asarray(p, dtype=float))


def speed_weight(params: ModelParams, grid: PhaseGrid, mode: str | None = None) -> np.ndarray:
    """|v| g(|v|) on the velocity sub-grid; g = 1 in raw mode."""
    mode = params.flux_mode if mode is None else mode
    if mode == "raw":
        return grid.speed
    if mode != "cutoff":
        raise ValueError(f"unknown flux mode {mode!r}")
    return grid.speed * fermi_weight(grid.speed, params)


def flux_j(p: np.ndarray, params: ModelParams, grid: PhaseGrid, mode: str | None = None) -> np.ndarray:
    return grid.v_integral(speed_weight(params, grid, mode) * p)


def vector_flux(p: np.ndarray, params: ModelParams, grid: PhaseGrid, mode: str | None = None) -> np.ndarray:
    """Components of int v g(|v|) p dv, axis index leading."""
    mode = params.flux_mode if mode is None else mode
    g = 1.0 if mode == "raw" else fermi_weight(grid.speed, params)
    return np.stack([grid.v_integral(grid.v_coord(i) * g * p) for i in range(grid.dim)])


def speed_weight_norms(params: ModelParams, grid: PhaseGrid, mode: str | None = None) -> tuple[float, float]:
    """(L^1, L^inf) norms of |v| g over the velocity grid."""
    w = np.broadcast_to(speed_weight(params, grid, mode), grid.shape)
    w = w[(0,) * grid.dim]
    return float(np.sum(w * grid.weights_v)), float(w.max())


def moment(p: np.ndarray, beta: float, grid: PhaseGrid) -> float:
    if beta < 0:
        raise ValueError("moment order must be >= 0")
    if beta == 0:
        return integrate_phase(p, grid)
    return integrate_phase(grid.speed ** beta * p, grid)


def weight_beta(grid: PhaseGrid, beta: float) -> np.ndarray:
    return (1 + grid.speed ** 2) ** (beta / 2)


def weighted_sup(p: np.ndarray, beta: float, grid: PhaseGrid) -> float:
    return float(np.max(np.abs(weight_beta(grid, beta) * p)))


@dataclass
class MomentReport:
    beta: float
    m_beta: float
    weighted_sup: float
    marginal_sup: float
    speed_marginal_sup: float

    def __post_init__(self):
        for name in ("m_beta", "weighted_sup", "marginal_sup", "speed_marginal_sup"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def moment_report(p: np.ndarray, beta: float, grid: PhaseGrid) -> MomentReport:
    p = np.clip(p, 0.0, None)
    return MomentReport(beta, moment(p, beta, grid), weighted_sup(p, beta, grid),
                        float(marginal(p, grid).max()),
                        float(grid.v_integral(grid.speed * p).max()))


@dataclass
class InequalityVerdict:
    name: str
    lhs: float = 0.0
    rhs: float = 0.0
    constant: float = 1.0
    skipped: bool = False
    reason: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.skipped or self.lhs <= self.rhs * (1 + _ROUNDOFF) + 1e-300

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def _skip(name: str, reason: str) -> InequalityVerdict:
    return InequalityVerdict(name, skipped=True, reason=reason)


def check_vector_flux(p, params, grid) -> InequalityVerdict:
    jv = vector_flux(p, params, grid)
    lhs = float(np.sqrt(np.sum(jv ** 2, axis=0)).max())
    rhs = grid.dim * float(flux_j(p, params, grid).max())
    return InequalityVerdict("vector_flux", lhs, rhs, float(grid.dim))


def check_moment_interp(p, beta, ell, grid) -> InequalityVerdict:
    name = "moment_l1_interp"
    if not beta > ell > 0:
        return _skip(name, f"needs beta > ell > 0 (beta={beta}, ell={ell})")
    m0 = integrate_phase(p, grid)
    lhs = moment(p, ell, grid)
    rhs = m0 ** (1 - ell / beta) * moment(p, beta, grid) ** (ell / beta)
    return InequalityVerdict(name, lhs, rhs)


def moment_marginal_constant(dim: int, beta: float, ell: float) -> float:
    """C with int |v|^ell p dv <= C ||p||_inf^{(beta-ell)/(N+beta)} (int |v|^beta p dv)^{(N+ell)/(N+beta)}."""
    m, n = dim + ell, beta - ell
    return radius_optimum(sphere_area(dim) / (dim + ell), m, 1.0, n)


def check_moment_marginal(p, beta, ell, grid) -> InequalityVerdict:
    name = "moment_marginal_lq"
    if not beta > ell > 0:
        return _skip(name, f"needs beta > ell > 0 (beta={beta}, ell={ell})")
    N = grid.dim
    C = moment_marginal_constant(N, beta, ell)
    q = (N + beta) / (N + ell)
    lhs = lp_norm(grid.v_integral(grid.speed ** ell * p), q, grid)
    rhs = C * float(p.max()) ** ((beta - ell) / (N + beta)) * moment(p, beta, grid) ** ((N + ell) / (N + beta))
    return InequalityVerdict(name, lhs, rhs, C)


def speed_marginal_constant(dim: int, beta: float) -> float:
    S = sphere_area(dim)
    m, n = dim + 1, beta - 1 - dim
    return radius_optimum(S / m, m, S / n, n)


def check_speed_marginal_sup(p, beta, grid) -> InequalityVerdict:
    name = "speed_marginal_sup"
    N = grid.dim
    if not beta > N + 1:
        return _skip(name, f"needs beta > N + 1 (beta={beta}, N={N})")
    C = speed_marginal_constant(N, beta)
    lhs = float(grid.v_integral(grid.speed * p).max())
    rhs = C * float(p.max()) ** (1 - (N + 1) / beta) * weighted_sup(p, beta, grid) ** ((N + 1) / beta)
    return InequalityVerdict(name, lhs, rhs, C)


def marginal_sup_constant(dim: int, beta: float) -> float:
    S = sphere_area(dim)
    m, n = dim, beta - dim
    return radius_optimum(S / m, m, S / n, n)


def check_marginal_sup(p, beta, grid) -> InequalityVerdict:
    name = "marginal_sup"
    N = grid.dim
    if not beta > N:
        return _skip(name, f"needs beta > N (beta={beta}, N={N})")
    C = marginal_sup_constant(N, beta)
    lhs = float(marginal(p, grid).max())
    rhs = C * float(p.max()) ** (1 - N / beta) * weighted_sup(p, beta, grid) ** (N / beta)
    return InequalityVerdict(name, lhs, rhs, C)


def check_weight_interp(p, beta, grid) -> InequalityVerdict:
    name = "weighted_sup_interp"
    if not beta > 1:
        return _skip(name, f"needs beta > 1 (beta={beta})")
    lhs = weighted_sup(p, beta - 1, grid)
    rhs = float(p.max()) ** (1 / beta) * weighted_sup(p, beta, grid) ** (1 - 1 / beta)
    return InequalityVerdict(name, lhs, rhs)


def check_flux_norms(p, params, grid) -> list[InequalityVerdict]:
    """||j||_1 <= || |v| g ||_inf ||p||_1 and ||j||_inf <= || |v| g ||_1 ||p||_inf."""
    w1, winf = speed_weight_norms(params, grid)
    j = flux_j(p, params, grid)
    return [InequalityVerdict("flux_l1", lp_norm(j, 1, grid), winf * integrate_phase(p, grid)),
            InequalityVerdict("flux_sup", float(j.max()), w1 * float(p.max()))]


def decay_inequality_suite(p: np.ndarray, beta: float, grid: PhaseGrid,
                           params: ModelParams | None = None, ell: float | None = None) -> list[InequalityVerdict]:
    """All velocity-decay inequalities for a nonnegative density p.

    Small negative undershoots from discretisation are clipped first; the
    inequalities concern nonnegative functions.
    """
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    params = ModelParams(dim=grid.dim) if params is None else params
    ell = beta / 2 if ell is None else ell
    out = [check_vector_flux(p, params, grid),
           check_moment_interp(p, beta, ell, grid),
           check_moment_marginal(p, beta, ell, grid),
           check_speed_marginal_sup(p, beta, grid),
           check_marginal_sup(p, beta, grid),
           check_weight_interp(p, beta, grid)]
    return out + check_flux_norms(p, params, grid)
