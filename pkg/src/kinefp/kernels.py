"""Closed-form kernels and pointwise nonlinearities of the model.

The field-free kernel G(t, x, v; tau, xi, nu) is the transition density of
the Langevin pair dX = V dt, dV = -kV dt + sqrt(2 sigma) dW from (xi, nu) at
time tau to (x, v) at time t.  Two evaluations are provided: the explicit
closed form (``closed_form``) and a Gaussian built from the exact
Ornstein-Uhlenbeck mean and covariance (``ou_covariance``, production).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import integrate, special

from .core import ModelParams

STRATEGIES = ("ou_covariance", "closed_form")

_SERIES_CUT = 0.5
_N_SERIES = np.arange(3, 40)
# Taylor coefficients of 2u - 3 + 4e^{-u} - e^{-2u}
_VARX_COEF = np.array([(4.0 - 2.0 ** n) * (-1.0) ** n / factorial(n) for n in _N_SERIES])


@dataclass(frozen=True)
class PropagatorSpec:
    k: float
    sigma: float
    dim: int = 1
    eval_strategy: str = "ou_covariance"

    def __post_init__(self):
        if not (self.k > 0 and self.sigma > 0):
            raise ValueError("PropagatorSpec needs k > 0 and sigma > 0")
        if self.eval_strategy not in STRATEGIES:
            raise ValueError(f"unknown eval_strategy {self.eval_strategy!r}")

    @classmethod
    def from_params(cls, p: ModelParams, eval_strategy: str = "ou_covariance",
                    sigma: float | None = None) -> "PropagatorSpec":
        return cls(p.k, p.sigma if sigma is None else sigma, p.dim, eval_strategy)


def _var_x_shape(u: np.ndarray) -> np.ndarray:
    """2u - 3 + 4e^{-u} - e^{-2u}, accurate for small u."""
    u = np.asarray(u, dtype=float)
    small = u < _SERIES_CUT
    out = np.empty_like(u)
    us = u[small]
    out[small] = np.sum(_VARX_COEF * us[..., None] ** _N_SERIES, axis=-1)
    ul = u[~small]
    out[~small] = 2 * ul - 3 + 4 * np.exp(-ul) - np.exp(-2 * ul)
    return out


def ou_covariance(s, k: float, sigma: float):
    """Per-axis covariance (var_x, cov_xv, var_v) of the OU pair after time s."""
    s = np.asarray(s, dtype=float)
    u = k * s
    var_v = sigma / k * (-np.expm1(-2 * u))
    cov = sigma / k ** 2 * np.expm1(-u) ** 2
    var_x = sigma / k ** 3 * _var_x_shape(u)
    return var_x, cov, var_v


def ou_mean(s, xi, nu, k: float, force=0.0):
    """Mean position and velocity after time s starting at (xi, nu), under a constant force."""
    e = np.exp(-k * s)
    phi = -np.expm1(-k * s) / k           # (1 - e^{-ks}) / k
    mean_v = nu * e + force * phi
    mean_x = xi + nu * phi + force * (s - phi) / k
    return mean_x, mean_v


def _as_points(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if dim == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        a = a[..., None]
    if a.shape[-1] != dim:
        raise ValueError(f"points must have a trailing axis of length {dim}")
    return a


def log_G(t, x, v, tau, xi, nu, spec: PropagatorSpec) -> np.ndarray:
    s = np.asarray(t, dtype=float) - np.asarray(tau, dtype=float)
    if np.any(s <= 0):
        raise ValueError("kernel needs t > tau")
    x, v, xi, nu = (_as_points(a, spec.dim) for a in (x, v, xi, nu))
    s = s[..., None]
    k, sigma = spec.k, spec.sigma
    if spec.eval_strategy == "ou_covariance":
        var_x, cov, var_v = ou_covariance(s, k, sigma)
        det = var_x * var_v - cov ** 2
        mx, mv = ou_mean(s, xi, nu, k)
        dx, dv = x - mx, v - mv
        quad = (var_v * dx ** 2 - 2 * cov * dx * dv + var_x * dv ** 2) / det
        per_axis = -0.5 * quad - np.log(2 * np.pi) - 0.5 * np.log(det)
        return np.sum(per_axis, axis=-1)
    # direct transcription of the closed-form kernel
    E = np.exp(k * s)
    root = np.sqrt((E ** 2 - 1) / (2 * k) * s - (E - 1) ** 2 / k ** 2)
    log_pref = np.log(k * E / (4 * np.pi * sigma * root))
    term1 = (k * x - k * xi + v - nu) ** 2 / (4 * sigma * s)
    num2 = (E - 1) / s * (x - xi + (v - nu) / k) + (nu - v * E)
    den2 = 4 * sigma * ((E ** 2 - 1) / (2 * k) - (E - 1) ** 2 / (k ** 2 * s))
    term2 = num2 ** 2 / den2
    return np.sum(log_pref - term1 - term2, axis=-1)


def eval_G(t, x, v, tau, xi, nu, spec: PropagatorSpec) -> np.ndarray:
    return np.exp(log_G(t, x, v, tau, xi, nu, spec))


def eval_heat_kernel(t, x, d_coef: float, dim: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    x = _as_points(x, dim)
    r2 = np.sum(x ** 2, axis=-1)
    return np.exp(-r2 / (4 * d_coef * t) - 0.5 * dim * np.log(4 * np.pi * d_coef * t))


def heat_gradient_norm(t: float, d_coef: float, dim: int, q: float = 1.0) -> float:
    """L^q norm of one partial derivative of the heat kernel, by 1D quadrature.

    The kernel factorises, so the N-dimensional norm is the product of the 1D
    norm of the derivative and N-1 copies of the 1D norm of the kernel.
    """
    def k1(y):
        return np.exp(-y ** 2 / (4 * d_coef * t)) / np.sqrt(4 * np.pi * d_coef * t)

    def dk1(y):
        return np.abs(y) / (2 * d_coef * t) * k1(y)

    scale = np.sqrt(4 * d_coef * t)
    if np.isinf(q):
        d_norm = dk1(np.sqrt(2 * d_coef * t))
        k_norm = k1(0.0)
    else:
        d_norm = 2 * integrate.quad(lambda y: dk1(y) ** q, 0, 40 * scale, limit=200)[0]
        k_norm = 2 * integrate.quad(lambda y: k1(y) ** q, 0, 40 * scale, limit=200)[0]
        d_norm, k_norm = d_norm ** (1 / q), k_norm ** (1 / q)
    return float(d_norm * k_norm ** (dim - 1))


def heat_gradient_constant(d_coef: float, dim: int, times=(0.05, 0.1, 0.2, 0.4, 0.8)) -> float:
    """Calibrated M with ||d_i K(t)||_1 <= M t^{-1/2}: max of the measured ratio."""
    return max(heat_gradient_norm(t, d_coef, dim, 1.0) * np.sqrt(t) for t in times)


def alpha_of_c(c, p: ModelParams) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("alpha(c) needs c >= 0")
    r = c / p.c_R
    return p.alpha1 * r / (1 + r)


def fermi_weight(speed, p: ModelParams) -> np.ndarray:
    speed = np.asarray(speed, dtype=float)
    return special.expit(-p.delta * (speed ** 2 - p.v_max ** 2))


def force_from_c(c, grad_c, p: ModelParams) -> np.ndarray:
    """d1 (1 + gamma1 c)^{-q1} grad c, with the axis index leading in grad_c."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("force needs c >= 0")
    sat = (1 + p.gamma1 * c) ** (-p.q1)
    return p.d1 * sat * np.asarray(grad_c, dtype=float)


@dataclass(frozen=True)
class RhoSpec:
    center: tuple
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.width > 0 or self.amplitude < 0:
            raise ValueError("RhoSpec needs width > 0 and amplitude >= 0")

    @property
    def sup(self) -> float:
        return float(self.amplitude)

    @classmethod
    def default(cls, p: ModelParams) -> "RhoSpec":
        center = (p.v_max / 2,) + (0.0,) * (p.dim - 1)
        return cls(center, 0.3 * p.v_max, 1.0)


def rho_eval(v, spec: RhoSpec) -> np.ndarray:
    center = np.asarray(spec.center, dtype=float)
    v = _as_points(v, center.size)
    r2 = np.sum((v - center) ** 2, axis=-1)
    return spec.amplitude * np.exp(-r2 / (2 * spec.width ** 2))


def rho_on_grid(grid, spec: RhoSpec) -> np.ndarray:
    """rho on the velocity sub-grid, broadcastable against phase arrays."""
    r2 = sum((grid.v_coord(i) - spec.center[i]) ** 2 for i in range(grid.dim))
    return spec.amplitude * np.exp(-r2 / (2 * spec.width ** 2))
