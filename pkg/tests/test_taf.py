import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_bump
from kinefp.oracle import fd_solve_heat
from kinefp.taf import (SinkStabilityError, TafProblem, force_series, gradient_decay_constant, grad_bound_check,
                        max_principle_ok, solve_taf, split_bound_check)


@pytest.fixture(scope="module")
def g():
    return PhaseGrid(GridSpec(x_extent=4.0, nx=64, nv=4, t_final=0.5, nt=40), 1)


@pytest.fixture(scope="module")
def indicator_setup():
    g = PhaseGrid(GridSpec(x_extent=1.0, nx=400, nv=4, t_final=0.1, nt=100), 1)
    j = np.broadcast_to(np.where(np.abs(g.x) < 0.3, 1.0, 0.0), (g.nt + 1,) + g.x_shape).copy()
    return g, np.ones(g.x_shape), j


def test_constant_field_is_stationary(g):
    # a constant is carried as the background, which the heat flow leaves fixed
    run = solve_taf(TafProblem(np.full(g.x_shape, 2.0), 1.0, 0.5, background=2.0), g)
    np.testing.assert_allclose(run.c, 2.0, atol=1e-12)
    assert np.all(run.grad == 0)


def test_no_consumption_is_heat_flow(g):
    c0 = gaussian_bump(g, 0.5, 0.8)
    j = np.ones((g.nt + 1,) + g.x_shape)
    a = solve_taf(TafProblem(c0, 1.0, 0.0, j), g)
    b = solve_taf(TafProblem(c0, 1.0, 0.0), g)
    np.testing.assert_allclose(a.c, b.c, atol=1e-14)
    np.testing.assert_allclose(a.c, a.heat, atol=1e-14)


def test_gaussian_heat_flow_exact():
    g = PhaseGrid(GridSpec(x_extent=4.0, nx=64, nv=4, t_final=0.5, nt=10), 1)
    c0 = np.exp(-g.x ** 2 / 0.5)
    run = solve_taf(TafProblem(c0, 1.0, 0.0), g)
    exact = np.exp(-g.x ** 2 / 2.5) * math.sqrt(0.5 / 2.5)
    assert np.max(np.abs(run.c[-1] - exact)) < 1e-3


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 32)])
def test_matches_finite_difference_heat(dim, n):
    g = PhaseGrid(GridSpec(x_extent=4.0, nx=n, nv=4, t_final=0.3, nt=30), dim)
    params = ModelParams(d=1.0, eta=0.5)
    c0 = gaussian_bump(g, 0.3, 0.8)
    j = np.broadcast_to(0.8 * gaussian_bump(g, -0.3, 0.6), (g.nt + 1,) + g.x_shape).copy()
    spectral = solve_taf(TafProblem(c0, params.d, params.eta, j), g)
    fd = fd_solve_heat(c0, j, params, g)
    err = np.max(np.abs(spectral.c - fd))
    assert err < 3 * (g.dx ** 2 + g.dt)


def test_negative_flux_rejected(g):
    with pytest.raises(ValueError):
        TafProblem(np.ones(g.x_shape), 1.0, 0.5, -np.ones((g.nt + 1,) + g.x_shape))


def test_unstable_sink_refused(g):
    j = np.full((g.nt + 1,) + g.x_shape, 1e3)
    with pytest.raises(SinkStabilityError):
        solve_taf(TafProblem(np.ones(g.x_shape), 1.0, 0.5, j), g)


def test_split_part_starts_at_zero(indicator_setup):
    g, c0, j = indicator_setup
    prob = TafProblem(c0, 1.0, 0.5, j, background=1.0)
    run = solve_taf(prob, g)
    assert np.all(run.split_part[0] == 0)
    assert split_bound_check(run, prob, g).passed
    assert max_principle_ok(run, c0)


def test_grad_bound_without_flux(g):
    params = ModelParams()
    c0 = gaussian_bump(g, 0.0, 0.7)
    run = solve_taf(TafProblem(c0, params.d, params.eta), g)
    v = grad_bound_check(run, params, c0, None, g)
    assert v.passed and np.all(v.lhs <= 1e-6 * params.d1 * np.abs(run.grad[0]).max())


def test_grad_bound_exponent_and_scaling(indicator_setup):
    g, c0, j = indicator_setup
    params = ModelParams(eta=0.5, d1=0.5)
    r1 = solve_taf(TafProblem(c0, params.d, params.eta, j, background=1.0), g)
    r2 = solve_taf(TafProblem(c0, params.d, params.eta, 2 * j, background=1.0), g)
    v1 = grad_bound_check(r1, params, c0, j, g, fit_window=(0.01, 0.1))
    v2 = grad_bound_check(r2, params, c0, 2 * j, g, fit_window=(0.01, 0.1))
    assert v1.passed and v2.passed
    assert 0.3 <= v1.exponent <= 0.7
    assert v2.fitted_coefficient / v1.fitted_coefficient == pytest.approx(2.0, rel=0.1)


def test_gradient_constant_needs_q_above_dimension():
    with pytest.raises(ValueError):
        gradient_decay_constant(1.0, 2, 2.0)
    assert gradient_decay_constant(1.0, 1, math.inf) > 0


def test_force_series_shape(g):
    run = solve_taf(TafProblem(gaussian_bump(g, 0.0, 1.0), 1.0, 0.0), g)
    F = force_series(run, ModelParams())
    assert F.shape == (g.nt + 1, 1) + g.x_shape


_G = PhaseGrid(GridSpec(x_extent=3.0, nx=48, nv=4, t_final=0.3, nt=15), 1)


@given(st.integers(0, 10_000))
def test_more_sink_means_less_taf(seed):
    rng = np.random.default_rng(seed)
    c0 = gaussian_bump(_G, rng.uniform(-1, 1), rng.uniform(0.4, 1.5), rng.uniform(0.2, 2.0))
    j1 = rng.uniform(0, 1.0, (_G.nt + 1,) + _G.x_shape)
    j2 = j1 + rng.uniform(0, 1.0, j1.shape)
    a = solve_taf(TafProblem(c0, 1.0, 0.5, j1), _G)
    b = solve_taf(TafProblem(c0, 1.0, 0.5, j2), _G)
    assert np.all(b.c <= a.c + 1e-12)
    assert max_principle_ok(a, c0) and max_principle_ok(b, c0)
