import math

import numpy as np
import pytest

from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_bump, gaussian_phase_density, integrate_phase
from kinefp.kernels import PropagatorSpec
from kinefp.linfp import LinearProblem, propagate_free, solve_linear
from kinefp.oracle import (CFLError, _bump, _bump_d1, _bump_d2, cfl_limits, energy_check, fd_solve_fp,
                           fd_solve_heat, test_function_bank, weak_form_residual)

P = ModelParams()


@pytest.fixture(scope="module")
def g():
    return PhaseGrid(GridSpec(4.0, 4.0, 48, 48, 0.4, 24), 1)


@pytest.fixture(scope="module")
def p0(g):
    return gaussian_phase_density(g, 0.0, 0.0, 0.5, 0.5)


def test_free_flow_matches_propagator(g, p0):
    fd = fd_solve_fp(p0, None, None, None, P, g)
    ref = propagate_free(p0, g.spec.t_final, PropagatorSpec.from_params(P), g)
    est = g.dx ** 2 + g.dv ** 2 + g.dt
    assert np.sum(g.weights * np.abs(fd.p[-1] - ref)) <= 5 * est


def test_constant_potential_factor(g, p0):
    plain = fd_solve_fp(p0, None, None, None, P, g)
    damped = fd_solve_fp(p0, None, 0.7, None, P, g, dt=plain.dt)
    ref = math.exp(-0.7 * g.spec.t_final) * plain.p[-1]
    assert np.sum(g.weights * np.abs(damped.p[-1] - ref)) <= 2 * plain.dt * integrate_phase(p0, g)


def test_mass_does_not_grow_with_sink(g, p0):
    a = (0.3 + 0.2 * np.cos(g.x))[:, None]
    F = np.array([0.3 * np.sin(g.x)])
    run = fd_solve_fp(p0, F, a, None, P, g)
    mass = [integrate_phase(s, g) for s in run.p]
    assert np.all(np.diff(mass) <= 1e-10 * mass[0])
    assert run.p.min() >= -1e-10 * run.p.max()


def test_cfl_violation_names_binding_limit(g, p0):
    limits = cfl_limits(P, g, 0.0)
    binding = min(limits, key=limits.get)
    with pytest.raises(CFLError, match=binding):
        fd_solve_fp(p0, None, None, None, P, g, dt=2 * limits[binding])


def test_three_dimensions_refused():
    g3 = PhaseGrid(GridSpec(2.0, 2.0, 4, 4, 0.1, 1), 3)
    with pytest.raises(ValueError):
        fd_solve_fp(np.zeros(g3.shape), None, None, None, P, g3)


def test_heat_constant_is_stationary(g):
    out = fd_solve_heat(np.full(g.x_shape, 1.5), None, P, g)
    np.testing.assert_allclose(out, 1.5, atol=1e-13)


def test_heat_sink_decreases(g):
    j = np.broadcast_to(np.where(np.abs(g.x) < 1, 1.0, 0.0), (g.nt + 1,) + g.x_shape)
    out = fd_solve_heat(np.full(g.x_shape, 1.5), j, P, g)
    assert np.all(np.diff(out, axis=0) <= 1e-14)
    assert np.all(np.diff(out, axis=0)[:, np.abs(g.x) < 0.5] < 0)


def test_heat_cfl_refused(g):
    with pytest.raises(CFLError):
        fd_solve_heat(np.ones(g.x_shape), None, P, g, dt=g.dx ** 2)


def test_energy_of_zero_run(g):
    run = fd_solve_fp(np.zeros(g.shape), None, None, None, P, g, record_energy=True)
    rep = energy_check(run, P, g)
    assert rep.residual_rate == 0 and not np.any(rep.residual_steps)


def test_energy_needs_recording(g, p0):
    with pytest.raises(ValueError):
        energy_check(fd_solve_fp(p0, None, None, None, P, g), P, g)


def _energy_rate(nt):
    params = ModelParams(k=0.5, sigma=0.5)
    grid = PhaseGrid(GridSpec(x_extent=6.0, v_extent=6.0, nt=nt), 1)
    p0 = gaussian_phase_density(grid, 0.0, 0.0, 1.0, 1.0)
    run = fd_solve_fp(p0, None, None, None, params, grid, dt=grid.dt, record_energy=True)
    return run, energy_check(run, params, grid)


def test_energy_identity_free_field():
    run, rep = _energy_rate(60)
    assert rep.residual_rate <= 3 * run.dt * rep.initial_energy
    assert rep.l2_bound_ok and rep.h1_bound_ok


def test_energy_residual_first_order():
    (_, a), (_, b) = _energy_rate(60), _energy_rate(120)
    assert 0.8 <= math.log2(a.residual_rate / b.residual_rate) <= 1.2


def test_energy_with_all_terms():
    params = ModelParams(k=0.5, sigma=0.5)
    grid = PhaseGrid(GridSpec(x_extent=6.0, v_extent=6.0, nt=60), 1)
    p0 = gaussian_phase_density(grid, 0.0, 0.0, 1.0, 1.0)
    F = np.array([0.3 * np.sin(grid.x)])
    a = (0.2 * np.cos(grid.x) - 0.1)[:, None]
    f = 0.1 * gaussian_phase_density(grid, 1.0, 0.0, 0.5, 0.5)
    run = fd_solve_fp(p0, F, a, f, params, grid, dt=grid.dt, record_energy=True)
    rep = energy_check(run, params, grid)
    assert rep.residual_rate <= 3 * run.dt * rep.initial_energy
    assert rep.beta == pytest.approx(2 * 0.5 + 2 * max(0.0, -a.min()) + 1)
    assert rep.l2_bound_ok and rep.h1_bound_ok


def test_bank_is_compactly_supported_and_smooth(g):
    bank = test_function_bank(g)
    assert len(bank) == 5
    for tf in bank:
        assert all(abs(c) + r < g.spec.x_extent for c, r in zip(tf.x_center, [tf.x_radius]))
        assert all(abs(c) + r < g.spec.v_extent for c, r in zip(tf.v_center, [tf.v_radius]))
    s = np.array([1.0, -1.0])
    assert np.all(_bump(s) == 0) and np.all(_bump_d1(s) == 0) and np.all(_bump_d2(s) == 0)
    assert test_function_bank(g, seed=7)[2] == bank[2]


def test_bump_derivatives_match_differences():
    s = np.linspace(-0.9, 0.9, 19)
    h = 1e-6
    np.testing.assert_allclose(_bump_d1(s), (_bump(s + h) - _bump(s - h)) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(_bump_d2(s), (_bump_d1(s + h) - _bump_d1(s - h)) / (2 * h), atol=1e-6)


def test_weak_residual_of_zero_run(g):
    z = np.zeros((g.nt + 1,) + g.shape)
    F = np.zeros((g.nt + 1, 1) + g.x_shape)
    res = weak_form_residual(z, F, None, P, g, test_function_bank(g))
    assert np.all(res == 0)


def test_weak_residual_decoupled_linear_run(g, p0):
    spec = PropagatorSpec.from_params(P)
    F = np.array([0.3 * np.sin(g.x)])
    series = solve_linear(LinearProblem(p0, F, 0.4), spec, g)
    Fs = np.broadcast_to(F, (g.nt + 1,) + F.shape)
    pot = np.full(g.nt + 1, 0.4)
    res = weak_form_residual(series, Fs, pot, P, g, test_function_bank(g))
    assert res.max() <= 2 * (g.dx ** 2 + g.dv ** 2 + g.dt)
