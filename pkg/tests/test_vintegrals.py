import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density
from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_phase_density, integrate_phase
from kinefp.vintegrals import (check_marginal_sup, check_moment_interp, decay_inequality_suite, flux_j,
                               marginal, marginal_sup_constant, moment, moment_report, radius_optimum,
                               sphere_area, vector_flux)

G1 = PhaseGrid(GridSpec(4.0, 6.0, 32, 64, 0.5, 10), 1)
G2 = PhaseGrid(GridSpec(3.0, 5.0, 12, 24, 0.5, 10), 2)
PARAMS = ModelParams()


def test_zero_density_reductions():
    z = np.zeros(G1.shape)
    assert not np.any(marginal(z, G1)) and not np.any(flux_j(z, PARAMS, G1))
    assert all(v.passed for v in decay_inequality_suite(z, 3.0, G1))


def test_separable_marginal():
    hx = np.exp(-G1.x ** 2)
    hv = np.exp(-G1.v ** 2 / 2) / math.sqrt(2 * math.pi)
    p = hx[:, None] * hv[None, :]
    np.testing.assert_allclose(marginal(p, G1), hx, rtol=1e-8)


@pytest.mark.parametrize("grid", [G1, G2])
def test_marginal_fubini(grid):
    p = random_density(np.random.default_rng(1), grid)
    assert np.sum(grid.weights_x * marginal(p, grid)) == pytest.approx(integrate_phase(p, grid), rel=1e-12)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


@given(st.floats(0.1, 10), st.floats(0.5, 4), st.floats(0.1, 10), st.floats(0.5, 4))
def test_radius_optimum_is_minimum(a, m, b, n):
    best = radius_optimum(a, m, b, n)
    R = np.geomspace(1e-3, 1e3, 4001)
    assert best <= np.min(a * R ** m + b * R ** (-n)) * (1 + 1e-9)
    assert best >= np.min(a * R ** m + b * R ** (-n)) * (1 - 1e-3)


def test_even_density_has_no_vector_flux():
    p = gaussian_phase_density(G1, 0.5, 0.0, 0.6, 0.8)
    assert np.max(np.abs(vector_flux(p, PARAMS, G1))) < 1e-14


def test_shifted_gaussian_vector_flux_raw():
    p = gaussian_phase_density(G2, 0.0, (0.7, -0.4), 0.6, 0.6)
    jv = vector_flux(p, PARAMS, G2, mode="raw")
    total = [np.sum(G2.weights_x * jv[i]) for i in range(2)]
    assert total[0] == pytest.approx(0.7, rel=1e-4)
    assert total[1] == pytest.approx(-0.4, rel=1e-4)


def test_gaussian_second_moment():
    p = gaussian_phase_density(G2, 0.0, 0.0, 0.6, 0.7, mass=2.0)
    assert moment(p, 2.0, G2) == pytest.approx(2 * 0.49 * 2.0, rel=1e-4)
    assert moment(p, 0.0, G2) == pytest.approx(integrate_phase(p, G2))
    with pytest.raises(ValueError):
        moment(p, -1.0, G2)


def test_compact_support_marginal_sup():
    p = np.where(G1.speed <= 1.5, 1.0, 0.0) * np.exp(-G1.x_coord(0) ** 2)
    v = check_marginal_sup(p, 3.0, G1)
    assert v.passed and v.constant == pytest.approx(marginal_sup_constant(1, 3.0))


@pytest.mark.parametrize("width", [0.5, 1.0, 2.0])
def test_gaussian_width_family_margins(width):
    p = gaussian_phase_density(G1, 0.0, 0.3, 0.7, width)
    verdicts = [v for v in decay_inequality_suite(p, 4.0, G1) if not v.skipped]
    assert len(verdicts) == 8
    assert all(v.margin > 0 for v in verdicts)


def test_out_of_range_orders_skipped():
    p = gaussian_phase_density(G1, 0.0, 0.0, 0.7, 0.7)
    v = check_moment_interp(p, 2.0, 3.0, G1)
    assert v.skipped and v.passed and "beta > ell" in v.reason
    names = {v.name for v in decay_inequality_suite(p, 1.5, G1) if v.skipped}
    assert names == {"speed_marginal_sup"}


def test_moment_report_nonnegative():
    r = moment_report(gaussian_phase_density(G1, 0.0, 0.0, 0.7, 0.7), 3.0, G1)
    assert min(r.m_beta, r.weighted_sup, r.marginal_sup, r.speed_marginal_sup) > 0


_seeds = st.integers(0, 100_000)


@given(_seeds, st.sampled_from([G1, G2]), st.sampled_from([3.0, 4.5]))
def test_decay_inequalities_hold(seed, grid, beta):
    p = random_density(np.random.default_rng(seed), grid)
    assert all(v.passed for v in decay_inequality_suite(p, beta, grid))


@given(_seeds, st.sampled_from([G1, G2]))
def test_cutoff_flux_below_raw(seed, grid):
    p = random_density(np.random.default_rng(seed), grid)
    cut, raw = flux_j(p, PARAMS, grid, "cutoff"), flux_j(p, PARAMS, grid, "raw")
    assert np.all(cut >= 0) and np.all(cut <= raw * (1 + 1e-14))


@given(_seeds, st.floats(0, 3))
def test_reductions_linear_and_monotone(seed, a):
    rng = np.random.default_rng(seed)
    p, q = random_density(rng, G1), random_density(rng, G1)
    np.testing.assert_allclose(marginal(p + a * q, G1), marginal(p, G1) + a * marginal(q, G1), atol=1e-13)
    assert np.all(flux_j(p + q, PARAMS, G1) >= flux_j(p, PARAMS, G1))
    assert moment(p + q, 3.0, G1) >= moment(p, 3.0, G1)
