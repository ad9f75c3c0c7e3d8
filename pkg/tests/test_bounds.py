import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinefp.bounds import (BoundLedger, MomentData, apriori_suite, flux_gradient_constant,
                           horizon_monotonicity, moment_envelope_ledger, moment_horizon,
                           uniqueness_constants, weighted_sup_gronwall)
from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_bump, gaussian_phase_density
from kinefp.kernels import RhoSpec
from kinefp.picard import run_scheme, run_scheme_raw_flux


@pytest.fixture(scope="module")
def sg():
    return PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.3, 20), 1)


@pytest.fixture(scope="module")
def sdata(sg):
    return gaussian_phase_density(sg, -1.0, 0.5, 0.5, 0.5), gaussian_bump(sg, 1.5, 1.0, 1.0)


DATA = MomentData(moment0=0.6, p_l1=1.2, p_sup=2.0, grad_c0_lr=0.4, c0_sup=1.0, rho_sup=1.0, T=0.5)


def test_ledger_margin_and_slack():
    assert BoundLedger("x", 1.0, 2.0).passed
    assert BoundLedger("x", 2.04, 2.0).passed
    led = BoundLedger("x", 2.04, 2.0, rel_slack=0.0)
    assert not led.passed and led.margin == pytest.approx(-0.04)
    assert set(led.to_dict()) >= {"name", "lhs", "rhs", "margin", "passed", "inputs", "tags"}


def test_zero_run_ledgers_pass(sg, sdata):
    P = ModelParams()
    res = run_scheme(P, sg, np.zeros(sg.shape), sdata[1])
    rho = RhoSpec.default(P).sup
    rows = apriori_suite(res.state, P, sg, rho)
    rows.append(weighted_sup_gronwall(res.state, P, sg, 3.0, rho, sdata[1]))
    assert all(r.passed and r.lhs == 0 for r in rows)


def test_baseline_ledgers(baseline, params, grid1, data1):
    rho = RhoSpec.default(params).sup
    rows = apriori_suite(baseline.state, params, grid1, rho)
    assert [r.name for r in rows] == ["l1_growth", "sup_growth", "l2_growth", "grad_v_energy"]
    assert all(r.passed for r in rows)
    assert weighted_sup_gronwall(baseline.state, params, grid1, 3.0, rho, data1[1]).passed


def test_envelope_starts_at_a():
    hz = moment_horizon(ModelParams(), DATA, 4.0)
    assert hz.envelope(0.0) == pytest.approx(hz.A, rel=1e-12)
    assert hz.envelope(0.5 * hz.tau) > hz.A
    assert hz.envelope(hz.tau * 1.0001) == math.inf
    assert hz.A == pytest.approx(sum(hz.terms[k] for k in ("moment0", "diffusion", "force", "branching")))
    assert hz.delta == pytest.approx(1 / 5)
    assert hz.tau == pytest.approx((1 + 4) / (hz.A ** hz.delta * hz.B))


def test_horizon_rejections():
    with pytest.raises(ValueError):
        moment_horizon(ModelParams(), DATA, 3.0)
    with pytest.raises(ValueError, match="p_sup"):
        moment_horizon(ModelParams(), MomentData(**{**DATA.__dict__, "p_sup": 0.0}), 4.0)
    with pytest.raises(ValueError):
        flux_gradient_constant(1.0, 3, 5.0)


@given(beta=st.floats(3.5, 8.0), factor=st.floats(1.05, 4.0),
       scale=st.floats(0.2, 5.0), T=st.floats(0.05, 2.0))
def test_horizon_shrinks_when_inputs_grow(beta, factor, scale, T):
    data = MomentData(**{**DATA.__dict__, "p_sup": DATA.p_sup * scale, "T": T})
    assert all(horizon_monotonicity(ModelParams(), data, beta, factor).values())


@given(d1=st.floats(0.0, 2.0), alpha1=st.floats(0.0, 3.0))
def test_horizon_monotone_in_coefficients(d1, alpha1):
    P = ModelParams(d1=d1, alpha1=alpha1)
    assert all(horizon_monotonicity(P, DATA, 4.0).values())


def test_free_field_weighted_sup_constant(sg, sdata):
    P = ModelParams(d1=0.0, alpha1=0.0, gamma=0.0)
    res = run_scheme(P, sg, *sdata)
    beta = 3.0
    led = weighted_sup_gronwall(res.state, P, sg, beta, 0.0, sdata[1])
    assert led.inputs["B_prime"] == pytest.approx(P.sigma * beta * (beta + 3) + (1 + beta) * P.k)
    assert led.inputs["C_prime"] == 0.0
    assert led.passed


def test_weighted_sup_order_checks(baseline, params, grid1, data1):
    with pytest.raises(ValueError):
        weighted_sup_gronwall(baseline.state, params, grid1, 1.0, 1.0, data1[1])
    with pytest.raises(ValueError):
        weighted_sup_gronwall(baseline.state, params.replace(flux_mode="raw"), grid1, 1.5, 1.0, data1[1])


def test_uniqueness_needs_gradients(sg, sdata):
    P = ModelParams()
    run = run_scheme(P, sg, *sdata, store_gradients=False)
    with pytest.raises(ValueError, match="store_gradients"):
        uniqueness_constants(run, run, P, sg)


def test_uniqueness_constant_grows_with_horizon(sdata):
    P = ModelParams()
    G = []
    for nt in (10, 20):
        g = PhaseGrid(GridSpec(4.0, 4.0, 32, 32, 0.015 * nt, nt), 1)
        p0 = gaussian_phase_density(g, -1.0, 0.5, 0.5, 0.5)
        run = run_scheme(P, g, p0, gaussian_bump(g, 1.5, 1.0, 1.0))
        led = uniqueness_constants(run, run, P, g)
        assert led.inputs["M"] > 0 and led.tags["M"] == "empirical"
        G.append(led.inputs["G"])
    assert G[1] > G[0]


def test_envelope_ledger_on_raw_run(sg, sdata):
    res, hz = run_scheme_raw_flux(ModelParams(), sg, *sdata)
    led = moment_envelope_ledger(res, hz, sg, 4.0)
    assert led.passed and led.rel_slack == 0.0
