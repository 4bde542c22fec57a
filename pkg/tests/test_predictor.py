import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from metastable_csma.exact_oracle import nu_check
from metastable_csma.predictor import (
    cbg_calibrated_survival, cbg_closed_form_survival, cbg_mean_crossover, critical_timescale,
    depletion_horizon, predicted_survival, regime_classify, torus_mean_crossover,
)
from metastable_csma.rates import RateSchedule
from metastable_csma.topology import enumerate_configs, make_complete_bipartite

from conftest import frozen

K11 = make_complete_bipartite(1, 1)
K22 = make_complete_bipartite(2, 2)


def test_regimes():
    assert regime_classify(1.0, 1.0) == ("critical", 1.0)
    assert regime_classify(100.0, 1.0)[0] == "supercritical"
    assert regime_classify(1e-3, 1.0)[0] == "subcritical"
    assert regime_classify(5.0, 1.0, 0.5, 4.0)[0] == "supercritical"
    with pytest.raises(ValueError):
        regime_classify(1.0, 1.0, 2.0, 1.0)


def test_critical_timescale_k11():
    assert critical_timescale(K11, frozen(2, 4)) == pytest.approx(1.5, rel=1e-14)


def test_frozen_prediction_is_exponential():
    p = predicted_survival(K11, frozen(2, 4), 3.0, [0.0, 0.5, 1.0, 2.0])
    assert p.survival[0] == 1.0
    assert p.survival[2] == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert np.allclose(p.survival, np.exp(-2.0 * p.tau), rtol=1e-12)
    assert p.regime == "critical" and p.product == pytest.approx(2.0)
    assert p.tau_star == math.inf


def test_frozen_matches_critical_timescale():
    s = RateSchedule(lam=30.0, freeze_time=0.0)
    M = 2.5 * critical_timescale(K22, s)
    tau = np.linspace(0, 2, 9)
    p = predicted_survival(K22, s, M, tau)
    assert np.allclose(p.survival, np.exp(-2.5 * tau), rtol=1e-6)


def test_freeze_inside_horizon():
    # past the freeze time the integrand is constant
    s = RateSchedule(lam=20.0, freeze_time=8.0)
    sp = enumerate_configs(K22)
    M = 10.0
    p = predicted_survival(K22, s, M, [0.8, 1.5])
    head, _ = integrate.quad(lambda t: nu_check(sp, s, K22, t), 0.0, 8.0, epsrel=1e-10)
    tail = nu_check(sp, s, K22, 8.0) * 7.0
    assert p.survival[1] == pytest.approx(math.exp(-head - tail), rel=1e-6)
    assert p.survival[0] == pytest.approx(math.exp(-head), rel=1e-6)


def test_time_varying_matches_trapezoid():
    s = RateSchedule(lam=40.0)
    sp = enumerate_configs(K22)
    M = 40.0
    tau = [0.25, 0.5, 0.75]
    p = predicted_survival(K22, s, M, tau)
    for x, val in zip(tau, p.survival):
        ts = np.linspace(0, M * x, 4001)
        f = np.array([nu_check(sp, s, K22, t) for t in ts])
        want = math.exp(-integrate.trapezoid(f, ts))
        assert val == pytest.approx(want, rel=1e-5)


def test_clamp_beyond_depletion():
    s = RateSchedule(lam=50.0)
    p = predicted_survival(K22, s, 50.0, [0.5, 0.99, 1.0, 1.2])
    assert p.tau_star == pytest.approx(1.0)
    assert p.survival[2] == 0 and p.survival[3] == 0 and p.survival[1] > 0
    p = predicted_survival(K22, s, 50.0, [1.0, 1.25], slack=10.0)
    assert p.survival[0] > 0 and p.survival[1] == 0
    assert depletion_horizon(RateSchedule(lam=50.0, freeze_time=10.0)) == math.inf


def test_prediction_rejects_bad_input():
    with pytest.raises(ValueError):
        predicted_survival(K22, RateSchedule(lam=10.0), 0.0, [1.0])
    with pytest.raises(ValueError):
        predicted_survival(K22, RateSchedule(lam=10.0), 1.0, [1.0, 0.5])


@settings(max_examples=20, deadline=None)
@given(st.floats(5.0, 60.0), st.floats(0.2, 3.0), st.floats(1.05, 3.0))
def test_monotone_in_tau_and_M(lam, m_scale, factor):
    s = RateSchedule(lam=lam)
    tau = np.linspace(0, 1.2, 13)
    a = predicted_survival(K22, s, m_scale * lam, tau).survival
    b = predicted_survival(K22, s, factor * m_scale * lam, tau).survival
    assert (np.diff(a) <= 1e-15).all()
    assert (b <= a + 1e-12).all()
    assert a[0] == 1.0


def test_quadrature_convergence():
    s = RateSchedule(lam=60.0)
    tau = np.linspace(0.1, 0.95, 8)
    a = predicted_survival(K22, s, 60.0, tau, rtol=1e-6).survival
    b = predicted_survival(K22, s, 60.0, tau, rtol=5e-7).survival
    assert np.abs(a - b).max() < 1e-6


def test_cbg_closed_form_examples():
    lam = 100.0
    for x in (0.0, 0.1, 0.5, 0.9, 0.99):
        assert cbg_closed_form_survival(2, 1, 1.0, 1.0, lam, lam, x) == pytest.approx(1 - x, abs=1e-14)
    assert cbg_closed_form_survival(2, 1, 1.0, 1.0, lam, lam, 1.0) == 0.0
    assert cbg_closed_form_survival(3, 1, 2.0, 0.5, lam, lam, 5.0) == 0.0
    assert cbg_closed_form_survival(3, "1/2", 1.0, 1.0, lam, lam, 0.0) == 1.0
    with pytest.raises(ValueError):
        cbg_closed_form_survival(1, 1, 1.0, 1.0, lam, lam, 0.5)


@pytest.mark.parametrize("m,beta_u,mu", [(3, 1, 1.0), (2, "3/2", 0.7), (4, "1/2", 2.0), (2, 1, 0.5)])
def test_cbg_closed_form_matches_quadrature(m, beta_u, mu):
    from fractions import Fraction
    lam, c, M = 80.0, 1.3, 60.0
    p = (m - 1) * float(Fraction(str(beta_u)))
    for x in (0.2, 0.8, 1.5):
        if M * x * mu >= c * lam:
            continue
        val, _ = integrate.quad(lambda sg: M * (c * lam - mu * M * sg) ** (-p), 0, x, epsrel=1e-12)
        assert cbg_closed_form_survival(m, beta_u, c, mu, lam, M, x) == pytest.approx(math.exp(-val), rel=1e-9)


@pytest.mark.parametrize("m,lam", [(2, 200.0), (2, 400.0), (3, 200.0), (3, 400.0), (4, 200.0)])
def test_calibrated_closed_form_tracks_prediction(m, lam):
    g = make_complete_bipartite(m, m)
    s = RateSchedule(lam=lam)
    tau = np.linspace(0.0, 0.95, 20)
    p = predicted_survival(g, s, lam, tau).survival
    c = cbg_calibrated_survival(g, s, lam, tau)
    assert np.abs(p - c).max() <= 0.02


def test_mean_crossover_formulas():
    assert cbg_mean_crossover(3, 50.0) == pytest.approx(2500 / 3)
    assert cbg_mean_crossover(2, 10.0) == 5.0
    with pytest.raises(ValueError):
        cbg_mean_crossover(1, 10.0)
    want = 1e7 / (4 * 16 * 2 * 10 ** 3.2)
    assert torus_mean_crossover(4, 4, 10.0, 10 ** 1.6, 0.6) == pytest.approx(want, rel=1e-12)
    # alpha = 1/2 gives a critical droplet of size 2
    assert torus_mean_crossover(4, 4, 10.0, 10 ** 1.5, 0.5) == pytest.approx(
        10.0 ** 7 / (4 * 16 * 2 * 10 ** 3.0), rel=1e-12)
    with pytest.raises(ValueError):
        torus_mean_crossover(4, 4, 10.0, 10.0, 1.2)
    with pytest.raises(ValueError):
        torus_mean_crossover(3, 4, 10.0, 10.0, 0.5)
