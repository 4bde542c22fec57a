import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from metastable_csma import exact_oracle as X
from metastable_csma import rates as R
from metastable_csma.rates import RateSchedule
from metastable_csma.simulator import (
    ConfigurationError, HittingSample, colored_poisson_trial, estimate_survival, regeneration_log,
    replicate_seed, simulate_coupled, simulate_hitting, simulate_many, summarize_trials,
)
from metastable_csma.topology import FeasibilityError, enumerate_configs, make_complete_bipartite, make_even_torus

from conftest import frozen

K11 = make_complete_bipartite(1, 1)
K22 = make_complete_bipartite(2, 2)
T22 = make_even_torus(2, 2)


def within(x, target, se, k=3.0):
    return abs(x - target) <= k * se


def test_replicate_seed_stable():
    assert replicate_seed(7, 3) == replicate_seed(7, 3)
    assert replicate_seed(7, 3) != replicate_seed(7, 4)
    assert 0 <= replicate_seed(123, 0) < 2 ** 63


def test_start_equals_target():
    h = simulate_hitting(K22, frozen(3, 5), K22.v_mask, K22.v_mask, 1, 10.0)
    assert h.t_v == 0.0 and h.n_events == 0 and not h.timeout


def test_bad_inputs():
    with pytest.raises(FeasibilityError):
        simulate_hitting(K22, frozen(3, 5), 0b0101, K22.v_mask, 1, 10.0)
    with pytest.raises(ValueError):
        simulate_hitting(K22, frozen(3, 5), K22.u_mask, K22.v_mask, 1, 0.0)
    with pytest.raises(ValueError):
        simulate_hitting(K22, frozen(3, 5), 0, K22.v_mask, 1, 10.0, regen_log=True)
    with pytest.raises(ValueError):
        simulate_many(K22, frozen(3, 5), K22.u_mask, K22.v_mask, 1, 0, 10.0)


def test_determinism():
    s = RateSchedule(lam=8.0)
    a = simulate_hitting(K22, s, K22.u_mask, K22.v_mask, 99, 1e4, regen_log=True)
    b = simulate_hitting(K22, s, K22.u_mask, K22.v_mask, 99, 1e4, regen_log=True)
    assert a.t_v == b.t_v and a.n_events == b.n_events
    assert np.array_equal(a.regen_log.start, b.regen_log.start)
    c = simulate_hitting(K22, s, K22.u_mask, K22.v_mask, 100, 1e4)
    assert c.t_v != a.t_v


def test_parallel_matches_serial():
    s = RateSchedule(lam=6.0)
    one = simulate_many(K22, s, K22.u_mask, K22.v_mask, 5, 12, 1e4, jobs=1)
    two = simulate_many(K22, s, K22.u_mask, K22.v_mask, 5, 12, 1e4, jobs=2)
    assert [(h.replicate, h.t_v, h.n_events) for h in one] == [(h.replicate, h.t_v, h.n_events) for h in two]


def test_timeout_is_data():
    h = simulate_hitting(make_complete_bipartite(3, 3), frozen(50, 50 ** 1.5), 0b000111, 0b111000, 3, 0.5)
    assert h.timeout and h.t_v == math.inf and h.t_max == 0.5


def test_k11_trial_success_rate():
    samples = simulate_many(K11, frozen(2, 4), K11.u_mask, K11.v_mask, 11, 8500, 1e6, regen_log=True)
    summ = summarize_trials(samples)
    assert summ.n_trials >= 100_000
    assert within(summ.success_rate, 1 / 12, math.sqrt((1 / 12) * (11 / 12) / summ.n_trials))


def test_k22_mean_matches_oracle():
    sp = enumerate_configs(K22)
    lu, lv = 3.0, 7.0
    want = X.expected_hitting_time(sp, lu, lv, sp.u_index, sp.v_index)
    tv = np.array([h.t_v for h in simulate_many(K22, frozen(lu, lv), K22.u_mask, K22.v_mask, 4, 4000, 1e6)])
    assert within(tv.mean(), want, tv.std(ddof=1) / math.sqrt(tv.size))


def test_depleted_u_mean_is_harmonic():
    # c_u lambda tiny: U never re-activates; T_v is the max of two unit exponentials
    s = RateSchedule(lam=1000.0, c_u=1e-9, mu_u=1.0, beta_u=Fraction(1, 2), beta_v=1, freeze_time=0.0)
    tv = np.array([h.t_v for h in simulate_many(K22, s, K22.u_mask, K22.v_mask, 2, 10_000, 1e6)])
    assert abs(tv.mean() / 1.5 - 1) < 0.05


def _kolmogorov_survival(g, s, times):
    sp = enumerate_configs(g)
    v = sp.v_index

    def rhs(t, p):
        q = X.rate_matrix(sp, R.lambda_u_at(s, t), R.lambda_v_at(s, t))
        q[v] = 0.0  # absorbing
        return p @ q

    p0 = np.zeros(sp.size)
    p0[sp.u_index] = 1.0
    sol = solve_ivp(rhs, (0.0, times[-1]), p0, t_eval=times, rtol=1e-9, atol=1e-12, method="LSODA")
    return 1.0 - sol.y[v]


def test_time_varying_survival_matches_forward_equation():
    # lambda_U falls and lambda_V rises over the horizon; thinning must track both
    s = RateSchedule(lam=6.0, beta_u=1, beta_v=Fraction(3, 2))
    times = np.array([1.0, 2.0, 3.0, 4.5])
    want = _kolmogorov_survival(K22, s, times)
    samples = simulate_many(K22, s, K22.u_mask, K22.v_mask, 21, 4000, 50.0)
    curve = estimate_survival(samples, 1.0, times)
    for p_hat, se, w in zip(curve.survival, curve.se, want):
        assert within(p_hat, w, max(se, 1e-3))


def test_regeneration_identity_and_first_trial():
    s = frozen(4, 9)
    for seed in range(40):
        h = regeneration_log(K22, s, seed, 1e5)
        lg = h.regen_log
        k = int(np.flatnonzero(lg.success)[0])
        assert not lg.success[:k].any()
        assert lg.first_success == lg.start[k]
        assert lg.start[k] + lg.duration[k] == h.t_v
        assert lg.start[0] == 0.0
        assert (lg.length >= 1).all()


def test_direct_hit_gives_single_trial():
    s = frozen(0.05, 400.0)
    for seed in range(200):
        h = regeneration_log(K11, s, seed, 1e5)
        if h.regen_log.n_trials == 1:
            lg = h.regen_log
            assert lg.first_success == 0.0 and lg.success[0]
            assert lg.duration[0] == h.t_v
            return
    pytest.fail("no direct crossing among 200 seeds")


def test_failed_trial_length_shrinks():
    means = []
    for lam in (5.0, 20.0, 50.0):
        samples = simulate_many(K22, frozen(lam, lam ** 1.5), K22.u_mask, K22.v_mask, 8, 40, 1e7, regen_log=True)
        means.append(summarize_trials(samples).mean_failed_length)
    assert means[0] > means[1] > means[2]
    assert means[-1] < 1.2


def test_regen_timeout_partial_log():
    h = regeneration_log(make_complete_bipartite(3, 3), frozen(40, 40 ** 1.5), 1, 2.0)
    assert h.timeout and h.regen_log.first_success is None and h.regen_log.n_trials >= 1


# coupling

def test_coupling_identical_copies():
    s = RateSchedule(lam=10.0)
    c = simulate_coupled(K22, s, s, K22.u_mask, K22.u_mask, 3, 200.0)
    assert np.array_equal(c.states, c.states_prime) and c.order_violations == 0
    assert c.t_v == c.t_v_prime


def test_coupling_preconditions():
    s = RateSchedule(lam=10.0)
    hi_u = RateSchedule(lam=10.0, c_u=2.0)
    with pytest.raises(ConfigurationError):
        simulate_coupled(K22, s, hi_u, K22.u_mask, K22.v_mask, 1, 10.0)
    with pytest.raises(ConfigurationError):
        simulate_coupled(K22, s, s, K22.v_mask, K22.u_mask, 1, 10.0)
    with pytest.raises(ValueError):
        simulate_coupled(K22, s, s, K22.u_mask, K22.v_mask, 1, math.inf)


@pytest.mark.parametrize("g", [K22, T22], ids=["K22", "T22"])
def test_coupling_order_and_dominance(g):
    s = RateSchedule(lam=6.0, c_u=1.5, c_v=1.0)
    sp = RateSchedule(lam=6.0, c_u=1.0, c_v=1.4)
    grid = np.linspace(0.0, 30.0, 61)
    for seed in range(300):
        c = simulate_coupled(g, s, sp, g.u_mask, g.u_mask, seed, 30.0)
        assert c.order_violations == 0
        assert c.t_v_prime <= c.t_v
        hit = grid >= c.t_v
        hit_p = grid >= c.t_v_prime
        assert (hit_p >= hit).all()
        c = simulate_coupled(g, s, sp, g.u_mask, g.v_mask, seed, 10.0, stop_at_target=False)
        assert c.order_violations == 0


# coloured Poisson trials

def test_colored_poisson_constant():
    rng = np.random.default_rng(5)
    n = 20_000
    s = np.array([colored_poisson_trial(2.0, lambda t: 0.5, rng, 50.0) for _ in range(n)])
    p = 0.5 * math.exp(-1.0)
    assert within((s > 1).mean(), p, math.sqrt(p * (1 - p) / n))
    assert colored_poisson_trial(2.0, lambda t: 1.0, 1, 10.0) == 0.0
    assert (s == 0).mean() == pytest.approx(0.5, abs=0.02)


def test_colored_poisson_time_varying_rate():
    rng = np.random.default_rng(6)
    n = 20_000
    s = np.array([colored_poisson_trial(lambda t: 1.0 + t, lambda t: 0.3, rng, 20.0, gamma_bound=21.0)
                  for _ in range(n)])
    p = 0.7 * math.exp(-0.3 * 1.5)
    assert within((s > 1).mean(), p, math.sqrt(p * (1 - p) / n))
    with pytest.raises(ValueError):
        colored_poisson_trial(lambda t: 1.0, lambda t: 0.0, 1, 1.0)
    with pytest.raises(ValueError):
        colored_poisson_trial(lambda t: 5.0, lambda t: 0.0, 1, 1.0, gamma_bound=1.0)


def test_colored_poisson_timeout():
    assert colored_poisson_trial(1.0, lambda t: 0.0, 2, 3.0) == math.inf


# survival estimation

def _h(t, timeout=False, t_max=math.inf):
    return HittingSample(math.inf if timeout else t, 0, 0, 0, timeout, t_max)


def test_estimate_survival_examples():
    c = estimate_survival([_h(0.5), _h(1.5), _h(2.5)], 1.0, [1.0])
    assert c.survival[0] == pytest.approx(2 / 3)
    assert c.se[0] == pytest.approx(math.sqrt((2 / 3) * (1 / 3) / 3))
    c = estimate_survival([_h(0, True, 10.0)] * 4, 2.0, [0.5, 1.0, 6.0])
    assert list(c.survival[:2]) == [1.0, 1.0] and math.isnan(c.survival[2])
    assert c.censored_fraction == 1.0
    with pytest.raises(ValueError):
        estimate_survival([], 1.0, [1.0])
    with pytest.raises(ValueError):
        estimate_survival([_h(1.0)], 0.0, [1.0])


def test_estimate_survival_censoring_mixed():
    samples = [_h(1.0), _h(3.0), _h(0, True, 5.0), _h(0, True, 2.0)]
    c = estimate_survival(samples, 1.0, [0.5, 2.5, 4.0])
    assert c.survival[0] == 1.0
    assert c.n[1] == 3 and c.survival[1] == pytest.approx(2 / 3)
    assert c.survival[2] == pytest.approx(1 / 3)
