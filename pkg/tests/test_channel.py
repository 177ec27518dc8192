import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from cransched.channel import (_e1_scaled_numpy, _sinr_rates_loops, _sinr_rates_numpy,
                               compatibility_matrix, e1_scaled_array, expected_rate_from_snr,
                               expected_sinr_gate, expected_snr_rate, expected_snr_rates,
                               exp_integral_e1, exp_integral_e1_scaled, gate_matrix,
                               instantaneous_rate, pairwise_constraint_ok, realized_rates,
                               sample_fading)
from cransched.errors import ContractError
from cransched.geometry import SystemParams, build_topology
from cransched.scheduler import Schedule

EULER = 0.5772156649015329


def e1_series(x, terms=60):
    return -EULER - math.log(x) + sum((-1) ** (k + 1) * x ** k / (k * math.factorial(k))
                                      for k in range(1, terms))


def e1_quad(x):
    val, _ = integrate.quad(lambda t: math.exp(-t) / t, x, np.inf, epsabs=0, epsrel=1e-13,
                            limit=200)
    return val


# -- E1 -------------------------------------------------------------------------

def test_e1_at_one_matches_quadrature():
    assert exp_integral_e1(1.0) == pytest.approx(e1_quad(1.0), rel=1e-10)
    assert exp_integral_e1(1.0) == pytest.approx(0.21938393439552, rel=1e-12)


def test_e1_small_argument_matches_series():
    assert exp_integral_e1(0.05) == pytest.approx(e1_series(0.05), rel=1e-12)
    assert exp_integral_e1(0.05) == pytest.approx(2.4679, abs=5e-5)


@pytest.mark.parametrize("x", np.geomspace(1e-8, 650, 60))
def test_e1_relative_accuracy(x):
    assert exp_integral_e1(x) == pytest.approx(special.exp1(x), rel=1e-10)


@pytest.mark.parametrize("x", [1e-6, 0.3, 1.0, 2.5, 10.0, 100.0, 1e3, 1e5, 1e8])
def test_scaled_e1_against_scipy(x):
    want = special.exp1(x) * math.exp(x) if x < 700 else None
    got = exp_integral_e1_scaled(x)
    if want is not None:
        assert got == pytest.approx(want, rel=1e-10)
    # asymptotic series e^x E1(x) ~ (1 - 1/x + 2/x^2 - 6/x^3 + 24/x^4) / x
    if x >= 100:
        series = 1 - 1 / x + 2 / x ** 2 - 6 / x ** 3 + 24 / x ** 4
        assert got == pytest.approx(series / x, rel=5e-8)


def test_scaled_e1_product_tends_to_one():
    assert 1e3 * exp_integral_e1_scaled(1e3) == pytest.approx(0.999, abs=2e-3)
    assert math.isfinite(exp_integral_e1_scaled(1e300))


@pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
def test_e1_domain(x):
    with pytest.raises(ValueError):
        exp_integral_e1(x)
    with pytest.raises(ValueError):
        exp_integral_e1_scaled(x)


def test_vectorised_scaled_e1_paths_agree():
    x = np.geomspace(1e-9, 1e6, 500).reshape(20, 25)
    want = np.array([exp_integral_e1_scaled(v) for v in x.ravel()]).reshape(x.shape)
    np.testing.assert_allclose(e1_scaled_array(x), want, rtol=1e-13)
    np.testing.assert_allclose(_e1_scaled_numpy(x), want, rtol=1e-13)


# -- gate and ergodic rate --------------------------------------------------------

def mc_gate(a, n, rng):
    # noise 1, interferer mean received power 1/a
    z = rng.exponential(1.0 / a, n)
    v = 1.0 / (1.0 + z)
    return v.mean(), v.std(ddof=1) / math.sqrt(n)


def mc_rate(c, n, rng):
    v = np.log2(1.0 + c * rng.exponential(1.0, n))
    return v.mean(), v.std(ddof=1) / math.sqrt(n)


def test_gate_fixture_value():
    p = SystemParams()
    assert expected_sinr_gate(20.0, 1 / 16, p) == pytest.approx(0.552996, abs=2e-6)
    mean, se = mc_gate(0.8, 10 ** 6, np.random.default_rng(1))
    assert abs(0.8 * exp_integral_e1_scaled(0.8) - mean) < 3 * se


def test_rate_fixture_value():
    assert expected_rate_from_snr(20.0) == pytest.approx(3.74, abs=5e-3)
    assert expected_rate_from_snr(20.0) == pytest.approx(3.7429718, abs=1e-6)
    mean, se = mc_rate(20.0, 10 ** 6, np.random.default_rng(2))
    assert abs(expected_rate_from_snr(20.0) - mean) < 3 * se


def test_gate_limits():
    p = SystemParams()
    assert expected_sinr_gate(1e-9, 1e-9, p) == pytest.approx(1.0, rel=1e-10)
    tiny = expected_sinr_gate(1e6, 1.0, p)  # a = 1e-6
    assert 0 < tiny < 2e-5
    mean, se = mc_gate(1e-6, 10 ** 5, np.random.default_rng(4))
    assert abs(tiny - mean) < 3 * se + 1e-12


@pytest.mark.parametrize("a", [0.1, 1.0, 10.0, 1e3])
def test_gate_strictly_below_one(a):
    g = a * exp_integral_e1_scaled(a)
    assert 0 < g < 1


def test_gate_domain():
    p = SystemParams()
    with pytest.raises(ValueError):
        expected_sinr_gate(0.0, 1.0, p)
    with pytest.raises(ValueError):
        expected_sinr_gate(1.0, -1.0, p)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(1e-6, 1e4), f=st.floats(1.001, 10))
def test_gate_increasing_in_a(a, f):
    assert a * exp_integral_e1_scaled(a) < (a * f) * exp_integral_e1_scaled(a * f)


def test_rate_increasing_and_vanishing():
    vals = [expected_rate_from_snr(c) for c in (0.1, 1.0, 10.0, 100.0)]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    assert expected_rate_from_snr(1e-9) < 1e-8
    with pytest.raises(ValueError):
        expected_rate_from_snr(0.0)


def test_expected_snr_rate_per_user():
    p = SystemParams()
    topo = build_topology(p, [[-1.0, 0.0], [0.0, 1.0]])
    assert expected_snr_rate(0, topo, p) == pytest.approx(expected_rate_from_snr(p.max_power))
    np.testing.assert_allclose(expected_snr_rates(topo, p),
                               [expected_snr_rate(i, topo, p) for i in range(2)], rtol=1e-13)
    with pytest.raises(ValueError):
        expected_snr_rate(0, topo, p, power=0.0)


# -- random draws of 20 parameters each, as a faster sibling of the acceptance check

def test_gate_and_rate_mc_twenty_draws():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = 10 ** rng.uniform(-2, 1.5)
        mean, se = mc_gate(a, 10 ** 5, rng)
        assert abs(a * exp_integral_e1_scaled(a) - mean) < 3.5 * se
        c = 10 ** rng.uniform(-1, 2.5)
        mean, se = mc_rate(c, 10 ** 5, rng)
        assert abs(expected_rate_from_snr(c) - mean) < 3.5 * se


# -- pairwise constraint ----------------------------------------------------------

def test_pairwise_threshold_continuity():
    p = SystemParams(rrh_positions=((-2.0, 0.0), (0.0, 2.0), (2.0, 0.0)))
    topo = build_topology(p, [[-2.0, -0.5], [2.0, -0.5]], tx_power=[20.0, 20.0])
    d = topo.distances[0, 2]
    g = expected_sinr_gate(20.0, d ** -4, p)
    assert pairwise_constraint_ok(0, 1, g - 1e-9, topo, p)
    assert not pairwise_constraint_ok(0, 1, g + 1e-9, topo, p)


def test_pairwise_at_cross_distance_two_is_0553():
    p = SystemParams()
    # the origin is 2 from every RRH
    topo = build_topology(p, [[0.0, 0.0]], tx_power=[20.0])
    assert topo.distances[0, 2] == pytest.approx(2.0)
    assert expected_sinr_gate(20.0, 2.0 ** -4, p) == pytest.approx(0.553, abs=5e-4)


def test_pairwise_gamma_extremes(drop, params):
    n = drop.n_users
    for i in range(n):
        for k in range(i + 1, n):
            assert pairwise_constraint_ok(i, k, 0.0, drop, params)
            assert not pairwise_constraint_ok(i, k, 1.0, drop, params)
            assert (pairwise_constraint_ok(i, k, 0.5, drop, params)
                    == pairwise_constraint_ok(k, i, 0.5, drop, params))
    with pytest.raises(ContractError):
        pairwise_constraint_ok(1, 1, 0.5, drop, params)


def test_compatibility_matrix_matches_pairwise(drop, params):
    for gamma in (0.0, 0.3, 0.6, 0.9, 1.0):
        C = compatibility_matrix(drop, params, gamma)
        assert np.array_equal(C, C.T)
        assert not C.diagonal().any()
        for i in range(drop.n_users):
            for k in range(drop.n_users):
                if i == k:
                    continue
                want = (drop.association[i] != drop.association[k]
                        and pairwise_constraint_ok(i, k, gamma, drop, params))
                assert C[i, k] == want


def test_gate_matrix_entries(drop, params):
    G = gate_matrix(drop, params)
    k, i = 2, 9
    want = expected_sinr_gate(drop.tx_power[k], drop.mean_gains[k, drop.association[i]], params)
    assert G[k, i] == pytest.approx(want, rel=1e-13)


# -- fading and instantaneous rates -----------------------------------------------

def test_fading_mean_matches_path_loss(params):
    topo = build_topology(params, [[-1.0, 0.0], [2.0, -2.0]])
    rng = np.random.default_rng(5)
    acc = np.zeros((2, 3, 5))
    n = 20000
    for _ in range(n):
        acc += sample_fading(topo, 5, rng)
    ratio = (acc / n) / topo.mean_gains[:, :, None]
    assert np.all(np.abs(ratio - 1) < 0.05)
    assert topo.mean_gains[0, 0] == pytest.approx(1.0)
    assert topo.mean_gains[1, 2] == pytest.approx(1 / 16)


def test_fading_reproducible(drop):
    a = sample_fading(drop, 5, np.random.default_rng(8))
    b = sample_fading(drop, 5, np.random.default_rng(8))
    assert np.array_equal(a, b)


def _two_user_setup(signal, interference):
    p = SystemParams()
    topo = build_topology(p, [[-1.0, 0.0], [1.0, 0.0]], tx_power=[1.0, 1.0])
    z = np.zeros((2, 3, 1))
    z[0, 0, 0] = signal
    z[1, 0, 0] = interference
    z[1, 2, 0] = 1.0
    return p, topo, z


def test_single_user_rate():
    p, topo, z = _two_user_setup(20.0, 0.0)
    sched = Schedule(np.array([0, -1]), topo.tx_power, 1)
    assert instantaneous_rate(0, 0, sched, z, topo, p) == pytest.approx(math.log2(21))
    assert realized_rates(sched, z, topo, p)[1] == 0.0


def test_rate_with_one_interferer():
    p, topo, z = _two_user_setup(20.0, 1.0)
    sched = Schedule(np.array([0, 0]), topo.tx_power, 1)
    assert instantaneous_rate(0, 0, sched, z, topo, p) == pytest.approx(math.log2(11))
    r = realized_rates(sched, z, topo, p)
    assert r[0] == pytest.approx(math.log2(11))
    with pytest.raises(ContractError):
        instantaneous_rate(0, 1, sched, z, topo, p)


def test_rate_vanishes_under_huge_interference():
    p, topo, z = _two_user_setup(20.0, 1e15)
    sched = Schedule(np.array([0, 0]), topo.tx_power, 1)
    r = instantaneous_rate(0, 0, sched, z, topo, p)
    assert 0 < r < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_sinr_kernels_agree_and_monotone(seed):
    rng = np.random.default_rng(seed)
    p = SystemParams()
    topo = build_topology(p, rng.uniform(-3, 3, size=(9, 2)))
    z = sample_fading(topo, 4, rng)
    ch = rng.integers(-1, 4, size=9)
    power = topo.tx_power
    a = _sinr_rates_loops(ch, power, z, topo.association, 1.0, 1.0)
    b = _sinr_rates_numpy(ch, power, z, topo.association, 1.0, 1.0)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)
    sched = Schedule(ch, power, 4)
    for i in np.flatnonzero(ch >= 0):
        assert a[i] == pytest.approx(instantaneous_rate(i, ch[i], sched, z, topo, p), rel=1e-12)
    # raising one interferer's power cannot raise anybody else's rate
    k = int(rng.integers(0, 9))
    louder = power.copy()
    louder[k] *= 3.0
    c = _sinr_rates_loops(ch, louder, z, topo.association, 1.0, 1.0)
    others = np.arange(9) != k
    assert np.all(c[others] <= a[others] + 1e-12)
    if ch[k] >= 0:
        assert c[k] >= a[k]
