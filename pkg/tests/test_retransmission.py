import math

import numpy as np
import pytest
from scipy.integrate import quad

from cooprelay.analytic import delivery_probability
from cooprelay.errors import ExpansionTooLarge, WindowTooSmall
from cooprelay.retransmission import (ConditionalModel, attempt_distribution_dependent,
                                      attempt_distribution_independent, conditional_success,
                                      conditional_success_samples, expansion_cross_check, midpoint)
from cooprelay.scenario import (Combiner, InterferenceModel, PathLossLaw, Position, PppRealization,
                                Scenario, line_scenario, path_gain, preset)

LAW = PathLossLaw(4.0)


def _ppp(points, center=Position(0.5, 0.0), radius=30.0):
    return PppRealization(np.array(points, dtype=float).reshape(-1, 2), radius, center)


def test_empty_field_always_succeeds():
    sc = line_scenario([0.5])
    for comb in Combiner:
        ps = conditional_success(_ppp([]), sc, preset("harsh", comb), tail_correction=False)
        assert ps.p_s == 1.0


def test_silent_field_always_succeeds():
    sc = line_scenario([0.3, 0.6])
    params = preset("harsh").with_(aloha_p=0.0)
    ps = conditional_success(_ppp([[0.2, 0.4], [2.0, -1.0]]), sc, params)
    assert ps.p_s == pytest.approx(1.0, abs=1e-15)


def test_single_interferer_direct_link():
    # one interferer, no relays: P[h g_sd > theta h_u g_u] = 1 - p + p / (1 + theta g_u / g_sd)
    sc = Scenario()
    u = Position(0.4, 0.7)
    for p in (1.0, 0.3):
        params = preset("b").with_(aloha_p=p)
        g_u = path_gain(u, sc.destination, LAW)
        expected = 1 - p + p / (1 + params.theta * g_u / path_gain(sc.source, sc.destination, LAW))
        got = conditional_success(_ppp([[u.x, u.y]]), sc, params, tail_correction=False).p_s
        assert got == pytest.approx(expected, rel=1e-12)


def test_single_interferer_one_relay_sc():
    sc = line_scenario([0.5])
    params = preset("b")
    u = Position(-0.3, 0.5)
    th = sc.thresholds(params.theta)
    r = sc.relays[0]
    g0 = path_gain(u, sc.destination, LAW)
    gr = path_gain(u, r, LAW)

    # fading on u->r is independent of u->d and averages out in closed form
    b = 1 / (1 + th.sr[0] * gr)

    def given_h(h):  # h: fading on u->d, shared by both hops received at d
        s0 = math.exp(-th.sd * h * g0)
        s1 = b * math.exp(-th.rd[0] * h * g0)
        return math.exp(-h) * (s0 + s1 - s0 * s1)

    p = params.aloha_p
    expected = 1 - p + p * quad(given_h, 0, math.inf, epsabs=1e-14)[0]
    got = conditional_success(_ppp([[u.x, u.y]]), sc, params, tail_correction=False).p_s
    assert got == pytest.approx(expected, rel=1e-10)


def test_tail_factor_is_pgfl_of_exterior():
    # with no interferers inside the window, p_s equals the probability from the exterior alone
    sc = Scenario()
    params = preset("good")
    model = ConditionalModel(sc, params, window_radius=5.0)
    ps = model.success(np.zeros(len(model.products)))
    lam_p = params.lam * params.aloha_p
    theta_sd = params.theta
    full = math.exp(-lam_p * math.pi**2 * math.sqrt(theta_sd) / 2)
    # exp(-lam p ∫_{|x - c| > R} ...) > full, and both agree as R grows
    assert full < ps < 1.0
    wide = ConditionalModel(sc, params, window_radius=60.0)
    assert wide.success(np.zeros(len(wide.products))) > ps


def test_zero_density_gives_certain_first_attempt():
    sc = line_scenario([0.5])
    dist = attempt_distribution_dependent(sc, preset("harsh").with_(lam=0.0), 4, 50, 1)
    assert np.array_equal(dist.pmf, [1.0, 0.0, 0.0, 0.0])
    assert np.array_equal(dist.cdf, [1.0, 1.0, 1.0, 1.0])


@pytest.mark.parametrize("omega, t, expected", [(1.0, 1, 1.0), (0.45830, 2, 0.7065612), (0.0, 5, 0.0)])
def test_geometric_law(omega, t, expected):
    dist = attempt_distribution_independent(omega, 5)
    assert dist.cdf[t - 1] == pytest.approx(expected, abs=1e-7)
    assert dist.pmf.sum() == pytest.approx(dist.cdf[-1], abs=1e-15)
    assert dist.mc_replicates == 0


def test_geometric_rejects_bad_omega():
    with pytest.raises(ValueError):
        attempt_distribution_independent(1.2, 3)


def test_dependent_model_rejects_independent_interference():
    with pytest.raises(ValueError):
        ConditionalModel(Scenario(), preset("good", interference=InterferenceModel.INDEPENDENT))


@pytest.mark.parametrize("name, comb, xs", [("good", Combiner.SC, (0.5,)),
                                            ("harsh", Combiner.MRC, (0.3, 0.6))])
def test_tower_property(name, comb, xs):
    sc = line_scenario(xs)
    params = preset(name, comb)
    ps = conditional_success_samples(sc, params, 10_000, 7)
    omega = delivery_probability(sc, params).omega
    assert abs(ps.mean() - omega) <= 3 * ps.std(ddof=1) / math.sqrt(len(ps))


def test_dependent_cdf_properties():
    sc = line_scenario([0.5, 0.5, 0.5])
    params = preset("good", Combiner.MRC)
    dist = attempt_distribution_dependent(sc, params, 5, 2000, 3)
    assert np.all(np.diff(dist.cdf) >= 0)
    assert np.all(dist.cdf_stderr > 0)
    assert dist.cdf[0] == pytest.approx(dist.pmf[0])
    np.testing.assert_allclose(np.cumsum(dist.pmf), dist.cdf, atol=1e-12)


def test_dependent_slower_than_independent():
    # conditioning on a common field makes later attempts less likely to succeed
    sc = line_scenario([0.5, 0.5, 0.5])
    dep = preset("good", Combiner.MRC)
    ind = dep.with_(interference=InterferenceModel.INDEPENDENT)
    d = attempt_distribution_dependent(sc, dep, 5, 4000, 11)
    i = attempt_distribution_independent(delivery_probability(sc, ind).omega, 5)
    assert d.cdf[4] < i.cdf[4] - 3 * d.cdf_stderr[4]


def test_expansion_matches_direct_power():
    sc = line_scenario([0.5])
    assert expansion_cross_check(sc, preset("good"), 1, 500, 4) <= 1e-15
    for T in (2, 3):
        assert expansion_cross_check(line_scenario([0.3, 0.7]), preset("harsh", Combiner.MRC), T, 500, T) <= 1e-12


def test_expansion_limits():
    with pytest.raises(ExpansionTooLarge):
        expansion_cross_check(line_scenario([0.5]), preset("good"), 4, 10, 0)
    with pytest.raises(ExpansionTooLarge):
        expansion_cross_check(line_scenario([0.2, 0.5, 0.7]), preset("good"), 2, 10, 0)


def test_window_too_small():
    with pytest.raises(WindowTooSmall):
        ConditionalModel(line_scenario([0.5]), preset("harsh"), window_radius=0.6)


def test_midpoint():
    sc = Scenario(destination=Position(2.0, 1.0))
    assert midpoint(sc) == Position(1.0, 0.5)
