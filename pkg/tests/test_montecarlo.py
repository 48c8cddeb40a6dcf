import math

import numpy as np
import pytest

from cooprelay.analytic import delivery_probability, throughput
from cooprelay.montecarlo import (EstimateWithError, estimate_attempts, estimate_delivery,
                                  estimate_delivery_many, outcomes_from_interference,
                                  simulate_block, simulate_slot)
from cooprelay.retransmission import attempt_distribution_independent
from cooprelay.scenario import (Combiner, InterferenceModel, Position, Scenario, draw_slot,
                                line_scenario, preset, sample_ppp)


def _interference(ppp, node, h, active, law):
    if not len(ppp):
        return 0.0
    return float(np.sum(h[active] * ppp.gains_to(node, law)[active]))


@pytest.mark.parametrize("model", list(InterferenceModel))
def test_literal_slot_matches_vectorised_rules(model):
    sc = line_scenario([0.3, 0.5, 0.8])
    params = preset("b", interference=model)
    rng = np.random.default_rng(21)
    law = sc.path_loss
    for _ in range(200):
        fields = [sample_ppp(params.lam, Position(0.5, 0), 4.0, rng) for _ in range(4)]
        ppp = fields[0] if model is InterferenceModel.DEPENDENT else fields
        draw = draw_slot(sc, ppp, params, rng)
        per_rx = fields[:1] * 4 if model is InterferenceModel.DEPENDENT else fields
        i_d = _interference(per_rx[0], sc.destination, draw.h_ud, draw.active_d, law)
        i_r = np.array([[_interference(per_rx[k + 1], r, draw.h_ur[k], draw.active_r[k], law)]
                        for k, r in enumerate(sc.relays)])
        batch = outcomes_from_interference(sc, params.theta, np.array([draw.h_sd]),
                                           np.asarray(draw.h_sr).reshape(3, 1),
                                           np.asarray(draw.h_rd).reshape(3, 1), np.array([i_d]), i_r)
        slot = simulate_slot(sc, params, ppp, draw)
        assert slot.direct_success == bool(batch.direct[0])
        assert slot.sr_success == tuple(bool(v) for v in batch.sr[:, 0])
        assert slot.rd_success == tuple(bool(v) for v in batch.rd[:, 0])
        assert slot.overall_sc == bool(batch.overall(Combiner.SC)[0])
        assert slot.overall_mrc == bool(batch.overall(Combiner.MRC)[0])


def test_empty_field_always_succeeds():
    sc = line_scenario([0.5])
    ppp = sample_ppp(0.0, Position(0.5, 0), 5.0, 0)
    for seed in range(20):
        draw = draw_slot(sc, ppp, preset("harsh"), seed)
        assert simulate_slot(sc, preset("harsh"), ppp, draw).overall


def test_huge_threshold_always_fails():
    est = estimate_delivery_many(line_scenario([0.5]), [preset("harsh").with_(theta=1e30)], 2000, rng=3)[0]
    assert est[Combiner.SC].mean == 0.0 and est[Combiner.MRC].mean == 0.0


def test_zero_density_always_succeeds():
    est = estimate_delivery_many(line_scenario([0.4, 0.6]), [preset("good").with_(lam=0.0)], 2000, rng=3)[0]
    assert est[Combiner.SC].mean == 1.0 and est[Combiner.MRC].mean == 1.0


@pytest.mark.parametrize("model", list(InterferenceModel))
def test_selection_success_implies_mrc_success(model):
    sc = line_scenario([0.25, 0.5, 0.5])
    configs = [preset("harsh", interference=model), preset("good", interference=model)]
    for seed in range(50):
        for batch in simulate_block(sc, configs, 2000, np.random.default_rng(seed)):
            sc_ok = batch.overall(Combiner.SC)
            assert not np.any(sc_ok & ~batch.overall(Combiner.MRC))
            assert not np.any(batch.rd & ~batch.combined)


def test_seed_determinism_and_worker_independence():
    sc = line_scenario([0.5])
    a = estimate_delivery(sc, preset("b"), 6000, rng=17)
    b = estimate_delivery(sc, preset("b"), 6000, rng=17)
    c = estimate_delivery(sc, preset("b"), 6000, rng=17, workers=2)
    d = estimate_delivery(sc, preset("b"), 6000, rng=18)
    assert a == b == c
    assert a != d


def test_estimate_delivery_minimum_trials():
    with pytest.raises(ValueError):
        estimate_delivery(Scenario(), preset("good"), 999)


def test_estimate_with_error():
    e = EstimateWithError.bernoulli(250, 1000)
    assert e.mean == 0.25 and e.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 1000))
    assert e.within(0.27) and not e.within(0.30)


@pytest.mark.parametrize("name", ["good", "harsh"])
def test_direct_only_agrees_with_closed_form(name):
    params = preset(name)
    est = estimate_delivery(Scenario(), params, 100_000, rng=5)
    assert est.within(delivery_probability(Scenario(), params).omega, 3.0)


@pytest.mark.parametrize("model", list(InterferenceModel))
def test_two_relays_agree_with_analytic(model):
    sc = line_scenario([0.3, 0.7])
    configs = [preset("b", interference=model)]
    est = estimate_delivery_many(sc, configs, 40_000, rng=9)[0]
    for comb in Combiner:
        omega = delivery_probability(sc, configs[0].with_(combiner=comb)).omega
        assert est[comb].within(omega, 3.0)


def test_window_truncation_is_negligible():
    sc = line_scenario([0.5])
    params = preset("good")
    narrow = estimate_delivery(sc, params, 100_000, window_radius=20.0, rng=1)
    wide = estimate_delivery(sc, params, 100_000, window_radius=40.0, rng=2)
    joint = math.hypot(narrow.stderr, wide.stderr)
    assert abs(narrow.mean - wide.mean) <= 3 * joint


def test_independent_attempts_follow_geometric_law():
    sc = line_scenario([0.5])
    params = preset("good", interference=InterferenceModel.INDEPENDENT)
    omega = delivery_probability(sc, params).omega
    geo = attempt_distribution_independent(omega, 3)
    mc = estimate_attempts(sc, params, 3, 20_000, rng=4)
    assert np.all(np.abs(mc.cdf - geo.cdf) <= 3 * mc.cdf_stderr + 1e-12)


def test_dependent_attempts_lag_independent():
    sc = line_scenario([0.5])
    dep = preset("harsh")
    ind = dep.with_(interference=InterferenceModel.INDEPENDENT)
    d = estimate_attempts(sc, dep, 4, 20_000, rng=6)
    i = estimate_attempts(sc, ind, 4, 20_000, rng=7)
    assert np.all(np.diff(d.cdf) >= 0)
    assert d.cdf[3] < i.cdf[3] - 3 * math.hypot(d.cdf_stderr[3], i.cdf_stderr[3])


def test_throughput_maximiser_on_coarse_grid():
    # coupled draws across p make the argmax comparison sharp
    sc = line_scenario([0.5])
    base = preset("good").with_(theta=0.5, lam=1.0)
    grid = (0.15, 0.4, 0.65, 0.9)
    configs = [base.with_(aloha_p=p) for p in grid]
    est = estimate_delivery_many(sc, configs, 20_000, rng=12)
    mc = [p * e[Combiner.SC].mean for p, e in zip(grid, est)]
    exact = [throughput(sc, c) for c in configs]
    assert int(np.argmax(mc)) == int(np.argmax(exact)) == 2
