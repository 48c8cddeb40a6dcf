import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cooprelay.errors import DegenerateGeometry, EtaSingular
from cooprelay.scenario import (ChannelParams, Combiner, InterferenceModel, PathLossLaw, Position,
                                PppRealization, Scenario, draw_slot, line_scenario, path_gain, preset,
                                reduced_threshold, sample_ppp, substream)

LAW = PathLossLaw(4.0)
coord = st.floats(-5, 5, allow_nan=False)


@pytest.mark.parametrize("b, expected", [((1, 0), 1.0), ((0.5, 0), 16.0), ((2, 0), 0.0625)])
def test_path_gain_examples(b, expected):
    assert path_gain(Position(0, 0), Position(*b), LAW) == pytest.approx(expected, rel=1e-15)


def test_path_gain_coincident_points():
    with pytest.raises(DegenerateGeometry):
        path_gain(Position(0.3, 0.1), Position(0.3, 0.1), LAW)


@given(coord, coord, coord, coord)
def test_path_gain_symmetric(ax, ay, bx, by):
    a, b = Position(ax, ay), Position(bx, by)
    if a.distance_to(b) < 1e-6:
        return
    assert path_gain(a, b, LAW) == path_gain(b, a, LAW)


@given(st.floats(0.01, 10), st.floats(0.01, 10))
def test_path_gain_decreasing(d1, d2):
    if d1 == d2:
        return
    near, far = sorted((d1, d2))
    o = Position(0, 0)
    assert path_gain(o, Position(near, 0), LAW) > path_gain(o, Position(far, 0), LAW)


@pytest.mark.parametrize("theta, scale, g, expected", [(1, 1, 1, 1.0), (1, 2, 1, 0.5), (0.1, 1, 16, 0.00625)])
def test_reduced_threshold(theta, scale, g, expected):
    assert reduced_threshold(theta, scale, g) == pytest.approx(expected, rel=1e-15)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        Position(float("nan"), 0)
    with pytest.raises(ValueError):
        PathLossLaw(2.0)
    with pytest.raises(ValueError):
        ChannelParams(theta=0, lam=1)
    with pytest.raises(ValueError):
        ChannelParams(theta=1, lam=-1)
    with pytest.raises(ValueError):
        ChannelParams(theta=1, lam=1, aloha_p=1.5)


@pytest.mark.parametrize("relay", [(0, 0), (1, 0)])
def test_relay_on_endpoint_rejected(relay):
    with pytest.raises(DegenerateGeometry):
        Scenario(relays=(Position(*relay),))


def test_thresholds_fold_power():
    sc = Scenario(relays=(Position(0.5, 0),), source_power_scale=2.0)
    th = sc.thresholds(1.0)
    assert th.sd == pytest.approx(0.5)
    assert th.sr[0] == pytest.approx(1 / 32)
    assert th.rd[0] == pytest.approx(1 / 16)  # relays transmit at unit power


def test_eta_singular_detection_and_nudge():
    # relay at distance 1 from d has g_rd == g_sd
    sc = Scenario(relays=(Position(1.0, 1.0),))
    assert sc.singular_subsets() == [(0,)]
    with pytest.raises(EtaSingular):
        sc.validate_for_mrc()
    nudged, steps = sc.nudged_for_mrc(1e-6)
    assert steps >= 1
    nudged.validate_for_mrc()
    moved = nudged.relays[0]
    assert moved.distance_to(sc.destination) == pytest.approx(1.0 + steps * 1e-6, rel=1e-12)


def test_presets():
    assert (preset("good").theta, preset("good").lam, preset("good").aloha_p) == (0.1, 0.5, 1.0)
    assert (preset("harsh").theta, preset("harsh").lam, preset("harsh").aloha_p) == (1.0, 1.0, 1.0)
    assert (preset("b").theta, preset("b").lam, preset("b").aloha_p) == (1.0, 0.75, 0.5)
    p = preset("harsh", "mrc", "independent")
    assert p.combiner is Combiner.MRC and p.interference is InterferenceModel.INDEPENDENT


def test_sample_ppp_empty_and_window():
    ppp = sample_ppp(0.0, Position(0, 0), 5.0, 1)
    assert len(ppp) == 0
    ppp = sample_ppp(2.0, Position(0.5, 0), 3.0, 2)
    assert np.all(np.hypot(ppp.x - 0.5, ppp.y) <= 3.0)


def test_sample_ppp_deterministic():
    a = sample_ppp(1.0, Position(0, 0), 4.0, 99)
    b = sample_ppp(1.0, Position(0, 0), 4.0, 99)
    assert np.array_equal(a.points, b.points)


def test_sample_ppp_count_distribution():
    rng = np.random.default_rng(5)
    counts = np.array([len(sample_ppp(1.0, Position(0, 0), 20.0, rng)) for _ in range(10_000)])
    mean = 400 * math.pi
    assert abs(counts.mean() - mean) <= 3 * math.sqrt(mean / len(counts))
    # chi-square goodness of fit on equiprobable Poisson bins
    edges = stats.poisson.ppf(np.linspace(0, 1, 21)[1:-1], mean)
    observed = np.bincount(np.searchsorted(edges, counts, side="left"), minlength=20)
    cdf = stats.poisson.cdf(edges, mean)
    probs = np.diff(np.concatenate(([0.0], cdf, [1.0])))
    chi2 = stats.chisquare(observed, probs * len(counts))
    assert chi2.pvalue > 0.01


def test_sample_ppp_uniform_in_disk():
    ppp = sample_ppp(5.0, Position(0, 0), 2.0, 3)
    r2 = (ppp.x**2 + ppp.y**2) / 4.0  # uniform in the disk => r^2/R^2 ~ U(0,1)
    assert stats.kstest(r2, "uniform").pvalue > 0.001
    phi = (np.arctan2(ppp.y, ppp.x) + math.pi) / (2 * math.pi)
    assert stats.kstest(phi, "uniform").pvalue > 0.001


def _ppp(n, seed=0):
    return sample_ppp(n / (math.pi * 100), Position(0.5, 0), 10.0, seed)


def test_draw_slot_aloha_extremes():
    sc = line_scenario([0.3, 0.6])
    ppp = _ppp(200)
    none = draw_slot(sc, ppp, preset("good").with_(aloha_p=0.0), 1)
    assert not none.active_d.any()
    assert all(a is none.active_d for a in none.active_r)  # shared indicators
    every = draw_slot(sc, ppp, preset("good"), 1)
    assert every.active_d.all()


def test_draw_slot_independent_shapes():
    sc = line_scenario([0.3, 0.6])
    ppps = [_ppp(50, s) for s in range(3)]
    d = draw_slot(sc, ppps, preset("b", interference="independent"), 4)
    assert len(d.h_ud) == len(ppps[0]) and len(d.h_ur[1]) == len(ppps[2])
    with pytest.raises(ValueError):
        draw_slot(sc, ppps[:2], preset("b"), 4)


def test_fading_mean_million():
    rng = np.random.default_rng(12)
    ppp = sample_ppp(1e6 / (math.pi * 400), Position(0, 0), 20.0, rng)
    h = draw_slot(Scenario(), ppp, preset("harsh"), rng).h_ud
    assert abs(h.mean() - 1.0) <= 3e-3


def test_substreams_independent_and_reproducible():
    a = substream(7, 1, 2).random(4)
    b = substream(7, 1, 2).random(4)
    c = substream(7, 2, 1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@settings(max_examples=30)
@given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=4))
def test_relay_groups_partition(xs):
    sc = line_scenario(xs)
    indices = sorted(i for _, group in sc.relay_groups() for i in group)
    assert indices == list(range(len(xs)))
