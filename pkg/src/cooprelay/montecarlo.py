"""Event-level Monte Carlo simulation of the cooperative relaying slot.

Two paths share the same success rules:

* :func:`simulate_slot` evaluates one slot literally from a
  :class:`~cooprelay.scenario.PppRealization` and a
  :class:`~cooprelay.scenario.SlotDraw`.
* The batch engine simulates blocks of trials at once with padded arrays.
  Several channel configurations can ride on the same draws: interferer
  densities are coupled by thinning marks and ALOHA probabilities by shared
  uniforms, so a lower density or activity is a pathwise subset of a higher
  one.  Both combiners are always evaluated on the same draws.

Every block of trials takes its randomness from its own substream, so the
results do not depend on how blocks are spread over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .retransmission import AttemptDistribution, midpoint
from .scenario import (ChannelParams, Combiner, InterferenceModel, Position, PppRealization,
                       Scenario, SlotDraw, as_seed_sequence, substream)

WINDOW_RADIUS = 20.0
BLOCK_SIZE = 2000


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    trials: int

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("trials must be positive")

    @classmethod
    def bernoulli(cls, successes: int, trials: int) -> "EstimateWithError":
        mean = successes / trials
        return cls(mean, math.sqrt(mean * (1.0 - mean) / trials), trials)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


# -- literal single slot ---------------------------------------------------------


@dataclass(frozen=True)
class SlotOutcome:
    direct_success: bool
    sr_success: tuple[bool, ...]
    rd_success: tuple[bool, ...]
    combined_success: tuple[bool, ...]
    combiner: Combiner = Combiner.SC

    @property
    def overall_sc(self) -> bool:
        return self.direct_success or any(a and b for a, b in zip(self.sr_success, self.rd_success))

    @property
    def overall_mrc(self) -> bool:
        return self.direct_success or any(a and b for a, b in zip(self.sr_success, self.combined_success))

    @property
    def overall(self) -> bool:
        return self.overall_mrc if self.combiner is Combiner.MRC else self.overall_sc


def _interference(ppp: PppRealization, node: Position, fading, active, law) -> float:
    if len(ppp) == 0:
        return 0.0
    g = ppp.gains_to(node, law)
    return math.fsum(fading[active] * g[active])


def simulate_slot(scenario: Scenario, params: ChannelParams, ppp, draw: SlotDraw) -> SlotOutcome:
    """Apply the SIR success rules to one slot.

    ``ppp`` is a single realization (dependent interference) or a sequence of
    ``N + 1`` realizations with the destination's first (independent).
    """
    n = scenario.n_relays
    per_rx = [ppp] * (n + 1) if isinstance(ppp, PppRealization) else list(ppp)
    law = scenario.path_loss
    g = scenario.gains()
    theta = params.theta
    power = scenario.source_power_scale
    i_d = _interference(per_rx[0], scenario.destination, draw.h_ud, draw.active_d, law)
    signal_d = draw.h_sd * power * g.g_sd
    direct = signal_d > theta * i_d
    sr, rd, comb = [], [], []
    for k, relay in enumerate(scenario.relays):
        i_r = _interference(per_rx[k + 1], relay, draw.h_ur[k], draw.active_r[k], law)
        sr.append(bool(draw.h_sr[k] * power * g.g_sr[k] > theta * i_r))
        relay_d = draw.h_rd[k] * g.g_rd[k]
        rd.append(bool(relay_d > theta * i_d))
        comb.append(bool(signal_d + relay_d > theta * i_d))
    return SlotOutcome(bool(direct), tuple(sr), tuple(rd), tuple(comb), params.combiner)


# -- batch engine ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OutcomeBatch:
    """Per-trial success indicators; relay arrays have shape (N, trials)."""

    direct: np.ndarray
    sr: np.ndarray
    rd: np.ndarray
    combined: np.ndarray

    def overall(self, combiner: Combiner, relays: Sequence[int] | None = None) -> np.ndarray:
        idx = list(range(len(self.sr))) if relays is None else list(relays)
        second = self.combined if Combiner(combiner) is Combiner.MRC else self.rd
        out = self.direct.copy()
        for k in idx:
            out |= self.sr[k] & second[k]
        return out


def outcomes_from_interference(scenario: Scenario, theta: float, h_sd, h_sr, h_rd, i_d, i_r) -> OutcomeBatch:
    """Vectorised success rules given signal fading and interference sums.

    ``h_sd``/``i_d`` have shape (B,), ``h_sr``/``h_rd``/``i_r`` shape (N, B).
    """
    g = scenario.gains()
    power = scenario.source_power_scale
    n = scenario.n_relays
    signal_d = h_sd * (power * g.g_sd)
    limit_d = theta * i_d
    direct = signal_d > limit_d
    g_sr = np.asarray(g.g_sr, dtype=float).reshape(n, 1)
    g_rd = np.asarray(g.g_rd, dtype=float).reshape(n, 1)
    relay_d = h_rd * g_rd
    sr = h_sr * (power * g_sr) > theta * i_r
    rd = relay_d > limit_d
    comb = signal_d + relay_d > limit_d
    return OutcomeBatch(direct, sr, rd, comb)


def _unit_exponential(rng, shape) -> np.ndarray:
    """Float32 unit-mean exponentials by inversion (faster than the ziggurat here)."""
    u = rng.random(shape, dtype=np.float32)
    return -np.log(np.float32(1) - u)


#: coordinate for padding slots; its path gain underflows to exactly zero
_FAR = np.float32(1e18)


class _Layer:
    """Padded PPP realizations for a block: (B, M) coordinates.

    Rows hold a variable number of points; unused slots sit at a far-away
    coordinate so they contribute nothing to interference sums.
    """

    def __init__(self, rng, trials: int, lam: float, center: Position, radius: float):
        counts = rng.poisson(lam * math.pi * radius * radius, trials)
        m = int(counts.max()) if trials else 0
        pad = np.arange(m)[None, :] >= counts[:, None]
        r = radius * np.sqrt(rng.random((trials, m), dtype=np.float32))
        phi = np.float32(2.0 * math.pi) * rng.random((trials, m), dtype=np.float32)
        self.x = np.float32(center.x) + r * np.cos(phi)
        self.y = np.float32(center.y) + r * np.sin(phi)
        self.x[pad] = _FAR
        self.y[pad] = _FAR
        self.shape = (trials, m)

    def gains(self, node: Position, law) -> np.ndarray:
        d2 = (self.x - np.float32(node.x)) ** 2 + (self.y - np.float32(node.y)) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            return law.gain_sq(d2)

    def subset(self, rows) -> "_Layer":
        out = object.__new__(_Layer)
        out.x, out.y = self.x[rows], self.y[rows]
        out.shape = out.x.shape
        return out


class _Field:
    """Interferers for several densities on shared draws.

    The PPP of the largest density is the superposition of independent
    layers with the successive density increments; a configuration with
    density lam sees the layers up to lam.  ALOHA marks are uniforms compared
    against p, so a smaller p activates a subset of the same interferers.
    """

    def __init__(self, rng, trials: int, lams, center: Position, radius: float):
        self.lams = sorted(set(lams))
        prev = 0.0
        self.layers = []
        for lam in self.lams:
            self.layers.append(_Layer(rng, trials, lam - prev, center, radius))
            prev = lam
        self._gains = {}

    def subset(self, rows) -> "_Field":
        out = object.__new__(_Field)
        out.lams = self.lams
        out.layers = [layer.subset(rows) for layer in self.layers]
        out._gains = {key: g[rows] for key, g in self._gains.items()}
        return out

    def gains(self, j: int, node: Position, law):
        key = (j, node)
        if key not in self._gains:
            self._gains[key] = self.layers[j].gains(node, law)
        return self._gains[key]

    def aloha(self, rng, ps):
        """Fresh activity uniforms per layer, or None when every p is 1."""
        if all(p >= 1 for p in ps):
            return None
        return [rng.random(layer.shape, dtype=np.float32) for layer in self.layers]

    def interference(self, rng, node: Position, law, pairs, aloha) -> dict:
        """Sum of faded gains at ``node`` for each (lam, p) pair; fresh fading."""
        per_layer = []
        for j, layer in enumerate(self.layers):
            fading = _unit_exponential(rng, layer.shape)
            weighted = fading * self.gains(j, node, law)
            sums = {}
            for p in sorted({p for _, p in pairs}):
                if p >= 1:
                    sums[p] = np.einsum("ij->i", weighted, dtype=np.float64)
                else:
                    active = (aloha[j] < np.float32(p)).astype(np.float32)
                    sums[p] = np.einsum("ij,ij->i", weighted, active, dtype=np.float64)
            per_layer.append(sums)
        out = {}
        for lam, p in pairs:
            out[(lam, p)] = sum(per_layer[j][p] for j, l in enumerate(self.lams) if l <= lam)
        return out


def _pairs(configs):
    return sorted({(c.lam, c.aloha_p) for c in configs})


def _check_configs(configs: Sequence[ChannelParams]) -> InterferenceModel:
    models = {c.interference for c in configs}
    if len(models) != 1:
        raise ValueError("configurations sharing draws must use one interference model")
    return models.pop()


def _signal_outcomes(rng, scenario, configs, interference, trials):
    n = scenario.n_relays
    h_sd = rng.standard_exponential(trials)
    h_sr = rng.standard_exponential((n, trials))
    h_rd = rng.standard_exponential((n, trials))
    out = []
    for c in configs:
        key = (c.lam, c.aloha_p)
        i_d = interference[0][key]
        i_r = np.array([interference[k + 1][key] for k in range(n)]).reshape(n, trials)
        out.append(outcomes_from_interference(scenario, c.theta, h_sd, h_sr, h_rd, i_d, i_r))
    return out


def simulate_block(scenario: Scenario, configs: Sequence[ChannelParams], trials: int, rng,
                   window_radius: float = WINDOW_RADIUS) -> list[OutcomeBatch]:
    """Coupled outcomes of ``trials`` slots for each configuration in ``configs``."""
    model = _check_configs(configs)
    law = scenario.path_loss
    center = midpoint(scenario)
    pairs = _pairs(configs)
    lams = [lam for lam, _ in pairs]
    ps = [p for _, p in pairs]
    receivers = (scenario.destination,) + scenario.relays
    interference = []  # per receiver: {(lam, p): (B,) sums}
    if model is InterferenceModel.DEPENDENT:
        field = _Field(rng, trials, lams, center, window_radius)
        aloha = field.aloha(rng, ps)
        for node in receivers:
            interference.append(field.interference(rng, node, law, pairs, aloha))
    else:
        for node in receivers:
            field = _Field(rng, trials, lams, center, window_radius)
            interference.append(field.interference(rng, node, law, pairs, field.aloha(rng, ps)))
    return _signal_outcomes(rng, scenario, configs, interference, trials)


# -- estimators ------------------------------------------------------------------


def _blocks(trials: int, block_size: int):
    return [(b, min(block_size, trials - b * block_size)) for b in range(-(-trials // block_size))]


def _delivery_block(args):
    scenario, configs, size, seed, index, window_radius = args
    rng = substream(seed, index)
    batches = simulate_block(scenario, configs, size, rng, window_radius)
    return [(int(b.overall(Combiner.SC).sum()), int(b.overall(Combiner.MRC).sum())) for b in batches]


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def estimate_delivery_many(scenario: Scenario, configs: Sequence[ChannelParams], trials: int,
                           window_radius: float = WINDOW_RADIUS, rng=0, workers: int = 1,
                           block_size: int = BLOCK_SIZE) -> list[dict[Combiner, EstimateWithError]]:
    """Delivery estimates for several configurations on coupled draws, both combiners."""
    if trials < 1:
        raise ValueError("trials must be positive")
    _check_configs(configs)
    seed = as_seed_sequence(rng)
    jobs = [(scenario, tuple(configs), size, seed, b, window_radius)
            for b, size in _blocks(trials, block_size)]
    counts = np.zeros((len(configs), 2), dtype=np.int64)
    for res in _map(_delivery_block, jobs, workers):
        counts += np.array(res, dtype=np.int64)
    return [{Combiner.SC: EstimateWithError.bernoulli(int(sc), trials),
             Combiner.MRC: EstimateWithError.bernoulli(int(mrc), trials)} for sc, mrc in counts]


def estimate_delivery(scenario: Scenario, params: ChannelParams, trials: int,
                      window_radius: float = WINDOW_RADIUS, rng=0, workers: int = 1) -> EstimateWithError:
    """Fraction of slots delivered, with a fresh PPP per trial."""
    if trials < 1000:
        raise ValueError("estimate_delivery needs at least 1000 trials")
    return estimate_delivery_many(scenario, [params], trials, window_radius, rng, workers)[0][params.combiner]


def _attempts_block(args):
    scenario, params, tmax, size, seed, index, window_radius = args
    rng = substream(seed, index)
    first = np.full(size, tmax + 1, dtype=np.int64)
    remaining = np.arange(size)
    if params.interference is InterferenceModel.DEPENDENT:
        law = scenario.path_loss
        pairs = _pairs([params])
        field = _Field(rng, size, [params.lam], midpoint(scenario), window_radius)
        receivers = (scenario.destination,) + scenario.relays
        for t in range(1, tmax + 1):
            if not len(remaining):
                break
            sub = field.subset(remaining)
            aloha = sub.aloha(rng, [params.aloha_p])
            inter = [sub.interference(rng, node, law, pairs, aloha) for node in receivers]
            ok = _signal_outcomes(rng, scenario, [params], inter, len(remaining))[0].overall(params.combiner)
            first[remaining[ok]] = t
            remaining = remaining[~ok]
    else:
        for t in range(1, tmax + 1):
            if not len(remaining):
                break
            ok = simulate_block(scenario, [params], len(remaining), rng, window_radius)[0].overall(params.combiner)
            first[remaining[ok]] = t
            remaining = remaining[~ok]
    return np.bincount(first, minlength=tmax + 2)[1:]


def estimate_attempts(scenario: Scenario, params: ChannelParams, tmax: int, trials: int, rng=0,
                      window_radius: float = WINDOW_RADIUS, workers: int = 1,
                      block_size: int = BLOCK_SIZE) -> AttemptDistribution:
    """Empirical law of the first successful attempt, censored at ``tmax``.

    Dependent interference keeps each trial's interferer positions for all of
    its attempts and redraws fading and ALOHA; independent redraws everything.
    """
    if tmax < 1 or trials < 1:
        raise ValueError("need tmax >= 1 and trials >= 1")
    seed = as_seed_sequence(rng)
    jobs = [(scenario, params, tmax, size, seed, b, window_radius) for b, size in _blocks(trials, block_size)]
    hist = np.zeros(tmax + 1, dtype=np.int64)
    for h in _map(_attempts_block, jobs, workers):
        hist += h
    pmf = hist[:tmax] / trials
    cdf = np.cumsum(hist[:tmax]) / trials
    return AttemptDistribution(pmf, cdf, trials,
                               np.sqrt(pmf * (1 - pmf) / trials), np.sqrt(cdf * (1 - cdf) / trials))
