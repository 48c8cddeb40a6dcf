"""Single-slot packet delivery probability by PGFL quadrature.

Every joint success probability has the form ``exp(-lambda * p * I)`` where
``I`` integrates ``1 - D(x) * prod_k R_k(x)`` over the plane, ``D`` being the
destination-side factor and ``R_k`` the relay-side factors.  The delivery
probability is the inclusion-exclusion sum of these joint probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import EtaSingular, TooManyRelays
from .quadrature import QuadratureSpec, integrate_plane
from .scenario import (ETA_GUARD, ChannelParams, Combiner, InterferenceModel, Position,
                       Scenario)

MAX_RELAYS = 12


@dataclass(frozen=True)
class SubsetMask:
    """A subset of the success events: S0 (direct) and relay events by 0-based index."""

    includes_direct: bool
    relays: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "relays", frozenset(int(k) for k in self.relays))

    @classmethod
    def from_bits(cls, bits: int) -> "SubsetMask":
        """Bit 0 is S0, bit k + 1 is relay k."""
        return cls(bool(bits & 1), frozenset(k for k in range(bits.bit_length()) if bits >> (k + 1) & 1))

    @property
    def bits(self) -> int:
        return int(self.includes_direct) | sum(1 << (k + 1) for k in self.relays)

    @property
    def size(self) -> int:
        return int(self.includes_direct) + len(self.relays)

    def is_empty(self) -> bool:
        return self.size == 0

    def __str__(self):
        parts = (["S0"] if self.includes_direct else []) + [f"S{k + 1}" for k in sorted(self.relays)]
        return "{" + ",".join(parts) + "}"


def all_subsets(n_relays: int):
    """Non-empty subsets of {S0, S1, ..., SN} in bitmask order."""
    for bits in range(1, 1 << (n_relays + 1)):
        yield SubsetMask.from_bits(bits)


@dataclass(frozen=True)
class Eta:
    value: float
    subset: frozenset


@dataclass(frozen=True)
class DeliveryResult:
    omega: float
    per_subset_terms: Mapping[SubsetMask, float]
    estimated_quadrature_error: float

    @property
    def clamped(self) -> float:
        return min(1.0, max(0.0, self.omega))


@dataclass(frozen=True)
class OneRelayProbabilities:
    s0: float
    s1_sc: float
    s0_s1_sc: float
    s1_mrc: float
    s0_s1_mrc: float

    @property
    def omega_sc(self) -> float:
        return self.s0 + self.s1_sc - self.s0_s1_sc

    @property
    def omega_mrc(self) -> float:
        return self.s0 + self.s1_mrc - self.s0_s1_mrc


# -- MRC combining coefficient ----------------------------------------------


def combined_exceedance(g_sd: float, g_rd: Iterable[float], beta: float) -> float:
    """P[h0*g_sd + h_k*g_rd[k] > beta for all k], h's i.i.d. unit exponentials.

    Raw two-exponential identity; not clamped.
    """
    g_rd = tuple(g_rd)
    eta = eta_value(1.0 - math.fsum(g_sd / g for g in g_rd))
    relay_part = math.exp(-beta * math.fsum(1.0 / g for g in g_rd))
    return eta * relay_part + (1.0 - eta) * math.exp(-beta / g_sd)


def eta_value(den: float, where: str = "") -> float:
    """1 / (1 - sum g_sd/g_rd), refusing denominators inside the guard band."""
    if abs(den) < ETA_GUARD:
        raise EtaSingular(f"{where}1 - sum g_sd/g_rd = {den:.3g}")
    return 1.0 / den


def eta_for(scenario: Scenario, subset_relays: Iterable[int]) -> Eta:
    relays = frozenset(subset_relays)
    return Eta(eta_value(scenario.eta_denominator(relays), f"relays {sorted(relays)}: "), relays)


def mrc_exceedance(scenario: Scenario, subset_relays: Iterable[int], beta: float) -> float:
    relays = sorted(set(subset_relays))
    g = scenario.gains()
    eta = eta_for(scenario, relays).value
    a = scenario.source_power_scale * g.g_sd
    relay_part = math.exp(-beta * math.fsum(1.0 / g.g_rd[k] for k in relays))
    return eta * relay_part + (1.0 - eta) * math.exp(-beta / a)


# -- PGFL exponents -----------------------------------------------------------


def _log_factor(c, node: Position, law, x, y):
    d2 = (x - node.x) ** 2 + (y - node.y) ** 2
    return np.log1p(c * law.gain_sq(d2))


@dataclass
class _Evaluator:
    """Caches plane integrals for one (scenario, params, quadrature spec)."""

    scenario: Scenario
    params: ChannelParams
    spec: QuadratureSpec
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        self.th = self.scenario.thresholds(self.params.theta)
        self.scale = self.params.lam * self.params.aloha_p

    def integral(self, dest_coef: float, relay_terms: tuple):
        """Integral of 1 - (1 + c_D g_xd)^-1 prod_j (1 + c_j g_xj)^-m_j over the plane.

        ``relay_terms`` holds (position, coefficient, multiplicity) triples.
        """
        key = (dest_coef, relay_terms)
        if key in self.cache:
            return self.cache[key]
        sc = self.scenario
        law = sc.path_loss
        d = sc.destination
        terms = tuple(t for t in relay_terms if t[1] > 0 and t[2] > 0)

        def f(x, y):
            s = 0.0 if dest_coef == 0 else _log_factor(dest_coef, d, law, x, y)
            for pos, c, m in terms:
                s = s + m * _log_factor(c, pos, law, x, y)
            return -np.expm1(-s)

        centers = ([d] if dest_coef > 0 else []) + [t[0] for t in terms]
        if not centers:
            out = (0.0, 0.0)
        else:
            qs = self.spec.with_centers(centers)
            out = integrate_plane(f, qs, center=centers[0])
        self.cache[key] = out
        return out

    def factor(self, dest_coef: float, relay_terms: tuple):
        """exp(-lambda p I) and its propagated quadrature error."""
        if self.scale == 0:
            return 1.0, 0.0
        val, err = self.integral(dest_coef, relay_terms)
        prob = math.exp(-self.scale * val)
        return prob, prob * self.scale * err

    def relay_terms(self, relays) -> tuple:
        counts: dict[Position, int] = {}
        coef: dict[Position, float] = {}
        for k in sorted(relays):
            pos = self.scenario.relays[k]
            counts[pos] = counts.get(pos, 0) + 1
            coef[pos] = self.th.sr[k]
        return tuple((pos, coef[pos], counts[pos]) for pos in counts)

    def sum_rd(self, relays) -> float:
        return math.fsum(self.th.rd[k] for k in relays)

    # dependent interference: one exponential with all factors in one integrand
    def sc_dependent(self, subset: SubsetMask):
        c_d = (self.th.sd if subset.includes_direct else 0.0) + self.sum_rd(subset.relays)
        return self.factor(c_d, self.relay_terms(subset.relays))

    # independent interference: one exponential per receiving node
    def sc_independent(self, subset: SubsetMask):
        c_d = (self.th.sd if subset.includes_direct else 0.0) + self.sum_rd(subset.relays)
        prob, err = self.factor(c_d, ())
        rel = err / prob if prob > 0 else 0.0
        for term in self.relay_terms(subset.relays):
            pos, c, m = term
            pk, ek = self.factor(0.0, ((pos, c, 1),))
            prob *= pk**m
            rel += m * (ek / pk if pk > 0 else 0.0)
        return prob, prob * rel

    def mrc_dependent(self, subset: SubsetMask):
        terms = self.relay_terms(subset.relays)
        if subset.includes_direct:
            return self.factor(self.th.sd, terms)
        eta = eta_for(self.scenario, subset.relays).value
        e1, r1 = self.factor(self.sum_rd(subset.relays), terms)
        e2, r2 = self.factor(self.th.sd, terms)
        return e2 + eta * (e1 - e2), abs(eta) * r1 + abs(1 - eta) * r2

    def mrc_independent(self, subset: SubsetMask):
        if subset.includes_direct:
            dest, derr = self.factor(self.th.sd, ())
        else:
            eta = eta_for(self.scenario, subset.relays).value
            e1, r1 = self.factor(self.sum_rd(subset.relays), ())
            e2, r2 = self.factor(self.th.sd, ())
            dest, derr = e2 + eta * (e1 - e2), abs(eta) * r1 + abs(1 - eta) * r2
        prob, err = dest, derr
        for pos, c, m in self.relay_terms(subset.relays):
            pk, ek = self.factor(0.0, ((pos, c, 1),))
            err = abs(prob) * m * ek * pk ** (m - 1) + err * pk**m
            prob *= pk**m
        return prob, err

    def joint(self, subset: SubsetMask):
        if subset.is_empty():
            return 1.0, 0.0
        dep = self.params.interference is InterferenceModel.DEPENDENT
        if self.params.combiner is Combiner.SC:
            return self.sc_dependent(subset) if dep else self.sc_independent(subset)
        return self.mrc_dependent(subset) if dep else self.mrc_independent(subset)


def _check_subset(scenario: Scenario, subset: SubsetMask):
    bad = [k for k in subset.relays if not 0 <= k < scenario.n_relays]
    if bad:
        raise IndexError(f"relay indices {bad} out of range for {scenario.n_relays} relays")


def _spec(spec):
    return QuadratureSpec() if spec is None else spec


def _joint(scenario, params, subset, spec, combiner, interference):
    _check_subset(scenario, subset)
    p = params.with_(combiner=combiner, interference=interference)
    return _Evaluator(scenario, p, _spec(spec)).joint(subset)[0]


def joint_prob_sc_dependent(scenario: Scenario, params: ChannelParams, subset: SubsetMask,
                            spec: QuadratureSpec | None = None) -> float:
    return _joint(scenario, params, subset, spec, Combiner.SC, InterferenceModel.DEPENDENT)


def joint_prob_sc_independent(scenario: Scenario, params: ChannelParams, subset: SubsetMask,
                              spec: QuadratureSpec | None = None) -> float:
    return _joint(scenario, params, subset, spec, Combiner.SC, InterferenceModel.INDEPENDENT)


def joint_prob_mrc_dependent(scenario: Scenario, params: ChannelParams, subset: SubsetMask,
                             spec: QuadratureSpec | None = None) -> float:
    return _joint(scenario, params, subset, spec, Combiner.MRC, InterferenceModel.DEPENDENT)


def joint_prob_mrc_independent(scenario: Scenario, params: ChannelParams, subset: SubsetMask,
                               spec: QuadratureSpec | None = None) -> float:
    return _joint(scenario, params, subset, spec, Combiner.MRC, InterferenceModel.INDEPENDENT)


def grouped_subsets(scenario: Scenario):
    """Yield (representative subset, multiplicity) with identical relays merged."""
    groups = [idx for _, idx in scenario.relay_groups()]
    for direct in (False, True):
        for counts in itertools.product(*(range(len(g) + 1) for g in groups)):
            if not direct and not any(counts):
                continue
            relays = frozenset(k for g, c in zip(groups, counts) for k in g[:c])
            mult = math.prod(math.comb(len(g), c) for g, c in zip(groups, counts))
            yield SubsetMask(direct, relays), mult


def delivery_probability(scenario: Scenario, params: ChannelParams,
                         spec: QuadratureSpec | None = None) -> DeliveryResult:
    """Omega = sum over non-empty subsets A of (-1)^(|A|+1) P[A]."""
    if scenario.n_relays > MAX_RELAYS:
        raise TooManyRelays(f"{scenario.n_relays} relays; at most {MAX_RELAYS} supported")
    if params.combiner is Combiner.MRC:
        scenario.validate_for_mrc()
    ev = _Evaluator(scenario, params, _spec(spec))
    terms: dict[SubsetMask, float] = {}
    errs = []
    for subset, mult in grouped_subsets(scenario):
        prob, err = ev.joint(subset)
        sign = 1 if subset.size % 2 else -1
        terms[subset] = sign * mult * prob
        errs.append(mult * err)
    return DeliveryResult(math.fsum(terms.values()), terms, math.fsum(errs))


def one_relay_closed_forms(scenario: Scenario, params: ChannelParams,
                           spec: QuadratureSpec | None = None) -> OneRelayProbabilities:
    """The five one-relay probabilities under dependent interference, written out explicitly."""
    if scenario.n_relays != 1:
        raise ValueError("one_relay_closed_forms needs exactly one relay")
    spec = _spec(spec)
    g = scenario.gains()
    th = scenario.thresholds(params.theta)
    t_sd, t_sr, t_rd = th.sd, th.sr[0], th.rd[0]
    d, r = scenario.destination, scenario.relays[0]
    law = scenario.path_loss
    lam, p = params.lam, params.aloha_p

    def g_xd(x, y):
        return law.gain_sq((x - d.x) ** 2 + (y - d.y) ** 2)

    def g_xr(x, y):
        return law.gain_sq((x - r.x) ** 2 + (y - r.y) ** 2)

    def pgfl(integrand, centers):
        if lam * p == 0:
            return 1.0
        val, _ = integrate_plane(integrand, spec.with_centers(centers), center=centers[0])
        return math.exp(-lam * val)

    # 1 - (p D R + 1 - p) = p (1 - D R), with 1 - D R = -expm1(-sum log1p(...))
    def direct(x, y):
        return -p * np.expm1(-np.log1p(t_sd * g_xd(x, y)))

    def relay_sc(x, y):
        return -p * np.expm1(-np.log1p(t_rd * g_xd(x, y)) - np.log1p(t_sr * g_xr(x, y)))

    def both_sc(x, y):
        return -p * np.expm1(-np.log1p((t_sd + t_rd) * g_xd(x, y)) - np.log1p(t_sr * g_xr(x, y)))

    def direct_and_sr(x, y):
        return -p * np.expm1(-np.log1p(t_sd * g_xd(x, y)) - np.log1p(t_sr * g_xr(x, y)))

    s0 = pgfl(direct, [d])
    s1_sc = pgfl(relay_sc, [d, r])
    s0_s1_sc = pgfl(both_sc, [d, r])
    s0_sr = pgfl(direct_and_sr, [d, r])
    ratio = scenario.source_power_scale * g.g_sd / g.g_rd[0]
    if abs(1.0 - ratio) < ETA_GUARD:
        raise EtaSingular("relay-destination gain equals source-destination gain")
    w = 1.0 / (1.0 - ratio)
    s1_mrc = w * s1_sc + (1.0 - w) * s0_sr
    return OneRelayProbabilities(s0, s1_sc, s0_s1_sc, s1_mrc, s0_sr)


def throughput(scenario: Scenario, params: ChannelParams, spec: QuadratureSpec | None = None) -> float:
    """Normalised throughput: source transmit probability times delivery probability."""
    if params.aloha_p == 0:
        return 0.0
    return params.aloha_p * delivery_probability(scenario, params, spec).omega
