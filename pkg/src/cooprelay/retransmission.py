"""Attempt-count distribution of the cooperative retransmission scheme.

Under dependent interference the interferer positions persist across
attempts while fading and ALOHA are redrawn, so given a PPP realization the
attempts are i.i.d. Bernoulli with the conditional success probability
``p_s``.  The attempt pmf is then ``E[(1 - p_s)^(T-1) p_s]`` over sampled
realizations.  Under independent interference the law is geometric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analytic import SubsetMask, eta_for, grouped_subsets
from .errors import ExpansionTooLarge, WindowTooSmall
from .quadrature import QuadratureSpec, integrate_exterior
from .scenario import (ChannelParams, Combiner, InterferenceModel, Position, PppRealization,
                       Scenario, as_generator, sample_ppp)

#: default PPP window for conditional evaluation, in source-destination units
WINDOW_RADIUS = 30.0
#: largest admissible second-order tail residual (relative)
TAIL_RESIDUAL_LIMIT = 1e-3


@dataclass(frozen=True)
class ConditionalSuccess:
    p_s: float

    def __post_init__(self):
        if not 0.0 <= self.p_s <= 1.0:
            raise ValueError(f"conditional success {self.p_s} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class AttemptDistribution:
    """pmf[T-1] = P[first success at attempt T], T = 1..Tmax."""

    pmf: np.ndarray
    cdf: np.ndarray
    mc_replicates: int
    pmf_stderr: np.ndarray
    cdf_stderr: np.ndarray

    @property
    def tmax(self) -> int:
        return len(self.pmf)


def midpoint(scenario: Scenario) -> Position:
    s, d = scenario.source, scenario.destination
    return Position(0.5 * (s.x + d.x), 0.5 * (s.y + d.y))


def _check_dependent(params: ChannelParams):
    if params.interference is not InterferenceModel.DEPENDENT:
        raise ValueError("conditional evaluation applies to dependent interference only")


# -- conditional factors -------------------------------------------------------


@dataclass(frozen=True)
class _Product:
    """One PGFL product prod_u [p D_u prod_k R_uk + 1 - p] for fixed coefficients."""

    dest_coef: float
    relay_terms: tuple  # (position, coefficient, multiplicity)


@dataclass(frozen=True)
class _Term:
    """Signed inclusion-exclusion term: mult * sign * sum_j weight_j * product_j."""

    subset: SubsetMask
    coef: float  # sign * multiplicity
    products: tuple  # ((weight, _Product), ...)


def _terms(scenario: Scenario, params: ChannelParams, grouped: bool = True) -> list[_Term]:
    th = scenario.thresholds(params.theta)

    def relay_terms(relays):
        out: dict[Position, list] = {}
        for k in sorted(relays):
            pos = scenario.relays[k]
            out.setdefault(pos, [th.sr[k], 0])[1] += 1
        return tuple((pos, c, m) for pos, (c, m) in out.items())

    if grouped:
        subsets = list(grouped_subsets(scenario))
    else:
        subsets = [(SubsetMask.from_bits(b), 1) for b in range(1, 1 << (scenario.n_relays + 1))]
    terms = []
    for subset, mult in subsets:
        sign = 1 if subset.size % 2 else -1
        rt = relay_terms(subset.relays)
        rd = math.fsum(th.rd[k] for k in subset.relays)
        if params.combiner is Combiner.SC or subset.includes_direct:
            c_d = (th.sd if subset.includes_direct else 0.0)
            c_d += rd if params.combiner is Combiner.SC else 0.0
            products = ((1.0, _Product(c_d, rt)),)
        else:
            eta = eta_for(scenario, subset.relays).value
            products = ((eta, _Product(rd, rt)), (1.0 - eta, _Product(th.sd, rt)))
        terms.append(_Term(subset, sign * mult, products))
    return terms


def _log_bracket(prod: _Product, scenario: Scenario, p: float, x, y):
    """log of [p D_u prod R_u + 1 - p] for interferers at (x, y)."""
    law = scenario.path_loss
    d = scenario.destination
    s = np.zeros_like(x, dtype=float)
    if prod.dest_coef > 0:
        s = s + np.log1p(prod.dest_coef * law.gain_sq((x - d.x) ** 2 + (y - d.y) ** 2))
    for pos, c, m in prod.relay_terms:
        s = s + m * np.log1p(c * law.gain_sq((x - pos.x) ** 2 + (y - pos.y) ** 2))
    if p == 1.0:
        return -s
    # p e^-s + 1 - p = 1 - p (1 - e^-s)
    return np.log1p(p * np.expm1(-s))


def _tail(prod: _Product, scenario, params, center, radius, spec):
    """Tail factor exp(-lambda int_{|x-c|>R} [1 - (...)] dx) and second-order residual."""
    lam, p = params.lam, params.aloha_p
    if lam * p == 0:
        return 1.0, 0.0

    def first(x, y):
        return -_log_bracket_expm1(prod, scenario, p, x, y)

    def second(x, y):
        v = _log_bracket_expm1(prod, scenario, p, x, y)
        return v * v

    val, _ = integrate_exterior(first, center, radius, spec)
    sq, _ = integrate_exterior(second, center, radius, spec)
    return math.exp(-lam * val), 0.5 * lam * sq


def _log_bracket_expm1(prod, scenario, p, x, y):
    """[p D prod R + 1 - p] - 1 = -p (1 - D prod R)."""
    law = scenario.path_loss
    d = scenario.destination
    s = 0.0
    if prod.dest_coef > 0:
        s = s + np.log1p(prod.dest_coef * law.gain_sq((x - d.x) ** 2 + (y - d.y) ** 2))
    for pos, c, m in prod.relay_terms:
        s = s + m * np.log1p(c * law.gain_sq((x - pos.x) ** 2 + (y - pos.y) ** 2))
    return p * np.expm1(-s)


class ConditionalModel:
    """Evaluates p_s for PPP realizations of one (scenario, params) pair.

    The products over interferers inside the window are exact; the region
    outside is accounted for by its PGFL mean (tail correction).
    """

    def __init__(self, scenario: Scenario, params: ChannelParams,
                 spec: QuadratureSpec | None = None, window_radius: float = WINDOW_RADIUS,
                 center: Position | None = None, grouped: bool = True):
        _check_dependent(params)
        if params.combiner is Combiner.MRC:
            scenario.validate_for_mrc()
        self.scenario = scenario
        self.params = params
        self.window_radius = window_radius
        self.center = midpoint(scenario) if center is None else center
        self.spec = QuadratureSpec(relative_tolerance=1e-8) if spec is None else spec
        self.terms = _terms(scenario, params, grouped)
        self.products = sorted({pr for t in self.terms for _, pr in t.products},
                               key=lambda pr: (pr.dest_coef, repr(pr.relay_terms)))
        self._index = {pr: i for i, pr in enumerate(self.products)}
        tails = [_tail(pr, scenario, params, self.center, window_radius, self.spec)
                 for pr in self.products]
        self.tail = np.array([t[0] for t in tails])
        self.tail_residual = max([t[1] for t in tails], default=0.0)
        if self.tail_residual > TAIL_RESIDUAL_LIMIT:
            raise WindowTooSmall(
                f"window radius {window_radius}: tail residual {self.tail_residual:.2e} "
                f"exceeds {TAIL_RESIDUAL_LIMIT:g}")

    def log_products(self, ppp: PppRealization) -> np.ndarray:
        """log prod_u [...] inside the window, one entry per distinct product."""
        p = self.params.aloha_p
        out = np.empty(len(self.products))
        for i, pr in enumerate(self.products):
            out[i] = math.fsum(_log_bracket(pr, self.scenario, p, ppp.x, ppp.y)) if len(ppp) else 0.0
        return out

    def term_values(self, log_products: np.ndarray, tail_correction: bool = True) -> np.ndarray:
        """Unsigned conditional probabilities P[A | Phi] per inclusion-exclusion term."""
        vals = np.exp(log_products)
        if tail_correction:
            vals = vals * self.tail
        out = np.empty(len(self.terms))
        for j, t in enumerate(self.terms):
            out[j] = math.fsum(w * vals[self._index[pr]] for w, pr in t.products)
        return out

    def success(self, log_products: np.ndarray, tail_correction: bool = True) -> float:
        vals = self.term_values(log_products, tail_correction)
        return math.fsum(t.coef * v for t, v in zip(self.terms, vals))

    def sample(self, replicates: int, rng) -> np.ndarray:
        """Log-products for ``replicates`` fresh PPP realizations, shape (replicates, n_products)."""
        rng = as_generator(rng)
        out = np.empty((replicates, len(self.products)))
        for i in range(replicates):
            ppp = sample_ppp(self.params.lam, self.center, self.window_radius, rng)
            out[i] = self.log_products(ppp)
        return out

    def success_samples(self, log_products: np.ndarray) -> np.ndarray:
        vals = np.exp(log_products) * self.tail
        coefs = np.array([t.coef for t in self.terms])
        per_term = np.zeros((len(log_products), len(self.terms)))
        for j, t in enumerate(self.terms):
            for w, pr in t.products:
                per_term[:, j] += w * vals[:, self._index[pr]]
        raw = per_term @ coefs
        return np.clip(raw, 0.0, 1.0)


def conditional_success(ppp: PppRealization, scenario: Scenario, params: ChannelParams,
                        spec: QuadratureSpec | None = None, tail_correction: bool = True,
                        ) -> ConditionalSuccess:
    """Success probability of one attempt given the interferer positions."""
    model = ConditionalModel(scenario, params, spec, window_radius=ppp.window_radius, center=ppp.center)
    ps = model.success(model.log_products(ppp), tail_correction)
    return ConditionalSuccess(min(1.0, max(0.0, ps)))


def _distribution_from_ps(ps: np.ndarray, tmax: int) -> AttemptDistribution:
    n = len(ps)
    fail = 1.0 - ps
    powers = fail[:, None] ** np.arange(tmax)[None, :]  # (1-p)^(T-1)
    pmf_s = powers * ps[:, None]
    cdf_s = 1.0 - powers * fail[:, None]
    ddof = 1 if n > 1 else 0
    return AttemptDistribution(
        pmf=pmf_s.mean(axis=0),
        cdf=cdf_s.mean(axis=0),
        mc_replicates=n,
        pmf_stderr=pmf_s.std(axis=0, ddof=ddof) / math.sqrt(n),
        cdf_stderr=cdf_s.std(axis=0, ddof=ddof) / math.sqrt(n),
    )


def conditional_success_samples(scenario: Scenario, params: ChannelParams, replicates: int, rng,
                                spec: QuadratureSpec | None = None,
                                window_radius: float = WINDOW_RADIUS) -> np.ndarray:
    model = ConditionalModel(scenario, params, spec, window_radius)
    return model.success_samples(model.sample(replicates, rng))


def attempt_distribution_dependent(scenario: Scenario, params: ChannelParams, tmax: int,
                                   replicates: int, rng, spec: QuadratureSpec | None = None,
                                   window_radius: float = WINDOW_RADIUS) -> AttemptDistribution:
    if tmax < 1 or replicates < 1:
        raise ValueError("need tmax >= 1 and replicates >= 1")
    ps = conditional_success_samples(scenario, params, replicates, rng, spec, window_radius)
    return _distribution_from_ps(ps, tmax)


def attempt_distribution_independent(omega: float, tmax: int) -> AttemptDistribution:
    """Geometric law with success probability ``omega``."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega {omega} outside [0, 1]")
    t = np.arange(1, tmax + 1)
    pmf = (1.0 - omega) ** (t - 1) * omega
    cdf = 1.0 - (1.0 - omega) ** t
    zero = np.zeros(tmax)
    return AttemptDistribution(pmf, cdf, 0, zero, zero.copy())


# -- binomial / multinomial expansion (test oracle) ---------------------------------


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> tuple:
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        return ((total,),)
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return tuple(out)


def _multinomial_power(signed_terms: np.ndarray, power: int) -> np.ndarray:
    """(sum_i a_i)^power expanded over compositions, per sample row."""
    n_terms = signed_terms.shape[1]
    total = np.zeros(signed_terms.shape[0])
    for comp in _compositions(power, n_terms):
        coef = math.factorial(power)
        prod = np.ones(signed_terms.shape[0])
        for a_i, col in zip(comp, signed_terms.T):
            if a_i:
                coef //= math.factorial(a_i)
                prod = prod * col**a_i
        total += coef * prod
    return total


def expansion_cross_check(scenario: Scenario, params: ChannelParams, T: int, replicates: int, rng,
                          spec: QuadratureSpec | None = None,
                          window_radius: float = WINDOW_RADIUS) -> float:
    """|P_S^T via binomial + multinomial expansion - P_S^T via direct power| on shared samples."""
    if T > 3 or scenario.n_relays > 2:
        raise ExpansionTooLarge(f"expansion supports T <= 3 and N <= 2, got T={T}, N={scenario.n_relays}")
    if T < 1:
        raise ValueError("T must be at least 1")
    model = ConditionalModel(scenario, params, spec, window_radius, grouped=False)
    logs = model.sample(replicates, rng)
    direct = _distribution_from_ps(model.success_samples(logs), T).pmf[T - 1]
    vals = np.exp(logs) * model.tail
    signed = np.zeros((replicates, len(model.terms)))
    for j, t in enumerate(model.terms):
        for w, pr in t.products:
            signed[:, j] += t.coef * w * vals[:, model._index[pr]]
    expanded = 0.0
    for t in range(T):
        moment = _multinomial_power(signed, t + 1).mean()
        expanded += math.comb(T - 1, t) * (-1) ** t * moment
    return abs(expanded - direct)
