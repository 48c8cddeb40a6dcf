"""Acceptance matrix: closed-form anchors, cross-engine agreement and orderings.

Each check returns a :class:`CheckResult`; :func:`run_acceptance` runs a
selection of them and prints one line per check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import analytic, montecarlo, retransmission
from .scenario import (Combiner, InterferenceModel, Position, Scenario, line_scenario, preset,
                       substream)

DEFAULT_TRIALS = 1_000_000
DEFAULT_REPLICATES = 10_000


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: float
    limit: float
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} [{self.number}] {self.name}: measured {self.measured:.4g} "
                f"(limit {self.limit:.4g}) {self.detail} [{self.seconds:.1f}s]")


@dataclass(frozen=True)
class Budget:
    trials: int = DEFAULT_TRIALS
    replicates: int = DEFAULT_REPLICATES
    seed: int = 20261018

    def __post_init__(self):
        if self.trials < 1 or self.replicates < 1:
            raise ValueError("acceptance budget needs positive trials and replicates")


def _closed_form(theta_sd: float, lam_p: float) -> float:
    return math.exp(-lam_p * math.pi**2 * math.sqrt(theta_sd) / 2)


def check_closed_form(budget: Budget):
    rng = np.random.default_rng(substream(budget.seed, 1).integers(2**63))
    worst = 0.0
    for _ in range(20):
        theta = float(rng.uniform(0.05, 3.0))
        lam = float(rng.uniform(0.05, 2.0))
        p = float(rng.uniform(0.05, 1.0))
        dist = float(rng.uniform(0.3, 2.0))
        sc = Scenario(destination=Position(dist, 0.0))
        params = preset("good").with_(theta=theta, lam=lam, aloha_p=p)
        omega = analytic.delivery_probability(sc, params).omega
        exact = _closed_form(theta * dist**4, lam * p)
        worst = max(worst, abs(omega - exact) / exact)
    harsh = analytic.delivery_probability(Scenario(), preset("harsh")).omega
    good = analytic.delivery_probability(Scenario(), preset("good")).omega
    # published anchors are rounded; also compare against the formula itself
    anchors_ok = (abs(harsh - 7.1919e-3) <= 5e-8 and abs(good - 0.45830) <= 2e-5
                  and abs(harsh / _closed_form(1.0, 1.0) - 1) <= 1e-6
                  and abs(good / _closed_form(0.1, 0.5) - 1) <= 1e-6)
    return worst <= 1e-6 and anchors_ok, worst, 1e-6, f"harsh={harsh:.6g} good={good:.6g}"


def check_one_relay(budget: Budget):
    worst = 0.0
    for pos in (Position(0.25, 0), Position(0.5, 0), Position(0.75, 0), Position(0.5, 0.3)):
        sc = Scenario(relays=(pos,))
        for name in ("good", "harsh"):
            forms = analytic.one_relay_closed_forms(sc, preset(name))
            for comb, ref in ((Combiner.SC, forms.omega_sc), (Combiner.MRC, forms.omega_mrc)):
                omega = analytic.delivery_probability(sc, preset(name, comb)).omega
                worst = max(worst, abs(omega - ref))
    return worst <= 1e-8, worst, 1e-8, "8 configurations x {SC, MRC}"


def conditional_exceedance_oracle(g_sd: float, g_rd, beta: float) -> float:
    """P[h0 g_sd + h_k g_rd_k > beta for all k] by integrating over h0."""
    g_rd = tuple(g_rd)

    def given_h0(x):
        return math.exp(-x) * math.prod(math.exp(-(beta - x * g_sd) / g) for g in g_rd)

    inner = quad(given_h0, 0.0, beta / g_sd, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return inner + math.exp(-beta / g_sd)


def check_mrc_oracle(budget: Budget):
    rng = np.random.default_rng(substream(budget.seed, 3).integers(2**63))
    worst, count = 0.0, 0
    for k in (1, 2, 3):
        done = 0
        while done < 50:
            g_sd = float(rng.uniform(0.2, 3.0))
            g_rd = tuple(float(v) for v in rng.uniform(0.2, 3.0, k))
            beta = float(rng.uniform(0.1, 3.0))
            if abs(1.0 - sum(g_sd / g for g in g_rd)) < 1e-3:
                continue
            ref = conditional_exceedance_oracle(g_sd, g_rd, beta)
            worst = max(worst, abs(analytic.combined_exceedance(g_sd, g_rd, beta) - ref))
            done += 1
            count += 1
    return worst <= 1e-10, worst, 1e-10, f"{count} gain tuples"


MATRIX_GEOMETRIES = (("N=1@0.25", (0.25,)), ("N=3@0.5", (0.5, 0.5, 0.5)))


def check_mc_matrix(budget: Budget):
    worst, lines = 0.0, []
    for gi, (label, xs) in enumerate(MATRIX_GEOMETRIES):
        sc = line_scenario(xs)
        for mi, model in enumerate(InterferenceModel):
            configs = [preset("good", interference=model), preset("harsh", interference=model)]
            res = montecarlo.estimate_delivery_many(sc, configs, budget.trials,
                                                    rng=substream(budget.seed, 4, gi, mi))
            for cfg, est in zip(configs, res):
                for comb in Combiner:
                    omega = analytic.delivery_probability(sc, cfg.with_(combiner=comb)).omega
                    z = abs(est[comb].mean - omega) / est[comb].stderr
                    worst = max(worst, z)
                    lines.append(f"{label} {model.value[:3]} theta={cfg.theta:g} {comb.value} z={z:.2f}")
    return worst <= 3.0, worst, 3.0, f"16 cells at {budget.trials} trials; " + ", ".join(lines)


TOWER_SPOTS = (
    ("good", Combiner.SC, (0.5,)),
    ("harsh", Combiner.MRC, (0.25,)),
    ("b", Combiner.SC, (0.3, 0.6)),
    ("good", Combiner.MRC, (0.5, 0.5, 0.5)),
)


def check_tower(budget: Budget):
    worst = 0.0
    for i, (name, comb, xs) in enumerate(TOWER_SPOTS):
        sc = line_scenario(xs)
        params = preset(name, comb)
        ps = retransmission.conditional_success_samples(sc, params, budget.replicates,
                                                        substream(budget.seed, 5, i))
        omega = analytic.delivery_probability(sc, params).omega
        worst = max(worst, abs(ps.mean() - omega) / (ps.std(ddof=1) / math.sqrt(len(ps))))
    return worst <= 3.0, worst, 3.0, f"{len(TOWER_SPOTS)} configurations, {budget.replicates} samples each"


FIG9 = (0.5, 0.5, 0.5)
TMAX = 5


def check_retransmission(budget: Budget):
    sc = line_scenario(FIG9)
    geometric_err = 0.0
    worst = 0.0
    mc_trials = max(1000, budget.trials // 10)
    for i, name in enumerate(("good", "harsh")):
        ind = preset(name, Combiner.MRC, InterferenceModel.INDEPENDENT)
        omega = analytic.delivery_probability(sc, ind).omega
        dist = retransmission.attempt_distribution_independent(omega, TMAX)
        t = np.arange(1, TMAX + 1)
        geometric_err = max(geometric_err, float(np.max(np.abs(dist.cdf - (1 - (1 - omega) ** t)))))
        dep = preset(name, Combiner.MRC)
        cond = retransmission.attempt_distribution_dependent(sc, dep, TMAX, budget.replicates,
                                                             substream(budget.seed, 6, i, 0))
        mc = montecarlo.estimate_attempts(sc, dep, TMAX, mc_trials, substream(budget.seed, 6, i, 1))
        joint = np.sqrt(cond.cdf_stderr**2 + mc.cdf_stderr**2)
        worst = max(worst, float(np.max(np.abs(cond.cdf - mc.cdf) / joint)))
    ok = geometric_err <= 1e-12 and worst <= 3.0
    return ok, worst, 3.0, f"geometric law error {geometric_err:.2g}; MC {mc_trials} trials"


def check_expansion(budget: Budget):
    a = retransmission.expansion_cross_check(line_scenario([0.5]), preset("good"), 2, 1000,
                                             substream(budget.seed, 7, 0))
    b = retransmission.expansion_cross_check(line_scenario([0.3, 0.6]), preset("harsh"), 3, 1000,
                                             substream(budget.seed, 7, 1))
    worst = max(a, b)
    return worst < 1e-12, worst, 1e-12, "(T=2, N=1) and (T=3, N=2)"


def check_orderings(budget: Budget):
    tol = 1e-6  # generous bound on quadrature error at default tolerance
    out = []

    def omega(xs, name, comb=Combiner.SC, model=InterferenceModel.DEPENDENT):
        return analytic.delivery_probability(line_scenario(xs), preset(name, comb, model)).omega

    out.append(("a", omega([0.5], "harsh") - omega([0.5], "harsh", model=InterferenceModel.INDEPENDENT), tol))
    out.append(("b", omega([0.8] * 5, "good", model=InterferenceModel.INDEPENDENT) - omega([0.8] * 5, "good"), tol))
    gain_near_s = omega([0.2], "good", Combiner.MRC) - omega([0.2], "good")
    gain_near_d = omega([0.8], "good", Combiner.MRC) - omega([0.8], "good")
    out.append(("c", gain_near_s - gain_near_d, tol))
    sc = line_scenario(FIG9)
    dep = retransmission.attempt_distribution_dependent(sc, preset("harsh", Combiner.MRC), TMAX,
                                                        budget.replicates, substream(budget.seed, 8, 0))
    ind_omega = analytic.delivery_probability(
        sc, preset("harsh", Combiner.MRC, InterferenceModel.INDEPENDENT)).omega
    ind_cdf = 1 - (1 - ind_omega) ** TMAX
    out.append(("d", ind_cdf - dep.cdf[-1], 3 * dep.cdf_stderr[-1]))
    coop = retransmission.attempt_distribution_dependent(line_scenario([0.5]), preset("harsh", Combiner.MRC),
                                                         TMAX, budget.replicates, substream(budget.seed, 8, 1))
    base = retransmission.attempt_distribution_dependent(Scenario(source_power_scale=2.0), preset("harsh"),
                                                         TMAX, budget.replicates, substream(budget.seed, 8, 2))
    joint = math.hypot(coop.cdf_stderr[-1], base.cdf_stderr[-1])
    out.append(("e", coop.cdf[-1] - base.cdf[-1], 3 * joint))
    ratios = [(tag, margin / limit) for tag, margin, limit in out]
    worst = min(r for _, r in ratios)
    detail = ", ".join(f"({tag}) margin/limit={r:.3g}" for tag, r in ratios)
    return worst > 1.0, worst, 1.0, detail


def check_pathwise(budget: Budget):
    draws = max(100_000, min(budget.trials, 200_000))
    violations = 0
    for mi, model in enumerate(InterferenceModel):
        sc = line_scenario([0.3, 0.5, 0.7])
        configs = [preset("harsh", interference=model).with_(theta=th) for th in (0.5, 1.0, 2.0)]
        configs.append(preset("b", interference=model))
        done, block = 0, 0
        while done < draws:
            size = min(montecarlo.BLOCK_SIZE, draws - done)
            batches = montecarlo.simulate_block(sc, configs, size, substream(budget.seed, 9, mi, block))
            for b in batches:
                sc_all = b.overall(Combiner.SC)
                violations += int(np.sum(sc_all & ~b.overall(Combiner.MRC)))
                violations += int(np.sum(b.rd & ~b.combined))
                for comb in Combiner:
                    violations += int(np.sum(b.overall(comb, [0, 1]) & ~b.overall(comb)))
                    violations += int(np.sum(b.overall(comb, [0]) & ~b.overall(comb, [0, 1])))
            for lo, hi in zip(batches[:2], batches[1:3]):  # increasing theta
                for comb in Combiner:
                    violations += int(np.sum(hi.overall(comb) & ~lo.overall(comb)))
            done += size
            block += 1
    return violations == 0, float(violations), 0.0, f"{draws} coupled draws per interference model"


CHECKS: dict[str, tuple[int, Callable]] = {
    "closed_form": (1, check_closed_form),
    "one_relay": (2, check_one_relay),
    "mrc_oracle": (3, check_mrc_oracle),
    "mc_matrix": (4, check_mc_matrix),
    "tower": (5, check_tower),
    "retransmission": (6, check_retransmission),
    "expansion": (7, check_expansion),
    "orderings": (8, check_orderings),
    "pathwise": (9, check_pathwise),
}


def run_check(name: str, budget: Budget) -> CheckResult:
    number, fn = CHECKS[name]
    start = time.perf_counter()
    try:
        passed, measured, limit, detail = fn(budget)
    except Exception as exc:  # a crash is a failed check, reported with its cause
        passed, measured, limit, detail = False, float("nan"), float("nan"), f"error: {exc!r}"
    return CheckResult(number, name, bool(passed), float(measured), float(limit), detail,
                       time.perf_counter() - start)


def run_acceptance(budget: Budget | None = None, checks=None, echo=print) -> list[CheckResult]:
    budget = Budget() if budget is None else budget
    names = list(CHECKS) if not checks else list(checks)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown acceptance checks: {', '.join(unknown)}")
    results = []
    for name in names:
        res = run_check(name, budget)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
