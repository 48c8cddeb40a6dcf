"""Experiment kinds: build jobs from a config, evaluate them, assemble CSV tables.

Every job evaluates one sweep point and returns ``{channel label: {column:
value}}``.  Jobs are independent and draw randomness only from substreams
keyed by their point index, so the tables do not depend on the number of
worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import analytic, montecarlo, retransmission
from .config import ExperimentSpec
from .errors import (CoopRelayError, DegenerateGeometry, EtaSingular, NonConvergence, TooManyRelays,
                     WindowTooSmall)
from .quadrature import QuadratureSpec
from .scenario import Combiner, InterferenceModel, Position, Scenario, substream

#: relays requested exactly on the source or destination are moved this far inward
ENDPOINT_OFFSET = 1e-6
_NUMERICAL = (NonConvergence, EtaSingular, WindowTooSmall, TooManyRelays, DegenerateGeometry)
_MODEL_TAG = {InterferenceModel.DEPENDENT: "dep", InterferenceModel.INDEPENDENT: "ind"}


class PointFailure(CoopRelayError):
    """A numerical failure at an identified experiment point."""


@dataclass
class Table:
    suffix: str | None
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


# -- helpers -----------------------------------------------------------------------


def clear_endpoints(pos: Position, scenario_like: Scenario | None = None) -> Position:
    s = Position(0.0, 0.0) if scenario_like is None else scenario_like.source
    d = Position(1.0, 0.0) if scenario_like is None else scenario_like.destination
    if pos == s:
        return Position(pos.x + ENDPOINT_OFFSET * (d.x - s.x), pos.y + ENDPOINT_OFFSET * (d.y - s.y))
    if pos == d:
        return Position(pos.x - ENDPOINT_OFFSET * (d.x - s.x), pos.y - ENDPOINT_OFFSET * (d.y - s.y))
    return pos


def _prepare(spec: ExperimentSpec, scenario: Scenario, notes: list) -> Scenario:
    """Apply the optional eta nudge when MRC is requested."""
    if Combiner.MRC not in spec.combiners or not spec.eta_nudge:
        return scenario
    if not scenario.singular_subsets():
        return scenario
    nudged, steps = scenario.nudged_for_mrc(spec.eta_nudge)
    notes.append(f"eta nudge: {steps} step(s) of {spec.eta_nudge:g} for relays {_fmt_relays(scenario.relays)}")
    return nudged


def _fmt_relays(relays) -> str:
    return ";".join(f"{p.x:.6g} {p.y:.6g}" for p in relays)


def _qspec(spec: ExperimentSpec) -> QuadratureSpec:
    return QuadratureSpec(relative_tolerance=spec.tol)


def _stream(spec: ExperimentSpec, *indices):
    return substream(spec.seed, *indices)


def delivery_columns(spec: ExperimentSpec, scenario: Scenario, label: str, index: tuple,
                     measure: str = "omega", scale: float = 1.0) -> dict:
    """Columns ``{measure}_{comb}_{model}_{label}_{engine}`` and ``err_...`` per channel."""
    out = {}
    for ci, (name, base) in enumerate(spec.channels()):
        cols = out.setdefault(name, {})
        for mi, model in enumerate(spec.interference):
            tag = _MODEL_TAG[model]
            for engine in spec.engines:
                if engine == "conditional" and model is InterferenceModel.INDEPENDENT:
                    continue
                if engine == "montecarlo":
                    res = montecarlo.estimate_delivery_many(
                        scenario, [base.with_(interference=model)], spec.trials,
                        rng=_stream(spec, *index, ci, mi, 2))[0]
                for comb in spec.combiners:
                    params = base.with_(interference=model, combiner=comb)
                    if engine == "analytic":
                        r = analytic.delivery_probability(scenario, params, _qspec(spec))
                        val, err = r.clamped, r.estimated_quadrature_error
                    elif engine == "montecarlo":
                        val, err = res[comb].mean, res[comb].stderr
                    else:
                        ps = retransmission.conditional_success_samples(
                            scenario, params, spec.replicates, _stream(spec, *index, ci, mi, 1),
                            _qspec(spec))
                        val = float(ps.mean())
                        err = float(ps.std(ddof=1) / math.sqrt(len(ps))) if len(ps) > 1 else 0.0
                    key = f"{comb.value}_{tag}_{label}_{engine}"
                    cols[f"{measure}_{key}"] = scale * val
                    cols[f"err_{key}"] = scale * err
    return out


def _merge(parts: list[dict]) -> dict:
    out: dict = {}
    for part in parts:
        for name, cols in part.items():
            out.setdefault(name, {}).update(cols)
    return out


# -- per-point jobs ------------------------------------------------------------------


def _relay_sweep_point(spec: ExperimentSpec, i: int, r: float):
    notes: list = []
    relay = clear_endpoints(Position(r, spec.relay_y))
    scenario = _prepare(spec, spec.scenario([relay]), notes)
    result = delivery_columns(spec, scenario, "n1", (i,))
    if "analytic" in spec.engines and InterferenceModel.DEPENDENT in spec.interference:
        for name, base in spec.channels():
            one = analytic.one_relay_closed_forms(scenario, base, _qspec(spec))
            result[name].update({"p_s0": one.s0, "p_s1_sc": one.s1_sc, "p_s0_s1_sc": one.s0_s1_sc,
                                 "p_s1_mrc": one.s1_mrc, "p_s0_s1_mrc": one.s0_s1_mrc})
    return result, notes


def _cluster_point(spec: ExperimentSpec, i: int, r: float, fixed: bool):
    notes: list = []
    parts = []
    moving = clear_endpoints(Position(r, spec.relay_y))
    for n in spec.relay_counts:
        if fixed:
            relays = [Position(spec.fixed_x, spec.relay_y)] * (n - 1) + [moving]
        else:
            relays = [moving] * n
        scenario = _prepare(spec, spec.scenario(relays), notes)
        parts.append(delivery_columns(spec, scenario, f"n{n}", (i, n)))
    return _merge(parts), notes


def _placements(spec: ExperimentSpec, edge: float, n: int, i: int):
    """Uniform relay placements in a square centered between source and destination."""
    rng = _stream(spec, i, n, 0)
    need_mrc = Combiner.MRC in spec.combiners
    placements, redraws = [], 0
    while len(placements) < spec.draws:
        xy = rng.random((n, 2))
        relays = [Position(0.5 + edge * (u - 0.5), edge * (v - 0.5)) for u, v in xy]
        try:
            scenario = spec.scenario(relays)
        except DegenerateGeometry:
            redraws += 1
            continue
        if need_mrc and scenario.singular_subsets():
            redraws += 1
            continue
        placements.append(scenario)
    return placements, redraws


def _random_square_point(spec: ExperimentSpec, i: int, edge: float):
    out: dict = {}
    for n in spec.relay_counts:
        placements, redraws = _placements(spec, edge, n, i)
        for name, base in spec.channels():
            cols = out.setdefault(name, {})
            cols[f"redraws_n{n}"] = redraws
            for model in spec.interference:
                for comb in spec.combiners:
                    params = base.with_(interference=model, combiner=comb)
                    vals = np.array([analytic.delivery_probability(sc, params, _qspec(spec)).clamped
                                     for sc in placements])
                    key = f"{comb.value}_{_MODEL_TAG[model]}_n{n}"
                    cols[f"mean_{key}"] = float(vals.mean())
                    cols[f"std_{key}"] = float(vals.std()) if np.ptp(vals) > 0 else 0.0
    return out, []


def _throughput_point(spec: ExperimentSpec, i: int, lam: float, p: float):
    notes: list = []
    parts = []
    local = replace(spec, lam=lam, aloha_p=p)
    for n in spec.relay_counts:
        relays = [Position(spec.fixed_x, spec.relay_y)] * n
        scenario = _prepare(spec, spec.scenario(relays), notes)
        parts.append(delivery_columns(local, scenario, f"n{n}", (i, n), measure="throughput", scale=p))
    cols = _merge(parts)["custom"]
    return {"custom": {"lambda": lam, "p": p, "lambda_p": lam * p, **cols}}, notes


def _cdf_columns(spec: ExperimentSpec, ci: int, name: str, base, label: str, scenario: Scenario,
                 index: tuple):
    cols = {}
    for mi, model in enumerate(spec.interference):
        tag = _MODEL_TAG[model]
        for comb in spec.combiners:
            params = base.with_(interference=model, combiner=comb)
            for engine in spec.engines:
                stream = _stream(spec, *index, ci, mi, ENGINE_INDEX[engine])
                if engine == "analytic":
                    if model is InterferenceModel.DEPENDENT:
                        continue
                    r = analytic.delivery_probability(scenario, params, _qspec(spec))
                    dist = retransmission.attempt_distribution_independent(r.clamped, spec.tmax)
                    t = np.arange(1, spec.tmax + 1)
                    err = t * (1 - r.clamped) ** (t - 1) * r.estimated_quadrature_error
                elif engine == "conditional":
                    if model is InterferenceModel.INDEPENDENT:
                        continue
                    dist = retransmission.attempt_distribution_dependent(
                        scenario, params, spec.tmax, spec.replicates, stream, _qspec(spec))
                    err = dist.cdf_stderr
                else:
                    dist = montecarlo.estimate_attempts(scenario, params, spec.tmax, spec.trials, stream)
                    err = dist.cdf_stderr
                key = f"{comb.value}_{tag}_{label}_{engine}"
                cols[f"cdf_{key}"] = [float(v) for v in dist.cdf]
                cols[f"err_{key}"] = [float(v) for v in err]
    return cols


ENGINE_INDEX = {"analytic": 0, "conditional": 1, "montecarlo": 2}


def _retransmission_job(spec: ExperimentSpec, ci: int, n: int, baseline: bool):
    notes: list = []
    name, base = spec.channels()[ci]
    if baseline:
        scenario, label = spec.scenario([], power=2.0), "baseline"
    else:
        scenario = _prepare(spec, spec.scenario([Position(spec.fixed_x, spec.relay_y)] * n), notes)
        label = f"n{n}"
    idx = (0 if baseline else 1, n)
    return {name: _cdf_columns(spec, ci, name, base, label, scenario, idx)}, notes


def _point_job(spec: ExperimentSpec, ci: int, mi: int, comb_i: int):
    notes: list = []
    name, base = spec.channels()[ci]
    model = spec.interference[mi]
    comb = spec.combiners[comb_i]
    params = base.with_(interference=model, combiner=comb)
    scenario = _prepare(spec, spec.scenario(), notes)
    row = {"preset": name, "theta": params.theta, "lambda": params.lam, "p": params.aloha_p,
           "combiner": comb.value, "interference": model.value}
    for engine in spec.engines:
        stream = _stream(spec, ci, mi, comb_i, ENGINE_INDEX[engine])
        if engine == "analytic":
            r = analytic.delivery_probability(scenario, params, _qspec(spec))
            val, err = r.clamped, r.estimated_quadrature_error
        elif engine == "montecarlo":
            est = montecarlo.estimate_delivery_many(scenario, [params], spec.trials, rng=stream)[0][comb]
            val, err = est.mean, est.stderr
        else:
            ps = retransmission.conditional_success_samples(scenario, params, spec.replicates, stream,
                                                            _qspec(spec))
            val = float(ps.mean())
            err = float(ps.std(ddof=1) / math.sqrt(len(ps))) if len(ps) > 1 else 0.0
        row[f"omega_{engine}"] = val
        row[f"err_{engine}"] = err
    return {"point": row}, notes


# -- execution -------------------------------------------------------------------------


def _call(job):
    fn, desc = job
    try:
        return fn()
    except _NUMERICAL as exc:
        raise PointFailure(f"{desc}: {type(exc).__name__}: {exc}") from None


def _run_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def _sweep_tables(spec: ExperimentSpec, axis: str, results, notes) -> list[Table]:
    tables = []
    for name, _ in spec.channels():
        columns = None
        table = Table(name, [], notes=list(notes))
        for value, res in results:
            cols = res[name]
            if columns is None:
                columns = [axis] + list(cols)
                table.columns = columns
            table.rows.append([value] + [cols[c] for c in columns[1:]])
        tables.append(table)
    return tables


def build_jobs(spec: ExperimentSpec):
    """List of (callable, description) and a function assembling the tables."""
    kind = spec.kind
    if kind in ("relay_sweep", "cluster_sweep", "fixed_cluster_sweep", "random_square"):
        values = spec.sweep_values()
        if kind == "relay_sweep":
            jobs = [(partial(_relay_sweep_point, spec, i, v), f"{kind} R={v:.6g}") for i, v in enumerate(values)]
        elif kind == "random_square":
            jobs = [(partial(_random_square_point, spec, i, v), f"{kind} L={v:.6g}") for i, v in enumerate(values)]
        else:
            jobs = [(partial(_cluster_point, spec, i, v, kind == "fixed_cluster_sweep"), f"{kind} R={v:.6g}")
                    for i, v in enumerate(values)]
        axis = "L" if kind == "random_square" else "R"

        def assemble(results):
            notes = [n for _, ns in results for n in ns]
            return _sweep_tables(spec, axis, [(v, r) for v, (r, _) in zip(values, results)], notes)
        return jobs, assemble

    if kind == "throughput_sweep":
        grid = [(lam, p) for lam in spec.lams for p in spec.sweep_values()]
        jobs = [(partial(_throughput_point, spec, i, lam, p), f"{kind} lambda={lam:.6g} p={p:.6g}")
                for i, (lam, p) in enumerate(grid)]

        def assemble(results):
            notes = [n for _, ns in results for n in ns]
            rows = [r["custom"] for r, _ in results]
            columns = list(rows[0])
            return [Table(None, columns, [[row[c] for c in columns] for row in rows], notes)]
        return jobs, assemble

    if kind == "retransmission_cdf":
        keys = []
        for ci, _ in enumerate(spec.channels()):
            for n in spec.relay_counts:
                keys.append((ci, n, False))
            if spec.baseline:
                keys.append((ci, 0, True))
        jobs = [(partial(_retransmission_job, spec, ci, n, b),
                 f"{kind} channel={spec.channels()[ci][0]} {'baseline' if b else f'N={n}'}")
                for ci, n, b in keys]

        def assemble(results):
            notes = [n for _, ns in results for n in ns]
            tables = []
            for name, _ in spec.channels():
                cols: dict = {}
                for r, _ in results:
                    cols.update(r.get(name, {}))
                columns = ["T"] + list(cols)
                rows = [[t + 1] + [cols[c][t] for c in columns[1:]] for t in range(spec.tmax)]
                tables.append(Table(name, columns, rows, list(notes)))
            return tables
        return jobs, assemble

    if kind == "point":
        keys = [(ci, mi, k) for ci in range(len(spec.channels()))
                for mi in range(len(spec.interference)) for k in range(len(spec.combiners))]
        jobs = [(partial(_point_job, spec, *key), f"point {key}") for key in keys]

        def assemble(results):
            notes = [n for _, ns in results for n in ns]
            rows = [r["point"] for r, _ in results]
            columns = list(rows[0])
            return [Table(None, columns, [[row[c] for c in columns] for row in rows], notes)]
        return jobs, assemble

    raise ValueError(f"kind {kind!r} is not a table experiment")


def run_experiment(spec: ExperimentSpec) -> list[Table]:
    jobs, assemble = build_jobs(spec)
    return assemble(_run_jobs(jobs, spec.workers))
