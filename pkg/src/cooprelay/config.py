"""Experiment configuration files.

Files use ``key = value`` lines grouped in ``[section]`` blocks; every key is
addressed as ``section.key`` in error messages and in command-line
overrides.  Lists are comma separated, relay positions are ``x y`` pairs
separated by ``;``.

Example::

    [experiment]
    kind = cluster_sweep
    engines = analytic
    seed = 7
    output = fig_cluster.csv

    [channel]
    presets = good, harsh
    combiners = sc
    interference = dependent, independent

    [sweep]
    start = 0
    stop = 1
    steps = 41
    relay_counts = 1, 3, 5
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError, CoopRelayError
from .scenario import (PRESETS, ChannelParams, Combiner, InterferenceModel, PathLossLaw, Position,
                       Scenario, preset)

KINDS = ("point", "relay_sweep", "cluster_sweep", "fixed_cluster_sweep", "random_square",
         "throughput_sweep", "retransmission_cdf", "acceptance")
ENGINES = ("analytic", "conditional", "montecarlo")

# section.key -> attribute of ExperimentSpec
_KEYS = {
    "experiment.kind": "kind",
    "experiment.engines": "engines",
    "experiment.seed": "seed",
    "experiment.trials": "trials",
    "experiment.replicates": "replicates",
    "experiment.output": "output",
    "experiment.tol": "tol",
    "experiment.workers": "workers",
    "experiment.eta_nudge": "eta_nudge",
    "experiment.checks": "checks",
    "scenario.relays": "relays",
    "scenario.power": "power",
    "scenario.alpha": "alpha",
    "channel.presets": "presets",
    "channel.theta": "theta",
    "channel.lambda": "lam",
    "channel.p": "aloha_p",
    "channel.lambdas": "lams",
    "channel.combiners": "combiners",
    "channel.interference": "interference",
    "sweep.start": "start",
    "sweep.stop": "stop",
    "sweep.steps": "steps",
    "sweep.relay_counts": "relay_counts",
    "sweep.relay_y": "relay_y",
    "sweep.fixed_x": "fixed_x",
    "sweep.draws": "draws",
    "sweep.tmax": "tmax",
    "sweep.baseline": "baseline",
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    engines: tuple[str, ...] = ("analytic",)
    seed: int = 0
    trials: int = 100_000
    replicates: int = 2_000
    output: str = "results.csv"
    tol: float = 1e-8
    workers: int = 1
    eta_nudge: float = 0.0  # radial relay displacement; 0 = reject singular MRC geometries
    checks: tuple[str, ...] = ()
    relays: tuple[Position, ...] = ()
    power: float = 1.0
    alpha: float = 4.0
    presets: tuple[str, ...] = ("good", "harsh")
    theta: float | None = None
    lam: float | None = None
    aloha_p: float | None = None
    lams: tuple[float, ...] = ()
    combiners: tuple[Combiner, ...] = (Combiner.SC,)
    interference: tuple[InterferenceModel, ...] = (InterferenceModel.DEPENDENT,)
    start: float = 0.0
    stop: float = 1.0
    steps: int = 41
    relay_counts: tuple[int, ...] = (1,)
    relay_y: float = 0.0
    fixed_x: float = 0.2
    draws: int = 50
    tmax: int = 5
    baseline: bool = False
    #: keys set explicitly, for kind-specific checks
    given: frozenset = field(default=frozenset(), compare=False)

    @property
    def law(self) -> PathLossLaw:
        return PathLossLaw(self.alpha)

    def channels(self) -> list[tuple[str, ChannelParams]]:
        """(label, params) for each configured channel; combiner and model are set per use."""
        if self.theta is not None:
            lam = 1.0 if self.lam is None else self.lam
            p = 1.0 if self.aloha_p is None else self.aloha_p
            return [("custom", ChannelParams(self.theta, lam, p))]
        return [(name, preset(name)) for name in self.presets]

    def sweep_values(self) -> list[float]:
        if self.steps == 1:
            return [self.start]
        return [self.start + (self.stop - self.start) * i / (self.steps - 1) for i in range(self.steps)]

    def scenario(self, relays=None, power=None) -> Scenario:
        return Scenario(relays=tuple(self.relays if relays is None else relays),
                        source_power_scale=self.power if power is None else power,
                        path_loss=self.law)

    def digest(self) -> str:
        """Hash of every setting that affects results (not workers or output path)."""
        parts = []
        for f in fields(self):
            if f.name in ("workers", "output", "given"):
                continue
            parts.append(f"{f.name}={_canonical(getattr(self, f.name))}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


def _canonical(v) -> str:
    if isinstance(v, tuple):
        return "(" + ",".join(_canonical(x) for x in v) + ")"
    if isinstance(v, Position):
        return f"{v.x!r} {v.y!r}"
    if isinstance(v, (Combiner, InterferenceModel)):
        return v.value
    return repr(v)


# -- value parsers ----------------------------------------------------------------


def _items(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(text):
    return int(str(text).strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


DEFAULT_NUDGE = 1e-6


def _nudge(text):
    """``true``/``false`` or an explicit displacement; 0 disables the nudge."""
    try:
        return DEFAULT_NUDGE if _bool(text) else 0.0
    except ValueError:
        eps = _float(text)
    if eps < 0:
        raise ValueError("displacement must be non-negative")
    return eps


def _relays(text):
    out = []
    for chunk in str(text).split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"relay {chunk!r} is not an 'x y' pair")
        out.append(Position(_float(parts[0]), _float(parts[1])))
    return tuple(out)


def _choice(options):
    def parse(text):
        vals = tuple(_items(text))
        if not vals:
            raise ValueError("empty list")
        for v in vals:
            if v not in options:
                raise ValueError(f"{v!r} not one of {', '.join(options)}")
        return vals
    return parse


_PARSERS = {
    "kind": lambda t: _choice(KINDS)(t)[0],
    "engines": _choice(ENGINES),
    "seed": _int,
    "trials": _int,
    "replicates": _int,
    "output": str,
    "tol": _float,
    "workers": _int,
    "eta_nudge": _nudge,
    "checks": lambda t: tuple(_items(t)),
    "relays": _relays,
    "power": _float,
    "alpha": _float,
    "presets": _choice(tuple(PRESETS)),
    "theta": _float,
    "lam": _float,
    "aloha_p": _float,
    "lams": lambda t: tuple(_float(v) for v in _items(t)),
    "combiners": lambda t: tuple(Combiner(v) for v in _choice(("sc", "mrc"))(t)),
    "interference": lambda t: tuple(InterferenceModel(v)
                                    for v in _choice(("dependent", "independent"))(t)),
    "start": _float,
    "stop": _float,
    "steps": _int,
    "relay_counts": lambda t: tuple(_int(v) for v in _items(t)),
    "relay_y": _float,
    "fixed_x": _float,
    "draws": _int,
    "tmax": _int,
    "baseline": _bool,
}


def _validate(spec: ExperimentSpec) -> None:
    def fail(key, msg):
        raise ConfigError(key, msg)

    if spec.trials < 1:
        fail("experiment.trials", "must be at least 1")
    if spec.replicates < 1:
        fail("experiment.replicates", "must be at least 1")
    if spec.workers < 1:
        fail("experiment.workers", "must be at least 1")
    if not spec.tol > 0:
        fail("experiment.tol", "must be positive")
    if spec.steps < 1:
        fail("sweep.steps", "must be at least 1")
    if spec.kind != "point" and spec.steps > 1 and spec.stop == spec.start \
            and spec.kind not in ("retransmission_cdf", "acceptance"):
        fail("sweep.stop", "sweep range is empty")
    if any(n < 0 for n in spec.relay_counts):
        fail("sweep.relay_counts", "relay counts must be non-negative")
    if spec.draws < 1:
        fail("sweep.draws", "must be at least 1")
    if spec.tmax < 1:
        fail("sweep.tmax", "must be at least 1")
    if spec.kind == "random_square" and spec.start < 0:
        fail("sweep.start", "square edge must be non-negative")
    if spec.kind == "fixed_cluster_sweep" and any(n < 1 for n in spec.relay_counts):
        fail("sweep.relay_counts", "need at least one relay")
    if spec.kind == "throughput_sweep":
        if spec.theta is None:
            fail("channel.theta", "throughput_sweep needs an explicit threshold")
        if not spec.lams:
            fail("channel.lambdas", "throughput_sweep needs at least one density")
        if not (0 <= spec.start <= 1 and 0 <= spec.stop <= 1):
            fail("sweep.start", "ALOHA probability sweep must lie in [0, 1]")
    if spec.kind == "point" and "conditional" in spec.engines \
            and InterferenceModel.INDEPENDENT in spec.interference:
        fail("experiment.engines", "the conditional engine applies to dependent interference only")
    if spec.kind == "random_square" and set(spec.engines) - {"analytic"}:
        fail("experiment.engines", "random_square supports the analytic engine only")
    if spec.kind == "retransmission_cdf" and "analytic" in spec.engines \
            and InterferenceModel.DEPENDENT in spec.interference and len(spec.engines) == 1:
        fail("experiment.engines", "dependent retransmissions need the conditional or montecarlo engine")
    try:
        law = spec.law
    except ValueError as exc:
        fail("scenario.alpha", str(exc))
    if not spec.power > 0:
        fail("scenario.power", "must be positive")
    try:
        spec.scenario()
    except (ValueError, CoopRelayError) as exc:
        fail("scenario.relays", str(exc))
    if spec.kind == "fixed_cluster_sweep":
        try:
            Scenario(relays=(Position(spec.fixed_x, spec.relay_y),), path_loss=law)
        except (ValueError, CoopRelayError) as exc:
            fail("sweep.fixed_x", str(exc))
    try:
        spec.channels()
        for lam in spec.lams:
            ChannelParams(spec.theta if spec.theta is not None else 1.0, lam)
    except ValueError as exc:
        fail("channel.theta" if spec.theta is not None else "channel.presets", str(exc))


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentSpec:
    """Read, override and validate a config file.  Raises ConfigError."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("experiment.config", f"cannot read {path}: {exc}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError("experiment.config", str(exc).splitlines()[0]) from None
    raw: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            raw[f"{section}.{key}"] = value
    raw.update(overrides or {})
    values = {}
    for dotted, text in raw.items():
        if dotted not in _KEYS:
            raise ConfigError(dotted, "unknown key")
        attr = _KEYS[dotted]
        try:
            values[attr] = _PARSERS[attr](text)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(dotted, f"invalid value {text!r}: {exc}") from None
    if "kind" not in values:
        raise ConfigError("experiment.kind", "missing")
    spec = ExperimentSpec(**values, given=frozenset(raw))
    _validate(spec)
    return spec


def with_overrides(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    out = replace(spec, **changes)
    _validate(out)
    return out
