"""Geometry, channel parameters and per-slot random draws.

Distances are measured in units of the source-destination separation.  The
default layout places the source at (0, 0) and the destination at (1, 0).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateGeometry, EtaSingular

#: Minimum admissible |1 - sum g_sd / g_rd| for MRC relay subsets.
ETA_GUARD = 1e-9


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class PathLossLaw:
    """Power-law path loss ``g = distance ** -alpha``."""

    alpha: float = 4.0

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError(f"path loss exponent must exceed 2, got {self.alpha}")

    def gain(self, distance: float) -> float:
        if distance <= 0:
            raise DegenerateGeometry("path gain at zero distance")
        return distance ** -self.alpha

    def gain_sq(self, dist2):
        """Vectorised gain from squared distances (no zero check)."""
        if self.alpha == 4.0:
            return 1.0 / (dist2 * dist2)
        return dist2 ** (-0.5 * self.alpha)


class Combiner(str, Enum):
    SC = "sc"
    MRC = "mrc"


class InterferenceModel(str, Enum):
    DEPENDENT = "dependent"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class ChannelParams:
    """SIR threshold, interferer density, ALOHA probability, model and combiner."""

    theta: float
    lam: float
    aloha_p: float = 1.0
    interference: InterferenceModel = InterferenceModel.DEPENDENT
    combiner: Combiner = Combiner.SC

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0 <= self.aloha_p <= 1:
            raise ValueError(f"ALOHA probability must lie in [0, 1], got {self.aloha_p}")
        object.__setattr__(self, "interference", InterferenceModel(self.interference))
        object.__setattr__(self, "combiner", Combiner(self.combiner))

    @property
    def active_density(self) -> float:
        return self.lam * self.aloha_p

    def with_(self, **changes) -> "ChannelParams":
        return replace(self, **changes)


# (theta, lambda, p)
PRESETS = {
    "good": (0.1, 0.5, 1.0),
    "harsh": (1.0, 1.0, 1.0),
    "b": (1.0, 0.75, 0.5),
}


def preset(name: str, combiner=Combiner.SC, interference=InterferenceModel.DEPENDENT) -> ChannelParams:
    theta, lam, p = PRESETS[name]
    return ChannelParams(theta, lam, p, InterferenceModel(interference), Combiner(combiner))


def path_gain(a: Position, b: Position, law: PathLossLaw) -> float:
    d = a.distance_to(b)
    if d == 0:
        raise DegenerateGeometry(f"coincident points {tuple(a)}")
    return law.gain(d)


def reduced_threshold(theta: float, power_scale: float, gain: float) -> float:
    """Threshold divided by received mean power, the exceedance rate against interference."""
    if not gain > 0 or not power_scale > 0:
        raise ValueError("gain and power scale must be positive")
    return theta / (power_scale * gain)


@dataclass(frozen=True)
class LinkGains:
    g_sd: float
    g_sr: tuple[float, ...]
    g_rd: tuple[float, ...]


@dataclass(frozen=True)
class Thresholds:
    """Reduced thresholds of every signal link for one (scenario, theta)."""

    sd: float
    sr: tuple[float, ...]
    rd: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    source: Position = Position(0.0, 0.0)
    destination: Position = Position(1.0, 0.0)
    relays: tuple[Position, ...] = ()
    source_power_scale: float = 1.0
    path_loss: PathLossLaw = field(default_factory=PathLossLaw)

    def __post_init__(self):
        object.__setattr__(self, "relays", tuple(self.relays))
        if not self.source_power_scale > 0:
            raise ValueError("source power scale must be positive")
        if self.source == self.destination:
            raise DegenerateGeometry("source coincides with destination")
        for k, r in enumerate(self.relays):
            if r == self.source or r == self.destination:
                raise DegenerateGeometry(f"relay {k} at {tuple(r)} coincides with an endpoint")

    @property
    def n_relays(self) -> int:
        return len(self.relays)

    @property
    def alpha(self) -> float:
        return self.path_loss.alpha

    def gains(self) -> LinkGains:
        law = self.path_loss
        return LinkGains(
            g_sd=path_gain(self.source, self.destination, law),
            g_sr=tuple(path_gain(self.source, r, law) for r in self.relays),
            g_rd=tuple(path_gain(r, self.destination, law) for r in self.relays),
        )

    def thresholds(self, theta: float) -> Thresholds:
        g = self.gains()
        ps = self.source_power_scale
        return Thresholds(
            sd=reduced_threshold(theta, ps, g.g_sd),
            sr=tuple(reduced_threshold(theta, ps, x) for x in g.g_sr),
            rd=tuple(reduced_threshold(theta, 1.0, x) for x in g.g_rd),
        )

    def relay_groups(self) -> list[tuple[Position, tuple[int, ...]]]:
        """Relays grouped by identical position, in order of first appearance."""
        groups: dict[Position, list[int]] = {}
        for k, r in enumerate(self.relays):
            groups.setdefault(r, []).append(k)
        return [(pos, tuple(idx)) for pos, idx in groups.items()]

    def with_relays(self, relays: Iterable[Position]) -> "Scenario":
        return replace(self, relays=tuple(relays))

    def eta_denominator(self, relays: Iterable[int]) -> float:
        g = self.gains()
        a = self.source_power_scale * g.g_sd
        return 1.0 - math.fsum(a / g.g_rd[k] for k in relays)

    def singular_subsets(self) -> list[tuple[int, ...]]:
        """Relay subsets whose MRC combining coefficient is undefined."""
        g = self.gains()
        a = self.source_power_scale * g.g_sd
        bad = []
        # identical relays share ratios, so test one subset per multiplicity vector
        groups = self.relay_groups()
        ratios = [a / g.g_rd[idx[0]] for _, idx in groups]
        for counts in itertools.product(*(range(len(idx) + 1) for _, idx in groups)):
            if not any(counts):
                continue
            den = 1.0 - math.fsum(c * q for c, q in zip(counts, ratios))
            if abs(den) < ETA_GUARD:
                bad.append(tuple(i for (_, idx), c in zip(groups, counts) for i in idx[:c]))
        return bad

    def validate_for_mrc(self) -> None:
        bad = self.singular_subsets()
        if bad:
            raise EtaSingular(f"relay subset {bad[0]} makes the MRC coefficient singular")

    def nudged_for_mrc(self, eps: float = 1e-6, max_steps: int = 100) -> tuple["Scenario", int]:
        """Push relays of singular subsets radially away from the destination by ``eps``.

        Returns the adjusted scenario and the number of displacements applied.
        """
        sc = self
        steps = 0
        while True:
            bad = sc.singular_subsets()
            if not bad:
                return sc, steps
            if steps >= max_steps:
                raise EtaSingular("could not remove MRC singularity by nudging")
            k = bad[0][0]
            r, d = sc.relays[k], sc.destination
            dist = r.distance_to(d)
            ux, uy = (r.x - d.x) / dist, (r.y - d.y) / dist
            moved = Position(r.x + eps * ux, r.y + eps * uy)
            sc = sc.with_relays(moved if i == k else q for i, q in enumerate(sc.relays))
            steps += 1


def line_scenario(relay_xs: Sequence[float] = (), *, alpha: float = 4.0, power: float = 1.0) -> Scenario:
    """Source at (0,0), destination at (1,0), relays on the connecting axis."""
    return Scenario(
        relays=tuple(Position(float(x), 0.0) for x in relay_xs),
        source_power_scale=power,
        path_loss=PathLossLaw(alpha),
    )


# -- random sampling ---------------------------------------------------------


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def as_seed_sequence(rng) -> np.random.SeedSequence:
    """Normalise an int, SeedSequence or Generator to a SeedSequence.

    A Generator is consumed (one 128-bit draw) so repeated calls give fresh streams.
    """
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence([int(v) for v in rng.integers(0, 2**32, size=4, dtype=np.uint64)])
    return np.random.SeedSequence(rng)


def substream(master, *indices: int) -> np.random.Generator:
    """Independent generator for (master seed, point index, replicate index, ...)."""
    base = as_seed_sequence(master)
    key = tuple(base.spawn_key) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(base.entropy, spawn_key=key))


@dataclass(frozen=True, eq=False)
class PppRealization:
    points: np.ndarray  # shape (n, 2)
    window_radius: float
    center: Position

    def __len__(self):
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def gains_to(self, node: Position, law: PathLossLaw) -> np.ndarray:
        d2 = (self.x - node.x) ** 2 + (self.y - node.y) ** 2
        if np.any(d2 == 0):
            raise DegenerateGeometry("interferer on top of a receiver")
        return law.gain_sq(d2)


def sample_ppp(lam: float, center: Position, radius: float, rng) -> PppRealization:
    """Homogeneous PPP of intensity ``lam`` restricted to a disk."""
    if lam < 0 or not radius > 0:
        raise ValueError("need lam >= 0 and radius > 0")
    rng = as_generator(rng)
    n = rng.poisson(lam * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    pts = np.column_stack((center.x + r * np.cos(phi), center.y + r * np.sin(phi)))
    return PppRealization(pts, float(radius), center)


@dataclass(frozen=True, eq=False)
class SlotDraw:
    """All fading powers and ALOHA indicators of one time slot.

    ``h_ud``/``active_d`` belong to the interferers seen by the destination,
    ``h_ur[k]``/``active_r[k]`` to those seen by relay ``k``.  Under dependent
    interference the relay indicator arrays are the destination's array.
    """

    h_sd: float
    h_sr: np.ndarray
    h_rd: np.ndarray
    h_ud: np.ndarray
    active_d: np.ndarray
    h_ur: tuple[np.ndarray, ...]
    active_r: tuple[np.ndarray, ...]


def draw_slot(scenario: Scenario, ppp, params: ChannelParams, rng) -> SlotDraw:
    """Fresh fading on every link and Bernoulli(p) activity per interferer.

    ``ppp`` is one realization (dependent model) or a sequence of ``N + 1``
    realizations, destination first (independent model).
    """
    rng = as_generator(rng)
    n = scenario.n_relays
    if isinstance(ppp, PppRealization):
        per_rx = [ppp] * (n + 1)
        shared = True
    else:
        per_rx = list(ppp)
        if len(per_rx) != n + 1:
            raise ValueError(f"need {n + 1} realizations, got {len(per_rx)}")
        shared = False
    h_sd = float(rng.standard_exponential())
    h_sr = rng.standard_exponential(n)
    h_rd = rng.standard_exponential(n)
    p = params.aloha_p
    active_d = rng.random(len(per_rx[0])) < p
    h_ud = rng.standard_exponential(len(per_rx[0]))
    h_ur, active_r = [], []
    for k in range(n):
        pk = per_rx[k + 1]
        h_ur.append(rng.standard_exponential(len(pk)))
        active_r.append(active_d if shared else rng.random(len(pk)) < p)
    return SlotDraw(h_sd, h_sr, h_rd, h_ud, active_d, tuple(h_ur), tuple(active_r))
