"""Zone Reachability Module

This module computes the discrete flow map of a timed automaton (the set of
locations occupied at exactly time t) by forward exploration of zones.

A zone is a difference-bound matrix over the reference clock 0, the
automaton's clocks and an extra elapsed-time clock tau that is never reset.
Entry (i, j) bounds x_i - x_j by a value and a strictness flag.
"""

__all__ = [
    "Zone",
    "ZoneGraph",
    "explore",
    "discrete_flow",
    "flow_map_zones",
    "reachable_locations",
    "TAU_WIDENING",
]

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .exceptions import AutomatonError
from .timed_automaton import ClockConstraint, TimedAutomaton

ZONE_TOL = 1e-12
TAU_WIDENING = 1e-9
DEFAULT_MAX_ZONES = 200_000


class Zone:
    """
    Canonical difference-bound matrix attached to a location.

    Index 0 is the reference clock, 1..m the automaton clocks in ``clocks``
    order and m + 1 the elapsed-time clock tau.
    """

    __slots__ = ("location", "clocks", "bound", "strict")

    def __init__(self, location: str, clocks: tuple[str, ...], bound: np.ndarray, strict: np.ndarray):
        self.location = location
        self.clocks = clocks
        self.bound = bound
        self.strict = strict

    @classmethod
    def origin(cls, location: str, clocks: Iterable[str]) -> "Zone":
        """The single valuation with every clock and tau at 0."""
        names = tuple(clocks)
        size = len(names) + 2
        return cls(location, names, np.zeros((size, size)), np.zeros((size, size), dtype=bool))

    @property
    def tau(self) -> int:
        return len(self.clocks) + 1

    def copy(self, location: str | None = None) -> "Zone":
        return Zone(location or self.location, self.clocks, self.bound.copy(), self.strict.copy())

    def index(self, clock: str) -> int:
        try:
            return self.clocks.index(clock) + 1
        except ValueError as e:
            raise AutomatonError(f"Unknown clock '{clock}'") from e

    def canonicalize(self) -> "Zone":
        """Shortest-path closure (Floyd-Warshall), in place."""
        bound, strict = self.bound, self.strict
        with np.errstate(invalid="ignore"):
            for k in range(bound.shape[0]):
                candidate = bound[:, k][:, None] + bound[k, :][None, :]
                candidate_strict = strict[:, k][:, None] | strict[k, :][None, :]
                tighter = (candidate < bound - ZONE_TOL) | (
                    (np.abs(candidate - bound) <= ZONE_TOL) & candidate_strict & ~strict
                )
                bound = np.where(tighter, candidate, bound)
                strict = np.where(tighter, candidate_strict, strict)
        self.bound, self.strict = bound, strict
        return self

    def is_empty(self) -> bool:
        diagonal = np.diag(self.bound)
        diagonal_strict = np.diag(self.strict)
        return bool(np.any(diagonal < -ZONE_TOL) or np.any((np.abs(diagonal) <= ZONE_TOL) & diagonal_strict))

    def up(self) -> "Zone":
        """Time elapse: drop the upper bounds of every clock, in place."""
        self.bound[1:, 0] = np.inf
        self.strict[1:, 0] = False
        return self

    def _tighten(self, i: int, j: int, value: float, strict: bool) -> None:
        current, current_strict = self.bound[i, j], self.strict[i, j]
        if value < current - ZONE_TOL or (abs(value - current) <= ZONE_TOL and strict and not current_strict):
            self.bound[i, j] = value
            self.strict[i, j] = strict

    def constrain_clock(self, index: int, rel: str, k: float) -> None:
        """Add ``x_index rel k`` without re-canonicalizing."""
        if rel in ("<=", "<", "=="):
            self._tighten(index, 0, k, rel == "<")
        if rel in (">=", ">", "=="):
            self._tighten(0, index, -k, rel == ">")

    def constrain(self, constraint: ClockConstraint) -> "Zone":
        """Intersect with a clock constraint, in place (canonical afterwards)."""
        for atom in constraint:
            self.constrain_clock(self.index(atom.clock), atom.rel, atom.k)
        return self.canonicalize()

    def reset(self, clocks: Iterable[str]) -> "Zone":
        """Set the given clocks to 0, in place."""
        for clock in clocks:
            i = self.index(clock)
            self.bound[i, :] = self.bound[0, :]
            self.strict[i, :] = self.strict[0, :]
            self.bound[:, i] = self.bound[:, 0]
            self.strict[:, i] = self.strict[:, 0]
            self.bound[i, i] = 0.0
            self.strict[i, i] = False
        return self

    def includes(self, other: "Zone") -> bool:
        """Whether this zone contains ``other`` (same location and clocks)."""
        with np.errstate(invalid="ignore"):
            looser = (other.bound < self.bound - ZONE_TOL) | (
                (np.abs(other.bound - self.bound) <= ZONE_TOL) & (other.strict | ~self.strict)
            )
        return bool(np.all(looser | ((self.bound == np.inf) & (other.bound == np.inf))))

    def restrict_tau(self, t_low: float, t_high: float) -> "Zone":
        """Copy intersected with t_low <= tau <= t_high."""
        zone = self.copy()
        zone.constrain_clock(self.tau, ">=", max(t_low, 0.0))
        zone.constrain_clock(self.tau, "<=", t_high)
        return zone.canonicalize()

    def admits_tau(self, t_low: float, t_high: float) -> bool:
        return not self.restrict_tau(t_low, t_high).is_empty()

    def clock_interval(self, clock: str) -> tuple[float, float]:
        """Projection of the zone onto one clock (``"tau"`` for elapsed time)."""
        i = self.tau if clock == "tau" else self.index(clock)
        return float(-self.bound[0, i]), float(self.bound[i, 0])

    def __repr__(self) -> str:
        tau_low, tau_high = self.clock_interval("tau")
        return f"Zone(location={self.location!r}, tau=[{tau_low:.6g}, {tau_high:.6g}])"


@dataclass
class ZoneGraph:
    """Zones reachable from a set of initial locations with tau <= t_max."""

    t_max: float
    zones: list[Zone]

    def locations_at(self, t: float, widening: float = TAU_WIDENING) -> set[str]:
        return {zone.location for zone in self.zones if zone.admits_tau(t - widening, t + widening)}

    def locations_between(self, t1: float, t2: float) -> set[str]:
        return {zone.location for zone in self.zones if zone.admits_tau(t1, t2)}


def _close(zone: Zone, ta: TimedAutomaton, t_max: float) -> Zone:
    zone.up()
    zone.constrain(ta.invariants[zone.location])
    zone.constrain_clock(zone.tau, "<=", t_max)
    return zone.canonicalize()


def explore(
    ta: TimedAutomaton, initial: Iterable[str], t_max: float, max_zones: int = DEFAULT_MAX_ZONES
) -> ZoneGraph:
    """
    Breadth-first forward zone exploration bounded by tau <= t_max.

    Each stored zone is closed under time elapse within its location invariant.
    A new zone already included in a stored zone of the same location is dropped.

    Raises:
        AutomatonError: If more than ``max_zones`` zones are generated
    """
    stored: dict[str, list[Zone]] = {}
    queue: deque[Zone] = deque()

    def admit(zone: Zone) -> None:
        if zone.is_empty():
            return
        bucket = stored.setdefault(zone.location, [])
        if any(existing.includes(zone) for existing in bucket):
            return
        bucket[:] = [existing for existing in bucket if not zone.includes(existing)]
        bucket.append(zone)
        queue.append(zone)

    for location in sorted(set(initial)):
        if location not in ta.invariants:
            raise AutomatonError(f"Unknown location '{location}'")
        start = Zone.origin(location, ta.clocks).constrain(ta.invariants[location])
        if not start.is_empty():
            admit(_close(start, ta, t_max))

    generated = 0
    while queue:
        zone = queue.popleft()
        if not any(stored_zone is zone for stored_zone in stored[zone.location]):
            continue
        for tr in ta.outgoing(zone.location):
            successor = zone.copy(tr.target).constrain(tr.guard)
            if successor.is_empty():
                continue
            successor.reset(tr.reset).constrain(ta.invariants[tr.target])
            if successor.is_empty():
                continue
            admit(_close(successor, ta, t_max))
            generated += 1
            if generated > max_zones:
                raise AutomatonError(f"Zone exploration exceeded {max_zones} zones")

    return ZoneGraph(t_max=t_max, zones=[zone for bucket in stored.values() for zone in bucket])


def discrete_flow(ta: TimedAutomaton, e0: str, t: float) -> set[str]:
    """
    Locations reachable from (e0, 0) at exactly time ``t``; clock values are forgotten.

    Raises:
        ValueError: If t < 0
    """
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}")
    return explore(ta, [e0], t + TAU_WIDENING).locations_at(t)


def flow_map_zones(ta: TimedAutomaton, e0: str, t: float) -> dict[str, list[Zone]]:
    """Per location, the zones of clock valuations reachable at exactly time ``t``."""
    if t < 0:
        raise ValueError(f"Time must be nonnegative, got {t}")
    graph = explore(ta, [e0], t + TAU_WIDENING)
    result: dict[str, list[Zone]] = {}
    for zone in graph.zones:
        restricted = zone.restrict_tau(t - TAU_WIDENING, t + TAU_WIDENING)
        if not restricted.is_empty():
            result.setdefault(zone.location, []).append(restricted)
    return result


def reachable_locations(ta: TimedAutomaton, initial: Iterable[str], t1: float, t2: float) -> set[str]:
    """Locations reachable at some time in [t1, t2] from any of the ``initial`` locations."""
    if t1 > t2:
        raise ValueError(f"Empty time interval [{t1}, {t2}]")
    starts = list(initial)
    if not starts:
        return set()
    return explore(ta, starts, t2).locations_between(t1, t2)
