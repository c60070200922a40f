"""Timed Automaton Module

This module provides the timed automaton data model and its concrete
semantics: clock constraints and valuations, delay and discrete steps of the
induced transition system, runs with their switching times, and seeded random
run simulation.
"""

__all__ = [
    "RELATIONS",
    "ClockAtom",
    "ClockConstraint",
    "ClockValuation",
    "Transition",
    "TimedAutomaton",
    "Run",
    "satisfies",
    "delay",
    "reset",
    "step",
    "simulate_run",
]

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import networkx as nx
import numpy as np

from .exceptions import AutomatonError

RELATIONS = ("<=", "<", "==", ">=", ">")
CLOCK_TOL = 1e-9
WINDOW_TOL = 1e-12


@dataclass(frozen=True)
class ClockAtom:
    """Atomic constraint ``clock rel k`` with k a nonnegative real."""

    clock: str
    rel: str
    k: float

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise AutomatonError(f"Unknown clock relation '{self.rel}'")
        k = float(self.k)
        if not math.isfinite(k) or k < 0:
            raise AutomatonError(f"Clock constant must be finite and nonnegative, got {self.k}")
        object.__setattr__(self, "k", k)

    def holds(self, value: float, tol: float = 0.0) -> bool:
        if self.rel == "<=":
            return value <= self.k + tol
        if self.rel == "<":
            return value < self.k
        if self.rel == ">=":
            return value >= self.k - tol
        if self.rel == ">":
            return value > self.k
        return abs(value - self.k) <= tol

    @property
    def is_upper(self) -> bool:
        return self.rel in ("<=", "<", "==")

    @property
    def is_lower(self) -> bool:
        return self.rel in (">=", ">", "==")

    def __str__(self) -> str:
        return f"{self.clock} {self.rel} {self.k!r}"


@dataclass(frozen=True)
class ClockConstraint:
    """Conjunction of clock atoms; the empty conjunction is ``true``."""

    atoms: tuple[ClockAtom, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @classmethod
    def of(cls, *atoms: tuple[str, str, float]) -> "ClockConstraint":
        """Shorthand: ``ClockConstraint.of(("c1", "<=", 2.0), ...)``."""
        return cls(tuple(ClockAtom(c, r, k) for c, r, k in atoms))

    @property
    def clocks(self) -> frozenset[str]:
        return frozenset(atom.clock for atom in self.atoms)

    @property
    def is_true(self) -> bool:
        return not self.atoms

    def __and__(self, other: "ClockConstraint") -> "ClockConstraint":
        return ClockConstraint(self.atoms + other.atoms)

    def __iter__(self) -> Iterator[ClockAtom]:
        return iter(self.atoms)

    def __str__(self) -> str:
        return " && ".join(str(atom) for atom in self.atoms) if self.atoms else "true"


class ClockValuation(Mapping[str, float]):
    """Immutable map clock -> nonnegative real."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float] | Iterable[tuple[str, float]]):
        items = dict(values)
        for clock, value in items.items():
            if not value >= 0:
                raise AutomatonError(f"Clock valuation must be nonnegative: {clock}={value}")
        self._values = {clock: float(value) for clock, value in items.items()}

    @classmethod
    def zero(cls, clocks: Iterable[str]) -> "ClockValuation":
        """The initial valuation v0 (all clocks 0)."""
        return cls({clock: 0.0 for clock in clocks})

    def __getitem__(self, clock: str) -> float:
        try:
            return self._values[clock]
        except KeyError as e:
            raise AutomatonError(f"Unknown clock '{clock}'") from e

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._values.items())))

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Mapping):
            return dict(self._values) == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"ClockValuation({self._values!r})"

    def isclose(self, other: Mapping[str, float], tol: float = CLOCK_TOL) -> bool:
        return set(self) == set(other) and all(abs(self[c] - other[c]) <= tol for c in self)


def satisfies(v: ClockValuation, psi: ClockConstraint, tol: float = 0.0) -> bool:
    """
    Whether ``v`` satisfies every atom of ``psi``.

    ``tol`` relaxes non-strict bounds only; strict bounds are always exact.

    Raises:
        AutomatonError: If ``psi`` mentions a clock absent from ``v``
    """
    return all(atom.holds(v[atom.clock], tol) for atom in psi)


def delay(v: ClockValuation, d: float) -> ClockValuation:
    """(v + d)(c) = v(c) + d."""
    if d < 0:
        raise ValueError(f"Delay must be nonnegative, got {d}")
    return ClockValuation({clock: value + d for clock, value in v.items()})


def reset(v: ClockValuation, clocks: Iterable[str]) -> ClockValuation:
    """v[R]: zero the clocks in R, keep the others."""
    zeroed = set(clocks)
    unknown = zeroed - set(v)
    if unknown:
        raise AutomatonError(f"Unknown clock(s) in reset: {sorted(unknown)}")
    return ClockValuation({clock: 0.0 if clock in zeroed else value for clock, value in v.items()})


@dataclass(frozen=True)
class Transition:
    """Edge (source, guard, symbol, reset set, target)."""

    source: str
    target: str
    symbol: str
    guard: ClockConstraint = ClockConstraint()
    reset: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "reset", frozenset(self.reset))


@dataclass(frozen=True)
class TimedAutomaton:
    """
    Timed automaton (E, E0, C, Sigma, I, Delta).

    Attributes:
        locations: Location ids E
        initial: Initial locations E0
        clocks: Clocks C
        alphabet: Symbols Sigma
        invariants: Location invariants I (locations without an entry get ``true``)
        transitions: Edges Delta
        location_info: Optional per-location metadata (e.g. cell g/h)
    """

    locations: tuple[str, ...]
    initial: frozenset[str]
    clocks: tuple[str, ...]
    alphabet: tuple[str, ...]
    invariants: Mapping[str, ClockConstraint]
    transitions: tuple[Transition, ...]
    location_info: Mapping[str, Mapping[str, Any]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "clocks", tuple(self.clocks))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        invariants = {loc: self.invariants.get(loc, ClockConstraint()) for loc in self.locations}
        object.__setattr__(self, "invariants", invariants)

        locations = set(self.locations)
        clocks = set(self.clocks)
        if len(locations) != len(self.locations):
            raise AutomatonError("Duplicate location ids")
        if len(clocks) != len(self.clocks):
            raise AutomatonError("Duplicate clock names")
        if not self.initial <= locations:
            raise AutomatonError(f"Initial locations not in E: {sorted(self.initial - locations)}")
        for loc, invariant in invariants.items():
            if not invariant.clocks <= clocks:
                raise AutomatonError(f"Invariant of '{loc}' uses unknown clocks {sorted(invariant.clocks - clocks)}")
        for tr in self.transitions:
            if tr.source not in locations or tr.target not in locations:
                raise AutomatonError(f"Transition {tr.source} -> {tr.target} has an endpoint outside E")
            if tr.symbol not in self.alphabet:
                raise AutomatonError(f"Transition {tr.source} -> {tr.target} uses unknown symbol '{tr.symbol}'")
            if not tr.guard.clocks <= clocks or not tr.reset <= clocks:
                raise AutomatonError(f"Transition {tr.source} -> {tr.target} uses unknown clocks")

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Transition, ...]]:
        table: dict[str, list[Transition]] = {loc: [] for loc in self.locations}
        for tr in self.transitions:
            table[tr.source].append(tr)
        return {loc: tuple(trs) for loc, trs in table.items()}

    def outgoing(self, location: str) -> tuple[Transition, ...]:
        if location not in self._outgoing:
            raise AutomatonError(f"Unknown location '{location}'")
        return self._outgoing[location]

    def initial_valuation(self) -> ClockValuation:
        return ClockValuation.zero(self.clocks)

    def location_graph(self) -> nx.MultiDiGraph:
        """Location graph with symbol/guard/reset edge attributes."""
        graph = nx.MultiDiGraph()
        for loc in self.locations:
            graph.add_node(
                loc,
                invariant=str(self.invariants[loc]),
                initial=loc in self.initial,
                **dict(self.location_info.get(loc, {})),
            )
        for tr in self.transitions:
            graph.add_edge(tr.source, tr.target, symbol=tr.symbol, guard=str(tr.guard), reset=sorted(tr.reset))
        return graph

    def is_dag(self) -> bool:
        return nx.is_directed_acyclic_graph(self.location_graph())

    def with_transitions(self, transitions: Iterable[Transition]) -> "TimedAutomaton":
        """Copy with a different edge set (same locations, clocks and invariants)."""
        return TimedAutomaton(
            locations=self.locations,
            initial=self.initial,
            clocks=self.clocks,
            alphabet=self.alphabet,
            invariants=self.invariants,
            transitions=tuple(transitions),
            location_info=self.location_info,
        )


State = tuple[str, ClockValuation]


def _check_state(ta: TimedAutomaton, state: State, tol: float) -> None:
    location, valuation = state
    if location not in ta.invariants:
        raise AutomatonError(f"Unknown location '{location}'")
    if set(valuation) != set(ta.clocks):
        raise AutomatonError(f"Valuation clocks {sorted(valuation)} do not match {list(ta.clocks)}")
    if not satisfies(valuation, ta.invariants[location], tol):
        raise AutomatonError(f"Valuation violates the invariant of '{location}'")


def step(ta: TimedAutomaton, state: State, action: float | str, tol: float = 0.0) -> set[State]:
    """
    Successors of ``state`` in the transition system of ``ta``.

    Args:
        ta: Timed automaton
        state: Valid state (location, valuation)
        action: A delay (number) or a symbol (string)
        tol: Relaxation of non-strict bounds

    Returns:
        For a delay d: {(e, v+d)} if v+d' satisfies I(e) for all d' in [0, d], else empty.
        For a symbol: every (e', v[R]) over matching edges whose guard holds and whose
        target valuation satisfies I(e').

    Raises:
        AutomatonError: If ``state`` is not a valid state
    """
    _check_state(ta, state, tol)
    location, valuation = state
    if isinstance(action, int | float) and not isinstance(action, bool):
        later = delay(valuation, float(action))
        # invariants are convex, so both endpoints holding covers [0, d]
        if satisfies(later, ta.invariants[location], tol):
            return {(location, later)}
        return set()

    successors = set()
    for tr in ta.outgoing(location):
        if tr.symbol != action or not satisfies(valuation, tr.guard, tol):
            continue
        target_valuation = reset(valuation, tr.reset)
        if satisfies(target_valuation, ta.invariants[tr.target], tol):
            successors.add((tr.target, target_valuation))
    return successors


@dataclass
class Run:
    """
    Alternating run (e0, v0) -d1-> (e0, v1) -s1-> (e1, v2) -d2-> ...

    ``actions`` alternates delays (floats, even positions) and transitions (odd
    positions); ``states[i + 1]`` is the state after ``actions[i]``.
    ``outcome`` is "horizon", "deadlock" or "max_switches".
    """

    states: list[State]
    actions: list[float | Transition]
    horizon: float
    outcome: str = "horizon"

    @property
    def deadlock(self) -> bool:
        return self.outcome == "deadlock"

    @property
    def delays(self) -> list[float]:
        return [a for a in self.actions if not isinstance(a, Transition)]

    @property
    def total_time(self) -> float:
        return float(sum(self.delays))

    @property
    def switching_times(self) -> list[float]:
        """t0 = 0 followed by the time of every discrete step."""
        times = [0.0]
        elapsed = 0.0
        for action in self.actions:
            if isinstance(action, Transition):
                times.append(elapsed)
            else:
                elapsed += action
        return times

    @property
    def locations(self) -> list[str]:
        """Location sequence e0, e1, ... of the trajectory."""
        return [self.states[0][0]] + [a.target for a in self.actions if isinstance(a, Transition)]

    def location_at(self, t: float, tol: float = 0.0) -> set[str]:
        """All locations occupied at time ``t``; both ends of a switch at a switching instant."""
        occupied = set()
        location = self.states[0][0]
        elapsed = 0.0
        if abs(t) <= tol:
            occupied.add(location)
        for action in self.actions:
            if isinstance(action, Transition):
                location = action.target
                if abs(elapsed - t) <= tol:
                    occupied.add(location)
            else:
                if elapsed - tol <= t <= elapsed + action + tol:
                    occupied.add(location)
                elapsed += action
        return occupied

    def validate(self, ta: TimedAutomaton, tol: float = CLOCK_TOL) -> list[str]:
        """
        Mechanically check the run against ``ta``.

        Returns:
            Violations found; empty when the run is valid
        """
        problems = []
        if len(self.states) != len(self.actions) + 1:
            problems.append("states and actions lengths do not match")
            return problems
        first_location, first_valuation = self.states[0]
        if first_location not in ta.initial:
            problems.append(f"run starts in non-initial location '{first_location}'")
        if not first_valuation.isclose(ta.initial_valuation(), tol):
            problems.append("run does not start from the zero valuation")

        for index, action in enumerate(self.actions):
            (location, valuation), (next_location, next_valuation) = self.states[index], self.states[index + 1]
            expects_delay = index % 2 == 0
            if expects_delay == isinstance(action, Transition):
                problems.append(f"step {index}: delays and discrete steps do not alternate")
                continue
            if expects_delay:
                if action < 0:
                    problems.append(f"step {index}: negative delay {action}")
                if next_location != location:
                    problems.append(f"step {index}: location changed during a delay")
                if not next_valuation.isclose(delay(valuation, max(action, 0.0)), tol):
                    problems.append(f"step {index}: valuation is not v + d")
                invariant = ta.invariants[location]
                if not (satisfies(valuation, invariant, tol) and satisfies(next_valuation, invariant, tol)):
                    problems.append(f"step {index}: invariant of '{location}' violated during delay")
            else:
                if action not in ta.outgoing(location):
                    problems.append(f"step {index}: transition is not an edge from '{location}'")
                if not satisfies(valuation, action.guard, tol):
                    problems.append(f"step {index}: guard {action.guard} not satisfied")
                if next_location != action.target:
                    problems.append(f"step {index}: target location mismatch")
                if not next_valuation.isclose(reset(valuation, action.reset), tol):
                    problems.append(f"step {index}: target valuation is not v[R]")
                if not satisfies(next_valuation, ta.invariants[next_location], tol):
                    problems.append(f"step {index}: target invariant of '{next_location}' violated")
        return problems


def _ceiling(invariant: ClockConstraint, valuation: ClockValuation) -> float:
    """Largest delay the invariant permits from ``valuation``."""
    limit = math.inf
    for atom in invariant:
        if atom.is_upper:
            limit = min(limit, atom.k - valuation[atom.clock])
    return max(limit, 0.0)


def _window(
    ta: TimedAutomaton, tr: Transition, valuation: ClockValuation, max_delay: float
) -> tuple[float, float] | None:
    """Delays d in [0, max_delay] after which ``tr`` is enabled with a valid target state."""
    atoms = list(tr.guard)
    for atom in ta.invariants[tr.target]:
        if atom.clock not in tr.reset:
            atoms.append(atom)
        elif not atom.holds(0.0, CLOCK_TOL):
            return None

    lo, hi = 0.0, max_delay
    strict_offsets = []
    for atom in atoms:
        offset = atom.k - valuation[atom.clock]
        if atom.rel in ("<", ">"):
            strict_offsets.append(offset)
        if atom.is_upper:
            hi = min(hi, offset)
        if atom.is_lower:
            lo = max(lo, offset)
    if lo > hi + WINDOW_TOL:
        return None
    # a point window on a strict bound is empty
    if hi - lo <= WINDOW_TOL and any(abs(offset - lo) <= WINDOW_TOL for offset in strict_offsets):
        return None
    return lo, max(lo, hi)


def simulate_run(
    ta: TimedAutomaton, e0: str, seed: int, horizon: float, max_switches: int = 10_000
) -> Run:
    """
    Sample a run of ``ta`` from (e0, v0) with a seeded random policy.

    At each location the options are the delay windows of the edges that can
    become enabled before the invariant ceiling and the horizon, plus staying
    until the horizon when the invariant allows it. An option is chosen
    uniformly, a delay is drawn uniformly in its window (point windows are
    exact), then one of the edges enabled after that delay is chosen uniformly.

    Args:
        ta: Timed automaton
        e0: Initial location (must be in E0)
        seed: Seed of the random generator
        horizon: Time at which the run stops

    Returns:
        A valid run; ``outcome`` is "deadlock" when no option is left before the horizon
    """
    if e0 not in ta.initial:
        raise AutomatonError(f"'{e0}' is not an initial location")
    if horizon < 0:
        raise ValueError(f"Horizon must be nonnegative, got {horizon}")
    rng = np.random.default_rng(seed)
    location = e0
    valuation = ta.initial_valuation()
    if not satisfies(valuation, ta.invariants[e0], CLOCK_TOL):
        raise AutomatonError(f"The zero valuation violates the invariant of '{e0}'")

    states: list[State] = [(location, valuation)]
    actions: list[float | Transition] = []
    elapsed = 0.0
    switches = 0
    while True:
        remaining = horizon - elapsed
        ceiling = _ceiling(ta.invariants[location], valuation)
        max_delay = min(ceiling, max(remaining, 0.0))

        options: list[tuple[float, float] | None] = []
        for tr in ta.outgoing(location):
            window = _window(ta, tr, valuation, max_delay)
            if window is not None:
                options.append(window)
        can_stay = ceiling >= remaining - WINDOW_TOL
        if can_stay:
            options.append(None)

        if not options:
            actions.append(max_delay)
            valuation = delay(valuation, max_delay)
            states.append((location, valuation))
            return Run(states=states, actions=actions, horizon=horizon, outcome="deadlock")

        choice = options[int(rng.integers(len(options)))]
        if choice is None:
            final = max(remaining, 0.0)
            actions.append(final)
            states.append((location, delay(valuation, final)))
            return Run(states=states, actions=actions, horizon=horizon, outcome="horizon")

        lo, hi = choice
        d = lo if hi - lo <= WINDOW_TOL else float(rng.uniform(lo, hi))
        valuation = delay(valuation, d)
        elapsed += d
        actions.append(d)
        states.append((location, valuation))

        enabled = [
            tr
            for tr in ta.outgoing(location)
            if satisfies(valuation, tr.guard, CLOCK_TOL)
            and satisfies(reset(valuation, tr.reset), ta.invariants[tr.target], CLOCK_TOL)
        ]
        if not enabled:
            return Run(states=states, actions=actions, horizon=horizon, outcome="deadlock")
        tr = enabled[int(rng.integers(len(enabled)))]
        location = tr.target
        valuation = reset(valuation, tr.reset)
        actions.append(tr)
        states.append((location, valuation))

        switches += 1
        if switches >= max_switches:
            return Run(states=states, actions=actions, horizon=horizon, outcome="max_switches")
