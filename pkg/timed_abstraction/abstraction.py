"""Abstraction Generation Module

This module estimates transit times through the slices of each partition
function and generates the timed automaton whose locations are the cells of a
partition.
"""

__all__ = [
    "SliceTransit",
    "TransitTimeTable",
    "AbstractionGenerator",
    "sample_level_set",
    "is_critical_level",
    "estimate_transit_times",
    "generate_ta",
    "clock_name",
    "symbol_name",
]

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_STEP, DEFAULT_T_MAX, CROSSED, Box, DynSystem, flow_until_level_batch
from .exceptions import AutomatonError
from .expression import Expr, evaluate_batch
from .partition import GridSampling, Partition, PartitionFunction, alpha
from .timed_automaton import ClockAtom, ClockConstraint, TimedAutomaton, Transition

LEVEL_SAMPLE_TOL = 1e-10
CRITICAL_GRADIENT = 1e-6
DEFAULT_SAMPLES_PER_LEVEL = 200
DEFAULT_EXTRA_LEVEL_PAIRS = 5
DEFAULT_INIT_SAMPLES = 1000
DEFAULT_SEED = 42


def clock_name(family_index: int) -> str:
    """Clock of the 1-based family index."""
    return f"c{family_index}"


def symbol_name(family_index: int) -> str:
    return f"sigma{family_index}"


@dataclass(frozen=True)
class SliceTransit:
    """
    Transit times from the level ``upper`` down to the level ``lower``.

    ``declared`` is False for randomly drawn intermediate level pairs.
    """

    family: str
    index: int
    lower: float
    upper: float
    t_low: float
    t_high: float
    samples: int
    crossed: int
    critical: bool = False
    empty: bool = False
    declared: bool = True

    def __post_init__(self):
        if not self.t_low <= self.t_high:
            raise ValueError(f"t_low {self.t_low} exceeds t_high {self.t_high}")

    @property
    def spread(self) -> float:
        return self.t_high - self.t_low

    @property
    def regular(self) -> bool:
        return not (self.critical or self.empty)


@dataclass
class TransitTimeTable:
    """Transit-time bounds per slice of one partition function."""

    family: str
    entries: dict[int, SliceTransit]
    extra: list[SliceTransit] = field(default_factory=list)
    critical_levels: list[float] = field(default_factory=list)

    def bounds(self, index: int) -> tuple[float, float]:
        try:
            entry = self.entries[index]
        except KeyError as e:
            raise AutomatonError(f"No transit times for slice {index} of '{self.family}'") from e
        return entry.t_low, entry.t_high

    def all_pairs(self) -> list[SliceTransit]:
        return [self.entries[i] for i in sorted(self.entries)] + list(self.extra)


def sample_level_set(
    phi: Expr,
    grid: GridSampling,
    level: float,
    max_samples: int = DEFAULT_SAMPLES_PER_LEVEL,
) -> np.ndarray:
    """
    Points on phi^-1(level) within the domain.

    Candidates are grid edges whose endpoint values bracket the level, refined
    by bisection to |phi - level| <= 1e-10, plus grid points already within
    that tolerance. At most ``max_samples`` are returned, evenly spaced in
    candidate order so that the sample is deterministic.

    Returns:
        Array of shape (m, n); m = 0 when the level set misses the grid
    """
    if not math.isfinite(level):
        return np.empty((0, grid.dim))
    values = grid.values(phi) - level
    found = [grid.points[np.abs(values.ravel()) <= LEVEL_SAMPLE_TOL]]

    for axis in range(grid.dim):
        size = grid.shape[axis]
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(0, size - 1)
        hi[axis] = slice(1, size)
        a = values[tuple(lo)]
        b = values[tuple(hi)]
        bracket = (a * b < 0) & (np.abs(a) > LEVEL_SAMPLE_TOL) & (np.abs(b) > LEVEL_SAMPLE_TOL)
        if not bracket.any():
            continue
        flat_index = np.ravel_multi_index(np.nonzero(bracket), grid.shape)
        start = grid.points[flat_index]
        stop = start.copy()
        stop[:, axis] = grid.axes[axis][np.nonzero(bracket)[axis] + 1]
        found.append(_bisect_segments(phi, start, stop, level, a[bracket]))

    points = np.concatenate(found, axis=0) if found else np.empty((0, grid.dim))
    if points.shape[0] > max_samples:
        chosen = np.linspace(0, points.shape[0] - 1, max_samples).round().astype(int)
        points = points[chosen]
    return points


def _bisect_segments(phi: Expr, start, stop, level, start_values, max_iter: int = 80) -> np.ndarray:
    low = np.zeros(start.shape[0])
    high = np.ones(start.shape[0])
    side = np.sign(start_values)
    best = 0.5 * (low + high)
    for _ in range(max_iter):
        best = 0.5 * (low + high)
        points = start + best[:, None] * (stop - start)
        residual = evaluate_batch(phi, points) - level
        if np.all(np.abs(residual) <= LEVEL_SAMPLE_TOL):
            break
        same = np.sign(residual) == side
        low = np.where(same, best, low)
        high = np.where(same, high, best)
    return start + best[:, None] * (stop - start)


def is_critical_level(pf: PartitionFunction, grid: GridSampling, level: float, samples: np.ndarray) -> bool:
    """
    Whether ``level`` is (numerically) a critical value of phi.

    True when some level-set sample has a gradient norm below 1e-6, or when the
    level is the grid minimum or maximum of phi and that extremum is attained
    at an interior grid point.
    """
    if not math.isfinite(level):
        return False
    if samples.shape[0] and np.any(pf.gradient_norm_batch(samples) < CRITICAL_GRADIENT):
        return True
    values = grid.values(pf.phi)
    interior = tuple(slice(1, -1) for _ in range(grid.dim))
    for extremum in (values.min(), values.max()):
        if abs(level - extremum) <= LEVEL_SAMPLE_TOL * max(1.0, abs(level)):
            inner = values[interior]
            if inner.size and np.any(np.abs(inner - extremum) <= LEVEL_SAMPLE_TOL * max(1.0, abs(level))):
                return True
    return False


def _transit(sys, pf, grid, lower, upper, samples_by_level, critical_by_level, options, index, declared):
    samples = samples_by_level(upper)
    critical = critical_by_level(upper) or critical_by_level(lower)
    if samples.shape[0] == 0:
        return SliceTransit(
            pf.name, index, lower, upper, 0.0, math.inf, 0, 0, critical, empty=True, declared=declared
        )
    if not math.isfinite(lower):
        return SliceTransit(
            pf.name, index, lower, upper, 0.0, math.inf, samples.shape[0], 0, critical, declared=declared
        )

    result = flow_until_level_batch(
        sys, samples, pf.phi, lower, t_max=options["t_max"], h=options["rk4_step"], confine=False
    )
    crossed = result.status == CROSSED
    times = result.times[crossed]
    t_low = float(times.min()) if times.size else 0.0
    t_high = float(times.max()) if crossed.all() else math.inf
    return SliceTransit(
        pf.name, index, lower, upper, t_low, t_high, samples.shape[0], int(crossed.sum()), critical, declared=declared
    )


def estimate_transit_times(
    sys: DynSystem,
    pf: PartitionFunction,
    grid: GridSampling,
    samples_per_level: int = DEFAULT_SAMPLES_PER_LEVEL,
    t_max: float = DEFAULT_T_MAX,
    h: float = DEFAULT_STEP,
    extra_level_pairs: int = DEFAULT_EXTRA_LEVEL_PAIRS,
    seed: int = DEFAULT_SEED,
) -> TransitTimeTable:
    """
    Estimate (t_low, t_high) for every slice of ``pf``.

    Trajectories start on the upper level of a slice and are integrated
    (without domain confinement) until they reach the lower level. Any sample
    that does not cross within ``t_max`` forces t_high = inf; a slice where no
    sample crosses gets t_low = 0. Slices whose levels are critical values are
    flagged. ``extra_level_pairs`` random intermediate level pairs inside regular
    slices are estimated as well.

    Returns:
        The transit-time table of the family
    """
    if samples_per_level < 1:
        raise ValueError(f"samples_per_level must be positive, got {samples_per_level}")
    rng = np.random.default_rng(seed)
    options = {"t_max": t_max, "rk4_step": h}
    sample_cache: dict[float, np.ndarray] = {}
    critical_cache: dict[float, bool] = {}

    def samples_by_level(level: float) -> np.ndarray:
        if level not in sample_cache:
            sample_cache[level] = sample_level_set(pf.phi, grid, level, samples_per_level)
        return sample_cache[level]

    def critical_by_level(level: float) -> bool:
        if level not in critical_cache:
            critical_cache[level] = is_critical_level(pf, grid, level, samples_by_level(level))
        return critical_cache[level]

    entries = {}
    for index in range(1, pf.num_slices + 1):
        lower, upper = pf.slice_bounds(index)
        entries[index] = _transit(
            sys, pf, grid, lower, upper, samples_by_level, critical_by_level, options, index, True
        )

    extra = []
    regular = [e for e in entries.values() if e.regular and math.isfinite(e.lower) and math.isfinite(e.upper)]
    for _ in range(extra_level_pairs if regular else 0):
        entry = regular[int(rng.integers(len(regular)))]
        first, second = sorted(rng.uniform(entry.lower, entry.upper, size=2))
        if second - first <= 1e-9 * max(1.0, abs(second)):
            continue
        extra.append(
            _transit(
                sys,
                pf,
                grid,
                float(first),
                float(second),
                samples_by_level,
                critical_by_level,
                options,
                entry.index,
                False,
            )
        )

    critical_levels = sorted(level for level, flag in critical_cache.items() if flag)
    return TransitTimeTable(family=pf.name, entries=entries, extra=extra, critical_levels=critical_levels)


def _initial_cells(partition: Partition, init_box: Box | None, init_samples: int, seed: int) -> set:
    if init_box is None:
        return set(partition.cell_ids)
    rng = np.random.default_rng(seed)
    cells = set()
    for point in init_box.sample(rng, init_samples):
        cells |= alpha(partition, point)
    return cells


def generate_ta(
    partition: Partition,
    tables: Sequence[TransitTimeTable],
    init_box: Box | None = None,
    init_samples: int = DEFAULT_INIT_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> TimedAutomaton:
    """
    Generate the timed automaton of a partition.

    Locations are the cells; clock c_i and symbol sigma_i belong to family i.
    The invariant of cell (g, h) bounds c_i by the t_high of slice g_i (omitted
    when infinite). Each adjacency pair that decrements family i becomes an edge
    with guard c_i >= t_low of the source slice, symbol sigma_i and reset {c_i}.
    Initial locations come from alpha over ``init_samples`` points of the init box
    (every cell when there is no init box).

    Raises:
        AutomatonError: If a table is missing or lacks a slice used by a cell
    """
    families = partition.families
    by_family = {table.family: table for table in tables}
    missing = [pf.name for pf in families if pf.name not in by_family]
    if missing:
        raise AutomatonError(f"Missing transit-time tables for: {', '.join(missing)}")
    ordered = [by_family[pf.name] for pf in families]
    clocks = tuple(clock_name(i) for i in range(1, len(families) + 1))
    symbols = tuple(symbol_name(i) for i in range(1, len(families) + 1))

    invariants = {}
    info = {}
    for cell in partition.cells:
        atoms = []
        for i, gi in enumerate(cell.g):
            _, t_high = ordered[i].bounds(gi)
            if math.isfinite(t_high):
                atoms.append(ClockAtom(clocks[i], "<=", t_high))
        invariants[cell.name] = ClockConstraint(tuple(atoms))
        info[cell.name] = {"g": list(cell.g), "h": cell.h}

    transitions = []
    for adjacency in partition.adjacency:
        source = partition.cell(adjacency.source)
        target = partition.cell(adjacency.target)
        i = adjacency.family - 1
        t_low, _ = ordered[i].bounds(source.g[i])
        transitions.append(
            Transition(
                source=source.name,
                target=target.name,
                symbol=symbols[i],
                guard=ClockConstraint((ClockAtom(clocks[i], ">=", t_low),)),
                reset=frozenset({clocks[i]}),
            )
        )
    transitions.sort(key=lambda tr: (tr.source, tr.target, tr.symbol))

    initial = {partition.cell(cell_id).name for cell_id in _initial_cells(partition, init_box, init_samples, seed)}
    return TimedAutomaton(
        locations=tuple(cell.name for cell in partition.cells),
        initial=frozenset(initial),
        clocks=clocks,
        alphabet=symbols,
        invariants=invariants,
        transitions=tuple(transitions),
        location_info=info,
    )


class AbstractionGenerator:
    """
    Handler for generating a timed-automaton abstraction.

    Estimates transit-time tables for every family of a partition and builds
    the automaton, reporting progress as it goes.
    """

    def __init__(self, system: DynSystem, partition: Partition, options: dict | None = None):
        """
        Initialize the abstraction generator.

        Args:
            system: Dynamical system
            partition: Partition built for the system
            options: Numeric options (t_max, rk4_step, samples_per_level,
                extra_level_pairs, seed, init_samples)
        """
        self.system = system
        self.partition = partition
        self.options = {
            "t_max": DEFAULT_T_MAX,
            "rk4_step": DEFAULT_STEP,
            "samples_per_level": DEFAULT_SAMPLES_PER_LEVEL,
            "extra_level_pairs": DEFAULT_EXTRA_LEVEL_PAIRS,
            "seed": DEFAULT_SEED,
            "init_samples": DEFAULT_INIT_SAMPLES,
            **(options or {}),
        }
        self.tables: list[TransitTimeTable] = []

    def estimate_tables(self) -> list[TransitTimeTable]:
        """Estimate the transit-time table of every family."""
        self.tables = []
        for offset, pf in enumerate(self.partition.families):
            print(f"🔍 Estimating transit times for '{pf.name}'...")
            table = estimate_transit_times(
                self.system,
                pf,
                self.partition.grid,
                samples_per_level=self.options["samples_per_level"],
                t_max=self.options["t_max"],
                h=self.options["rk4_step"],
                extra_level_pairs=self.options["extra_level_pairs"],
                seed=self.options["seed"] + offset,
            )
            for entry in table.all_pairs():
                if not entry.declared:
                    continue
                if entry.empty:
                    print(f"⚠️ Warning: slice {entry.index} of '{pf.name}' has no level-set samples")
                elif entry.critical:
                    print(f"⚠️ Warning: slice {entry.index} of '{pf.name}' touches a critical level")
                bounds = f"[{entry.t_low:.6g}, {entry.t_high:.6g}]"
                print(f"  • slice {entry.index} [{entry.lower}, {entry.upper}]: {bounds}")
            self.tables.append(table)
        return self.tables

    def generate(self) -> TimedAutomaton:
        """Generate the automaton, estimating tables first if needed."""
        if not self.tables:
            self.estimate_tables()
        ta = generate_ta(
            self.partition,
            self.tables,
            init_box=self.system.init_box,
            init_samples=self.options["init_samples"],
            seed=self.options["seed"],
        )
        print(
            f"✅ Timed automaton generated: {len(ta.locations)} locations, {len(ta.clocks)} clocks, "
            f"{len(ta.transitions)} transitions, {len(ta.initial)} initial"
        )
        return ta
