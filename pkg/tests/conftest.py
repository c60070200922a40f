"""
Pytest configuration and shared models for timed-abstraction tests.

The reference model is the linear saddle x1' = -x1, x2' = x2 on [-4, 4]^2
with phi1 = x1^2 (levels 0, 1, 4, 16) and phi2 = -x2^2 (levels -16, -4, -1, 0).
Expensive objects are built once per session and shared read-only.
"""

import math
from functools import lru_cache
from pathlib import Path

from timed_abstraction.abstraction import estimate_transit_times, generate_ta
from timed_abstraction.dynamics import Box, DynSystem
from timed_abstraction.expression import parse
from timed_abstraction.partition import GridSampling, PartitionFunction, build_cells
from timed_abstraction.timed_automaton import ClockConstraint, TimedAutomaton, Transition

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"

LN2 = math.log(2.0)

# Transit tables integrate critical slices up to t_max; 10 keeps them quick.
SADDLE_TRANSIT_OPTIONS = {"samples_per_level": 50, "t_max": 10.0, "h": 1e-3, "extra_level_pairs": 3}

SMALL_MODEL_YAML = """\
system:
  dim: 2
  f: ["-x1", "x2"]
  domain: [[-4, 4], [-4, 4]]
  init: [[4, 4], [-0.1, 0.1]]
partitions:
  - name: phi1
    phi: "x1^2"
    levels: [0, 1, 4, 16]
  - name: phi2
    phi: "-x2^2"
    levels: [-16, -4, -1, 0]
options:
  grid: 101
  t_max: 5
  samples_per_level: 20
  extra_level_pairs: 2
  init_samples: 100
  sound_trajectories: 20
  sound_times: 11
"""


def saddle_system(init_box: bool = True) -> DynSystem:
    domain = Box.from_intervals([[-4, 4], [-4, 4]])
    return DynSystem(
        dim=2,
        f=(parse("-x1", 2), parse("x2", 2)),
        domain=domain,
        init_box=Box.from_intervals([[4, 4], [-0.1, 0.1]]) if init_box else None,
    )


@lru_cache(maxsize=None)
def saddle_families() -> tuple[PartitionFunction, PartitionFunction]:
    system = saddle_system()
    return (
        PartitionFunction.create("phi1", "x1^2", [0, 1, 4, 16], system),
        PartitionFunction.create("phi2", "-x2^2", [-16, -4, -1, 0], system),
    )


@lru_cache(maxsize=None)
def saddle_grid() -> GridSampling:
    return GridSampling(saddle_system().domain, 201)


@lru_cache(maxsize=None)
def saddle_partition():
    return build_cells(list(saddle_families()), saddle_grid())


@lru_cache(maxsize=None)
def saddle_tables():
    system = saddle_system()
    return tuple(
        estimate_transit_times(system, pf, saddle_grid(), seed=42 + offset, **SADDLE_TRANSIT_OPTIONS)
        for offset, pf in enumerate(saddle_families())
    )


@lru_cache(maxsize=None)
def saddle_ta() -> TimedAutomaton:
    return generate_ta(saddle_partition(), saddle_tables(), init_box=saddle_system().init_box, init_samples=200)


def chain_ta() -> TimedAutomaton:
    """
    Three-location chain A -a-> B -b-> C over one clock.

    A is left at some c in [1, 2]; B is left at exactly c = 3; C is absorbing.
    """
    return TimedAutomaton(
        locations=("A", "B", "C"),
        initial=frozenset({"A"}),
        clocks=("c",),
        alphabet=("a", "b"),
        invariants={"A": ClockConstraint.of(("c", "<=", 2.0)), "B": ClockConstraint.of(("c", "<=", 3.0))},
        transitions=(
            Transition("A", "B", "a", ClockConstraint.of(("c", ">=", 1.0)), frozenset({"c"})),
            Transition("B", "C", "b", ClockConstraint.of(("c", ">=", 3.0)), frozenset({"c"})),
        ),
    )
