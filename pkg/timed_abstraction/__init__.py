"""
Timed Abstraction - Timed-automaton abstractions of continuous dynamical systems

This package builds a finite partition of a box-shaped state space from the
level sets of nonincreasing partitioning functions and abstracts the flow of
x' = f(x) into a timed automaton whose locations are the cells of the
partition. It orchestrates:
- Symbolic expressions, differentiation and Lie derivatives
- RK4 integration, level crossings, equilibria and saddle manifolds
- Level-set partitions and the abstraction function
- Timed-automaton semantics, runs and zone-based reachability
- Transit-time estimation and automaton generation
- Sampling-based verification with structured reports
"""

__version__ = "0.1.0"

from .abstraction import AbstractionGenerator, TransitTimeTable, estimate_transit_times, generate_ta
from .config_manager import DEFAULT_OPTIONS, ModelConfig, load_model, print_model
from .dynamics import (
    Box,
    DynSystem,
    approximate_manifold,
    find_equilibria,
    flow,
    flow_batch,
    flow_until_level,
)
from .exceptions import (
    AutomatonError,
    ExpressionDomainError,
    ExpressionSyntaxError,
    IntegrationError,
    ModelFileError,
    PartitionError,
    TimedAbstractionError,
)
from .expression import differentiate, evaluate, lie_derivative, parse, to_source
from .launcher import AbstractionLauncher
from .partition import Partition, PartitionBuilder, PartitionFunction, alpha, build_cells, validate_nonincreasing
from .serialization import export_dot, export_ta_json, import_ta_json
from .timed_automaton import ClockConstraint, ClockValuation, Run, TimedAutomaton, Transition, simulate_run, step
from .verification import (
    AbstractionVerifier,
    check_completeness,
    check_critical_points,
    check_levelset_sync,
    check_positive_invariance,
    check_soundness,
    check_unstable_manifold_containment,
)
from .verification_report import Verdict, VerificationReport
from .zones import discrete_flow, reachable_locations

__all__ = [
    "AbstractionLauncher",
    "ModelConfig",
    "DEFAULT_OPTIONS",
    "load_model",
    "print_model",
    # Expressions
    "parse",
    "to_source",
    "evaluate",
    "differentiate",
    "lie_derivative",
    # Dynamics
    "Box",
    "DynSystem",
    "flow",
    "flow_batch",
    "flow_until_level",
    "find_equilibria",
    "approximate_manifold",
    # Partition
    "PartitionFunction",
    "PartitionBuilder",
    "Partition",
    "validate_nonincreasing",
    "build_cells",
    "alpha",
    # Timed automata
    "TimedAutomaton",
    "Transition",
    "ClockConstraint",
    "ClockValuation",
    "Run",
    "step",
    "simulate_run",
    "discrete_flow",
    "reachable_locations",
    # Abstraction
    "AbstractionGenerator",
    "TransitTimeTable",
    "estimate_transit_times",
    "generate_ta",
    # Verification
    "AbstractionVerifier",
    "Verdict",
    "VerificationReport",
    "check_soundness",
    "check_completeness",
    "check_levelset_sync",
    "check_critical_points",
    "check_unstable_manifold_containment",
    "check_positive_invariance",
    # Serialization
    "export_ta_json",
    "import_ta_json",
    "export_dot",
    # Errors
    "TimedAbstractionError",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "IntegrationError",
    "PartitionError",
    "AutomatonError",
    "ModelFileError",
]
