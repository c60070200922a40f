"""Serialization Module

This module provides functionality to read and write timed automata as JSON
documents, to emit GraphViz dot text of the location graph, and to write CSV
files for ODE trajectories, automaton runs and cell membership.

Clock constants are written as decimal strings with 17 significant digits so
that every float survives a round trip bit for bit.
"""

__all__ = [
    "TA_SCHEMA_KEYS",
    "format_constant",
    "ta_to_dict",
    "ta_from_dict",
    "export_ta_json",
    "import_ta_json",
    "ta_to_dot",
    "export_dot",
    "write_trajectory_csv",
    "write_run_csv",
    "write_membership_csv",
]

import csv
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import FlowSample
from .exceptions import AutomatonError
from .partition import Partition
from .timed_automaton import RELATIONS, ClockAtom, ClockConstraint, Run, TimedAutomaton, Transition

TA_SCHEMA_KEYS = ("clocks", "symbols", "locations", "initial", "edges")


def format_constant(k: float) -> str:
    """Decimal string with 17 significant digits (exact for every double)."""
    return format(float(k), ".17g")


def _atoms_to_list(constraint: ClockConstraint) -> list[dict[str, str]]:
    return [{"clock": atom.clock, "rel": atom.rel, "k": format_constant(atom.k)} for atom in constraint]


def ta_to_dict(ta: TimedAutomaton) -> dict[str, Any]:
    """
    JSON document of a timed automaton.

    Invariant conjuncts with an infinite bound never exist on the automaton, so
    they are simply absent. ``g``/``h`` are written when the location carries them.
    """
    locations = []
    for loc in ta.locations:
        entry: dict[str, Any] = {"id": loc}
        info = ta.location_info.get(loc, {})
        if "g" in info:
            entry["g"] = [int(v) for v in info["g"]]
        if "h" in info:
            entry["h"] = int(info["h"])
        entry["invariant"] = _atoms_to_list(ta.invariants[loc])
        locations.append(entry)

    return {
        "clocks": list(ta.clocks),
        "symbols": list(ta.alphabet),
        "locations": locations,
        "initial": sorted(ta.initial),
        "edges": [
            {
                "src": tr.source,
                "dst": tr.target,
                "symbol": tr.symbol,
                "guard": _atoms_to_list(tr.guard),
                "reset": sorted(tr.reset),
            }
            for tr in ta.transitions
        ],
    }


def _require(data: dict, key: str, kind: type, pointer: str) -> Any:
    if not isinstance(data, dict):
        raise AutomatonError("Expected an object", pointer=pointer or "/")
    if key not in data:
        raise AutomatonError(f"Missing required key '{key}'", pointer=f"{pointer}/{key}")
    value = data[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise AutomatonError(f"'{key}' must be of type {kind.__name__}", pointer=f"{pointer}/{key}")
    return value


def _strings(values: list, pointer: str) -> list[str]:
    for i, value in enumerate(values):
        if not isinstance(value, str):
            raise AutomatonError("Expected a string", pointer=f"{pointer}/{i}")
    return list(values)


def _atoms_from_list(items: list, pointer: str) -> ClockConstraint:
    atoms = []
    for i, item in enumerate(items):
        here = f"{pointer}/{i}"
        clock = _require(item, "clock", str, here)
        rel = _require(item, "rel", str, here)
        if rel not in RELATIONS:
            raise AutomatonError(f"Unknown relation '{rel}'", pointer=f"{here}/rel")
        raw = item.get("k")
        if isinstance(raw, bool) or not isinstance(raw, str | int | float):
            raise AutomatonError("'k' must be a decimal string or number", pointer=f"{here}/k")
        try:
            atoms.append(ClockAtom(clock, rel, float(raw)))
        except ValueError as e:
            raise AutomatonError(f"Invalid clock constant {raw!r}", pointer=f"{here}/k") from e
    return ClockConstraint(tuple(atoms))


def ta_from_dict(data: dict[str, Any]) -> TimedAutomaton:
    """
    Timed automaton of a JSON document.

    Raises:
        AutomatonError: On any schema violation; ``pointer`` locates it
    """
    if not isinstance(data, dict):
        raise AutomatonError("Timed automaton document must be an object", pointer="/")
    clocks = _strings(_require(data, "clocks", list, ""), "/clocks")
    symbols = _strings(_require(data, "symbols", list, ""), "/symbols")
    initial = _strings(_require(data, "initial", list, ""), "/initial")

    locations = []
    invariants = {}
    info: dict[str, dict[str, Any]] = {}
    for i, entry in enumerate(_require(data, "locations", list, "")):
        here = f"/locations/{i}"
        loc = _require(entry, "id", str, here)
        locations.append(loc)
        invariants[loc] = _atoms_from_list(entry.get("invariant", []), f"{here}/invariant")
        meta: dict[str, Any] = {}
        if "g" in entry:
            g = _require(entry, "g", list, here)
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in g):
                raise AutomatonError("'g' must be a list of integers", pointer=f"{here}/g")
            meta["g"] = list(g)
        if "h" in entry:
            meta["h"] = _require(entry, "h", int, here)
        if meta:
            info[loc] = meta

    transitions = []
    for i, entry in enumerate(_require(data, "edges", list, "")):
        here = f"/edges/{i}"
        transitions.append(
            Transition(
                source=_require(entry, "src", str, here),
                target=_require(entry, "dst", str, here),
                symbol=_require(entry, "symbol", str, here),
                guard=_atoms_from_list(entry.get("guard", []), f"{here}/guard"),
                reset=frozenset(_strings(entry.get("reset", []), f"{here}/reset")),
            )
        )

    return TimedAutomaton(
        locations=tuple(locations),
        initial=frozenset(initial),
        clocks=tuple(clocks),
        alphabet=tuple(symbols),
        invariants=invariants,
        transitions=tuple(transitions),
        location_info=info,
    )


def export_ta_json(ta: TimedAutomaton, path: str) -> None:
    """Write ``ta`` as a JSON document (UTF-8)."""
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8") as f:
        json.dump(ta_to_dict(ta), f, indent=2)
        f.write("\n")


def import_ta_json(path: str) -> TimedAutomaton:
    """
    Read a timed automaton JSON document.

    Raises:
        FileNotFoundError: If the file doesn't exist
        AutomatonError: If the file is not JSON or violates the schema
    """
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"Timed automaton file not found: {path}")
    with open(source, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise AutomatonError(f"Invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}", pointer="/") from e
    return ta_from_dict(data)


def _dot_quote(text: str) -> str:
    return '"' + text.replace('"', '\\"') + '"'


def ta_to_dot(ta: TimedAutomaton, name: str = "abstraction") -> str:
    """
    GraphViz dot text of the location graph.

    Locations are labelled with their id, g/h and invariant; initial locations
    get a double border. Edges are labelled with symbol, guard and reset set.
    """
    graph = ta.location_graph()
    lines = [f"digraph {_dot_quote(name)} {{", "  rankdir=LR;"]
    for loc, data in graph.nodes(data=True):
        label = loc
        if "g" in data:
            label += f"\\ng={tuple(data['g'])} h={data.get('h')}"
        label += f"\\n{data['invariant']}"
        shape = "doublecircle" if data["initial"] else "ellipse"
        lines.append(f"  {_dot_quote(loc)} [label={_dot_quote(label)}, shape={shape}];")
    for source, target, data in graph.edges(data=True):
        label = f"{data['symbol']}\\n{data['guard']}"
        if data["reset"]:
            label += f"\\n{{{', '.join(data['reset'])}}} := 0"
        lines.append(f"  {_dot_quote(source)} -> {_dot_quote(target)} [label={_dot_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(ta: TimedAutomaton, path: str, name: str = "abstraction") -> None:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(ta_to_dot(ta, name), encoding="utf-8")


def _open_csv(path: str):
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    return open(output, "w", encoding="utf-8", newline="")


def write_trajectory_csv(sample: FlowSample, path: str) -> None:
    """Write an ODE trajectory with columns t, x1, ..., xn."""
    states = np.atleast_2d(sample.states)
    with _open_csv(path) as f:
        writer = csv.writer(f)
        writer.writerow(["t"] + [f"x{i}" for i in range(1, states.shape[1] + 1)])
        for t, state in zip(sample.times, states, strict=True):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in state])


def write_run_csv(run: Run, clocks: Sequence[str], path: str) -> None:
    """
    Write an automaton run, one row per location entered plus a final row.

    Columns: t (strictly increasing), location, symbol taken to enter the
    location (empty on the first row and the final row) and clock values.
    A location left after a zero delay is overwritten by its successor.
    """
    rows: list[list[str]] = []
    elapsed = 0.0
    location, valuation = run.states[0]

    def emit(t: float, location: str, symbol: str, valuation) -> None:
        row = [repr(float(t)), location, symbol] + [repr(float(valuation[c])) for c in clocks]
        if rows and float(rows[-1][0]) >= t:
            rows[-1] = row
        else:
            rows.append(row)

    emit(0.0, location, "", valuation)
    for action, (location, valuation) in zip(run.actions, run.states[1:], strict=True):
        if isinstance(action, Transition):
            emit(elapsed, location, action.symbol, valuation)
        else:
            elapsed += action
    if float(rows[-1][0]) < elapsed:
        emit(elapsed, location, "", valuation)

    with _open_csv(path) as f:
        writer = csv.writer(f)
        writer.writerow(["t", "location", "symbol", *clocks])
        writer.writerows(rows)


def write_membership_csv(partition: Partition, path: str) -> None:
    """Write every grid point with the cells containing it (``;``-separated names)."""
    grid = partition.grid
    points = grid.points
    names: list[list[str]] = [[] for _ in range(len(points))]
    for cell in partition.cells:
        for index in np.flatnonzero(cell.mask.ravel()):
            names[index].append(cell.name)
    with _open_csv(path) as f:
        writer = csv.writer(f)
        writer.writerow([f"x{i}" for i in range(1, grid.dim + 1)] + ["cells"])
        for point, cell_names in zip(points, names, strict=True):
            writer.writerow([repr(float(v)) for v in point] + [";".join(sorted(cell_names))])
