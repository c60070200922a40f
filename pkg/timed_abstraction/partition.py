"""State Partition Module

This module builds the level-set partition of a domain box: partition functions
with their Lie derivatives, slices, cells (connected components of slice
intersections on a sampling grid), the adjacency relation between cells and
the multivalued abstraction function alpha.
"""

__all__ = [
    "PartitionFunction",
    "GridSampling",
    "Slice",
    "Cell",
    "Adjacency",
    "Partition",
    "PartitionBuilder",
    "validate_nonincreasing",
    "build_slices",
    "build_cells",
    "alpha",
    "slice_membership",
    "cell_name",
]

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .dynamics import Box, DynSystem
from .exceptions import PartitionError
from .expression import Expr, evaluate, evaluate_batch, gradient, lie_derivative, parse
from .verification_report import Verdict

DEFAULT_RESOLUTION = 201
DEFAULT_TOL_PSI = 1e-9
LEVEL_TOL = 1e-12
PARALLEL_TOL = 1e-6

CellId = tuple[tuple[int, ...], int]


def cell_name(g: Sequence[int], h: int) -> str:
    """Stable textual id of cell (g, h), e.g. ``e[1,3]#1``."""
    return f"e[{','.join(str(gi) for gi in g)}]#{h}"


def _level_slack(level: float) -> float:
    return LEVEL_TOL * max(1.0, abs(level)) if math.isfinite(level) else 0.0


@dataclass(frozen=True)
class PartitionFunction:
    """
    Partitioning function phi with its level values a_0 < ... < a_k.

    ``psi`` (the Lie derivative along the system's vector field) and ``grad``
    are derived by :meth:`create`.
    """

    name: str
    phi: Expr
    levels: tuple[float, ...]
    psi: Expr
    grad: tuple[Expr, ...]

    def __post_init__(self):
        levels = tuple(float(a) for a in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "grad", tuple(self.grad))
        if len(levels) < 2:
            raise PartitionError(f"Partition function '{self.name}' needs at least two levels")
        if any(math.isnan(a) for a in levels):
            raise PartitionError(f"Partition function '{self.name}' has a NaN level")
        if any(b <= a for a, b in zip(levels, levels[1:], strict=False)):
            raise PartitionError(f"Partition function '{self.name}': levels not strictly increasing")

    @classmethod
    def create(cls, name: str, phi: Expr | str, levels: Sequence[float], sys: DynSystem) -> "PartitionFunction":
        """Build a partition function for ``sys``; ``phi`` may be given as source text."""
        expr = parse(phi, sys.dim) if isinstance(phi, str) else phi
        return cls(
            name=name,
            phi=expr,
            levels=tuple(levels),
            psi=lie_derivative(expr, list(sys.f)),
            grad=tuple(gradient(expr, sys.dim)),
        )

    @property
    def num_slices(self) -> int:
        return len(self.levels) - 1

    def slice_bounds(self, index: int) -> tuple[float, float]:
        """Closed value interval of slice ``index`` (1-based)."""
        if not 1 <= index <= self.num_slices:
            raise IndexError(f"Slice index {index} out of range 1..{self.num_slices}")
        return self.levels[index - 1], self.levels[index]

    def slices_containing(self, value: float) -> list[int]:
        """1-based indices of every slice whose closed interval contains ``value``."""
        found = []
        for index in range(1, self.num_slices + 1):
            lower, upper = self.slice_bounds(index)
            if lower - _level_slack(lower) <= value <= upper + _level_slack(upper):
                found.append(index)
        return found

    def gradient_norm_batch(self, points: np.ndarray) -> np.ndarray:
        components = np.column_stack([evaluate_batch(g, points) for g in self.grad])
        return np.linalg.norm(components, axis=1)


@dataclass(frozen=True)
class Slice:
    """Slice i of a family: the closed set phi^-1([lower, upper]) within the domain."""

    family: str
    index: int
    lower: float
    upper: float
    point_count: int | None = None

    @property
    def empty(self) -> bool:
        return self.point_count == 0


class GridSampling:
    """
    Inclusive lattice over a domain box with ``resolution`` points per axis.

    Points are stored in C order of an ``indexing="ij"`` mesh, so flat index
    order is lexicographic order of the multi-index.
    """

    def __init__(self, domain: Box, resolution: int = DEFAULT_RESOLUTION):
        if resolution < 3:
            raise ValueError(f"Grid resolution must be at least 3, got {resolution}")
        self.domain = domain
        self.resolution = int(resolution)
        self.axes = [np.linspace(lo, hi, self.resolution) for lo, hi in zip(domain.lower, domain.upper, strict=True)]
        self.shape = (self.resolution,) * domain.dim
        self._values: dict[Expr, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.domain.dim

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def values(self, expr: Expr) -> np.ndarray:
        """Values of ``expr`` at every grid point, shaped like the grid (cached)."""
        if expr not in self._values:
            self._values[expr] = evaluate_batch(expr, self.points).reshape(self.shape)
        return self._values[expr]

    def point(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.axes[d][i]) for d, i in enumerate(index))

    def enclosing_indices(self, x: Sequence[float]) -> list[tuple[int, ...]]:
        """Multi-indices of the corners of the grid box that contains ``x``."""
        per_axis = []
        for d, value in enumerate(x):
            axis = self.axes[d]
            if axis[-1] == axis[0]:
                per_axis.append((0,))
                continue
            lo = int(np.clip(np.searchsorted(axis, value, side="right") - 1, 0, self.resolution - 2))
            per_axis.append((lo, lo + 1))
        return list(itertools.product(*per_axis))


@dataclass(frozen=True)
class Cell:
    """
    Connected component h of the extended cell with slice-index vector g.

    ``mask`` marks the grid points of the cell.
    """

    g: tuple[int, ...]
    h: int
    mask: np.ndarray = field(repr=False, compare=False, hash=False)

    @property
    def id(self) -> CellId:
        return (self.g, self.h)

    @property
    def name(self) -> str:
        return cell_name(self.g, self.h)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def points(self, grid: GridSampling) -> np.ndarray:
        return grid.points[self.mask.ravel()]


@dataclass(frozen=True)
class Adjacency:
    """Ordered pair of adjacent cells; ``family`` (1-based) is the decremented slice index."""

    source: CellId
    target: CellId
    family: int


@dataclass
class Partition:
    """Finite partition of the sampled domain into cells."""

    families: list[PartitionFunction]
    grid: GridSampling
    cells: list[Cell]
    adjacency: frozenset[Adjacency]
    labels: dict[tuple[int, ...], np.ndarray] = field(repr=False)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {cell.id: cell for cell in self.cells}

    def cell(self, cell_id: CellId) -> Cell:
        return self._by_id[cell_id]

    @property
    def cell_ids(self) -> list[CellId]:
        return [cell.id for cell in self.cells]

    @property
    def extended_cells(self) -> list[tuple[int, ...]]:
        return sorted(self.labels)

    def successors(self, cell_id: CellId) -> list[Adjacency]:
        return sorted((a for a in self.adjacency if a.source == cell_id), key=lambda a: (a.target, a.family))

    def census(self) -> dict[tuple[int, ...], int]:
        """Number of cells per slice-index vector g."""
        counts: dict[tuple[int, ...], int] = {}
        for cell in self.cells:
            counts[cell.g] = counts.get(cell.g, 0) + 1
        return counts


def slice_membership(pf: PartitionFunction, values: np.ndarray, index: int) -> np.ndarray:
    """Boolean mask of values inside the closed interval of slice ``index``."""
    lower, upper = pf.slice_bounds(index)
    return (values >= lower - _level_slack(lower)) & (values <= upper + _level_slack(upper))


def validate_nonincreasing(
    pf: PartitionFunction, sys: DynSystem, grid: GridSampling, tol_psi: float = DEFAULT_TOL_PSI
) -> Verdict:
    """
    Check psi <= tol_psi at every grid point.

    Args:
        pf: Partition function
        sys: Dynamical system the function was built for
        grid: Grid over ``sys.domain``

    Returns:
        Verdict of kind "nonincreasing"; a failure carries the worst grid point
    """
    if grid.domain != sys.domain:
        raise ValueError("Grid must be built over the system domain")
    psi_values = grid.values(pf.psi)
    worst = np.unravel_index(int(np.argmax(psi_values)), grid.shape)
    worst_value = float(psi_values[worst])
    passed = worst_value <= tol_psi
    witnesses = [] if passed else [{"point": grid.point(worst), "psi": worst_value}]
    return Verdict(
        kind="nonincreasing",
        passed=passed,
        witnesses=witnesses,
        tolerances={"tol_psi": tol_psi},
        coverage=f"{psi_values.size} grid points ({grid.resolution} per axis)",
        details={"family": pf.name, "max_psi": worst_value},
    )


def build_slices(pf: PartitionFunction, grid: GridSampling | None = None) -> list[Slice]:
    """
    Slices of a partition function, optionally counting grid points per slice.

    Boundary points (phi equal to a level) belong to both adjacent slices.
    """
    values = grid.values(pf.phi) if grid is not None else None
    slices = []
    for index in range(1, pf.num_slices + 1):
        lower, upper = pf.slice_bounds(index)
        count = None if values is None else int(slice_membership(pf, values, index).sum())
        slices.append(Slice(family=pf.name, index=index, lower=lower, upper=upper, point_count=count))
    return slices


def _shifted_pairs(first: np.ndarray, second: np.ndarray, axis: int, step: int) -> tuple[np.ndarray, np.ndarray]:
    """Label pairs (first[p], second[p + step*e_axis]) for all in-range grid points p."""
    size = first.shape[axis]
    src = [slice(None)] * first.ndim
    dst = [slice(None)] * first.ndim
    if step > 0:
        src[axis] = slice(0, size - step)
        dst[axis] = slice(step, size)
    else:
        src[axis] = slice(-step, size)
        dst[axis] = slice(0, size + step)
    return first[tuple(src)], second[tuple(dst)]


def _adjacent_labels(upper: np.ndarray, lower: np.ndarray) -> set[tuple[int, int]]:
    """Component label pairs sharing a grid point or an orthogonal grid edge."""
    pairs: set[tuple[int, int]] = set()
    candidates = [(upper, lower)]
    for axis in range(upper.ndim):
        for step in (1, -1):
            candidates.append(_shifted_pairs(upper, lower, axis, step))
    for a, b in candidates:
        both = (a > 0) & (b > 0)
        if both.any():
            stacked = np.unique(np.column_stack([a[both], b[both]]), axis=0)
            pairs.update((int(p), int(q)) for p, q in stacked)
    return pairs


def _level_boundary(pf: PartitionFunction, values: np.ndarray) -> np.ndarray:
    """Grid points at which an interior level is crossed towards some orthogonal neighbor."""
    boundary = np.zeros(values.shape, dtype=bool)
    for level in pf.levels[1:-1]:
        for axis in range(values.ndim):
            size = values.shape[axis]
            lo = [slice(None)] * values.ndim
            hi = [slice(None)] * values.ndim
            lo[axis] = slice(0, size - 1)
            hi[axis] = slice(1, size)
            a = values[tuple(lo)] - level
            b = values[tuple(hi)] - level
            crossing = a * b <= 0
            boundary[tuple(lo)] |= crossing
            boundary[tuple(hi)] |= crossing
    return boundary


def _transversality_warnings(families: list[PartitionFunction], grid: GridSampling) -> list[str]:
    warnings = []
    boundaries = [_level_boundary(pf, grid.values(pf.phi)) for pf in families]
    for i, j in itertools.combinations(range(len(families)), 2):
        shared = boundaries[i] & boundaries[j]
        if not shared.any():
            continue
        points = grid.points[shared.ravel()]
        gi = np.column_stack([evaluate_batch(g, points) for g in families[i].grad])
        gj = np.column_stack([evaluate_batch(g, points) for g in families[j].grad])
        ni = np.linalg.norm(gi, axis=1)
        nj = np.linalg.norm(gj, axis=1)
        regular = (ni > 0) & (nj > 0)
        if not regular.any():
            continue
        dot = np.einsum("ij,ij->i", gi[regular], gj[regular]) / (ni[regular] * nj[regular])
        sine = np.sqrt(np.clip(1.0 - dot**2, 0.0, None))
        worst = int(np.argmin(sine))
        if sine[worst] < PARALLEL_TOL:
            point = tuple(float(v) for v in points[regular][worst])
            warnings.append(
                f"Boundaries of '{families[i].name}' and '{families[j].name}' are not transversal near {point}"
            )
    return warnings


def build_cells(families: Sequence[PartitionFunction], grid: GridSampling) -> Partition:
    """
    Build cells, their labels and the adjacency relation.

    Every grid point gets each slice-index vector g it belongs to (boundary
    points get several). Orthogonally connected components of each extended
    cell are labeled in lexicographic order of their smallest grid point.
    A pair (g, h) -> (g', h') is adjacent when g' = g - e_i for exactly one i
    and the two components share a grid point or an orthogonal grid edge.

    Raises:
        PartitionError: If there are no families or their levels do not cover the grid
    """
    families = list(families)
    if not families:
        raise PartitionError("At least one partition function is required")
    names = [pf.name for pf in families]
    if len(set(names)) != len(names):
        raise PartitionError(f"Partition function names must be unique: {names}")

    warnings: list[str] = []
    memberships = []
    for pf in families:
        values = grid.values(pf.phi)
        low, high = float(values.min()), float(values.max())
        if low < pf.levels[0] - _level_slack(pf.levels[0]) or high > pf.levels[-1] + _level_slack(pf.levels[-1]):
            raise PartitionError(
                f"Levels of '{pf.name}' [{pf.levels[0]}, {pf.levels[-1]}] do not cover its range [{low}, {high}]"
            )
        masks = [slice_membership(pf, values, index) for index in range(1, pf.num_slices + 1)]
        for index, mask in enumerate(masks, start=1):
            if not mask.any():
                warnings.append(f"Slice {index} of '{pf.name}' contains no grid point")
        memberships.append(masks)

    structure = ndimage.generate_binary_structure(grid.dim, 1)
    labels: dict[tuple[int, ...], np.ndarray] = {}
    cells: list[Cell] = []
    for g in itertools.product(*(range(1, pf.num_slices + 1) for pf in families)):
        mask = np.logical_and.reduce([memberships[i][gi - 1] for i, gi in enumerate(g)])
        if not mask.any():
            continue
        label_array, count = ndimage.label(mask, structure=structure)
        labels[g] = label_array
        cells.extend(Cell(g=g, h=h, mask=label_array == h) for h in range(1, count + 1))

    adjacency = set()
    for g, upper in labels.items():
        for i in range(len(families)):
            if g[i] == 1:
                continue
            lower_g = g[:i] + (g[i] - 1,) + g[i + 1 :]
            lower = labels.get(lower_g)
            if lower is None:
                continue
            for h, h_lower in _adjacent_labels(upper, lower):
                adjacency.add(Adjacency(source=(g, h), target=(lower_g, h_lower), family=i + 1))

    warnings.extend(_transversality_warnings(families, grid))
    return Partition(
        families=families,
        grid=grid,
        cells=cells,
        adjacency=frozenset(adjacency),
        labels=labels,
        warnings=warnings,
    )


def alpha(partition: Partition, x: Sequence[float]) -> frozenset[CellId]:
    """
    Multivalued abstraction function: every cell that may contain ``x``.

    Candidate slice vectors come from the exact values phi^i(x); a candidate
    cell is accepted when its component covers a corner of the grid box
    enclosing ``x``. Falls back to the cell of the nearest grid point, so the
    result is never empty.

    Raises:
        ValueError: If ``x`` lies outside the domain
    """
    point = np.asarray(x, dtype=float)
    grid = partition.grid
    if point.shape != (grid.dim,) or not grid.domain.contains(point, tol=1e-9):
        raise ValueError(f"Point {tuple(point)} lies outside the partition domain")

    candidates = [pf.slices_containing(evaluate(pf.phi, point)) for pf in partition.families]
    corners = grid.enclosing_indices(point)
    found: set[CellId] = set()
    for g in itertools.product(*candidates):
        label_array = partition.labels.get(g)
        if label_array is None:
            continue
        for corner in corners:
            h = int(label_array[corner])
            if h > 0:
                found.add((g, h))
    if found:
        return frozenset(found)
    return frozenset({_nearest_cell(partition, point, [tuple(g) for g in itertools.product(*candidates)])})


def _nearest_cell(partition: Partition, point: np.ndarray, preferred: list[tuple[int, ...]]) -> CellId:
    grid = partition.grid
    pools = [g for g in preferred if g in partition.labels] or list(partition.labels)
    best: tuple[float, CellId] | None = None
    for g in pools:
        label_array = partition.labels[g].ravel()
        inside = np.flatnonzero(label_array > 0)
        distances = np.linalg.norm(grid.points[inside] - point, axis=1)
        k = int(np.argmin(distances))
        candidate = (float(distances[k]), (g, int(label_array[inside[k]])))
        if best is None or candidate[0] < best[0]:
            best = candidate
    return best[1]


class PartitionBuilder:
    """
    Handler for building a level-set partition of a dynamical system.

    Validates partition functions and reports progress the way the other
    handlers of the package do.
    """

    def __init__(self, system: DynSystem, resolution: int = DEFAULT_RESOLUTION, tol_psi: float = DEFAULT_TOL_PSI):
        """
        Initialize the partition builder.

        Args:
            system: Dynamical system to partition
            resolution: Grid points per axis
            tol_psi: Tolerance of the nonincreasing check
        """
        if system.dim > 3:
            raise PartitionError(f"Grid partitions support at most 3 dimensions (n={system.dim})")
        self.system = system
        self.grid = GridSampling(system.domain, resolution)
        self.tol_psi = tol_psi
        self.families: list[PartitionFunction] = []

    def add_family(self, name: str, phi: Expr | str, levels: Sequence[float]) -> PartitionFunction:
        if any(pf.name == name for pf in self.families):
            raise PartitionError(f"Duplicate partition function name: {name}")
        pf = PartitionFunction.create(name, phi, levels, self.system)
        self.families.append(pf)
        return pf

    def validate(self) -> list[Verdict]:
        """Run the nonincreasing check on every family."""
        verdicts = []
        for pf in self.families:
            verdict = validate_nonincreasing(pf, self.system, self.grid, self.tol_psi)
            if verdict.passed:
                print(f"✅ '{pf.name}' is nonincreasing (max psi = {verdict.details['max_psi']:.3g})")
            else:
                witness = verdict.witnesses[0]
                print(f"❌ '{pf.name}' increases along the flow: psi = {witness['psi']:.3g} at {witness['point']}")
            verdicts.append(verdict)
        return verdicts

    def build(self, require_nonincreasing: bool = True) -> Partition:
        """
        Build the partition.

        Args:
            require_nonincreasing: Raise if a family fails the nonincreasing check

        Returns:
            The partition

        Raises:
            PartitionError: If a family is not nonincreasing (when required) or levels are malformed
        """
        print(f"🔍 Building partition on a {self.grid.resolution}^{self.grid.dim} grid...")
        if require_nonincreasing:
            failed = [v.details["family"] for v in self.validate() if not v.passed]
            if failed:
                raise PartitionError(f"Partition functions are not nonincreasing: {', '.join(failed)}")

        partition = build_cells(self.families, self.grid)
        for warning in partition.warnings:
            print(f"⚠️ Warning: {warning}")
        print(
            f"✅ Partition built: {len(partition.extended_cells)} extended cells, "
            f"{len(partition.cells)} cells, {len(partition.adjacency)} adjacent pairs"
        )
        return partition
