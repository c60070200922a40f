"""Dynamical System Module

This module represents a dynamical system Gamma = (X, f) on an axis-aligned
domain box and provides its numerical flow (classical fixed-step RK4),
level-crossing detection, equilibrium search and saddle manifold approximation.
"""

__all__ = [
    "Box",
    "DynSystem",
    "FlowSample",
    "LevelCrossing",
    "BatchCrossings",
    "Equilibrium",
    "ManifoldApprox",
    "flow",
    "flow_batch",
    "flow_until_level",
    "flow_until_level_batch",
    "find_equilibria",
    "approximate_manifold",
    "classify_equilibrium",
]

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ExpressionDomainError, IntegrationError
from .expression import Expr, evaluate_batch, jacobian, max_variable_index

DEFAULT_STEP = 1e-3
DEFAULT_T_MAX = 50.0
CROSSING_TOL = 1e-8
EQUILIBRIUM_TOL = 1e-10
DEDUP_RADIUS = 1e-6
DEGENERATE_TOL = 1e-9

# crossing status codes used by flow_until_level_batch
CROSSED = 1
TIMEOUT = 2
EXITED = 3
NONFINITE = 4

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box prod_i [lower_i, upper_i]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("Box bounds must be nonempty and of equal length")
        for lo, hi in zip(self.lower, self.upper, strict=True):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"Malformed box interval [{lo}, {hi}]")

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> "Box":
        """Build a box from a list of [lower, upper] pairs."""
        return cls(tuple(iv[0] for iv in intervals), tuple(iv[1] for iv in intervals))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def intervals(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in zip(self.lower, self.upper, strict=True)]

    def contains_batch(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        slack = tol * np.maximum(1.0, np.maximum(np.abs(lower), np.abs(upper)))
        return np.all((pts >= lower - slack) & (pts <= upper + slack), axis=1)

    def contains(self, point, tol: float = 1e-12) -> bool:
        return bool(self.contains_batch(np.asarray(point, dtype=float)[None, :], tol)[0])

    def contains_box(self, other: "Box") -> bool:
        return all(
            lo <= olo and ohi <= hi
            for lo, hi, olo, ohi in zip(self.lower, self.upper, other.lower, other.upper, strict=True)
        )

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform random points in the box (degenerate intervals allowed)."""
        return rng.uniform(np.asarray(self.lower), np.asarray(self.upper), size=(count, self.dim))


@dataclass(frozen=True)
class DynSystem:
    """
    Dynamical system x' = f(x) observed on a domain box.

    Attributes:
        dim: State dimension n
        f: Vector field components (f_1, ..., f_n)
        domain: Domain box X
        init_box: Optional initial box X_0, contained in the domain
    """

    dim: int
    f: tuple[Expr, ...]
    domain: Box
    init_box: Box | None = None

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        if self.dim < 1:
            raise ValueError(f"System dimension must be positive, got {self.dim}")
        if len(self.f) != self.dim:
            raise ValueError(f"Expected {self.dim} vector field components, got {len(self.f)}")
        for i, component in enumerate(self.f, start=1):
            if max_variable_index(component) > self.dim:
                raise ValueError(f"Vector field component f{i} uses a variable beyond dimension {self.dim}")
        if self.domain.dim != self.dim:
            raise ValueError(f"Domain box has dimension {self.domain.dim}, system has {self.dim}")
        if self.init_box is not None:
            if self.init_box.dim != self.dim:
                raise ValueError("Initial box dimension does not match the system")
            if not self.domain.contains_box(self.init_box):
                raise ValueError("Initial box must be contained in the domain")

    def vector_field_batch(self, points: np.ndarray) -> np.ndarray:
        """f evaluated at each row of ``points``; shape (m, n)."""
        return np.column_stack([evaluate_batch(component, points) for component in self.f])

    def vector_field(self, x) -> np.ndarray:
        return self.vector_field_batch(np.asarray(x, dtype=float)[None, :])[0]

    @cached_property
    def jacobian_exprs(self) -> list[list[Expr]]:
        return jacobian(list(self.f))

    def jacobian_at(self, x) -> np.ndarray:
        point = np.asarray(x, dtype=float)[None, :]
        return np.array([[evaluate_batch(entry, point)[0] for entry in row] for row in self.jacobian_exprs])


@dataclass
class FlowSample:
    """RK4 samples of one trajectory. ``exit_time`` is set when the domain was left early."""

    times: np.ndarray
    states: np.ndarray
    exit_time: float | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class LevelCrossing:
    time: float
    point: tuple[float, ...]


@dataclass
class BatchCrossings:
    """Per-sample outcome of :func:`flow_until_level_batch`."""

    times: np.ndarray
    points: np.ndarray
    status: np.ndarray

    @property
    def crossed(self) -> np.ndarray:
        return self.status == CROSSED


@dataclass
class Equilibrium:
    """Zero of the vector field with its Jacobian and stability kind."""

    point: tuple[float, ...]
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    kind: str

    def __repr__(self) -> str:
        return f"Equilibrium(point={self.point}, kind={self.kind!r})"


@dataclass
class ManifoldApprox:
    """Polyline approximation of one branch of a saddle's stable or unstable manifold."""

    equilibrium: Equilibrium
    branch: str
    direction: int
    points: np.ndarray = field(repr=False)


def _rk4_step(vector_field: Field, x: np.ndarray, dt) -> np.ndarray:
    """One classical RK4 step for every row of ``x``; ``dt`` is a scalar or a column vector."""
    k1 = vector_field(x)
    k2 = vector_field(x + 0.5 * dt * k1)
    k3 = vector_field(x + 0.5 * dt * k2)
    k4 = vector_field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_schedule(t_end: float, h: float) -> list[float]:
    """Sample times k*h up to t_end, with a final partial step when t_end is not a multiple of h."""
    full_steps = int(np.floor(t_end / h + 1e-9))
    times = [k * h for k in range(full_steps + 1)]
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times.append(t_end)
    else:
        times[-1] = t_end if full_steps > 0 else 0.0
    return times


def _integrate(
    vector_field: Field, x0: np.ndarray, t_end: float, h: float, domain: Box | None
) -> FlowSample:
    schedule = _step_schedule(t_end, h)
    states = [x0.copy()]
    x = x0[None, :]
    exit_time = None
    for k in range(1, len(schedule)):
        dt = schedule[k] - schedule[k - 1]
        try:
            x_next = _rk4_step(vector_field, x, dt)
        except ExpressionDomainError as e:
            raise ExpressionDomainError(f"Vector field left its domain at t={schedule[k - 1]:.6g}: {e}") from e
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError(f"Non-finite state at t={schedule[k]:.6g}", time=schedule[k])
        if domain is not None and not domain.contains_batch(x_next)[0]:
            exit_time = schedule[k]
            break
        states.append(x_next[0].copy())
        x = x_next
    return FlowSample(times=np.array(schedule[: len(states)]), states=np.array(states), exit_time=exit_time)


def flow(sys: DynSystem, x0, t_end: float, h: float = DEFAULT_STEP, confine: bool = True) -> FlowSample:
    """
    Integrate the system from ``x0`` with classical fixed-step RK4.

    Args:
        sys: Dynamical system
        x0: Initial state
        t_end: Final time (>= 0)
        h: Step size
        confine: Halt when the state leaves the domain box

    Returns:
        Samples at multiples of h plus a final partial step to t_end; ``exit_time``
        is set when integration halted early

    Raises:
        IntegrationError: On a non-finite state
        ExpressionDomainError: When f is evaluated outside its domain
    """
    if h <= 0:
        raise ValueError(f"Step size must be positive, got {h}")
    if t_end < 0:
        raise ValueError(f"Final time must be nonnegative, got {t_end}")
    start = np.asarray(x0, dtype=float)
    if start.shape != (sys.dim,):
        raise ValueError(f"Initial state must have dimension {sys.dim}")
    if confine and not sys.domain.contains(start):
        raise ValueError(f"Initial state {tuple(start)} lies outside the domain")
    return _integrate(sys.vector_field_batch, start, float(t_end), h, sys.domain if confine else None)


def flow_batch(sys: DynSystem, initial_states, times: Sequence[float], h: float = DEFAULT_STEP) -> np.ndarray:
    """
    Integrate many initial states at once and report the states at the requested times.

    Integration is not confined to the domain; callers decide what to do with
    states that leave it.

    Args:
        sys: Dynamical system
        initial_states: Array of shape (m, n)
        times: Nondecreasing sample times (>= 0)
        h: Step size

    Returns:
        Array of shape (len(times), m, n)
    """
    x = np.array(initial_states, dtype=float)
    requested = [float(t) for t in times]
    if any(t < 0 for t in requested) or any(b < a for a, b in zip(requested, requested[1:], strict=False)):
        raise ValueError("Sample times must be nonnegative and nondecreasing")
    out = np.empty((len(requested), x.shape[0], x.shape[1]))
    t = 0.0
    for index, target in enumerate(requested):
        schedule = _step_schedule(target - t, h)
        for k in range(1, len(schedule)):
            x = _rk4_step(sys.vector_field_batch, x, schedule[k] - schedule[k - 1])
        t = target
        out[index] = x
    return out


def flow_until_level_batch(
    sys: DynSystem,
    initial_states,
    phi: Expr,
    target: float,
    t_max: float = DEFAULT_T_MAX,
    h: float = DEFAULT_STEP,
    confine: bool = True,
    tol: float = CROSSING_TOL,
) -> BatchCrossings:
    """
    Integrate many states until phi(x(t)) reaches ``target``.

    A crossing is a sign change of phi - target between two RK4 steps; it is
    refined by bisection over the step size until |phi - target| <= tol.

    Args:
        sys: Dynamical system
        initial_states: Array of shape (m, n), none of them on the target level
        phi: Scalar function
        target: Level value
        t_max: Time after which a sample is declared non-crossing
        h: Step size
        confine: Stop a sample (status EXITED) when it leaves the domain
        tol: Crossing tolerance on |phi - target|

    Returns:
        Crossing times/points (NaN where none) and per-sample status codes
    """
    x = np.array(initial_states, dtype=float)
    count = x.shape[0]
    side = np.sign(evaluate_batch(phi, x) - target)
    if np.any(side == 0):
        raise ValueError("Initial states must not lie on the target level")

    times = np.full(count, np.nan)
    points = np.full_like(x, np.nan)
    status = np.zeros(count, dtype=int)
    t = 0.0
    step_index = 0
    while t < t_max:
        running = np.flatnonzero(status == 0)
        if running.size == 0:
            break
        step_index += 1
        t_next = min(step_index * h, t_max)
        dt = t_next - t
        x_run = x[running]
        x_next = _rk4_step(sys.vector_field_batch, x_run, dt)

        finite = np.all(np.isfinite(x_next), axis=1)
        status[running[~finite]] = NONFINITE

        values = np.full(running.size, np.nan)
        if finite.any():
            values[finite] = evaluate_batch(phi, x_next[finite]) - target
        crossed = finite & (np.sign(values) != side[running])
        if crossed.any():
            idx = running[crossed]
            crossing_times, crossing_points = _refine_crossings(
                sys.vector_field_batch, x_run[crossed], phi, target, side[idx], dt, tol
            )
            times[idx] = t + crossing_times
            points[idx] = crossing_points
            status[idx] = CROSSED

        if confine:
            outside = finite & ~crossed & ~sys.domain.contains_batch(np.where(finite[:, None], x_next, 0.0))
            status[running[outside]] = EXITED

        keep = finite
        x[running[keep]] = x_next[keep]
        t = t_next
    status[status == 0] = TIMEOUT
    return BatchCrossings(times=times, points=points, status=status)


def _refine_crossings(vector_field, x_start, phi, target, side, dt, tol, max_iter: int = 100):
    lo = np.zeros(x_start.shape[0])
    hi = np.full(x_start.shape[0], dt)
    best_t = hi.copy()
    best_x = _rk4_step(vector_field, x_start, hi[:, None])
    done = np.zeros(x_start.shape[0], dtype=bool)
    for _ in range(max_iter):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        x_mid = _rk4_step(vector_field, x_start[active], mid[:, None])
        value = evaluate_batch(phi, x_mid) - target
        converged = np.abs(value) <= tol
        best_t[active[converged]] = mid[converged]
        best_x[active[converged]] = x_mid[converged]
        done[active[converged]] = True
        same_side = np.sign(value) == side
        lo[active] = np.where(same_side, mid, lo[active])
        hi[active] = np.where(same_side, hi[active], mid)
        # fall back to the upper bracket when tolerance is never met
        unresolved = active[~converged]
        best_t[unresolved] = hi[unresolved]
    remaining = np.flatnonzero(~done)
    if remaining.size:
        best_x[remaining] = _rk4_step(vector_field, x_start[remaining], best_t[remaining][:, None])
    return best_t, best_x


def flow_until_level(
    sys: DynSystem,
    x0,
    phi: Expr,
    target: float,
    t_max: float = DEFAULT_T_MAX,
    h: float = DEFAULT_STEP,
    confine: bool = True,
) -> LevelCrossing | None:
    """
    Transit time from ``x0`` to the level set phi = target.

    Returns:
        The refined crossing, or None when t_max is reached or the domain is left first
    """
    start = np.asarray(x0, dtype=float)
    if confine and not sys.domain.contains(start):
        raise ValueError(f"Initial state {tuple(start)} lies outside the domain")
    result = flow_until_level_batch(sys, start[None, :], phi, target, t_max=t_max, h=h, confine=confine)
    if result.status[0] == NONFINITE:
        raise IntegrationError("Non-finite state while searching for a level crossing")
    if result.status[0] != CROSSED:
        return None
    return LevelCrossing(time=float(result.times[0]), point=tuple(float(v) for v in result.points[0]))


def classify_equilibrium(eigenvalues: np.ndarray, tol: float = DEGENERATE_TOL) -> str:
    """stable / unstable / saddle by the signs of the eigenvalue real parts; degenerate if any is ~0."""
    real = np.real(eigenvalues)
    if np.any(np.abs(real) <= tol):
        return "degenerate"
    if np.all(real < 0):
        return "stable"
    if np.all(real > 0):
        return "unstable"
    return "saddle"


def find_equilibria(
    sys: DynSystem, seeds_per_axis: int = 9, tol: float = EQUILIBRIUM_TOL, max_iter: int = 50
) -> list[Equilibrium]:
    """
    Locate equilibria in the domain by Newton iteration from a uniform seed grid.

    Seeds whose Jacobian becomes singular, or that leave the domain or the
    expression domains, are discarded. Converged points closer than 1e-6 are merged.

    Args:
        sys: Dynamical system
        seeds_per_axis: Seeds per axis (>= 2)
        tol: Convergence threshold on ||f(x)||
        max_iter: Newton iteration limit per seed

    Returns:
        Equilibria sorted lexicographically by position
    """
    if seeds_per_axis < 2:
        raise ValueError(f"seeds_per_axis must be at least 2, got {seeds_per_axis}")
    axes = [np.linspace(lo, hi, seeds_per_axis) for lo, hi in zip(sys.domain.lower, sys.domain.upper, strict=True)]
    found: list[np.ndarray] = []
    for seed in itertools.product(*axes):
        point = _newton(sys, np.array(seed, dtype=float), tol, max_iter)
        if point is None or not sys.domain.contains(point, tol=1e-9):
            continue
        if any(np.linalg.norm(point - other) < DEDUP_RADIUS for other in found):
            continue
        found.append(point)

    equilibria = []
    for point in sorted(found, key=tuple):
        jac = sys.jacobian_at(point)
        eigenvalues = np.linalg.eigvals(jac)
        equilibria.append(
            Equilibrium(
                point=tuple(float(v) for v in point),
                jacobian=jac,
                eigenvalues=eigenvalues,
                kind=classify_equilibrium(eigenvalues),
            )
        )
    return equilibria


def _newton(sys: DynSystem, x: np.ndarray, tol: float, max_iter: int) -> np.ndarray | None:
    try:
        for _ in range(max_iter + 1):
            residual = sys.vector_field(x)
            if not np.all(np.isfinite(residual)):
                return None
            if np.linalg.norm(residual) < tol:
                return x
            x = x - np.linalg.solve(sys.jacobian_at(x), residual)
            if not np.all(np.isfinite(x)):
                return None
    except (np.linalg.LinAlgError, ExpressionDomainError):
        return None
    return None


def approximate_manifold(
    sys: DynSystem,
    eq: Equilibrium,
    branch: str,
    delta: float = 1e-4,
    t_horizon: float = 20.0,
    h: float = DEFAULT_STEP,
) -> list[ManifoldApprox]:
    """
    Approximate the stable or unstable manifold of a planar saddle by eigenvector shooting.

    Seeds at x* +/- delta*v, v the eigenvector of the positive (unstable) or
    negative (stable) eigenvalue, are integrated forward with f (unstable) or
    with -f (stable) until the domain is left or ``t_horizon`` is reached.

    Returns:
        One polyline per direction sign (+1, -1)
    """
    if sys.dim != 2:
        raise ValueError(f"Manifold approximation is implemented for planar systems only (n={sys.dim})")
    if eq.kind != "saddle":
        raise ValueError(f"Equilibrium at {eq.point} is {eq.kind}, not a saddle")
    if branch not in ("stable", "unstable"):
        raise ValueError(f"Unknown manifold branch: {branch}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")

    eigenvalues, eigenvectors = np.linalg.eig(eq.jacobian)
    real = np.real(eigenvalues)
    index = int(np.argmax(real)) if branch == "unstable" else int(np.argmin(real))
    direction = np.real(eigenvectors[:, index])
    direction = direction / np.linalg.norm(direction)

    def backward(points: np.ndarray) -> np.ndarray:
        return -sys.vector_field_batch(points)

    vector_field = sys.vector_field_batch if branch == "unstable" else backward
    center = np.asarray(eq.point, dtype=float)
    manifolds = []
    for sign in (1, -1):
        seed = center + sign * delta * direction
        sample = _integrate(vector_field, seed, t_horizon, h, sys.domain)
        manifolds.append(ManifoldApprox(equilibrium=eq, branch=branch, direction=sign, points=sample.states))
    return manifolds
