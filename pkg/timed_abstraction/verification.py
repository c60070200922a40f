"""Abstraction Verification Module

This module provides sampling-based checks of an abstraction: soundness of a
generated timed automaton against simulated trajectories, completeness of the
transit-time tables, level-set synchronization, the critical-point condition
at equilibria, unstable-manifold containment at saddles and positive
invariance of sublevel sets. Every check returns a Verdict that records what
was sampled.
"""

__all__ = [
    "AbstractionVerifier",
    "CHECKS",
    "check_soundness",
    "check_completeness",
    "check_levelset_sync",
    "check_critical_points",
    "check_unstable_manifold_containment",
    "check_positive_invariance",
    "check_nested_invariance",
]

import math
from collections.abc import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .abstraction import CRITICAL_GRADIENT, TransitTimeTable, sample_level_set
from .dynamics import DEFAULT_STEP, DynSystem, Equilibrium, approximate_manifold, find_equilibria, flow_batch
from .expression import Expr, evaluate, evaluate_batch
from .partition import GridSampling, Partition, PartitionFunction, alpha, cell_name
from .timed_automaton import TimedAutomaton
from .verification_report import Verdict, VerificationReport
from .zones import ZoneGraph, explore

CHECKS = ("sound", "complete", "prop2", "lemma1", "theorem1", "invariance")

DEFAULT_TOL_ABS = 1e-4
DEFAULT_TOL_REL = 1e-3
CONTAINMENT_TOL = 1e-6
INVARIANCE_TOL = 1e-8


def check_soundness(
    sys: DynSystem,
    partition: Partition,
    ta: TimedAutomaton,
    n_traj: int = 200,
    t_grid: Sequence[float] | None = None,
    seed: int = 42,
    h: float = DEFAULT_STEP,
) -> Verdict:
    """
    Monte Carlo check that alpha(flow(t, x0)) is contained in Phi_A(t, alpha(x0)).

    Initial points are drawn from the init box (the domain when there is none).
    Trajectory samples that leave the domain are skipped and counted.

    Args:
        sys: Dynamical system
        partition: Partition the automaton was generated from
        ta: Generated timed automaton
        n_traj: Number of trajectories
        t_grid: Probe times (default: 50 times in [0, 2])
        seed: Seed for the initial points
        h: RK4 step

    Returns:
        Verdict of kind "sound"; a failure names the trajectory, time and offending cells
    """
    times = [float(t) for t in (np.linspace(0.0, 2.0, 50) if t_grid is None else t_grid)]
    order = np.argsort(times, kind="stable")
    sorted_times = [times[i] for i in order]
    box = sys.init_box or sys.domain
    rng = np.random.default_rng(seed)
    starts = box.sample(rng, n_traj)

    t_horizon = max(sorted_times, default=0.0)
    graphs: dict[str, ZoneGraph] = {}
    reachable: dict[tuple[str, int], set[str]] = {}

    def allowed(location: str, k: int) -> set[str]:
        if location not in graphs:
            graphs[location] = explore(ta, [location], t_horizon + 1e-9)
        key = (location, k)
        if key not in reachable:
            reachable[key] = graphs[location].locations_at(sorted_times[k])
        return reachable[key]

    states = flow_batch(sys, starts, sorted_times, h) if sorted_times else np.empty((0, n_traj, sys.dim))
    inside = np.all(np.isfinite(states), axis=2)
    for k in range(len(sorted_times)):
        inside[k] &= sys.domain.contains_batch(states[k])

    witnesses = []
    checked = 0
    for j, x0 in enumerate(starts):
        origins = sorted(cell_name(*cell_id) for cell_id in alpha(partition, x0))
        for k, t in enumerate(sorted_times):
            if not inside[k, j]:
                continue
            checked += 1
            cells = {cell_name(*cell_id) for cell_id in alpha(partition, states[k, j])}
            permitted = set().union(*(allowed(e, k) for e in origins))
            outside = cells - permitted
            if outside:
                witnesses.append(
                    {
                        "x0": tuple(float(v) for v in x0),
                        "t": t,
                        "state": tuple(float(v) for v in states[k, j]),
                        "cells": sorted(outside),
                        "allowed": sorted(permitted),
                    }
                )
                break
    skipped = inside.size - checked
    return Verdict(
        kind="sound",
        passed=not witnesses,
        witnesses=witnesses,
        tolerances={"tau_widening": 1e-9, "rk4_step": h},
        coverage=(
            f"{n_traj} trajectories x {len(sorted_times)} times; "
            f"{checked} samples checked, {skipped} outside domain"
        ),
        details={"violations": len(witnesses), "seed": seed},
    )


def check_completeness(
    tables: Sequence[TransitTimeTable], tol_abs: float = DEFAULT_TOL_ABS, tol_rel: float = DEFAULT_TOL_REL
) -> Verdict:
    """
    Equal transit times on every regular level pair.

    A pair passes when t_high is finite and t_high - t_low <= max(tol_abs, tol_rel * t_low).
    Pairs touching a critical level, or with no level-set samples, are excluded and reported.
    """
    witnesses = []
    excluded = []
    checked = 0
    for table in tables:
        for entry in table.all_pairs():
            pair = {
                "family": table.family,
                "slice": entry.index,
                "lower": entry.lower,
                "upper": entry.upper,
                "t_low": entry.t_low,
                "t_high": entry.t_high,
                "declared": entry.declared,
            }
            if not entry.regular:
                excluded.append({**pair, "reason": "empty" if entry.empty else "critical"})
                continue
            checked += 1
            if not math.isfinite(entry.t_high) or entry.spread > max(tol_abs, tol_rel * entry.t_low):
                witnesses.append({**pair, "spread": entry.spread})
    return Verdict(
        kind="complete",
        passed=not witnesses,
        witnesses=witnesses,
        tolerances={"tol_abs": tol_abs, "tol_rel": tol_rel},
        coverage=f"{checked} regular level pairs checked, {len(excluded)} excluded",
        details={"excluded": excluded},
    )


def check_levelset_sync(
    sys: DynSystem, pf: PartitionFunction, a: float, m_samples: int = 200, grid: GridSampling | None = None
) -> Verdict:
    """
    Whether psi is constant on the level set phi = a.

    Passes when max psi - min psi <= max(1e-8, 1e-6 * |mean psi|) over the
    level-set samples. Critical or empty level sets are reported as not applicable.
    """
    grid = grid or GridSampling(sys.domain)
    samples = sample_level_set(pf.phi, grid, a, m_samples)
    base = {"family": pf.name, "level": a}
    if samples.shape[0] == 0:
        return Verdict(
            kind="levelset_sync",
            passed=False,
            status="level_set_empty",
            coverage=f"no grid point near level {a}",
            details=base,
        )
    gradient_norms = pf.gradient_norm_batch(samples)
    if np.any(gradient_norms < CRITICAL_GRADIENT):
        k = int(np.argmin(gradient_norms))
        return Verdict(
            kind="levelset_sync",
            passed=False,
            status="critical_value",
            coverage=f"{samples.shape[0]} level-set samples",
            details={**base, "critical_point": tuple(float(v) for v in samples[k])},
        )

    psi = evaluate_batch(pf.psi, samples)
    spread = float(psi.max() - psi.min())
    tolerance = max(1e-8, 1e-6 * abs(float(psi.mean())))
    passed = spread <= tolerance
    witnesses = []
    if not passed:
        for k in (int(np.argmin(psi)), int(np.argmax(psi))):
            witnesses.append({"point": tuple(float(v) for v in samples[k]), "psi": float(psi[k])})
    return Verdict(
        kind="levelset_sync",
        passed=passed,
        witnesses=witnesses,
        tolerances={"spread": tolerance},
        coverage=f"{samples.shape[0]} level-set samples",
        details={**base, "psi_spread": spread, "psi_mean": float(psi.mean())},
    )


def check_critical_points(pf: PartitionFunction, equilibria: Sequence[Equilibrium]) -> Verdict:
    """Every equilibrium must be a critical point of phi (||grad phi|| <= 1e-6)."""
    witnesses = []
    for eq in equilibria:
        grad = np.array([evaluate(g, eq.point) for g in pf.grad])
        if np.linalg.norm(grad) > CRITICAL_GRADIENT:
            witnesses.append({"equilibrium": eq.point, "kind": eq.kind, "gradient": tuple(float(v) for v in grad)})
    return Verdict(
        kind="critical_points",
        passed=not witnesses,
        witnesses=witnesses,
        tolerances={"gradient": CRITICAL_GRADIENT},
        coverage=f"{len(equilibria)} equilibria",
        details={"family": pf.name},
    )


def check_unstable_manifold_containment(
    sys: DynSystem,
    pf: PartitionFunction,
    eq: Equilibrium,
    grid: GridSampling | None = None,
    delta: float = 1e-4,
    t_horizon: float = 20.0,
    proper_radius: float = 0.1,
    proper_tol: float = 1e-8,
    h: float = DEFAULT_STEP,
) -> Verdict:
    """
    Whether the unstable manifold of a planar saddle lies in the level set phi = phi(p).

    The check applies only when some point of the stable manifold is a regular
    point of phi; otherwise the status is "hypothesis_not_met". Containment is
    proper when a grid point of the level set lies farther than ``proper_radius``
    from the manifold; such points are reported in ``details["proper_witnesses"]``.

    Raises:
        ValueError: If the system is not planar or ``eq`` is not a saddle
    """
    unstable = approximate_manifold(sys, eq, "unstable", delta, t_horizon, h)
    stable = approximate_manifold(sys, eq, "stable", delta, t_horizon, h)
    level = evaluate(pf.phi, eq.point)
    base = {"family": pf.name, "equilibrium": eq.point, "level": level}
    tolerances = {"containment": CONTAINMENT_TOL, "proper_radius": proper_radius, "proper_tol": proper_tol}

    stable_points = np.concatenate([m.points for m in stable], axis=0)
    if not np.any(pf.gradient_norm_batch(stable_points) >= CRITICAL_GRADIENT):
        return Verdict(
            kind="manifold_containment",
            passed=False,
            status="hypothesis_not_met",
            tolerances=tolerances,
            coverage=f"{stable_points.shape[0]} stable-manifold points, none regular",
            details=base,
        )

    manifold = np.concatenate([np.asarray(eq.point)[None, :]] + [m.points for m in unstable], axis=0)
    deviation = np.abs(evaluate_batch(pf.phi, manifold) - level)
    worst = int(np.argmax(deviation))
    passed = float(deviation[worst]) <= CONTAINMENT_TOL
    witnesses = []
    if not passed:
        witnesses.append({"point": tuple(float(v) for v in manifold[worst]), "deviation": float(deviation[worst])})

    grid = grid or GridSampling(sys.domain)
    on_level = grid.points[np.abs(grid.values(pf.phi).ravel() - level) <= proper_tol]
    proper_witnesses = []
    if on_level.shape[0]:
        distance, _ = cKDTree(manifold).query(on_level)
        far = distance > proper_radius
        if far.any():
            candidates = on_level[far]
            order = np.argsort(np.linalg.norm(candidates - np.asarray(eq.point), axis=1), kind="stable")
            proper_witnesses = [tuple(float(v) for v in candidates[k]) for k in order[:10]]

    return Verdict(
        kind="manifold_containment",
        passed=passed,
        witnesses=witnesses,
        tolerances=tolerances,
        coverage=f"{manifold.shape[0]} unstable-manifold points, {on_level.shape[0]} level-set grid points",
        details={
            **base,
            "max_deviation": float(deviation[worst]),
            "proper": bool(proper_witnesses),
            "proper_witnesses": proper_witnesses,
        },
    )


def check_positive_invariance(
    sys: DynSystem,
    phi: Expr,
    threshold: float,
    n_boundary_samples: int = 200,
    t_probe: float = 1.0,
    grid: GridSampling | None = None,
    h: float = DEFAULT_STEP,
    probes: int = 21,
) -> Verdict:
    """
    Whether the sublevel set {phi <= threshold} is positively invariant.

    Boundary points are flowed for ``t_probe``; every probed state still in the
    domain must satisfy phi <= threshold + 1e-8. A sublevel set containing the
    whole domain passes vacuously.
    """
    grid = grid or GridSampling(sys.domain)
    values = grid.values(phi)
    base = {"threshold": threshold, "phi": str(phi)}
    if threshold >= float(values.max()):
        return Verdict(kind="invariance", passed=True, coverage="sublevel set is the whole domain", details=base)
    samples = sample_level_set(phi, grid, threshold, n_boundary_samples)
    if samples.shape[0] == 0:
        return Verdict(
            kind="invariance",
            passed=False,
            status="level_set_empty",
            coverage=f"no boundary points at level {threshold}",
            details=base,
        )

    times = np.linspace(0.0, t_probe, probes)
    states = flow_batch(sys, samples, times, h)
    witnesses = []
    alive = np.ones(samples.shape[0], dtype=bool)
    for k, t in enumerate(times):
        alive &= np.all(np.isfinite(states[k]), axis=1) & sys.domain.contains_batch(states[k])
        if not alive.any():
            break
        current = np.where(alive, evaluate_batch(phi, np.where(alive[:, None], states[k], samples)), -np.inf)
        escaped = np.flatnonzero(current > threshold + INVARIANCE_TOL)
        if escaped.size:
            j = int(escaped[np.argmax(current[escaped])])
            witnesses.append(
                {
                    "x0": tuple(float(v) for v in samples[j]),
                    "t": float(t),
                    "state": tuple(float(v) for v in states[k, j]),
                    "value": float(current[j]),
                }
            )
            break
    return Verdict(
        kind="invariance",
        passed=not witnesses,
        witnesses=witnesses,
        tolerances={"value": INVARIANCE_TOL},
        coverage=f"{samples.shape[0]} boundary points x {probes} probe times in [0, {t_probe}]",
        details=base,
    )


def check_nested_invariance(
    sys: DynSystem, pf: PartitionFunction, grid: GridSampling | None = None, **kwargs
) -> Verdict:
    """Positive invariance of every nested set phi^-1([a_0, a_i]) of a partition function."""
    grid = grid or GridSampling(sys.domain)
    per_level = []
    witnesses = []
    for level in pf.levels[1:]:
        if not math.isfinite(level):
            continue
        verdict = check_positive_invariance(sys, pf.phi, level, grid=grid, **kwargs)
        per_level.append({"level": level, "status": verdict.status})
        if verdict.status == "fail":
            witnesses.append({"level": level, **verdict.witnesses[0]})
    return Verdict(
        kind="invariance",
        passed=not witnesses,
        witnesses=witnesses,
        tolerances={"value": INVARIANCE_TOL},
        coverage=f"{len(per_level)} nested sublevel sets",
        details={"family": pf.name, "levels": per_level},
    )


class AbstractionVerifier:
    """
    Handler for verifying an abstraction.

    Runs the requested checks and collects their verdicts in a VerificationReport.
    Partition, tables and automaton are only required by the checks that use them.
    """

    def __init__(
        self,
        system: DynSystem,
        families: Sequence[PartitionFunction],
        options: dict | None = None,
        report: VerificationReport | None = None,
    ):
        """
        Initialize the verifier.

        Args:
            system: Dynamical system
            families: Partition functions of the model
            options: Numeric options (see ModelConfig defaults)
            report: Report to fill (a new one by default)
        """
        self.system = system
        self.families = list(families)
        self.options = dict(options or {})
        self.report = report or VerificationReport()
        self._grid: GridSampling | None = None
        self._equilibria: list[Equilibrium] | None = None

    def _option(self, key, default):
        return self.options.get(key, default)

    @property
    def grid(self) -> GridSampling:
        if self._grid is None:
            self._grid = GridSampling(self.system.domain, self._option("grid", 201))
        return self._grid

    @property
    def equilibria(self) -> list[Equilibrium]:
        if self._equilibria is None:
            self._equilibria = find_equilibria(self.system, self._option("newton_seeds", 9))
            kinds = ", ".join(f"{eq.point} {eq.kind}" for eq in self._equilibria) or "none"
            print(f"📋 Equilibria in domain: {kinds}")
        return self._equilibria

    def _record(self, verdict: Verdict, label: str) -> Verdict:
        self.report.add_verdict(verdict, label)
        icon = "✅" if verdict.passed else "❌" if verdict.applicable else "⚠️"
        print(f"{icon} {verdict.kind} [{label}]: {verdict.status}")
        return verdict

    def verify_soundness(self, partition: Partition, ta: TimedAutomaton) -> Verdict:
        verdict = check_soundness(
            self.system,
            partition,
            ta,
            n_traj=self._option("sound_trajectories", 200),
            t_grid=np.linspace(0.0, self._option("sound_horizon", 2.0), self._option("sound_times", 50)),
            seed=self._option("seed", 42),
            h=self._option("rk4_step", DEFAULT_STEP),
        )
        return self._record(verdict, "abstraction")

    def verify_completeness(self, tables: Sequence[TransitTimeTable]) -> Verdict:
        verdict = check_completeness(
            tables,
            tol_abs=self._option("tol_complete", DEFAULT_TOL_ABS),
            tol_rel=self._option("tol_rel", DEFAULT_TOL_REL),
        )
        return self._record(verdict, "tables")

    def verify_levelset_sync(self) -> list[Verdict]:
        verdicts = []
        for pf in self.families:
            for level in pf.levels:
                if not math.isfinite(level):
                    continue
                verdict = check_levelset_sync(
                    self.system, pf, level, self._option("samples_per_level", 200), grid=self.grid
                )
                verdicts.append(self._record(verdict, f"{pf.name} = {level:g}"))
        return verdicts

    def verify_critical_points(self) -> list[Verdict]:
        return [self._record(check_critical_points(pf, self.equilibria), pf.name) for pf in self.families]

    def verify_manifold_containment(self) -> list[Verdict]:
        verdicts = []
        if self.system.dim != 2:
            self.report.add_warning("Manifold containment is only checked for planar systems", step="theorem1")
            print("⚠️ Warning: manifold containment is only checked for planar systems")
            return verdicts
        saddles = [eq for eq in self.equilibria if eq.kind == "saddle"]
        if not saddles:
            self.report.add_warning("No saddle equilibrium in the domain", step="theorem1")
            print("⚠️ Warning: no saddle equilibrium in the domain")
        for eq in saddles:
            for pf in self.families:
                verdict = check_unstable_manifold_containment(
                    self.system,
                    pf,
                    eq,
                    grid=self.grid,
                    delta=self._option("manifold_delta", 1e-4),
                    t_horizon=self._option("manifold_horizon", 20.0),
                    proper_radius=self._option("proper_radius", 0.1),
                    proper_tol=self._option("proper_tol", 1e-8),
                    h=self._option("rk4_step", DEFAULT_STEP),
                )
                verdicts.append(self._record(verdict, f"{pf.name} at {eq.point}"))
        return verdicts

    def verify_invariance(self) -> list[Verdict]:
        return [
            self._record(
                check_nested_invariance(self.system, pf, grid=self.grid, h=self._option("rk4_step", DEFAULT_STEP)),
                pf.name,
            )
            for pf in self.families
        ]

