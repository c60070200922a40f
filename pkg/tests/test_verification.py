"""
Unit tests for the verification module.
"""

import math
import unittest
from unittest.mock import patch

import numpy as np
import pytest

from tests.conftest import (
    MODELS_DIR,
    SADDLE_TRANSIT_OPTIONS,
    saddle_families,
    saddle_grid,
    saddle_partition,
    saddle_system,
    saddle_ta,
    saddle_tables,
)
from timed_abstraction.abstraction import SliceTransit, TransitTimeTable, estimate_transit_times
from timed_abstraction.config_manager import load_model
from timed_abstraction.dynamics import Box, DynSystem, find_equilibria
from timed_abstraction.expression import parse
from timed_abstraction.partition import GridSampling, PartitionFunction
from timed_abstraction.timed_automaton import ClockAtom, ClockConstraint, Transition
from timed_abstraction.verification import (
    CHECKS,
    AbstractionVerifier,
    check_completeness,
    check_critical_points,
    check_levelset_sync,
    check_nested_invariance,
    check_positive_invariance,
    check_soundness,
    check_unstable_manifold_containment,
)

SOUND_TIMES = np.linspace(0.0, 2.0, 11)


def _circle(system: DynSystem) -> PartitionFunction:
    return PartitionFunction.create("circle", "x1^2 + x2^2", [0, 1, 4, 32], system)


class TestSoundness(unittest.TestCase):
    """Test cases for the Monte Carlo soundness check."""

    def test_saddle_abstraction_is_sound(self):
        """Test that sampled saddle trajectories stay within the discrete flow map."""
        verdict = check_soundness(saddle_system(), saddle_partition(), saddle_ta(), n_traj=20, t_grid=SOUND_TIMES)
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.kind, "sound")
        self.assertEqual(verdict.details["violations"], 0)
        self.assertIn("20 trajectories x 11 times", verdict.coverage)

    def test_tightened_guards_are_caught(self):
        """Test that guards ten times too late produce a witness."""
        ta = saddle_ta()
        slow = ta.with_transitions(
            Transition(
                tr.source,
                tr.target,
                tr.symbol,
                ClockConstraint(tuple(ClockAtom(a.clock, a.rel, a.k * 10) for a in tr.guard)),
                tr.reset,
            )
            for tr in ta.transitions
        )
        verdict = check_soundness(saddle_system(), saddle_partition(), slow, n_traj=5, t_grid=SOUND_TIMES)
        self.assertFalse(verdict.passed)
        self.assertEqual(verdict.status, "fail")
        witness = verdict.witnesses[0]
        self.assertEqual(set(witness), {"x0", "t", "state", "cells", "allowed"})
        self.assertTrue(set(witness["cells"]).isdisjoint(witness["allowed"]))

    def test_time_zero_only(self):
        """Test that probing only t = 0 passes since every start cell is its own flow map at 0."""
        verdict = check_soundness(saddle_system(), saddle_partition(), saddle_ta(), n_traj=50, t_grid=[0.0])
        self.assertTrue(verdict.passed)
        self.assertIn("50 trajectories x 1 times", verdict.coverage)

    @pytest.mark.slow
    def test_default_sampling_on_complete_saddle(self):
        """Test that the complete saddle abstraction is sound for 200 trajectories x 50 times."""
        self.assertTrue(check_completeness(saddle_tables()).passed)
        verdict = check_soundness(saddle_system(), saddle_partition(), saddle_ta())
        self.assertTrue(verdict.passed, verdict.witnesses[:1])
        self.assertIn("200 trajectories x 50 times", verdict.coverage)


class TestCompleteness(unittest.TestCase):
    """Test cases for the completeness check."""

    def test_saddle_tables_are_complete(self):
        """Test that the saddle has equal transit times on every regular pair."""
        verdict = check_completeness(saddle_tables())
        self.assertTrue(verdict.passed)
        excluded = verdict.details["excluded"]
        self.assertEqual(len(excluded), 2)
        self.assertTrue(all(e["reason"] == "critical" for e in excluded))

    def test_spread_beyond_tolerance_fails(self):
        """Test that a pair with t_high - t_low = 1 is a witness."""
        table = TransitTimeTable("phi", {1: SliceTransit("phi", 1, 0.0, 1.0, 1.0, 2.0, 10, 10)})
        verdict = check_completeness([table])
        self.assertFalse(verdict.passed)
        self.assertAlmostEqual(verdict.witnesses[0]["spread"], 1.0)

    def test_unbounded_regular_pair_fails(self):
        """Test that a regular pair with t_high = inf is not complete."""
        table = TransitTimeTable("phi", {1: SliceTransit("phi", 1, 0.0, 1.0, 1.0, math.inf, 10, 9)})
        self.assertFalse(check_completeness([table]).passed)

    def test_unsynchronized_level_spreads_transit_times(self):
        """Test that x1^2 - x2^2, whose psi varies on x1^2 - x2^2 = 4, gets a wide 4 -> 1 transit."""
        system = saddle_system()
        pf = PartitionFunction.create("hyper", "x1^2 - x2^2", [-16, 1, 4, 16], system)
        self.assertEqual(check_levelset_sync(system, pf, 4.0, grid=saddle_grid()).status, "fail")

        options = {**SADDLE_TRANSIT_OPTIONS, "extra_level_pairs": 0}
        table = estimate_transit_times(system, pf, saddle_grid(), seed=42, **options)
        verdict = check_completeness([table])
        self.assertFalse(verdict.passed)
        spreads = [w["spread"] for w in verdict.witnesses if (w["lower"], w["upper"]) == (1.0, 4.0)]
        self.assertEqual(len(spreads), 1)
        self.assertGreater(spreads[0], 0.1)

    def test_empty_pairs_are_excluded(self):
        """Test that empty slices are reported and skipped."""
        table = TransitTimeTable("phi", {1: SliceTransit("phi", 1, 0.0, 1.0, 0.0, math.inf, 0, 0, empty=True)})
        verdict = check_completeness([table])
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.details["excluded"][0]["reason"], "empty")


class TestLevelsetSync(unittest.TestCase):
    """Test cases for the level-set synchronization check."""

    def test_constant_psi_passes(self):
        """Test that psi = -2 x1^2 is constant on x1^2 = 4."""
        verdict = check_levelset_sync(saddle_system(), saddle_families()[0], 4.0, grid=saddle_grid())
        self.assertTrue(verdict.passed)
        self.assertAlmostEqual(verdict.details["psi_mean"], -8.0, places=6)

    def test_critical_level(self):
        """Test that the critical level 0 is not applicable."""
        verdict = check_levelset_sync(saddle_system(), saddle_families()[0], 0.0, grid=saddle_grid())
        self.assertEqual(verdict.status, "critical_value")
        self.assertFalse(verdict.applicable)

    def test_empty_level(self):
        """Test a level the function never reaches."""
        verdict = check_levelset_sync(saddle_system(), saddle_families()[0], 20.0, grid=saddle_grid())
        self.assertEqual(verdict.status, "level_set_empty")

    def test_circle_is_not_synchronized(self):
        """Test that psi varies on a circle and both extremes are reported."""
        system = saddle_system()
        verdict = check_levelset_sync(system, _circle(system), 4.0, grid=saddle_grid())
        self.assertEqual(verdict.status, "fail")
        self.assertEqual(len(verdict.witnesses), 2)
        self.assertLess(verdict.witnesses[0]["psi"], verdict.witnesses[1]["psi"])


class TestCriticalPoints(unittest.TestCase):
    """Test cases for the equilibrium critical-point check."""

    def test_saddle_origin_is_critical(self):
        """Test that the origin is a critical point of x1^2 and -x2^2."""
        equilibria = find_equilibria(saddle_system())
        for pf in saddle_families():
            self.assertTrue(check_critical_points(pf, equilibria).passed)

    def test_transversal_function_fails(self):
        """Test that phi = x1 has a nonzero gradient at the origin."""
        system, families, _ = load_model(str(MODELS_DIR / "transversal.yaml"))
        verdict = check_critical_points(families[0], find_equilibria(system))
        self.assertFalse(verdict.passed)
        np.testing.assert_allclose(verdict.witnesses[0]["gradient"], (1.0, 0.0))

    def test_complete_tables_imply_critical_equilibria(self):
        """Test that the complete saddle tables come with equilibria critical for every family."""
        self.assertTrue(check_completeness(saddle_tables()).passed)
        equilibria = find_equilibria(saddle_system())
        for pf in saddle_families():
            with self.subTest(family=pf.name):
                self.assertTrue(check_critical_points(pf, equilibria).passed)

    def test_non_critical_equilibrium_breaks_completeness(self):
        """Test that phi = x1, not critical at the origin, never reaches level 0 from above."""
        system, families, _ = load_model(str(MODELS_DIR / "transversal.yaml"))
        self.assertFalse(check_critical_points(families[0], find_equilibria(system)).passed)
        grid = GridSampling(system.domain, 101)
        table = estimate_transit_times(system, families[0], grid, samples_per_level=20, t_max=5.0, extra_level_pairs=0)
        verdict = check_completeness([table])
        self.assertFalse(verdict.passed)
        self.assertTrue(any(math.isinf(w["t_high"]) for w in verdict.witnesses))


class TestManifoldContainment(unittest.TestCase):
    """Test cases for the unstable-manifold containment check."""

    def setUp(self):
        """Set up test fixtures."""
        self.system = saddle_system()
        self.saddle = find_equilibria(self.system)[0]

    def test_x1_squared_contains_unstable_manifold(self):
        """Test that x1^2 = 0 contains the x2 axis, with nothing to spare."""
        pf = saddle_families()[0]
        verdict = check_unstable_manifold_containment(self.system, pf, self.saddle, grid=saddle_grid())
        self.assertTrue(verdict.passed)
        self.assertFalse(verdict.details["proper"])
        self.assertLessEqual(verdict.details["max_deviation"], 1e-6)

    def test_hypothesis_not_met(self):
        """Test -x2^2, whose gradient vanishes on the whole stable manifold."""
        pf = saddle_families()[1]
        verdict = check_unstable_manifold_containment(self.system, pf, self.saddle, grid=saddle_grid())
        self.assertEqual(verdict.status, "hypothesis_not_met")

    def test_circle_fails(self):
        """Test that x1^2 + x2^2 grows along the unstable manifold."""
        verdict = check_unstable_manifold_containment(
            self.system, _circle(self.system), self.saddle, grid=saddle_grid()
        )
        self.assertEqual(verdict.status, "fail")
        self.assertGreater(verdict.witnesses[0]["deviation"], 1.0)

    def test_bump_contains_properly(self):
        """Test the flattened function whose zero level is the band |x1| <= 0.5."""
        system, families, options = load_model(str(MODELS_DIR / "bump.yaml"))
        saddle = find_equilibria(system)[0]
        grid = GridSampling(system.domain, options["grid"])
        verdict = check_unstable_manifold_containment(system, families[0], saddle, grid=grid)
        self.assertTrue(verdict.passed)
        self.assertTrue(verdict.details["proper"])
        self.assertGreater(abs(verdict.details["proper_witnesses"][0][0]), 0.1)

    def test_requires_planar_saddle(self):
        """Test that a sink is rejected."""
        sink = DynSystem(dim=2, f=(parse("-x1", 2), parse("-x2", 2)), domain=Box.from_intervals([[-1, 1], [-1, 1]]))
        pf = PartitionFunction.create("r", "x1^2 + x2^2", [0, 2], sink)
        with self.assertRaises(ValueError):
            check_unstable_manifold_containment(sink, pf, find_equilibria(sink)[0])


class TestInvariance(unittest.TestCase):
    """Test cases for positive invariance of sublevel sets."""

    def test_nested_saddle_sets_are_invariant(self):
        """Test that {x1^2 <= a} is positively invariant for every level."""
        verdict = check_nested_invariance(saddle_system(), saddle_families()[0], grid=saddle_grid())
        self.assertTrue(verdict.passed)
        self.assertEqual([entry["level"] for entry in verdict.details["levels"]], [1.0, 4.0, 16.0])

    def test_circle_is_not_invariant(self):
        """Test that a disc around the saddle is left along x2."""
        system = saddle_system()
        verdict = check_positive_invariance(system, parse("x1^2 + x2^2", 2), 4.0, grid=saddle_grid())
        self.assertFalse(verdict.passed)
        self.assertGreater(verdict.witnesses[0]["value"], 4.0)

    def test_whole_domain_is_vacuous(self):
        """Test a threshold above the maximum of phi."""
        verdict = check_positive_invariance(saddle_system(), parse("x1^2", 2), 100.0, grid=saddle_grid())
        self.assertTrue(verdict.passed)
        self.assertIn("whole domain", verdict.coverage)


class TestAbstractionVerifier(unittest.TestCase):
    """Test cases for the AbstractionVerifier handler."""

    def setUp(self):
        """Set up test fixtures."""
        self.verifier = AbstractionVerifier(saddle_system(), list(saddle_families()), {"grid": 101})

    def test_check_names(self):
        """Test the list of check names."""
        self.assertEqual(CHECKS, ("sound", "complete", "prop2", "lemma1", "theorem1", "invariance"))

    @patch("builtins.print")
    def test_verdicts_are_recorded(self, mock_print):
        """Test that each check adds its verdicts to the report."""
        self.verifier.verify_critical_points()
        self.verifier.verify_completeness(saddle_tables())
        kinds = [v["kind"] for v in self.verifier.report.verdicts_dict()]
        self.assertEqual(kinds, ["critical_points", "critical_points", "complete"])
        self.assertTrue(self.verifier.report.all_passed)

    @patch("builtins.print")
    def test_levelset_sync_per_level(self, mock_print):
        """Test one verdict per finite level of every family."""
        verdicts = self.verifier.verify_levelset_sync()
        self.assertEqual(len(verdicts), 8)
        statuses = {v.details["level"]: v.status for v in verdicts[:4]}
        self.assertEqual(statuses[0.0], "critical_value")
        self.assertEqual(statuses[4.0], "pass")

    @patch("builtins.print")
    def test_manifold_containment_skips_non_planar(self, mock_print):
        """Test that a 1-D system produces a warning and no verdict."""
        system = DynSystem(dim=1, f=(parse("-x1", 1),), domain=Box.from_intervals([[-1, 1]]))
        verifier = AbstractionVerifier(system, [PartitionFunction.create("p", "x1^2", [0, 1], system)])
        self.assertEqual(verifier.verify_manifold_containment(), [])
        self.assertEqual(len(verifier.report.report_data["warnings"]), 1)


if __name__ == "__main__":
    unittest.main()
