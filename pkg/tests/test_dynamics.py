"""
Unit tests for the dynamics module.
"""

import math
import unittest

import numpy as np

from tests.conftest import LN2, saddle_system
from timed_abstraction.dynamics import (
    CROSSED,
    TIMEOUT,
    Box,
    DynSystem,
    approximate_manifold,
    classify_equilibrium,
    find_equilibria,
    flow,
    flow_batch,
    flow_until_level,
    flow_until_level_batch,
)
from timed_abstraction.exceptions import IntegrationError
from timed_abstraction.expression import parse


class TestBox(unittest.TestCase):
    """Test cases for axis-aligned boxes."""

    def test_from_intervals(self):
        """Test building a box from interval pairs."""
        box = Box.from_intervals([[-1, 1], [0, 2]])
        self.assertEqual(box.dim, 2)
        self.assertEqual(box.intervals, [[-1.0, 1.0], [0.0, 2.0]])

    def test_degenerate_interval_allowed(self):
        """Test that a point interval is a valid box."""
        box = Box.from_intervals([[4, 4]])
        self.assertTrue(box.contains([4.0]))

    def test_rejects_inverted_and_infinite_intervals(self):
        """Test malformed intervals."""
        with self.assertRaises(ValueError):
            Box.from_intervals([[1, -1]])
        with self.assertRaises(ValueError):
            Box.from_intervals([[0, math.inf]])

    def test_contains_and_contains_box(self):
        """Test point and box containment."""
        box = Box.from_intervals([[-4, 4], [-4, 4]])
        self.assertTrue(box.contains([4.0, -4.0]))
        self.assertFalse(box.contains([4.1, 0.0]))
        self.assertTrue(box.contains_box(Box.from_intervals([[4, 4], [-0.1, 0.1]])))
        self.assertFalse(box.contains_box(Box.from_intervals([[3, 5], [0, 0]])))

    def test_sample_stays_inside(self):
        """Test uniform sampling."""
        box = Box.from_intervals([[4, 4], [-0.1, 0.1]])
        points = box.sample(np.random.default_rng(0), 100)
        self.assertEqual(points.shape, (100, 2))
        self.assertTrue(np.all(points[:, 0] == 4.0))
        self.assertTrue(np.all(np.abs(points[:, 1]) <= 0.1))


class TestDynSystem(unittest.TestCase):
    """Test cases for DynSystem construction."""

    def setUp(self):
        """Set up test fixtures."""
        self.domain = Box.from_intervals([[-4, 4], [-4, 4]])

    def test_component_count_must_match(self):
        """Test that f has one component per dimension."""
        with self.assertRaises(ValueError):
            DynSystem(dim=2, f=(parse("-x1", 2),), domain=self.domain)

    def test_domain_dimension_must_match(self):
        """Test the domain dimension check."""
        with self.assertRaises(ValueError):
            DynSystem(dim=1, f=(parse("-x1", 1),), domain=self.domain)

    def test_init_box_must_lie_in_domain(self):
        """Test that X0 must be a subset of X."""
        with self.assertRaises(ValueError):
            DynSystem(
                dim=2,
                f=(parse("-x1", 2), parse("x2", 2)),
                domain=self.domain,
                init_box=Box.from_intervals([[3, 5], [0, 0]]),
            )

    def test_vector_field_and_jacobian(self):
        """Test evaluation of f and its Jacobian."""
        system = saddle_system()
        np.testing.assert_allclose(system.vector_field([1.0, 2.0]), [-1.0, 2.0])
        np.testing.assert_allclose(system.jacobian_at([3.0, -1.0]), [[-1.0, 0.0], [0.0, 1.0]])


class TestFlow(unittest.TestCase):
    """Test cases for RK4 integration."""

    def setUp(self):
        """Set up test fixtures."""
        self.system = saddle_system()

    def test_linear_flow_matches_closed_form(self):
        """Test x(t) = (x1 e^-t, x2 e^t)."""
        sample = flow(self.system, [2.0, 0.5], 1.0)
        np.testing.assert_allclose(sample.final_state, [2.0 * math.exp(-1), 0.5 * math.e], rtol=1e-10)
        self.assertAlmostEqual(sample.final_time, 1.0)
        self.assertIsNone(sample.exit_time)

    def test_partial_final_step(self):
        """Test that t_end need not be a multiple of the step."""
        sample = flow(self.system, [1.0, 0.0], 0.0105, h=0.001)
        self.assertAlmostEqual(sample.times[-1], 0.0105)
        self.assertAlmostEqual(sample.times[-2], 0.010)

    def test_zero_duration(self):
        """Test that t_end = 0 returns the initial state only."""
        sample = flow(self.system, [1.0, 1.0], 0.0)
        self.assertEqual(len(sample.times), 1)
        np.testing.assert_array_equal(sample.final_state, [1.0, 1.0])

    def test_halts_when_leaving_domain(self):
        """Test that confined integration stops at the domain boundary."""
        sample = flow(self.system, [0.0, 1.0], 5.0)
        self.assertIsNotNone(sample.exit_time)
        self.assertAlmostEqual(sample.exit_time, math.log(4.0), places=2)
        self.assertTrue(self.system.domain.contains(sample.final_state))

    def test_unconfined_integration_continues(self):
        """Test that confine=False integrates past the domain."""
        sample = flow(self.system, [0.0, 1.0], 2.0, confine=False)
        self.assertIsNone(sample.exit_time)
        self.assertAlmostEqual(sample.final_state[1], math.exp(2.0), places=6)

    def test_invalid_arguments(self):
        """Test argument validation."""
        with self.assertRaises(ValueError):
            flow(self.system, [0.0, 0.0], 1.0, h=0.0)
        with self.assertRaises(ValueError):
            flow(self.system, [0.0, 0.0], -1.0)
        with self.assertRaises(ValueError):
            flow(self.system, [5.0, 0.0], 1.0)

    def test_blow_up_raises_integration_error(self):
        """Test that a non-finite state is reported."""
        system = DynSystem(dim=1, f=(parse("x1^2", 1),), domain=Box.from_intervals([[0, 10]]))
        with self.assertRaises(IntegrationError):
            flow(system, [1.0], 2.0, h=0.01, confine=False)

    def test_flow_batch_times(self):
        """Test batch integration at several sample times."""
        states = flow_batch(self.system, np.array([[1.0, 1.0], [2.0, -1.0]]), [0.0, 0.5, 1.0])
        self.assertEqual(states.shape, (3, 2, 2))
        np.testing.assert_allclose(states[0], [[1.0, 1.0], [2.0, -1.0]])
        np.testing.assert_allclose(states[2, 1], [2.0 * math.exp(-1), -math.e], rtol=1e-10)

    def test_flow_batch_rejects_decreasing_times(self):
        """Test the sample time ordering check."""
        with self.assertRaises(ValueError):
            flow_batch(self.system, np.zeros((1, 2)), [1.0, 0.5])


class TestLevelCrossing(unittest.TestCase):
    """Test cases for level-crossing detection."""

    def setUp(self):
        """Set up test fixtures."""
        self.system = saddle_system()
        self.phi1 = parse("x1^2", 2)

    def test_transit_time_ln2(self):
        """Test that x1^2 goes from 4 to 1 in ln 2."""
        crossing = flow_until_level(self.system, [2.0, 0.3], self.phi1, 1.0)
        self.assertIsNotNone(crossing)
        self.assertAlmostEqual(crossing.time, LN2, places=6)
        self.assertAlmostEqual(crossing.point[0], 1.0, places=6)

    def test_no_crossing_returns_none(self):
        """Test that an unreachable level yields None."""
        self.assertIsNone(flow_until_level(self.system, [1.0, 0.0], self.phi1, 0.0, t_max=2.0))

    def test_batch_status(self):
        """Test per-sample status codes."""
        result = flow_until_level_batch(
            self.system, np.array([[2.0, 0.0], [-2.0, 0.0], [0.5, 0.0]]), self.phi1, 1.0, t_max=3.0
        )
        self.assertEqual(list(result.status[:2]), [CROSSED, CROSSED])
        self.assertEqual(result.status[2], TIMEOUT)
        np.testing.assert_allclose(result.times[:2], [LN2, LN2], atol=1e-6)
        self.assertTrue(math.isnan(result.times[2]))
        self.assertEqual(list(result.crossed), [True, True, False])

    def test_start_on_level_rejected(self):
        """Test that samples must not start on the target level."""
        with self.assertRaises(ValueError):
            flow_until_level_batch(self.system, np.array([[1.0, 0.0]]), self.phi1, 1.0)


class TestEquilibria(unittest.TestCase):
    """Test cases for equilibrium search and manifolds."""

    def test_classify(self):
        """Test classification by eigenvalue signs."""
        self.assertEqual(classify_equilibrium(np.array([-1.0, 1.0])), "saddle")
        self.assertEqual(classify_equilibrium(np.array([-1.0, -2.0])), "stable")
        self.assertEqual(classify_equilibrium(np.array([1.0 + 1j, 1.0 - 1j])), "unstable")
        self.assertEqual(classify_equilibrium(np.array([0.0, -1.0])), "degenerate")

    def test_saddle_has_one_equilibrium(self):
        """Test that the origin is the only equilibrium of the saddle."""
        equilibria = find_equilibria(saddle_system())
        self.assertEqual(len(equilibria), 1)
        np.testing.assert_allclose(equilibria[0].point, [0.0, 0.0], atol=1e-12)
        self.assertEqual(equilibria[0].kind, "saddle")

    def test_several_equilibria_sorted(self):
        """Test x' = x - x^3 on [-2, 2]: equilibria -1, 0, 1."""
        system = DynSystem(dim=1, f=(parse("x1 - x1^3", 1),), domain=Box.from_intervals([[-2, 2]]))
        equilibria = find_equilibria(system, seeds_per_axis=21)
        np.testing.assert_allclose([eq.point[0] for eq in equilibria], [-1.0, 0.0, 1.0], atol=1e-9)
        self.assertEqual([eq.kind for eq in equilibria], ["stable", "unstable", "stable"])

    def test_seed_count_validated(self):
        """Test that at least two seeds per axis are required."""
        with self.assertRaises(ValueError):
            find_equilibria(saddle_system(), seeds_per_axis=1)

    def test_unstable_manifold_of_saddle(self):
        """Test that the unstable manifold of the saddle is the x2 axis."""
        system = saddle_system()
        eq = find_equilibria(system)[0]
        branches = approximate_manifold(system, eq, "unstable", t_horizon=15.0)
        self.assertEqual([m.direction for m in branches], [1, -1])
        for manifold in branches:
            self.assertTrue(np.all(np.abs(manifold.points[:, 0]) < 1e-12))
            self.assertGreater(np.max(np.abs(manifold.points[:, 1])), 3.9)

    def test_stable_manifold_of_saddle(self):
        """Test that the stable manifold of the saddle is the x1 axis."""
        system = saddle_system()
        eq = find_equilibria(system)[0]
        for manifold in approximate_manifold(system, eq, "stable", t_horizon=15.0):
            self.assertTrue(np.all(np.abs(manifold.points[:, 1]) < 1e-12))
            self.assertGreater(np.max(np.abs(manifold.points[:, 0])), 3.9)

    def test_manifold_argument_validation(self):
        """Test non-saddles, bad branches and bad deltas."""
        system = saddle_system()
        eq = find_equilibria(system)[0]
        with self.assertRaises(ValueError):
            approximate_manifold(system, eq, "center")
        with self.assertRaises(ValueError):
            approximate_manifold(system, eq, "stable", delta=0.0)
        sink = DynSystem(
            dim=2, f=(parse("-x1", 2), parse("-x2", 2)), domain=Box.from_intervals([[-1, 1], [-1, 1]])
        )
        with self.assertRaises(ValueError):
            approximate_manifold(sink, find_equilibria(sink)[0], "unstable")


if __name__ == "__main__":
    unittest.main()
