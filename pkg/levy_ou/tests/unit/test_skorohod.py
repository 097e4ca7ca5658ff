"""Unit tests for the Skorohod metric in paths.py

Test Organization:
- TimeChangeTests: construction, inverse, displacement
- TimeChangeCostTests: exact cost of a given time change on step paths
- SkorohodDistanceTests: known values, axioms, comparison with brute force

Run: python -m unittest levy_ou.tests.unit.test_skorohod
"""

import unittest

import numpy as np

from levy_ou.harness import random_step_path
from levy_ou.paths import (
    TimeChange,
    constant_path,
    single_knot_bound,
    skorohod_distance,
    step_path,
    time_change_cost,
    uniform_distance,
)
from levy_ou.streams import stream


class TimeChangeTests(unittest.TestCase):
    def test_identity(self):
        phi = TimeChange.identity(2.0)
        self.assertEqual(phi.displacement, 0.0)
        self.assertEqual(float(phi(1.3)), 1.3)

    def test_inverse(self):
        phi = TimeChange([0.0, 0.6, 1.0], [0.0, 0.5, 1.0])
        self.assertAlmostEqual(float(phi(0.6)), 0.5)
        self.assertAlmostEqual(float(phi.inverse(0.5)), 0.6)
        self.assertAlmostEqual(phi.displacement, 0.1)

    def test_must_fix_endpoints(self):
        with self.assertRaises(ValueError):
            TimeChange([0.0, 1.0], [0.1, 1.0])
        with self.assertRaises(ValueError):
            TimeChange([0.0, 1.0], [0.0, 0.9])

    def test_must_increase(self):
        with self.assertRaises(ValueError):
            TimeChange([0.0, 0.5, 1.0], [0.0, 0.5, 0.5])


class TimeChangeCostTests(unittest.TestCase):
    def test_aligning_steps(self):
        f = step_path(1.0, [(0.5, 1.0)])
        g = step_path(1.0, [(0.6, 1.0)])
        phi = TimeChange([0.0, 0.6, 1.0], [0.0, 0.5, 1.0])
        self.assertAlmostEqual(time_change_cost(f, g, phi), 0.1, places=12)

    def test_identity_cost_is_uniform_distance(self):
        f = step_path(1.0, [(0.5, 1.0)])
        g = step_path(1.0, [(0.6, 1.0)])
        self.assertEqual(time_change_cost(f, g, TimeChange.identity(1.0)), uniform_distance(f, g))


class SkorohodDistanceTests(unittest.TestCase):
    def test_two_step_example(self):
        f = step_path(1.0, [(0.5, 1.0)])
        g = step_path(1.0, [(0.6, 1.0)])
        self.assertAlmostEqual(skorohod_distance(f, g), 0.1, places=12)

    def test_two_step_matches_brute_force(self):
        f = step_path(1.0, [(0.5, 1.0)])
        g = step_path(1.0, [(0.6, 1.0)])
        self.assertLessEqual(abs(skorohod_distance(f, g) - single_knot_bound(f, g)), 1e-3)

    def test_small_jump_cheaper_than_moving(self):
        # moving the step costs 0.4; leaving it costs the height 0.2
        f = step_path(1.0, [(0.2, 0.2)])
        g = step_path(1.0, [(0.6, 0.2)])
        self.assertAlmostEqual(skorohod_distance(f, g), 0.2, places=12)

    def test_identical_paths(self):
        f = step_path(1.0, [(0.25, [1.0, -1.0]), (0.8, [0.5, 0.5])])
        self.assertEqual(skorohod_distance(f, f), 0.0)

    def test_constant_paths_reduce_to_value_gap(self):
        f = constant_path([1.0, 2.0], 1.0)
        g = constant_path([1.0, 2.5], 1.0)
        self.assertAlmostEqual(skorohod_distance(f, g), 0.5, places=15)

    def test_jump_at_horizon_cannot_move(self):
        f = step_path(1.0, [(1.0, 1.0)])
        g = step_path(1.0, [(0.9, 1.0)])
        # the jump at T stays at T, so only the value gap can be paid
        self.assertAlmostEqual(skorohod_distance(f, g), 1.0, places=12)

    def test_mismatched_dimension_raises(self):
        with self.assertRaises(ValueError):
            skorohod_distance(constant_path([0.0], 1.0), constant_path([0.0, 0.0], 1.0))

    def test_axioms_on_random_paths(self):
        for i in range(25):
            rng = stream(99, i, "paths")
            f, g, h = (random_step_path(rng, 1.0, 2) for _ in range(3))
            with self.subTest(replica=i):
                d_fg = skorohod_distance(f, g)
                self.assertEqual(d_fg, skorohod_distance(g, f))
                self.assertGreaterEqual(d_fg, 0.0)
                self.assertLessEqual(d_fg, uniform_distance(f, g) + 1e-12)
                self.assertLessEqual(
                    skorohod_distance(f, h), d_fg + skorohod_distance(g, h) + 1e-12
                )

    def test_never_above_brute_force(self):
        for i in range(5):
            rng = stream(123, i, "paths")
            f = random_step_path(rng, 1.0, 1, max_steps=2)
            g = random_step_path(rng, 1.0, 1, max_steps=2)
            with self.subTest(replica=i):
                self.assertLessEqual(
                    skorohod_distance(f, g), single_knot_bound(f, g, resolution=0.05) + 1e-12
                )


if __name__ == "__main__":
    unittest.main()
