"""Unit tests for jump_calculus.py

Tests the set algebra and the exact jump functionals (counts, sums,
compensated sums, signatures, jump-part extraction) on hand-built paths.

Test Organization:
- SetAlgebraTests: Annulus, Box, Union membership, bounded-below flags and
  Union disjointness
- CountAndSumTests: count_jumps, z1, z2, their contracts, additivity over
  disjoint parts, a direct-fold oracle and the shell limit of z2
- SampleFunctionalTests: z1_at_samples, compensated sums, z1_path
- JumpPartTests: jump_part extraction with and without a compensator
- SignatureTests: jump_signature and its radii validation

Run: python -m unittest levy_ou.tests.unit.test_jump_calculus
"""

import math
import unittest

import numpy as np

from levy_ou.errors import SetContractError
from levy_ou.jump_calculus import (
    LARGE_JUMPS,
    PUNCTURED_UNIT_BALL,
    Annulus,
    Box,
    CompensatorSpec,
    Union,
    compensated_sum_at_samples,
    count_jumps,
    jump_part,
    jump_signature,
    jump_signature_at_samples,
    shell_complement,
    z1,
    z1_at_samples,
    z1_path,
    z2,
    zero_measure,
)
from levy_ou.levy import DiscreteJumpLaw
from levy_ou.paths import constant_path, evaluate, left_limit, step_path


def sample_path():
    """d=1 steps: +0.5 at 0.2, +2.0 at 0.4, -0.3 at 0.9 on [0, 1]."""
    return step_path(1.0, [(0.2, 0.5), (0.4, 2.0), (0.9, -0.3)])


def compound_poisson_steps(seed, rate=8.0):
    """d=2 compound-Poisson steps with distinct times on the 0.001 grid."""
    rng = np.random.default_rng(seed)
    count = max(int(rng.poisson(rate)), 1)
    times = rng.choice(np.arange(1, 1000), size=count, replace=False) / 1000.0
    return [(t, rng.normal(size=2)) for t in times]


def compound_poisson_path(seed):
    return step_path(1.0, compound_poisson_steps(seed), 2)


def discrete_measure():
    """mu = 4 * (0.5 delta_{0.5} + 0.5 delta_{2.0})."""
    law = DiscreteJumpLaw([[0.5], [2.0]], [0.5, 0.5])
    return CompensatorSpec(((4.0, law),), True, 1)


class SetAlgebraTests(unittest.TestCase):
    def test_annulus_is_half_open(self):
        E = Annulus(1.0, 2.0)
        np.testing.assert_array_equal(E.contains([[1.0], [2.0], [-1.5]]), [True, False, True])

    def test_annulus_flags(self):
        self.assertTrue(Annulus(0.5, 1.0).bounded_below)
        self.assertFalse(PUNCTURED_UNIT_BALL.bounded_below)
        self.assertFalse(LARGE_JUMPS.bounded)
        self.assertTrue(Annulus(0.3, 0.3).empty)

    def test_annulus_rejects_inverted_radii(self):
        with self.assertRaises(ValueError):
            Annulus(2.0, 1.0)

    def test_box_distance_from_origin(self):
        self.assertAlmostEqual(Box((1.0, -1.0), (2.0, 1.0)).distance_from_origin, 1.0)
        self.assertEqual(Box((-1.0,), (1.0,)).distance_from_origin, 0.0)
        self.assertAlmostEqual(Box((3.0, 4.0), (5.0, 5.0)).distance_from_origin, 5.0)

    def test_box_membership(self):
        E = Box((0.0, 0.0), (1.0, 1.0))
        np.testing.assert_array_equal(
            E.contains([[0.0, 0.5], [1.0, 0.5], [0.5, -0.1]]), [True, False, False]
        )

    def test_union(self):
        E = Union((Annulus(0.1, 0.2), Annulus(1.0, 2.0)))
        np.testing.assert_array_equal(E.contains([[0.15], [0.5], [1.5]]), [True, False, True])
        self.assertAlmostEqual(E.distance_from_origin, 0.1)
        self.assertTrue(E.bounded)

    def test_union_flattens_nested_parts(self):
        inner = Union((Annulus(0.1, 0.2), Annulus(0.3, 0.4)))
        E = Union((inner, Annulus(1.0, 2.0)))
        self.assertEqual(len(E.parts), 3)
        np.testing.assert_array_equal(E.contains([[0.35], [0.25], [1.5]]), [True, False, True])

    def test_union_accepts_touching_parts(self):
        Union((Annulus(0.1, 1.0), Annulus(1.0, 2.0)))
        Union((Box((0.0,), (1.0,)), Box((1.0,), (2.0,))))
        Union((Annulus(0.0, 0.5), Box((1.0, 0.0), (2.0, 1.0))))

    def test_union_rejects_overlapping_parts(self):
        cases = [
            (Annulus(0.1, 1.0), Annulus(0.5, 2.0)),
            (Box((0.0, 0.0), (1.0, 1.0)), Box((0.5, 0.5), (2.0, 2.0))),
            (Annulus(0.5, 2.0), Box((1.0,), (3.0,))),
        ]
        for p, q in cases:
            with self.subTest(p=p, q=q):
                with self.assertRaises(ValueError):
                    Union((p, q))
        with self.assertRaises(ValueError):
            Union(())

    def test_shell_complement(self):
        self.assertEqual(shell_complement(0.25), Annulus(0.25, 1.0))


class CountAndSumTests(unittest.TestCase):
    def test_count_jumps_by_size(self):
        f = sample_path()
        self.assertEqual(count_jumps(Annulus(1.0), f, 1.0), 1)
        self.assertEqual(count_jumps(Annulus(0.1, 1.0), f, 1.0), 2)
        self.assertEqual(count_jumps(Annulus(0.1, 1.0), f, 0.5), 1)

    def test_count_includes_jump_at_t(self):
        f = sample_path()
        self.assertEqual(count_jumps(Annulus(1.0), f, 0.4), 1)
        self.assertEqual(count_jumps(Annulus(1.0), f, 0.3999), 0)

    def test_z1_sums_matching_jumps(self):
        f = sample_path()
        np.testing.assert_allclose(z1(Annulus(0.1, 1.0), f, 1.0), [0.2], atol=1e-15)
        np.testing.assert_array_equal(z1(Annulus(1.0), f, 1.0), [2.0])

    def test_z1_no_jumps_is_zero(self):
        np.testing.assert_array_equal(z1(Annulus(1.0), constant_path([0.0, 0.0], 1.0), 0.5), [0, 0])

    def test_z1_requires_bounded_below(self):
        with self.assertRaises(SetContractError):
            z1(PUNCTURED_UNIT_BALL, sample_path(), 1.0)

    def test_z2_compensates_linearly_in_time(self):
        f = sample_path()
        mu = discrete_measure()
        E = Annulus(0.1, 1.0)
        # int_E u mu(du) = 4 * 0.5 * 0.5 = 1.0
        np.testing.assert_allclose(z2(E, mu, f, 0.5), [0.5 - 0.5], atol=1e-15)
        np.testing.assert_allclose(z2(E, mu, f, 1.0), [0.2 - 1.0], atol=1e-15)

    def test_z2_requires_bounded_set(self):
        with self.assertRaises(SetContractError):
            z2(LARGE_JUMPS, discrete_measure(), sample_path(), 1.0)

    def test_z2_with_zero_measure_equals_z1(self):
        f = sample_path()
        E = Annulus(0.1, 5.0)
        np.testing.assert_array_equal(z2(E, zero_measure(1), f, 0.7), z1(E, f, 0.7))

    def test_additive_over_disjoint_parts(self):
        f = compound_poisson_path(seed=11)
        parts = (Annulus(0.2, 1.0), Annulus(1.0, 1.7), Box((2.0, -5.0), (5.0, 5.0)))
        E = Union(parts)
        for t in (0.25, 0.6, 1.0):
            with self.subTest(t=t):
                self.assertEqual(count_jumps(E, f, t), sum(count_jumps(p, f, t) for p in parts))
                np.testing.assert_allclose(
                    z1(E, f, t), sum(z1(p, f, t) for p in parts), rtol=0, atol=1e-12
                )

    def test_z1_matches_direct_fold(self):
        E = Annulus(0.5, 1.5)
        for seed in range(5):
            steps = compound_poisson_steps(seed)
            f = step_path(1.0, steps, 2)
            for t in (0.3, 0.75, 1.0):
                expected = np.zeros(2)
                for s, x in steps:
                    if s <= t and 0.5 <= np.linalg.norm(x) < 1.5:
                        expected = expected + x
                with self.subTest(seed=seed, t=t):
                    np.testing.assert_allclose(z1(E, f, t), expected, rtol=0, atol=1e-12)

    def test_z2_stable_below_smallest_jump(self):
        # smallest jump of sample_path is 0.3, smallest atom of mu is 0.5
        f = sample_path()
        mu = discrete_measure()
        reference = z2(shell_complement(0.29), mu, f, 1.0)
        for eps in (0.2, 0.1, 1e-3, 1e-9):
            with self.subTest(eps=eps):
                np.testing.assert_array_equal(z2(shell_complement(eps), mu, f, 1.0), reference)
        self.assertFalse(np.array_equal(z2(shell_complement(0.4), mu, f, 1.0), reference))

    def test_time_outside_domain(self):
        with self.assertRaises(ValueError):
            count_jumps(LARGE_JUMPS, sample_path(), 1.5)


class SampleFunctionalTests(unittest.TestCase):
    def test_z1_at_samples_matches_pointwise(self):
        f = sample_path()
        E = Annulus(0.1, 1.0)
        values = z1_at_samples(E, f)
        for t, row in zip(f.times, values):
            np.testing.assert_allclose(row, z1(E, f, t), atol=1e-15)

    def test_compensated_sum_at_samples(self):
        f = sample_path()
        mu = discrete_measure()
        E = Annulus(0.1, 1.0)
        values = compensated_sum_at_samples(E, mu, f)
        for t, row in zip(f.times, values):
            np.testing.assert_allclose(row, z2(E, mu, f, t), atol=1e-15)

    def test_finite_activity_limit_over_punctured_ball(self):
        f = sample_path()
        mu = discrete_measure()
        values = compensated_sum_at_samples(PUNCTURED_UNIT_BALL, mu, f, finite_activity_limit=True)
        # jumps below 1: 0.5 and -0.3; compensator 1.0 * t
        np.testing.assert_allclose(values[-1], [0.2 - 1.0], atol=1e-15)

    def test_finite_activity_limit_refused_for_infinite_activity(self):
        mu = CompensatorSpec((), finite_activity=False, dimension=1)
        with self.assertRaises(SetContractError):
            compensated_sum_at_samples(PUNCTURED_UNIT_BALL, mu, sample_path(),
                                       finite_activity_limit=True)

    def test_z1_path_is_cadlag(self):
        f = sample_path()
        g = z1_path(LARGE_JUMPS, f)
        self.assertEqual(len(g.jumps), 1)
        np.testing.assert_array_equal(evaluate(g, 0.4), [2.0])
        np.testing.assert_array_equal(left_limit(g, 0.4), [0.0])


class JumpPartTests(unittest.TestCase):
    def test_uncompensated_jump_part(self):
        f = sample_path()
        Z = jump_part(f)
        np.testing.assert_array_equal(Z.values, f.values)
        np.testing.assert_allclose(Z.jump_sizes, f.jump_sizes, atol=1e-15)

    def test_compensated_jump_part(self):
        f = step_path(1.0, [(0.5, 0.5)])
        Z = jump_part(f, discrete_measure())
        np.testing.assert_allclose(Z.values[:, 0], [0.0, 0.5 - 0.5, 0.5 - 1.0], atol=1e-15)
        np.testing.assert_array_equal(Z.jump_sizes, [[0.5]])

    def test_jump_part_of_continuous_path(self):
        f = constant_path([1.0], 1.0)
        Z = jump_part(f)
        self.assertEqual(len(Z.jumps), 0)
        np.testing.assert_array_equal(Z.values, np.zeros((2, 1)))


class SignatureTests(unittest.TestCase):
    RADII = (0.1, 0.5, 1.0, 2.0)

    def test_signature_counts_per_annulus(self):
        # sizes 0.5, 2.0, 0.3 -> [0.1,0.5): 1, [0.5,1): 1, [1,2): 0, [2,inf): 1
        np.testing.assert_array_equal(jump_signature(sample_path(), self.RADII), [1, 1, 0, 1])

    def test_signature_up_to_t(self):
        np.testing.assert_array_equal(jump_signature(sample_path(), self.RADII, 0.3), [0, 1, 0, 0])

    def test_signature_at_samples(self):
        f = sample_path()
        table = jump_signature_at_samples(f, self.RADII)
        self.assertEqual(table.shape, (f.times.size, 4))
        for t, row in zip(f.times, table):
            np.testing.assert_array_equal(row, jump_signature(f, self.RADII, t))

    def test_radii_validation(self):
        for radii in ((), (0.0, 1.0), (1.0, 0.5), (0.5, 0.5)):
            with self.subTest(radii=radii):
                with self.assertRaises(ValueError):
                    jump_signature(sample_path(), radii)

    def test_infinite_outer_annulus(self):
        E = Annulus(2.0)
        self.assertTrue(math.isinf(E.outer))
        self.assertEqual(count_jumps(E, sample_path(), 1.0), 1)


if __name__ == "__main__":
    unittest.main()
