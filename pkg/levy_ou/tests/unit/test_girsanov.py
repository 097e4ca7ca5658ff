"""Unit tests for girsanov.py

Test Organization:
- EquivalenceConditionTests: eigenvalue test on Q
- LogLikelihoodRatioTests: hand-computed sums, antisymmetry, jump removal
- TruncationLevelTests: sup |A fX - A~ fX~|
- EquivalenceReportTests: degenerate and Monte Carlo reports, both jump roles
- MeanOneConvergenceTests: paired h / h/2 comparison, both jump roles

Run: python -m unittest levy_ou.tests.unit.test_girsanov
"""

import math
import unittest

import numpy as np

from levy_ou.errors import HypothesisViolation
from levy_ou.girsanov import (
    check_equivalence_condition,
    equivalence_report,
    log_likelihood_ratio,
    mean_one_convergence,
    truncation_level,
)
from levy_ou.levy import GaussianJumpLaw, JumpSpec, LevyTriplet
from levy_ou.paths import CadlagPath, constant_path, path_from_samples
from levy_ou.streams import replica_seed

GRID = [0.0, 0.5, 1.0]


def scalar_triplet(q=2.0, rate=0.0):
    law = GaussianJumpLaw(1.0) if rate else None
    return LevyTriplet([0.0], [[q]], JumpSpec(rate=rate, law=law))


def continuous_path():
    return CadlagPath(GRID, [[0.0], [1.0], [3.0]])


def no_jumps():
    return CadlagPath(GRID, np.zeros((3, 1)))


class EquivalenceConditionTests(unittest.TestCase):
    def test_positive_definite(self):
        ok, lam = check_equivalence_condition(np.eye(2))
        self.assertTrue(ok)
        self.assertAlmostEqual(lam, 1.0)

    def test_degenerate(self):
        ok, lam = check_equivalence_condition(np.diag([1.0, 0.0]))
        self.assertFalse(ok)
        self.assertEqual(lam, 0.0)

    def test_tolerance_is_strict(self):
        ok, _ = check_equivalence_condition([[1e-12]], tol=1e-12)
        self.assertFalse(ok)

    def test_asymmetric_rejected(self):
        with self.assertRaises(ValueError):
            check_equivalence_condition([[1.0, 0.5], [0.0, 1.0]])


class LogLikelihoodRatioTests(unittest.TestCase):
    def test_hand_computed_value(self):
        # (A - A~)/q = -0.25; only the second step contributes:
        # -0.25 * 1 * (2 - 0.5 * 0.5 * (-1.5) * 1) = -0.59375
        llr = log_likelihood_ratio([[-1.0]], [[-0.5]], scalar_triplet(), continuous_path(), no_jumps())
        self.assertAlmostEqual(llr, -0.59375, places=15)

    def test_same_drift_gives_zero(self):
        llr = log_likelihood_ratio([[-1.0]], [[-1.0]], scalar_triplet(), continuous_path(), no_jumps())
        self.assertEqual(llr, 0.0)

    def test_antisymmetric_in_drifts(self):
        f, Z = continuous_path(), no_jumps()
        forward = log_likelihood_ratio([[-1.0]], [[0.3]], scalar_triplet(), f, Z)
        backward = log_likelihood_ratio([[0.3]], [[-1.0]], scalar_triplet(), f, Z)
        self.assertEqual(forward, -backward)

    def test_jumps_are_removed(self):
        # a jump at T changes neither the left points nor the continuous increments
        f = path_from_samples(GRID, [[0.0], [1.0], [8.0]], [2], [[3.0]])
        Z = path_from_samples(GRID, [[0.0], [0.0], [5.0]], [2], [[0.0]])
        with_jump = log_likelihood_ratio([[-1.0]], [[-0.5]], scalar_triplet(), f, Z)
        without = log_likelihood_ratio([[-1.0]], [[-0.5]], scalar_triplet(), continuous_path(), no_jumps())
        self.assertAlmostEqual(with_jump, without, places=15)

    def test_drift_b_is_removed(self):
        # f = b t exactly: the continuous part carries no Wiener noise
        triplet = LevyTriplet([1.0], [[1.0]], JumpSpec.none(1))
        f = CadlagPath(GRID, [[0.0], [0.5], [1.0]])
        llr = log_likelihood_ratio([[0.0]], [[-1.0]], triplet, f, no_jumps())
        # only the step from t=0.5 contributes: u = 0.5 times 0.5 - 0.5 * (1 - 0.5 * 0.5)
        expected = 0.5 * 0.125
        self.assertAlmostEqual(llr, expected, places=15)

    def test_singular_q_raises(self):
        with self.assertRaises(HypothesisViolation):
            log_likelihood_ratio([[-1.0]], [[-0.5]], scalar_triplet(q=0.0), continuous_path(), no_jumps())

    def test_grids_must_match(self):
        with self.assertRaises(ValueError):
            log_likelihood_ratio([[-1.0]], [[-0.5]], scalar_triplet(), continuous_path(),
                                 constant_path([0.0], 1.0))


class TruncationLevelTests(unittest.TestCase):
    def test_constant_paths(self):
        fX = constant_path([1.0, 0.0], 1.0)
        fX_alt = constant_path([0.0, 1.0], 1.0)
        self.assertAlmostEqual(truncation_level(fX, fX_alt, np.eye(2), 2 * np.eye(2)), math.sqrt(5.0))

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            truncation_level(constant_path([0.0], 1.0), constant_path([0.0, 0.0], 1.0), [[1.0]], [[1.0]])


class EquivalenceReportTests(unittest.TestCase):
    def test_hypothesis_violation_report(self):
        triplet = LevyTriplet([0.0, 0.0], np.diag([1.0, 0.0]), JumpSpec.none(2))
        report = equivalence_report(-np.eye(2), -0.5 * np.eye(2), triplet, 10, seed=0, step=0.1)
        self.assertTrue(report.hypothesis_violated)
        self.assertFalse(report.passed)
        self.assertIsNone(report.mean_weight)
        payload = report.to_dict()
        self.assertFalse(payload["mean_one_passed"])
        self.assertEqual(payload["reweighting"], [])

    def test_needs_two_replicas(self):
        with self.assertRaises(ValueError):
            equivalence_report([[-1.0]], [[-0.5]], scalar_triplet(1.0), 1, seed=0, step=0.1)

    def test_identical_drifts_weigh_one(self):
        triplet = scalar_triplet(1.0, rate=2.0)
        report = equivalence_report([[-1.0]], [[-1.0]], triplet, 20, seed=3, step=0.05, chunk_size=7)
        np.testing.assert_array_equal(report.log_likelihood_ratios, np.zeros(20))
        self.assertEqual(report.mean_weight, 1.0)
        self.assertTrue(report.passed)
        self.assertEqual(report.truncation_level, 0.0)

    def test_replica_rows(self):
        report = equivalence_report([[-1.0]], [[-0.5]], scalar_triplet(1.0), 5, seed=9, step=0.1)
        rows = report.replica_rows()
        self.assertEqual(len(rows), 5)
        i, rseed, llr, weight = rows[3]
        self.assertEqual((i, rseed), (3, replica_seed(9, 3)))
        self.assertAlmostEqual(weight, math.exp(llr))

    def test_monte_carlo_checks_pass(self):
        triplet = scalar_triplet(1.0, rate=2.0)
        report = equivalence_report([[-1.0]], [[-0.5]], triplet, 4000, seed=21, step=0.01,
                                    se_multiplier=4.0)
        self.assertFalse(report.hypothesis_violated)
        self.assertTrue(report.mean_one_passed, report.to_dict())
        self.assertTrue(report.reweighting_passed, report.to_dict())
        self.assertGreater(report.truncation_level, 0.0)

    def test_resampled_jumps_checks_pass(self):
        triplet = scalar_triplet(1.0, rate=2.0)
        report = equivalence_report([[-1.0]], [[-0.5]], triplet, 4000, seed=21, step=0.02,
                                    se_multiplier=4.0, jump_role="resampled_jumps")
        self.assertEqual(report.to_dict()["jump_role"], "resampled_jumps")
        self.assertTrue(report.mean_one_passed, report.to_dict())
        self.assertTrue(report.reweighting_passed, report.to_dict())

    def test_jump_role_changes_the_jump_stream(self):
        triplet = scalar_triplet(1.0, rate=5.0)
        shared = equivalence_report([[-1.0]], [[-0.5]], triplet, 10, seed=23, step=0.05)
        resampled = equivalence_report([[-1.0]], [[-0.5]], triplet, 10, seed=23, step=0.05,
                                       jump_role="resampled_jumps")
        self.assertFalse(np.allclose(shared.log_likelihood_ratios, resampled.log_likelihood_ratios))


class MeanOneConvergenceTests(unittest.TestCase):
    def test_resampled_jumps(self):
        triplet = scalar_triplet(1.0, rate=2.0)
        result = mean_one_convergence([[-1.0]], [[-0.5]], triplet, 4000, seed=22, step=0.02,
                                      se_multiplier=4.0, jump_role="resampled_jumps")
        self.assertTrue(result.passed, result.to_dict())

    def test_passes_on_equivalent_drifts(self):
        triplet = scalar_triplet(1.0, rate=2.0)
        result = mean_one_convergence([[-1.0]], [[-0.5]], triplet, 4000, seed=22, step=0.02,
                                      se_multiplier=4.0)
        self.assertTrue(result.passed, result.to_dict())
        self.assertEqual(result.coarse_step, 0.02)
        self.assertIn("fine_gap", result.to_dict())

    def test_step_must_halve_evenly(self):
        with self.assertRaises(ValueError):
            mean_one_convergence([[-1.0]], [[-0.5]], scalar_triplet(1.0), 10, seed=0, step=0.3)

    def test_singular_q_raises(self):
        with self.assertRaises(HypothesisViolation):
            mean_one_convergence([[-1.0]], [[-0.5]], scalar_triplet(0.0), 10, seed=0, step=0.1)


if __name__ == "__main__":
    unittest.main()
