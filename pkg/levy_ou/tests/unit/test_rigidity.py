"""Unit tests for rigidity.py

Test Organization:
- XiResidualTests: residual of the true drift vanishes, perturbed drifts
  leave a residual linear in the perturbation
- RecoverDriftTests: least-squares recovery, refit, singular Gram refusal,
  jump-signature check
- RecoveryTrialTests: simulate-then-recover outcomes
- DistinctnessVerdictTests: DISTINCT / INDISTINGUISHABLE / INCONCLUSIVE

Run: python -m unittest levy_ou.tests.unit.test_rigidity
"""

import unittest

import numpy as np

from levy_ou.errors import HypothesisViolation, SingularGramError
from levy_ou.levy import (
    DiscreteJumpLaw,
    GaussianJumpLaw,
    JumpSpec,
    LevyRealization,
    LevyTriplet,
    sample_levy,
)
from levy_ou.ou_solver import OUSpec, solve_exact
from levy_ou.paths import constant_path, uniform_distance
from levy_ou.rigidity import (
    DEFAULT_TAU,
    RecoveryTrial,
    Verdict,
    distinctness_verdict,
    drift_recovery_trial,
    recover_drift,
    refit_path,
    xi_residual,
)

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation_spec(step=0.01, jumps=None):
    jumps = jumps or JumpSpec(rate=5.0, law=GaussianJumpLaw(2.0, 2), dimension=2)
    return OUSpec(ROTATION, LevyTriplet.pure_jump(jumps), 1.0, step)


def discrete_spec():
    law = DiscreteJumpLaw([-0.4, 0.3, 1.5], [0.4, 0.4, 0.2])
    return OUSpec([[-1.0]], LevyTriplet.pure_jump(JumpSpec(rate=4.0, law=law)), 1.0, 0.01)


def solved(spec, seed, replica=0):
    realization = sample_levy(spec.triplet, spec.horizon, spec.step, seed, replica)
    return realization, solve_exact(spec, realization)


class XiResidualTests(unittest.TestCase):
    def test_true_drift_residual_vanishes(self):
        spec = rotation_spec()
        _, f = solved(spec, seed=1)
        mu = spec.triplet.jump_spec.compensator()
        self.assertLess(xi_residual(ROTATION, f, mu).sup_norm, 1e-8)

    def test_wrong_drift_residual_is_large(self):
        spec = rotation_spec()
        realization, f = solved(spec, seed=1)
        self.assertGreater(realization.jump_times.size, 0)
        mu = spec.triplet.jump_spec.compensator()
        self.assertGreater(xi_residual(2 * ROTATION, f, mu).sup_norm, DEFAULT_TAU)

    def test_residual_separates_perturbed_drifts(self):
        # r(V) - r(A) = (A - V) S(f, t_k), so V != A leaves a visible residual
        spec = rotation_spec()
        _, f = solved(spec, seed=8)
        mu = spec.triplet.jump_spec.compensator()
        true = xi_residual(ROTATION, f, mu)
        rng = np.random.default_rng(8)
        for _ in range(5):
            delta = 0.1 * rng.normal(size=(2, 2))
            shifted = xi_residual(ROTATION + delta, f, mu)
            gap = f.sample_integrals @ delta.T
            np.testing.assert_allclose(shifted.values - true.values, -gap, atol=1e-10)
            separation = float(np.max(np.linalg.norm(gap, axis=1)))
            self.assertGreater(separation, 1e-3)
            self.assertGreaterEqual(shifted.sup_norm, separation - true.sup_norm)

    def test_compensated_small_jumps(self):
        # atoms -0.4 and 0.3 are compensated; the shell [1/4, 1) already holds both
        spec = discrete_spec()
        _, f = solved(spec, seed=2)
        mu = spec.triplet.jump_spec.compensator()
        limit = xi_residual([[-1.0]], f, mu)
        shell = xi_residual([[-1.0]], f, mu, n=2)
        self.assertIsNone(limit.shell_index)
        self.assertEqual(shell.shell_index, 2)
        self.assertLess(limit.sup_norm, 1e-8)
        self.assertLess(shell.sup_norm, 1e-8)
        self.assertEqual(limit.values.shape, (f.times.size, 1))


class RecoverDriftTests(unittest.TestCase):
    def test_recovers_rotation(self):
        spec = rotation_spec()
        realization, f = solved(spec, seed=3)
        self.assertGreater(realization.jump_times.size, 0)
        est = recover_drift(f, realization.jump_path())
        np.testing.assert_allclose(est.estimate, ROTATION, atol=1e-6)
        self.assertLess(est.residual, 1e-8)
        self.assertGreater(est.sigma_min, est.sigma_tol)

    def test_refit_reproduces_path(self):
        spec = rotation_spec()
        realization, f = solved(spec, seed=3)
        est = recover_drift(f, realization.jump_path())
        refit = refit_path(spec, realization, est.estimate)
        self.assertLess(uniform_distance(refit, f), 1e-6)
        self.assertGreater(uniform_distance(refit_path(spec, realization, 2 * ROTATION), f), 1e-3)

    def test_jump_part_extracted_from_path(self):
        spec = discrete_spec()
        realization, f = solved(spec, seed=4)
        mu = spec.triplet.jump_spec.compensator()
        explicit = recover_drift(f, realization.jump_path())
        extracted = recover_drift(f, compensator=mu)
        np.testing.assert_allclose(extracted.estimate, explicit.estimate, atol=1e-9)
        np.testing.assert_allclose(extracted.estimate, [[-1.0]], atol=1e-6)

    def test_jump_only_at_horizon_is_singular(self):
        spec = OUSpec([[-1.0]], LevyTriplet.pure_jump(JumpSpec(rate=1.0, law=GaussianJumpLaw(1.0))),
                      1.0, 0.5)
        grid = np.array([0.0, 0.5, 1.0])
        realization = LevyRealization(
            grid, np.zeros(1), np.zeros((3, 1)), np.array([1.0]), np.array([[1.5]]), np.zeros(1)
        )
        f = solve_exact(spec, realization)
        with self.assertRaises(SingularGramError) as ctx:
            recover_drift(f, realization.jump_path())
        self.assertEqual(ctx.exception.sigma_min, 0.0)
        self.assertEqual(ctx.exception.sigma_tol, 1e-10 * 3)

    def test_signature_mismatch(self):
        spec = rotation_spec()
        realization, f = solved(spec, seed=3)
        with self.assertRaises(HypothesisViolation):
            recover_drift(f, constant_path([0.0, 0.0], 1.0))


class RecoveryTrialTests(unittest.TestCase):
    def test_trials_recover(self):
        spec = rotation_spec()
        trials = [drift_recovery_trial(spec, seed=5, replica=i) for i in range(5)]
        recovered = [t for t in trials if t.status == "recovered"]
        self.assertGreaterEqual(len(recovered), 3)
        for trial in recovered:
            with self.subTest(replica=trial.replica):
                self.assertLess(trial.error, 1e-6)
                self.assertLess(trial.refit_error, 1e-6)
                self.assertGreater(trial.jump_count, 0)

    def test_no_jumps(self):
        spec = rotation_spec(jumps=JumpSpec.none(2))
        trial = drift_recovery_trial(spec, seed=5, replica=0)
        self.assertEqual(trial, RecoveryTrial(0, 0, "no_jumps"))
        self.assertIsNone(trial.to_dict()["error"])


class DistinctnessVerdictTests(unittest.TestCase):
    JUMPS = JumpSpec(rate=5.0, law=GaussianJumpLaw(2.0, 2), dimension=2)

    def test_distinct(self):
        verdict = distinctness_verdict(ROTATION, 2 * ROTATION, self.JUMPS, 20, seed=6, step=0.01)
        self.assertEqual(verdict.verdict, Verdict.DISTINCT)
        self.assertGreaterEqual(verdict.observed_fraction, 0.99)
        self.assertEqual(verdict.to_dict()["verdict"], "DISTINCT")

    def test_same_drift_is_indistinguishable(self):
        verdict = distinctness_verdict(ROTATION, ROTATION, self.JUMPS, 10, seed=6, step=0.01)
        self.assertEqual(verdict.verdict, Verdict.INDISTINGUISHABLE)
        self.assertEqual(verdict.observed_fraction, 0.0)

    def test_no_jumps_is_inconclusive(self):
        verdict = distinctness_verdict(ROTATION, 2 * ROTATION, JumpSpec.none(2), 5, seed=6, step=0.1)
        self.assertEqual(verdict.verdict, Verdict.INCONCLUSIVE)
        self.assertEqual(verdict.jump_counts, (0,) * 5)

    def test_rejects_non_pure_triplet(self):
        triplet = LevyTriplet([0.0, 0.0], np.eye(2), self.JUMPS)
        with self.assertRaises(HypothesisViolation):
            distinctness_verdict(ROTATION, 2 * ROTATION, triplet, 5, seed=6)

    def test_map_fn_does_not_change_result(self):
        def eager_map(fn, items):
            return [fn(i) for i in items]

        lazy = distinctness_verdict(ROTATION, 2 * ROTATION, self.JUMPS, 4, seed=7, step=0.05)
        eager = distinctness_verdict(ROTATION, 2 * ROTATION, self.JUMPS, 4, seed=7, step=0.05,
                                     map_fn=eager_map)
        self.assertEqual(lazy.residuals, eager.residuals)
        self.assertEqual(len(eager.replica_rows()), 4)


if __name__ == "__main__":
    unittest.main()
