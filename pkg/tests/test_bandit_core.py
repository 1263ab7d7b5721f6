"""
Unit tests for Beta-Bernoulli bookkeeping in bandit_core:
BetaParams, ArmStats, update, batch_apply and RngStream.

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import math
import unittest

import numpy as np

from bandit_core import (
    ArmPosterior, ArmStats, BetaParams, RngStream, UNIFORM_PRIOR, batch_apply, update
)
from error_handler import InvalidParameterError


class TestBetaParams(unittest.TestCase):
    """Test shape validation and moments."""

    def test_mean_and_variance(self):
        params = BetaParams(2, 8)
        self.assertAlmostEqual(params.mean(), 0.2)
        self.assertAlmostEqual(params.variance(), 2 * 8 / (10 ** 2 * 11))
        self.assertEqual(params.total, 10.0)
        self.assertEqual(params.to_list(), [2.0, 8.0])

    def test_rejects_invalid_shapes(self):
        for alpha, beta in [(0, 1), (1, 0), (-1, 2), (math.inf, 1), (1, math.nan), ("1", 1), (True, 1)]:
            with self.subTest(alpha=alpha, beta=beta):
                with self.assertRaises(InvalidParameterError):
                    BetaParams(alpha, beta)

    def test_invalid_shape_is_a_value_error(self):
        with self.assertRaises(ValueError):
            BetaParams(0, 0)

    def test_uniform_prior(self):
        self.assertEqual(UNIFORM_PRIOR, BetaParams(1.0, 1.0))
        self.assertEqual(UNIFORM_PRIOR.mean(), 0.5)


class TestArmStats(unittest.TestCase):
    """Test observed-count bookkeeping."""

    def test_p_hat_undefined_without_observations(self):
        self.assertIsNone(ArmStats().p_hat)

    def test_p_hat_and_failures(self):
        stats = ArmStats(n=10, successes=3)
        self.assertAlmostEqual(stats.p_hat, 0.3)
        self.assertEqual(stats.failures, 7)

    def test_rejects_inconsistent_counts(self):
        for n, successes in [(3, 4), (-1, 0), (5, -1), (2.5, 1)]:
            with self.subTest(n=n, successes=successes):
                with self.assertRaises(InvalidParameterError):
                    ArmStats(n=n, successes=successes)


class TestUpdate(unittest.TestCase):
    """Test the single-reward posterior update."""

    def test_success_from_uniform(self):
        posterior = update(ArmPosterior(), 1)
        self.assertEqual(posterior.params, BetaParams(2, 1))
        self.assertEqual(posterior.stats.n, 1)
        self.assertEqual(posterior.stats.successes, 1)
        self.assertEqual(posterior.stats.p_hat, 1.0)

    def test_failure_from_uniform(self):
        posterior = update(ArmPosterior(), 0)
        self.assertEqual(posterior.params, BetaParams(1, 2))
        self.assertEqual(posterior.stats.n, 1)
        self.assertEqual(posterior.stats.p_hat, 0.0)

    def test_rejects_non_binary_reward(self):
        for reward in [2, -1, 0.5]:
            with self.subTest(reward=reward):
                with self.assertRaises(InvalidParameterError):
                    update(ArmPosterior(), reward)

    def test_total_mass_grows_by_one_per_update(self):
        rng = np.random.default_rng(7)
        posterior = ArmPosterior.from_prior(BetaParams(3.5, 0.25))
        for reward in rng.integers(0, 2, size=1000):
            before = posterior.params.total
            posterior = update(posterior, int(reward))
            self.assertAlmostEqual(posterior.params.total - before, 1.0, places=9)

    def test_count_conservation(self):
        rng = np.random.default_rng(11)
        prior = BetaParams(0.7, 4.2)
        posterior = ArmPosterior.from_prior(prior)
        for reward in rng.integers(0, 2, size=500):
            posterior = update(posterior, int(reward))
        observed = (posterior.params.alpha - prior.alpha) + (posterior.params.beta - prior.beta)
        self.assertAlmostEqual(observed, posterior.stats.n, places=9)
        self.assertAlmostEqual(posterior.params.alpha - prior.alpha, posterior.stats.successes, places=9)


class TestBatchApply(unittest.TestCase):
    """Test batched tally folding."""

    def test_additive_counts(self):
        posterior = batch_apply(ArmPosterior(), 3, 7)
        self.assertEqual(posterior.params, BetaParams(4, 8))
        self.assertEqual(posterior.stats.n, 10)
        self.assertAlmostEqual(posterior.stats.p_hat, 0.3)

    def test_empty_tally_is_identity(self):
        posterior = ArmPosterior(params=BetaParams(2.5, 3.5), stats=ArmStats(n=4, successes=1))
        self.assertIs(batch_apply(posterior, 0, 0), posterior)

    def test_matches_fold_of_single_updates(self):
        rng = np.random.default_rng(2025)
        for trial in range(100):
            with self.subTest(trial=trial):
                prior = BetaParams(float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.1, 5.0)))
                start = ArmPosterior(params=prior, stats=ArmStats(n=5, successes=2))
                successes, failures = (int(v) for v in rng.integers(0, 30, size=2))

                folded = start
                for _ in range(successes):
                    folded = update(folded, 1)
                for _ in range(failures):
                    folded = update(folded, 0)

                batched = batch_apply(start, successes, failures)
                self.assertEqual(batched.stats, folded.stats)
                self.assertAlmostEqual(batched.params.alpha, folded.params.alpha, places=9)
                self.assertAlmostEqual(batched.params.beta, folded.params.beta, places=9)

    def test_rejects_negative_counts(self):
        with self.assertRaises(InvalidParameterError):
            batch_apply(ArmPosterior(), -1, 3)
        with self.assertRaises(InvalidParameterError):
            batch_apply(ArmPosterior(), 1, -3)

    def test_accepts_numpy_counts(self):
        posterior = batch_apply(ArmPosterior(), np.int64(2), np.int64(5))
        self.assertEqual(posterior.stats.n, 7)


class TestRngStream(unittest.TestCase):
    """Test seeded stream derivation."""

    def test_same_identifier_same_sequence(self):
        first = RngStream(42, (1, 2, 3)).beta(2.0, 3.0, size=50)
        second = RngStream(42, (1, 2, 3)).beta(2.0, 3.0, size=50)
        np.testing.assert_array_equal(first, second)

    def test_different_identifiers_differ(self):
        base = RngStream(42, (1, 2)).random(20)
        for other in [RngStream(43, (1, 2)), RngStream(42, (1, 3)), RngStream(42, (1, 2, 0))]:
            with self.subTest(stream=repr(other)):
                self.assertFalse(np.array_equal(base, other.random(20)))

    def test_child_extends_identifier(self):
        child = RngStream(5, (1,)).child(4, 2)
        self.assertEqual(child.stream_id, (1, 4, 2))
        np.testing.assert_array_equal(child.random(10), RngStream(5, (1, 4, 2)).random(10))

    def test_rejects_invalid_seed(self):
        for seed in [-1, 2 ** 64, 1.5, True]:
            with self.subTest(seed=seed):
                with self.assertRaises(InvalidParameterError):
                    RngStream(seed)

    def test_rejects_negative_stream_parts(self):
        with self.assertRaises(InvalidParameterError):
            RngStream(1, (0, -2))

    def test_accepts_full_u64_range(self):
        RngStream(2 ** 64 - 1, (0,)).random()


if __name__ == '__main__':
    unittest.main()
