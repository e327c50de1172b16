import math

import numpy as np
import pytest

from gridransac.embedding import EmbeddingConfig
from gridransac.engine import (
    AllSamplesDegenerate,
    EstimatorConfig,
    InvalidProbability,
    NotEnoughMatches,
    estimate,
    prob_at_least_two_good,
    required_iterations_latent,
    required_iterations_vanilla,
)
from gridransac.geometry import MatchSet, count_inliers
from gridransac.synth import InstanceSpec, generate


class TestStoppingRules:
    def test_vanilla_known_values(self):
        # independently cross-checked with 60-digit arbitrary-precision arithmetic
        assert required_iterations_vanilla(0.99, 0.1, 4) == 46050
        assert required_iterations_vanilla(0.99, 0.5, 3) == 35
        assert required_iterations_vanilla(0.99, 1.0, 4) == 1

    def test_latent_known_values(self):
        assert required_iterations_latent(0.99, 0.5, 3, 1.0) == 51
        assert required_iterations_latent(0.99, 0.1, 4, 1.0) == 66381
        assert required_iterations_latent(0.99, 1.0, 4, 1.0) == 2

    def test_latent_needs_at_least_vanilla(self):
        for omega in [0.05, 0.2, 0.5, 0.9]:
            for gamma in (3, 4):
                nv = required_iterations_vanilla(0.99, omega, gamma)
                nl = required_iterations_latent(0.99, omega, gamma, 1.0)
                assert nl >= nv

    def test_latent_infeasible_detect_prob(self):
        assert math.isinf(required_iterations_latent(0.99, 0.5, 3, 0.5))

    def test_validation(self):
        with pytest.raises(InvalidProbability):
            required_iterations_vanilla(1.0, 0.5, 3)
        with pytest.raises(InvalidProbability):
            required_iterations_vanilla(0.99, 0.0, 3)
        with pytest.raises(InvalidProbability):
            required_iterations_latent(0.99, 0.5, 3, 0.0)
        with pytest.raises(InvalidProbability):
            required_iterations_vanilla(0.99, 0.5, 0)

    def test_prob_at_least_two_good(self):
        assert prob_at_least_two_good(0.5, 2) == pytest.approx(0.25)
        assert prob_at_least_two_good(0.3, 1) == 0.0
        assert prob_at_least_two_good(0.0, 100) == 0.0
        assert prob_at_least_two_good(1.0, 2) == 1.0
        # matches the direct complement formula at moderate sizes
        p, n = 0.01, 500
        direct = 1 - (1 - p) ** n - n * p * (1 - p) ** (n - 1)
        assert prob_at_least_two_good(p, n) == pytest.approx(direct, rel=1e-12)


class TestConfigValidation:
    def test_latent_requires_tolerance(self):
        with pytest.raises(ValueError):
            EstimatorConfig(mode="latent", latent_tolerance=None)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            EstimatorConfig(mode="classic")

    def test_bad_cell_factor(self):
        with pytest.raises(ValueError):
            EstimatorConfig(mode="latent", latent_tolerance=1.0, c_factor=0.5)


def rigid_spec(**kw):
    base = dict(
        problem="rigid3d", n_matches=300, inlier_rate=0.3, noise_sigma=0.5,
        box=200.0, xi=50.0, seed=11,
    )
    base.update(kw)
    return InstanceSpec(**base)


class TestEstimate:
    def test_not_enough_matches(self):
        m = MatchSet("homography", np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(NotEnoughMatches):
            estimate(m, EstimatorConfig(mode="vanilla"))

    def test_all_degenerate(self):
        src = np.tile([[1.0, 2.0, 3.0]], (10, 1))
        m = MatchSet("rigid3d", src, src)
        cfg = EstimatorConfig(
            mode="vanilla", verify_threshold=1.0, max_consecutive_degenerate=500
        )
        with pytest.raises(AllSamplesDegenerate):
            estimate(m, cfg)

    def test_vanilla_recovers_planted_rigid(self):
        spec = rigid_spec()
        matches, truth, mask = generate(spec)
        cfg = EstimatorConfig(mode="vanilla", verify_threshold=1.5, seed=0)
        res = estimate(matches, cfg)
        assert res.best_model is not None
        _, found = count_inliers(res.best_model, matches, 1.5)
        assert (found & mask).sum() >= 0.9 * mask.sum()
        assert res.stop_reason == "criterion_met"

    def test_latent_recovers_planted_rigid(self):
        spec = rigid_spec()
        matches, truth, mask = generate(spec)
        cfg = EstimatorConfig(
            mode="latent", verify_threshold=1.5, latent_tolerance=0.8,
            embedding=EmbeddingConfig(xi=spec.xi), seed=0,
        )
        res = estimate(matches, cfg)
        assert res.best_model is not None
        _, found = count_inliers(res.best_model, matches, 1.5)
        assert (found & mask).sum() >= 0.9 * mask.sum()
        assert res.collisions_reported >= 1

    def test_determinism(self):
        spec = rigid_spec()
        matches, _, _ = generate(spec)
        cfg = EstimatorConfig(
            mode="latent", verify_threshold=1.5, latent_tolerance=0.8, seed=42,
            embedding=EmbeddingConfig(xi=spec.xi),
        )
        a = estimate(matches, cfg).to_dict()
        b = estimate(matches, cfg).to_dict()
        a.pop("timing_ms")
        b.pop("timing_ms")
        assert a == b

    def test_counter_invariants_vanilla(self):
        matches, _, _ = generate(rigid_spec())
        res = estimate(matches, EstimatorConfig(mode="vanilla", verify_threshold=1.5, seed=1))
        assert res.verifications_run == res.fits
        assert res.fits <= res.samples_drawn - res.degenerate_skipped
        assert res.collisions_reported == 0
        assert res.embeddings == 0

    def test_counter_invariants_latent(self):
        matches, _, _ = generate(rigid_spec())
        cfg = EstimatorConfig(
            mode="latent", verify_threshold=1.5, latent_tolerance=0.8, seed=1,
            embedding=EmbeddingConfig(xi=50.0),
        )
        res = estimate(matches, cfg)
        assert res.verifications_run <= 2 * res.collisions_reported
        assert res.embeddings <= res.fits <= res.samples_drawn - res.degenerate_skipped
        assert res.iterations_used <= cfg.n_max

    def test_latent_verifies_far_fewer_than_vanilla(self):
        matches, _, _ = generate(rigid_spec(inlier_rate=0.2))
        common = dict(verify_threshold=1.5, seed=3)
        rv = estimate(matches, EstimatorConfig(mode="vanilla", **common))
        rl = estimate(
            matches,
            EstimatorConfig(
                mode="latent", latent_tolerance=0.8,
                embedding=EmbeddingConfig(xi=50.0), **common,
            ),
        )
        assert rl.verifications_run < 0.05 * rv.verifications_run

    def test_tiny_sample_space_duplicate_collides(self):
        # with exactly gamma matches every draw yields the same hypothesis, so
        # the very duplicate that a large run would skip is the collision here
        spec = rigid_spec(n_matches=3, inlier_rate=1.0, noise_sigma=0.0)
        matches, truth, mask = generate(spec)
        cfg = EstimatorConfig(
            mode="latent", verify_threshold=1e-6, latent_tolerance=0.1,
            embedding=EmbeddingConfig(xi=spec.xi), seed=0,
        )
        res = estimate(matches, cfg)
        assert res.collisions_reported >= 1
        assert res.best_inlier_count == 3

    def test_final_refit_improves_or_matches(self):
        matches, _, _ = generate(rigid_spec(noise_sigma=1.0))
        base = dict(mode="vanilla", verify_threshold=3.0, seed=5)
        with_refit = estimate(matches, EstimatorConfig(final_refit=True, **base))
        without = estimate(matches, EstimatorConfig(final_refit=False, **base))
        assert with_refit.best_inlier_count >= without.best_inlier_count

    def test_result_serialization(self):
        matches, _, _ = generate(rigid_spec())
        res = estimate(matches, EstimatorConfig(mode="vanilla", verify_threshold=1.5, seed=0))
        d = res.to_dict()
        assert d["best_model"]["type"] == "rigid3d"
        assert set(d["counters"]) == {
            "samples_drawn", "degenerate_skipped", "fits", "embeddings",
            "collisions_reported", "verifications_run",
        }
