import numpy as np
import pytest

from gridransac.embedding import (
    DEFAULT_RHO,
    LATENT_DIM,
    DimensionMismatch,
    EmbeddingConfig,
    UnstableHypothesis,
    embed_homography,
    embed_homography_batch,
    embed_rigid,
    embed_rigid_batch,
    latent_distance,
    rotation_exp,
    rotation_log,
    rotation_log_batch,
)
from gridransac.geometry import Homography, RigidMotion


def test_latent_dims():
    assert LATENT_DIM == {"homography": 8, "rigid3d": 6}


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EmbeddingConfig(canvas_w=-1)
        with pytest.raises(ValueError):
            EmbeddingConfig(rho=0)
        with pytest.raises(ValueError):
            EmbeddingConfig(min_corner_spread=-0.1)

    def test_corner_order(self):
        cfg = EmbeddingConfig(canvas_w=10, canvas_h=20)
        np.testing.assert_array_equal(
            cfg.corners(), [[0, 0], [10, 0], [10, 20], [0, 20]]
        )


class TestHomographyEmbedding:
    def test_identity_maps_to_corners(self):
        cfg = EmbeddingConfig(canvas_w=640, canvas_h=480)
        v = embed_homography(Homography(np.eye(3)), cfg)
        np.testing.assert_allclose(v, [0, 0, 640, 0, 640, 480, 0, 480])

    def test_corner_at_infinity_rejected(self):
        cfg = EmbeddingConfig(canvas_w=640, canvas_h=480)
        # the corner (640, 480) maps to w = 0
        h = np.array([[1.0, 0, 0], [0, 1, 0], [-1 / 640.0, 0, 1]])
        v, ok = embed_homography_batch(h[None], cfg)
        assert not ok[0]
        with pytest.raises(UnstableHypothesis):
            embed_homography(Homography(h), cfg)

    def test_collapse_map_rejected(self):
        cfg = EmbeddingConfig(canvas_w=640, canvas_h=480)
        # near-rank-one matrix: every corner lands near the same point
        h = np.outer([1.0, 2.0, 0.01], [1e-4, 1e-4, 1.0]) + 1e-9 * np.eye(3)
        _, ok = embed_homography_batch(h[None], cfg)
        assert not ok[0]
        relaxed = EmbeddingConfig(canvas_w=640, canvas_h=480, min_corner_spread=0.0)
        _, ok = embed_homography_batch(h[None], relaxed)
        assert ok[0]

    def test_scale_invariance(self):
        cfg = EmbeddingConfig()
        rng = np.random.default_rng(0)
        h = np.eye(3) + 1e-3 * rng.normal(size=(3, 3))
        v1, ok1 = embed_homography_batch(h[None], cfg)
        v2, ok2 = embed_homography_batch((1000.0 * h)[None], cfg)
        assert ok1[0] and ok2[0]
        np.testing.assert_allclose(v1, v2, atol=1e-12)


class TestRotationMaps:
    def test_round_trip_small_and_large(self):
        for angle in [0.0, 1e-10, 0.5, 2.0, np.pi - 1e-7]:
            axis = np.array([1.0, -2.0, 0.5])
            axis /= np.linalg.norm(axis)
            r = angle * axis
            r2 = rotation_log(rotation_exp(r))
            np.testing.assert_allclose(r2, r, atol=1e-9)

    def test_exp_is_rotation(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            r = rng.normal(size=3)
            R = rotation_exp(r)
            assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
            assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_log_canonicalizes_to_at_most_pi(self):
        # an angle above pi comes back as its short-way equivalent
        axis = np.array([0.0, 0.0, 1.0])
        R = rotation_exp(4.0 * axis)  # 4 rad > pi
        r = rotation_log(R)
        assert np.linalg.norm(r) <= np.pi + 1e-12
        np.testing.assert_allclose(rotation_exp(r), R, atol=1e-12)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        Rs = np.stack([rotation_exp(rng.normal(size=3)) for _ in range(100)])
        batch = rotation_log_batch(Rs)
        for i in range(100):
            np.testing.assert_allclose(batch[i], rotation_log(Rs[i]), atol=1e-12)


class TestRigidEmbedding:
    def test_translation_scaling(self):
        cfg = EmbeddingConfig(rho=2.0)
        m = RigidMotion(np.eye(3), np.array([4.0, -6.0, 2.0]))
        v = embed_rigid(m, cfg)
        np.testing.assert_allclose(v, [0, 0, 0, 2.0, -3.0, 1.0])

    def test_batch_shape_and_default_rho(self):
        assert DEFAULT_RHO == pytest.approx(1.0 / 3.6)
        rng = np.random.default_rng(3)
        Rs = np.stack([rotation_exp(rng.normal(size=3)) for _ in range(10)])
        ts = rng.normal(size=(10, 3))
        v = embed_rigid_batch(Rs, ts, EmbeddingConfig())
        assert v.shape == (10, 6)
        np.testing.assert_allclose(v[:, 3:], ts / DEFAULT_RHO)


class TestLatentDistance:
    def test_linf(self):
        assert latent_distance([0, 0, 0], [1, -3, 2]) == 3.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            latent_distance(np.zeros(6), np.zeros(8))
