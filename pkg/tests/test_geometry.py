import numpy as np
import pytest

from gridransac.geometry import (
    Homography,
    HomographyAtInfinity,
    MatchSet,
    RigidMotion,
    count_inliers,
    residual,
    residuals,
)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestHomography:
    def test_canonical_scale(self):
        h = np.array([[2.0, 0, 5], [0, 2, -3], [0, 0, 1]])
        a = Homography(h)
        b = Homography(7.0 * h)
        np.testing.assert_allclose(a.h, b.h, atol=1e-15)
        assert abs(np.linalg.norm(a.h) - 1.0) < 1e-12

    def test_sign_fixed(self):
        h = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]])
        a = Homography(-h)
        assert a.h[2, 2] > 0

    def test_zero_and_singular_rejected(self):
        with pytest.raises(ValueError):
            Homography(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            Homography(np.outer([1.0, 2, 3], [4.0, 5, 6]))

    def test_non_finite_rejected(self):
        h = np.eye(3)
        h[0, 0] = np.nan
        with pytest.raises(ValueError):
            Homography(h)

    def test_transform_matches_residual(self):
        h = Homography(np.array([[1.0, 0.1, 3], [0.2, 1.1, -2], [1e-4, 0, 1]]))
        p = np.array([10.0, 20.0])
        q = h.transform(p)
        assert residual(h, p, q) < 1e-12

    def test_transform_at_infinity_raises(self):
        h = Homography(np.array([[1.0, 0, 0], [0, 1, 0], [-1.0, 0, 1]]))
        with pytest.raises(HomographyAtInfinity):
            h.transform([1.0, 0.0])

    def test_matrix_is_immutable(self):
        h = Homography(np.eye(3))
        with pytest.raises(ValueError):
            h.h[0, 0] = 2.0


class TestRigidMotion:
    def test_valid_motion_transforms(self):
        m = RigidMotion(rot_z(0.3), np.array([1.0, 2.0, 3.0]))
        p = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(m.transform(p), m.R @ p + m.t)

    def test_non_orthogonal_rejected(self):
        with pytest.raises(ValueError):
            RigidMotion(np.eye(3) * 1.001, np.zeros(3))

    def test_reflection_rejected(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidMotion(R, np.zeros(3))

    def test_translation_bound(self):
        RigidMotion(np.eye(3), np.array([0.0, 0.0, 5.0]), translation_bound=5.0)
        with pytest.raises(ValueError):
            RigidMotion(np.eye(3), np.array([0.0, 0.0, 5.1]), translation_bound=5.0)


class TestMatchSet:
    def test_basic(self):
        m = MatchSet("homography", np.zeros((5, 2)), np.ones((5, 2)))
        assert len(m) == 5

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            MatchSet("homography", np.zeros((5, 3)), np.zeros((5, 3)))
        with pytest.raises(ValueError):
            MatchSet("rigid3d", np.zeros((5, 3)), np.zeros((4, 3)))
        with pytest.raises(ValueError):
            MatchSet("homography", np.zeros((0, 2)), np.zeros((0, 2)))

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            MatchSet("affine", np.zeros((5, 2)), np.zeros((5, 2)))

    def test_non_finite_rejected(self):
        src = np.zeros((5, 2))
        src[0, 0] = np.inf
        with pytest.raises(ValueError):
            MatchSet("homography", src, np.zeros((5, 2)))

    def test_arrays_immutable(self):
        m = MatchSet("homography", np.zeros((5, 2)), np.zeros((5, 2)))
        with pytest.raises(ValueError):
            m.src[0, 0] = 1.0


class TestResidualsAndInliers:
    def test_count_inliers_planted(self):
        rng = np.random.default_rng(0)
        h = Homography(np.array([[1.0, 0, 10], [0, 1, -5], [0, 0, 1]]))
        src = rng.uniform(0, 100, size=(50, 2))
        dst = src + np.array([10.0, -5.0])
        dst[:10] += 100.0  # push 10 matches out of tolerance
        m = MatchSet("homography", src, dst)
        count, mask = count_inliers(h, m, 1e-6)
        assert count == 40
        assert mask.sum() == 40
        assert not mask[:10].any()

    def test_negative_threshold_rejected(self):
        m = MatchSet("homography", np.zeros((4, 2)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            count_inliers(Homography(np.eye(3)), m, -1.0)

    def test_point_at_infinity_is_outlier(self):
        h = Homography(np.array([[1.0, 0, 0], [0, 1, 0], [-1.0, 0, 1]]))
        src = np.array([[1.0, 0.0], [0.0, 0.0]])
        m = MatchSet("homography", src, src)
        r = residuals(h, m)
        assert np.isinf(r[0])
        count, _ = count_inliers(h, m, 1e9)
        assert count == 1

    def test_problem_model_mismatch(self):
        m = MatchSet("rigid3d", np.zeros((4, 3)), np.zeros((4, 3)))
        with pytest.raises(ValueError):
            residuals(Homography(np.eye(3)), m)

    def test_rigid_residuals(self):
        rng = np.random.default_rng(1)
        motion = RigidMotion(rot_z(1.0), np.array([1.0, -2.0, 0.5]))
        src = rng.normal(size=(20, 3))
        dst = src @ motion.R.T + motion.t
        m = MatchSet("rigid3d", src, dst)
        assert np.max(residuals(motion, m)) < 1e-12
