import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from needlebot.geometry import (
    Pose,
    normalize_angle,
    orthonormality_defect,
    rot_x,
    rot_y,
    rot_z,
    rotation_about_axis,
)


class TestRotations:
    def test_elementary_rotations_match_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.uniform(-np.pi, np.pi)
            assert np.allclose(rot_x(a), Rotation.from_euler("x", a).as_matrix())
            assert np.allclose(rot_y(a), Rotation.from_euler("y", a).as_matrix())
            assert np.allclose(rot_z(a), Rotation.from_euler("z", a).as_matrix())

    def test_axis_angle_matches_scipy_rotvec(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            axis = rng.normal(size=3)
            angle = rng.uniform(-np.pi, np.pi)
            expected = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle)
            assert np.allclose(rotation_about_axis(axis, angle),
                               expected.as_matrix(), atol=1e-12)

    def test_zero_axis_rejected(self):
        with pytest.raises(ValueError):
            rotation_about_axis([0.0, 0.0, 0.0], 0.3)


class TestPose:
    def test_compose_inverse_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pose = Pose(rotation_about_axis(rng.normal(size=3), rng.normal()),
                        rng.normal(size=3))
            assert (pose @ pose.inverse()).almost_equal(Pose.identity(), tol=1e-12)

    def test_matrix_roundtrip(self):
        pose = Pose(rot_z(0.4), [0.1, -0.2, 0.3])
        again = Pose.from_matrix(pose.as_matrix())
        assert again.almost_equal(pose, tol=1e-15)

    def test_validate_rejects_reflection_and_skew(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).validate()
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ValueError):
            Pose(bad, np.zeros(3)).validate()

    def test_orthonormality_defect(self):
        assert orthonormality_defect(np.eye(3)) == 0.0
        assert orthonormality_defect(1.001 * np.eye(3)) > 1e-9


class TestNormalizeAngle:
    def test_wraps_into_half_open_interval(self):
        assert normalize_angle(0.0) == 0.0
        assert normalize_angle(np.pi) == pytest.approx(np.pi)
        assert normalize_angle(-np.pi) == pytest.approx(np.pi)
        assert normalize_angle(3.0 * np.pi) == pytest.approx(np.pi)
        assert normalize_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = rng.uniform(-20.0, 20.0)
            w = normalize_angle(a)
            assert -np.pi < w <= np.pi
            assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-12)
            assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-12)
