import numpy as np
import pytest

from needlebot.estimation import (
    DegenerateGeometryError,
    FilterConfig,
    JointEstimate,
    Registration,
    complementary_filter_step,
    register_tracker,
    tip_in_base,
)
from needlebot.geometry import Pose, rot_z, rotation_about_axis
from needlebot.transmission import CouplingMatrix


class TestComplementaryFilter:
    def test_alpha_zero_is_encoder_only(self):
        prev = JointEstimate(np.ones(8) * 5.0)
        q_meas = np.full(8, 0.25)
        out = complementary_filter_step(prev, np.ones(8), q_meas,
                                        CouplingMatrix.identity(),
                                        FilterConfig(alpha=0.0, dt=1e-3))
        assert np.allclose(out.q_est, q_meas)

    def test_alpha_one_zero_velocity_holds_state(self):
        prev = JointEstimate(np.full(8, 0.7))
        out = complementary_filter_step(prev, np.zeros(8), np.zeros(8),
                                        CouplingMatrix.identity(),
                                        FilterConfig(alpha=1.0, dt=1e-3))
        assert np.allclose(out.q_est, prev.q_est)

    def test_hand_computed_blend(self):
        # alpha=0.9, dt=1e-3, prev=0, L=I, theta_dot=1, q_meas=0.01
        # -> 0.9*0.001 + 0.1*0.01 = 0.0019
        prev = JointEstimate(np.zeros(8))
        out = complementary_filter_step(prev, np.ones(8), np.full(8, 0.01),
                                        CouplingMatrix.identity(),
                                        FilterConfig(alpha=0.9, dt=1e-3))
        assert np.allclose(out.q_est, 0.0019, atol=1e-15)

    def test_geometric_convergence_ratio(self):
        cfg = FilterConfig(alpha=0.8, dt=1e-3)
        est = JointEstimate(np.ones(8))
        q_meas = np.zeros(8)
        errors = []
        for _ in range(10):
            est = complementary_filter_step(est, np.zeros(8), q_meas,
                                            CouplingMatrix.identity(), cfg)
            errors.append(np.abs(est.q_est[0]))
        ratios = np.array(errors[1:]) / np.array(errors[:-1])
        assert np.allclose(ratios, cfg.alpha, atol=1e-12)

    def test_blend_stays_between_predictions(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            prev = JointEstimate(rng.normal(size=8))
            vel = rng.normal(size=8)
            q_meas = rng.normal(size=8)
            cfg = FilterConfig(alpha=rng.uniform(), dt=1e-3)
            coupling = CouplingMatrix.identity()
            out = complementary_filter_step(prev, vel, q_meas, coupling, cfg)
            integration = prev.q_est + vel * cfg.dt
            lo = np.minimum(integration, q_meas) - 1e-12
            hi = np.maximum(integration, q_meas) + 1e-12
            assert np.all(out.q_est >= lo) and np.all(out.q_est <= hi)

    def test_timestamp_advances(self):
        prev = JointEstimate(np.zeros(8), timestamp=1.0)
        out = complementary_filter_step(prev, np.zeros(8), np.zeros(8),
                                        CouplingMatrix.identity(),
                                        FilterConfig(alpha=0.5, dt=0.002))
        assert out.timestamp == pytest.approx(1.002)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            FilterConfig(alpha=1.5)
        with pytest.raises(ValueError):
            FilterConfig(dt=0.0)


def cloud(rng, n=12, spread=0.2):
    return rng.uniform(-spread, spread, (n, 3))


class TestRegistration:
    def test_identical_pairs_identity(self):
        pts = cloud(np.random.default_rng(0))
        reg = register_tracker(pts, pts)
        assert reg.base_from_tracker.almost_equal(Pose.identity(), tol=1e-12)
        assert reg.rms_residual == pytest.approx(0.0, abs=1e-12)

    def test_recovers_known_transform(self):
        # T = 30 degrees about z plus translation (0.1, 0.2, 0.3)
        truth = Pose(rot_z(np.deg2rad(30.0)), [0.1, 0.2, 0.3])
        base_points = cloud(np.random.default_rng(1))
        tracker_points = np.array([truth.inverse().transform_point(p) for p in base_points])
        reg = register_tracker(tracker_points, base_points)
        assert np.abs(reg.base_from_tracker.rotation - truth.rotation).max() < 1e-9
        assert np.abs(reg.base_from_tracker.translation - truth.translation).max() < 1e-9

    def test_noisy_recovery_monte_carlo(self):
        truth = Pose(rotation_about_axis([0.3, -0.5, 0.8], 0.7), [0.05, -0.3, 0.12])
        rot_errors, trans_errors = [], []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            base_points = cloud(rng, n=50)
            tracker_points = np.array([truth.inverse().transform_point(p) for p in base_points])
            tracker_points += rng.normal(0.0, 0.5e-3, tracker_points.shape)
            reg = register_tracker(tracker_points, base_points)
            delta = reg.base_from_tracker.rotation @ truth.rotation.T
            angle = np.arccos(np.clip((np.trace(delta) - 1.0) / 2.0, -1.0, 1.0))
            rot_errors.append(np.rad2deg(angle))
            trans_errors.append(np.linalg.norm(
                reg.base_from_tracker.translation - truth.translation))
        assert np.mean(rot_errors) < 0.2
        assert np.mean(trans_errors) < 0.3e-3

    def test_left_invariance(self):
        rng = np.random.default_rng(3)
        truth = Pose(rotation_about_axis([1.0, 2.0, -1.0], -0.4), [0.2, 0.0, -0.1])
        base_points = cloud(rng)
        tracker_points = np.array([truth.inverse().transform_point(p) for p in base_points])
        g = Pose(rotation_about_axis([0.0, 1.0, 0.2], 1.1), [0.3, 0.3, -0.2])
        moved = np.array([g.transform_point(p) for p in base_points])
        reg = register_tracker(tracker_points, moved)
        expected = g @ truth
        assert np.abs(reg.base_from_tracker.rotation - expected.rotation).max() < 1e-9
        assert np.abs(reg.base_from_tracker.translation - expected.translation).max() < 1e-9

    def test_collinear_rejected(self):
        t = np.linspace(0.0, 1.0, 10)
        pts = np.outer(t, [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometryError):
            register_tracker(pts, pts)

    def test_too_few_pairs_rejected(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(DegenerateGeometryError):
            register_tracker(pts, pts)

    def test_reflection_not_returned(self):
        # Near-planar cloud tempts an SVD reflection; determinant must stay +1.
        rng = np.random.default_rng(4)
        pts = cloud(rng, n=30)
        pts[:, 2] *= 1e-6
        reg = register_tracker(pts, pts[:, [1, 0, 2]] * [1.0, 1.0, -1.0])
        assert np.linalg.det(reg.base_from_tracker.rotation) == pytest.approx(1.0, abs=1e-9)

    def test_persistence_roundtrip(self, tmp_path):
        truth = Pose(rotation_about_axis([0.1, 0.9, 0.3], 0.5), [0.01, 0.02, 0.03])
        reg = Registration(truth, rms_residual=1.25e-4)
        path = tmp_path / "registration.json"
        reg.save(path)
        loaded = Registration.load(path)
        assert loaded.base_from_tracker.almost_equal(truth, tol=1e-12)
        assert loaded.rms_residual == pytest.approx(1.25e-4)


class TestTipInBase:
    def test_identity_registration_passthrough(self):
        pose = Pose(rot_z(0.3), [0.1, 0.0, 0.2])
        out = tip_in_base(Registration(Pose.identity()), pose)
        assert out.almost_equal(pose, tol=1e-15)

    def test_identity_tracker_pose(self):
        reg = Registration(Pose(rot_z(-0.2), [0.3, 0.1, 0.0]))
        out = tip_in_base(reg, Pose.identity())
        assert out.almost_equal(reg.base_from_tracker, tol=1e-15)

    def test_composition_matches_matrix_product(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            reg = Registration(Pose(rotation_about_axis(rng.normal(size=3), rng.normal()),
                                    rng.normal(size=3)))
            tracker_pose = Pose(rotation_about_axis(rng.normal(size=3), rng.normal()),
                                rng.normal(size=3))
            out = tip_in_base(reg, tracker_pose)
            expected = reg.base_from_tracker.as_matrix() @ tracker_pose.as_matrix()
            assert np.abs(out.as_matrix() - expected).max() < 1e-12
