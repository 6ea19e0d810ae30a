import numpy as np
import pytest

from needlebot.control import (
    EEGains,
    JointGains,
    PoseError,
    SingularJacobianError,
    damped_pinv,
    ee_control_step,
    ee_pose_error,
    joint_pd_step,
    joint_step_clamp,
)
from needlebot.geometry import Pose, rot_z, rotation_about_axis
from needlebot.kinematics import (
    DHFrame,
    KinematicChain,
    PRISMATIC,
    REVOLUTE,
    forward_kinematics,
    needle_arm_chain,
)
from needlebot.transmission import CouplingMatrix

HOME_Q = np.array([0.0, 0.0, 0.0, 0.0, -0.4, 0.7, -0.5, 0.0])


def random_pose(rng):
    return Pose(rotation_about_axis(rng.normal(size=3), rng.normal()), rng.normal(size=3))


class TestJointPD:
    def test_zero_error_leaves_setpoint(self):
        theta = np.linspace(0.0, 1.0, 8)
        out = joint_pd_step(theta, np.zeros(8), np.zeros(8), JointGains(),
                            CouplingMatrix.identity())
        assert np.allclose(out, theta)

    def test_unit_gain_increment(self):
        e_q = np.zeros(8)
        e_q[0] = 0.1
        out = joint_pd_step(np.zeros(8), e_q, np.zeros(8),
                            JointGains(kp=np.ones(8), kd=np.zeros(8)),
                            CouplingMatrix.identity())
        assert np.allclose(out, e_q)

    def test_coupled_increment_matches_linear_solve(self):
        matrix = np.eye(8)
        matrix[4, 5:] = [0.3, -0.2, 0.1]
        matrix[5, 6] = 0.25
        coupling = CouplingMatrix(matrix)
        rng = np.random.default_rng(1)
        e_q = rng.normal(size=8)
        gains = JointGains(kp=np.full(8, 2.0), kd=np.zeros(8))
        out = joint_pd_step(np.zeros(8), e_q, np.zeros(8), gains, coupling)
        expected = np.linalg.solve(matrix, 2.0 * e_q)
        assert np.allclose(out, expected, atol=1e-12)

    def test_negative_gains_rejected(self):
        with pytest.raises(ValueError):
            JointGains(kp=np.full(8, -1.0))


class TestEEPoseError:
    def test_equal_poses(self):
        pose = random_pose(np.random.default_rng(2))
        err = ee_pose_error(pose, pose)
        assert err.pos_norm == pytest.approx(0.0, abs=1e-12)
        assert err.ori_norm == pytest.approx(0.0, abs=1e-12)

    def test_roll_about_tool_axis_ignored(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            target = random_pose(rng)
            roll = Pose(rot_z(rng.uniform(-np.pi, np.pi)), np.zeros(3))
            measured = Pose((target @ roll).rotation, target.translation)
            err = ee_pose_error(target, measured)
            assert err.ori_norm < 1e-9
            assert err.pos_norm < 1e-12

    def test_hand_cross_product_case(self):
        # z_t = +z, z_m = +x: angle pi/2 about (0, -1, 0), the axis that
        # rotates +x onto +z (hand oracle: x cross z = (0, -1, 0)).
        target = Pose.identity()
        measured = Pose(np.array([[0.0, 0.0, 1.0],
                                  [1.0, 0.0, 0.0],
                                  [0.0, 1.0, 0.0]]), np.zeros(3))
        assert np.allclose(measured.z_axis, [1.0, 0.0, 0.0])
        err = ee_pose_error(target, measured)
        assert np.allclose(err.e_ori, [0.0, -np.pi / 2.0, 0.0], atol=1e-12)
        # applying that angular velocity moves z_m toward z_t
        z_dot = np.cross(err.e_ori, measured.z_axis)
        assert z_dot @ target.z_axis > 0.0

    def test_antiparallel_flagged(self):
        target = Pose.identity()
        measured = Pose(rotation_about_axis([1.0, 0.0, 0.0], np.pi), np.zeros(3))
        err = ee_pose_error(target, measured)
        assert err.degenerate
        assert err.ori_norm == pytest.approx(np.pi)
        assert abs(err.e_ori @ target.z_axis) < 1e-12

    def test_position_antisymmetry(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = random_pose(rng), random_pose(rng)
            assert np.allclose(ee_pose_error(a, b).e_pos,
                               -ee_pose_error(b, a).e_pos, atol=1e-12)

    def test_ori_magnitude_is_angle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            target = random_pose(rng)
            angle = rng.uniform(0.01, np.pi - 0.01)
            axis = np.cross(target.z_axis, rng.normal(size=3))
            axis /= np.linalg.norm(axis)
            measured = Pose(rotation_about_axis(axis, angle) @ target.rotation,
                            target.translation)
            err = ee_pose_error(target, measured)
            assert err.ori_norm == pytest.approx(angle, abs=1e-9)
            assert err.ori_norm <= np.pi


class TestDampedPinv:
    def test_orthonormal_rows_undamped(self):
        j = np.hstack([np.eye(3), np.zeros((3, 5))])
        assert np.allclose(damped_pinv(j, 0.0), j.T, atol=1e-12)

    def test_zero_matrix_damped(self):
        assert np.allclose(damped_pinv(np.zeros((3, 8)), 0.01), 0.0)

    def test_pseudoinverse_property(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            j = rng.normal(size=(3, 8))
            jp = damped_pinv(j, 0.0)
            assert np.abs(j @ jp @ j - j).max() < 1e-9
            assert np.allclose(jp, np.linalg.pinv(j), atol=1e-9)

    def test_rank_deficient_undamped_rejected(self):
        j = np.zeros((3, 8))
        j[0, 0] = 1.0
        with pytest.raises(SingularJacobianError):
            damped_pinv(j, 0.0)

    def test_damping_bounds_gain(self):
        # largest amplification of a damped pinv is 1/(2*damping)
        rng = np.random.default_rng(7)
        damping = 0.05
        for _ in range(50):
            j = rng.normal(size=(3, 8)) * rng.uniform(1e-4, 1.0)
            jp = damped_pinv(j, damping)
            assert np.linalg.norm(jp, 2) <= 1.0 / (2.0 * damping) + 1e-9


class TestEEControlStep:
    def test_zero_error_is_identity(self):
        q = ee_control_step(HOME_Q, PoseError(np.zeros(3), np.zeros(3)),
                            needle_arm_chain(), EEGains())
        assert np.allclose(q, HOME_Q)

    def test_non_finite_error_rejected(self):
        with pytest.raises(ValueError):
            ee_control_step(HOME_Q, PoseError(np.array([np.nan, 0, 0]), np.zeros(3)),
                            needle_arm_chain(), EEGains())

    def test_single_step_reduces_position_error(self):
        chain = needle_arm_chain()
        gains = EEGains(k_pos=0.3, k_ori=0.3)
        rng = np.random.default_rng(8)
        for _ in range(50):
            q = HOME_Q + rng.uniform(-0.2, 0.2, 8)
            pose = forward_kinematics(chain, q)
            offset = rng.normal(size=3)
            offset *= 2e-3 / np.linalg.norm(offset)
            target = Pose(pose.rotation, pose.translation + offset)
            err = ee_pose_error(target, pose)
            q_new = ee_control_step(q, err, chain, gains)
            new_err = ee_pose_error(target, forward_kinematics(chain, q_new))
            assert new_err.pos_norm <= (1.0 - 0.5 * gains.k_pos) * err.pos_norm

    def test_iterates_to_convergence(self):
        chain = needle_arm_chain()
        gains = EEGains()
        rng = np.random.default_rng(9)
        for _ in range(5):
            q_target = HOME_Q + rng.uniform(-0.15, 0.15, 8)
            target = forward_kinematics(chain, q_target)
            q = HOME_Q.copy()
            for _ in range(500):
                err = ee_pose_error(target, forward_kinematics(chain, q))
                q = ee_control_step(q, err, chain, gains)
            final = ee_pose_error(target, forward_kinematics(chain, q))
            assert final.pos_norm < 1e-4
            assert np.rad2deg(final.ori_norm) < 0.1

    def test_steps_respect_clamp(self):
        chain = needle_arm_chain()
        clamp = joint_step_clamp(chain)
        gains = EEGains(k_pos=1.0, k_ori=1.0, damping=0.05)
        for q5 in np.linspace(-1.5, 1.5, 31):
            q = HOME_Q.copy()
            q[4] = q5
            err = PoseError(np.array([0.05, -0.05, 0.05]), np.array([0.5, 0.5, 0.0]))
            q_new = ee_control_step(q, err, chain, gains)
            assert np.all(np.abs(q_new - q) <= clamp + 1e-12)

    def test_rank_deficient_position_jacobian_survives(self):
        # one revolute joint with the tip on its own axis: J_pos == 0
        chain = KinematicChain((DHFrame(0.0, 0.0, 0.0, 0.0, REVOLUTE),))
        err = PoseError(np.array([0.01, 0.0, 0.0]), np.zeros(3))
        q = ee_control_step(np.zeros(1), err, chain, EEGains())
        assert np.isfinite(q).all()

    def test_prismatic_pair_rank_deficient_rows(self):
        chain = KinematicChain((
            DHFrame(0.0, 0.0, 0.0, 0.0, PRISMATIC),
            DHFrame(0.0, -np.pi / 2.0, 0.0, 0.0, PRISMATIC),
        ))
        err = PoseError(np.array([0.001, 0.001, 0.001]), np.zeros(3))
        q = ee_control_step(np.zeros(2), err, chain, EEGains())
        assert np.isfinite(q).all()
