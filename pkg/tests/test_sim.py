import numpy as np
import pytest

from needlebot.config import default_config
from needlebot.control import ee_pose_error
from needlebot.geometry import Pose
from needlebot.kinematics import forward_kinematics, needle_arm_chain
from needlebot.sim import Simulator, perturbed_coupling
from needlebot.transmission import coupling_structure_mask


class TestPerturbedCoupling:
    def test_structure_and_invertibility(self):
        rng = np.random.default_rng(0)
        mask = coupling_structure_mask()
        for _ in range(50):
            coupling = perturbed_coupling(rng, default_config().perturbation)
            coupling.validate()
            assert np.all(coupling.matrix[~mask] == 0.0)

    def test_deviations_bounded(self):
        pert = default_config().perturbation
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = perturbed_coupling(rng, pert).matrix
            diag_dev = np.abs(np.diag(m) - 1.0)
            assert np.all(diag_dev[:3] <= pert.diag_linear + 1e-12)
            assert np.all(diag_dev[3:] <= pert.diag_cable + 1e-12)
            off = m[~np.eye(8, dtype=bool)]
            assert np.all(np.abs(off) <= pert.coupling + 1e-12)


class TestCalibrationPipeline:
    def test_recovers_true_coupling(self):
        sim = Simulator(default_config(), seed=0)
        sim.tip_force = np.array([0.0, 0.0, -2.0])
        calibrated = sim.calibrate()
        err = np.abs(calibrated.matrix - sim.coupling_true.matrix)
        # gear-ratio rows see clean data; coupled rows carry backlash bias
        assert err[np.arange(4), np.arange(4)].max() < 1e-3
        assert err.max() < 0.06
        assert sim.coupling_control is calibrated

    def test_exact_on_ideal_plant(self):
        sim = Simulator(default_config(), seed=0, ideal_plant=True)
        calibrated = sim.calibrate()
        assert np.abs(calibrated.matrix - np.eye(8)).max() < 1e-9


class TestRegistrationPipeline:
    def test_recovers_tracker_mount(self):
        sim = Simulator(default_config(), seed=0)
        reg = sim.register()
        mount = sim.plant_cfg.tracker_mount
        delta = reg.base_from_tracker.rotation @ mount.rotation.T
        angle = np.degrees(np.arccos(np.clip((np.trace(delta) - 1.0) / 2.0, -1.0, 1.0)))
        assert angle < 0.1
        assert np.linalg.norm(reg.base_from_tracker.translation - mount.translation) < 1e-3
        assert reg.rms_residual < 0.5e-3

    def test_exact_on_ideal_plant(self):
        sim = Simulator(default_config(), seed=0, ideal_plant=True)
        reg = sim.register()
        assert reg.rms_residual < 1e-10
        assert reg.base_from_tracker.almost_equal(Pose.identity(), tol=1e-8)


class TestCascade:
    def test_static_target_convergence_ideal(self):
        sim = Simulator(default_config(), seed=0, ideal_plant=True)
        sim.register()
        sim.settle()
        chain = needle_arm_chain()
        target_q = sim.home_q + np.array([0.01, -0.01, 0.01, 0.05, -0.05, 0.05, -0.05, 0.002])
        target = forward_kinematics(chain, target_q)
        for _ in range(300):
            sim.run_outer(target)
        err = ee_pose_error(target, sim.last_measured)
        assert err.pos_norm < 2e-5
        assert np.rad2deg(err.ori_norm) < 0.01

    def test_static_target_convergence_perturbed(self):
        sim = Simulator(default_config(), seed=2)
        sim.tip_force = np.array([0.0, 0.0, -2.0])
        sim.calibrate()
        sim.register()
        sim.settle()
        target = forward_kinematics(needle_arm_chain(), sim.home_q + 0.02)
        for _ in range(400):
            sim.run_outer(target)
        err = ee_pose_error(target, sim.last_measured)
        assert err.pos_norm < 0.3e-3
        assert np.rad2deg(err.ori_norm) < 0.2

    def test_open_loop_ignores_sensors(self):
        cfg = default_config()
        sim = Simulator(cfg, seed=0, open_loop=True)
        target = forward_kinematics(needle_arm_chain(), sim.home_q + 0.01)
        for _ in range(100):
            sim.run_outer(target)
        # controller believes its prediction: fk(q_pred) converges to target
        q_pred = sim.coupling_ideal.matrix @ sim.theta_set
        predicted = forward_kinematics(needle_arm_chain(), q_pred)
        assert ee_pose_error(target, predicted).pos_norm < 1e-4
        # while the true plant, driven through the wrong coupling, does not
        true_pose = forward_kinematics(needle_arm_chain(), sim.state.joint_pos_true)
        assert ee_pose_error(target, true_pose).pos_norm > 1e-4

    def test_teleport_resets_consistently(self):
        sim = Simulator(default_config(), seed=0)
        q = sim.home_q + 0.05
        sim.teleport(q)
        assert np.allclose(sim.state.joint_pos_true, q)
        assert np.allclose(sim.coupling_true.matrix @ sim.state.motor_pos, q, atol=1e-12)
        sim.step_inner(50)
        assert np.abs(sim.estimate.q_est - q).max() < 2e-3

    def test_determinism_across_instances(self):
        def trace():
            sim = Simulator(default_config(), seed=11)
            sim.tip_force = np.array([0.0, 0.0, -2.0])
            sim.register()
            target = forward_kinematics(needle_arm_chain(), sim.home_q + 0.01)
            out = []
            for _ in range(50):
                sim.run_outer(target)
                out.append((sim.q_set.copy(), sim.last_measured.translation.copy()))
            return out

        for (qa, pa), (qb, pb) in zip(trace(), trace()):
            assert np.array_equal(qa, qb)
            assert np.array_equal(pa, pb)
