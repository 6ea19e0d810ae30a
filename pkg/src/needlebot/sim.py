"""Closed-loop simulator: plant + estimation + the two-rate control cascade.

One Simulator owns one plant and one rng; the tracking harness and the
teleoperation service both drive it. The inner tick (default 500 Hz) steps
joint PD, the plant, the encoders and the complementary filter; the outer
tick (default 100 Hz) runs the tracker measurement pipeline and the
resolved-rate end-effector update.

Open-loop mode reproduces the no-feedback experiment: motor setpoints come
straight from the ideal coupling matrix and the end-effector update sees
forward-kinematics predictions instead of tracker measurements; the
tracker pipeline keeps running for evaluation only.
"""

from __future__ import annotations

import numpy as np

from .config import SimConfig
from .control import (EEGains, JointGains, PoseError, ee_control_step,
                      ee_pose_error, joint_pd_step)
from .estimation import (FilterConfig, JointEstimate, Registration,
                         complementary_filter_step, register_tracker, tip_in_base)
from .geometry import Pose, rot_y, rot_z
from .kinematics import forward_kinematics, needle_arm_chain
from .plant import (PlantConfig, initial_state, sense_joints, sense_tracker,
                    step_plant)
from .transmission import (CalibrationSet, CouplingMatrix, calibrate_coupling,
                           coupling_structure_mask, joints_to_motors)

# Where the magnetic tracker sits relative to the robot base in the default
# experiment rig; recovered by the registration sweep, never read by the
# controller directly.
DEFAULT_TRACKER_MOUNT = Pose(rot_y(0.35) @ rot_z(0.2), [0.45, 0.25, -0.15])

# Per-axis excitation amplitudes for calibration: meters on the linear axes,
# radians on the revolute ones, meters on the insertion axis.
CALIBRATION_AMPLITUDES = np.array([0.05, 0.05, 0.05, 0.3, 0.3, 0.3, 0.3, 0.02])

REGISTRATION_SPREAD = np.array([0.04, 0.04, 0.04, 0.2, 0.2, 0.2, 0.2, 0.01])


class ControllerDivergenceError(RuntimeError):
    pass


def perturbed_coupling(rng: np.random.Generator, pert) -> CouplingMatrix:
    """True (manufactured) coupling: ideal identity plus per-seed deviations."""
    mask = coupling_structure_mask()
    matrix = np.eye(8)
    diag_scale = np.array([pert.diag_linear] * 3 + [pert.diag_cable] * 5)
    matrix[np.arange(8), np.arange(8)] += rng.uniform(-1.0, 1.0, 8) * diag_scale
    for i in range(4, 7):
        matrix[i, i + 1:8] = rng.uniform(-1.0, 1.0, 7 - i) * pert.coupling
    return CouplingMatrix(matrix, mask).validate()


def build_plant_config(cfg: SimConfig, coupling_true: CouplingMatrix,
                       tracker_mount: Pose) -> PlantConfig:
    p = cfg.plant
    return PlantConfig(
        coupling=coupling_true,
        motor_bandwidth=p.motor_bandwidth,
        cable_compliance=p.cable_compliance,
        backlash_width=float(np.deg2rad(p.backlash_width_deg)),
        base_backlash=p.base_backlash,
        tip_compliance=p.tip_compliance,
        encoder_noise_sigma=p.encoder_noise_sigma,
        encoder_quantum=p.encoder_quantum,
        tracker_noise_sigma_pos=p.tracker_noise_sigma_pos,
        tracker_noise_sigma_ori=float(np.deg2rad(p.tracker_noise_sigma_ori_deg)),
        tracker_latency=p.tracker_latency,
        tracker_mount=tracker_mount,
    )


def _blend_pose(old: Pose, new: Pose, beta: float) -> Pose:
    """EMA of nearby poses; the blended rotation is re-projected onto SO(3)."""
    translation = (1.0 - beta) * old.translation + beta * new.translation
    mixed = (1.0 - beta) * old.rotation + beta * new.rotation
    u, _, vt = np.linalg.svd(mixed)
    d = np.sign(np.linalg.det(u @ vt))
    rotation = u @ np.diag([1.0, 1.0, d]) @ vt
    return Pose(rotation, translation)


class Simulator:
    def __init__(self, cfg: SimConfig, seed: int, open_loop: bool = False,
                 tracker_mount: Pose = None, ideal_plant: bool = False):
        self.cfg = cfg
        self.seed = seed
        self.open_loop = open_loop
        self.rng = np.random.default_rng(seed)
        self.chain = needle_arm_chain()
        self.coupling_ideal = CouplingMatrix.identity()
        if ideal_plant:
            self.coupling_true = CouplingMatrix.identity()
            mount = Pose.identity() if tracker_mount is None else tracker_mount
            self.plant_cfg = build_plant_config(cfg, self.coupling_true, mount)
            # latency stays: it is a pipeline property the lead compensates
            for attr in ("cable_compliance", "backlash_width", "base_backlash",
                         "tip_compliance", "encoder_noise_sigma", "encoder_quantum",
                         "tracker_noise_sigma_pos", "tracker_noise_sigma_ori"):
                setattr(self.plant_cfg, attr, 0.0)
        else:
            self.coupling_true = perturbed_coupling(self.rng, cfg.perturbation)
            mount = DEFAULT_TRACKER_MOUNT if tracker_mount is None else tracker_mount
            self.plant_cfg = build_plant_config(cfg, self.coupling_true, mount)
        self.coupling_control = self.coupling_ideal

        self.home_q = np.asarray(cfg.harness.home_q, dtype=float)
        self.state = initial_state(self.plant_cfg, self.home_q)
        self.tip_force = np.zeros(3)

        c = cfg.control
        self.filter_cfg = FilterConfig.from_changeover(c.filter_changeover_hz, c.inner_dt)
        self.pd_gains = JointGains(kp=np.full(8, c.joint_kp * c.inner_dt),
                                   kd=np.full(8, c.joint_kd * c.inner_dt))
        self.ee_gains = EEGains(k_pos=c.k_pos, k_ori=c.k_ori, damping=c.damping)
        self._beta_rate = 1.0 - float(np.exp(-2.0 * np.pi * c.error_rate_lpf_hz * c.inner_dt))
        self._beta_ema = 1.0 - float(np.exp(-c.ee_period / c.tracker_ema_tau))
        self.ticks_per_ee = max(int(round(c.ee_period / c.inner_dt)), 1)

        self.registration = Registration(Pose.identity())
        self.motors_held = False  # e-stop: freeze motor setpoints outright
        self._reset_loop_state()

    # -- loop state -------------------------------------------------------

    def _reset_loop_state(self) -> None:
        self.theta_set = self.state.motor_pos.copy()
        self.q_set = self.state.joint_pos_true.copy()
        q_meas = sense_joints(self.state, self.plant_cfg, self.rng)
        self.estimate = JointEstimate(q_meas, self.state.clock)
        self._prev_e_q = np.zeros(8)
        self._rate_f = np.zeros(8)
        self._ema_pose = None
        self._boxcar = []
        self._q_ref = self.q_set.copy()
        self._q_ramp_left = 0
        self.last_measured = None
        self.last_error = None

    @property
    def clock(self) -> float:
        return self.state.clock

    @property
    def q_est(self) -> np.ndarray:
        if self.open_loop:
            return self.coupling_ideal.matrix @ self.theta_set
        return self.estimate.q_est

    def teleport(self, q) -> None:
        """Ground-truth repositioning used by experiment setup phases."""
        q = np.asarray(q, dtype=float)
        st = self.state
        st.motor_pos = np.linalg.solve(self.coupling_true.matrix, q)
        st.motor_vel = np.zeros(8)
        st.backlash_pos = q.copy()
        st.joint_pos_true = q.copy()
        st.torque_cache = None
        st.history = [(st.clock, q.copy(), st.applied_tip_wrench.copy())]
        self._reset_loop_state()

    # -- inner (fast) loop --------------------------------------------------

    def inner_tick(self) -> None:
        dt = self.cfg.control.inner_dt
        if self.motors_held:
            self.theta_set = self.state.motor_pos.copy()
        if not self.open_loop and not self.motors_held:
            # ramp the joint reference between outer updates instead of
            # holding it, so the fast loop does not chase 50 Hz steps
            if self._q_ramp_left > 0:
                frac = 1.0 / self._q_ramp_left
                self._q_ref = self._q_ref + frac * (self.q_set - self._q_ref)
                self._q_ramp_left -= 1
            else:
                self._q_ref = self.q_set
            e_q = self._q_ref - self.estimate.q_est
            rate = (e_q - self._prev_e_q) / dt
            self._rate_f += self._beta_rate * (rate - self._rate_f)
            self._prev_e_q = e_q
            self.theta_set = joint_pd_step(self.theta_set, e_q, self._rate_f,
                                           self.pd_gains, self.coupling_control)
        step_plant(self.state, self.plant_cfg, self.theta_set, self.tip_force, dt)
        sample = sense_tracker(self.state, self.plant_cfg, self.rng)
        self._boxcar.append(sample)
        if len(self._boxcar) > self.cfg.control.tracker_boxcar:
            self._boxcar.pop(0)
        if not self.open_loop:
            q_meas = sense_joints(self.state, self.plant_cfg, self.rng)
            self.estimate = complementary_filter_step(
                self.estimate, self.state.motor_vel, q_meas,
                self.coupling_control, self.filter_cfg)

    def step_inner(self, n: int = 1) -> None:
        for _ in range(n):
            self.inner_tick()

    # -- outer (end-effector) loop -----------------------------------------

    def update_measurement(self) -> Pose:
        """Tracker pipeline: boxcar of the inner-tick samples since the last
        outer tick, EMA smoothing, registration into base frame."""
        if not self._boxcar:
            self._boxcar.append(sense_tracker(self.state, self.plant_cfg, self.rng))
        translation = np.mean([p.translation for p in self._boxcar], axis=0)
        mixed = np.mean([p.rotation for p in self._boxcar], axis=0)
        u, _, vt = np.linalg.svd(mixed)
        raw = Pose(u @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))]) @ vt,
                   translation)
        if self._ema_pose is None:
            self._ema_pose = raw
        else:
            self._ema_pose = _blend_pose(self._ema_pose, raw, self._beta_ema)
        self.last_measured = tip_in_base(self.registration, self._ema_pose)
        return self.last_measured

    def ee_tick(self, target: Pose) -> PoseError:
        measured = self.update_measurement()
        if self.open_loop:
            q_pred = self.coupling_ideal.matrix @ self.theta_set
            predicted = forward_kinematics(self.chain, q_pred)
            err = ee_pose_error(target, predicted)
            self.q_set = ee_control_step(q_pred, err, self.chain, self.ee_gains)
            self.theta_set = joints_to_motors(self.coupling_ideal, self.q_set)
        else:
            err = ee_pose_error(target, measured)
            self.q_set = ee_control_step(self.estimate.q_est, err, self.chain,
                                         self.ee_gains)
            self._q_ramp_left = self.ticks_per_ee
        self.last_error = err
        return err

    def run_outer(self, target: Pose) -> None:
        """One outer tick followed by its share of inner ticks."""
        self.ee_tick(target)
        self.step_inner(self.ticks_per_ee)

    def settle(self, duration: float = None) -> None:
        """Warm the filter, the servo and the measurement pipeline at hold."""
        duration = self.cfg.control.settle_time if duration is None else duration
        ticks = int(round(duration / self.cfg.control.inner_dt))
        for k in range(ticks):
            if k % self.ticks_per_ee == 0:
                self.update_measurement()
            self.inner_tick()

    # -- experiment setup phases --------------------------------------------

    def _calibration_excitation(self, m: int) -> np.ndarray:
        """Servo-feasible motor commands (8 x m): per-motor symmetric
        triangles (isolate each column; direction symmetry averages the
        backlash offset out) followed by combined sinusoids at per-axis
        feasible rates."""
        dt = self.cfg.control.inner_dt
        amps = CALIBRATION_AMPLITUDES * (self.cfg.harness.calibration_amplitude / 0.3)
        limits = self.plant_cfg.joint_velocity_limits
        theta = np.zeros((8, m))
        split = int(m * 0.6)
        slot = split // 8
        for i in range(8):
            amp = min(amps[i], limits[i] * slot * dt / 4.0)
            quarter = slot // 4
            up = np.linspace(0.0, amp, quarter)
            tri = np.concatenate([up, up[::-1], -up, -up[::-1]])
            theta[i, i * slot:i * slot + len(tri)] = tri
        t = np.arange(m - split) * dt
        freqs = np.array([0.4, 0.5, 0.6, 1.3, 1.7, 2.1, 2.5, 0.45])
        phases = self.rng.uniform(0.0, 2.0 * np.pi, 8)
        sine_amp = np.minimum(amps, 0.8 * limits / (2.0 * np.pi * freqs))
        theta[:, split:] = sine_amp[:, None] * np.sin(
            2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
        return theta

    def calibrate(self) -> CouplingMatrix:
        """Excite the motors, record (actual motor, encoder) pairs, fit the
        structured coupling matrix, and adopt it for control."""
        h = self.cfg.harness
        dt = self.cfg.control.inner_dt
        excitation = self._calibration_excitation(h.calibration_samples)
        theta_home = self.state.motor_pos.copy()
        motors = np.empty((8, excitation.shape[1]))
        joints = np.empty((8, excitation.shape[1]))
        for k in range(excitation.shape[1]):
            theta_cmd = theta_home + excitation[:, k]
            step_plant(self.state, self.plant_cfg, theta_cmd, self.tip_force, dt)
            motors[:, k] = self.state.motor_pos
            joints[:, k] = sense_joints(self.state, self.plant_cfg, self.rng)
        self.last_calibration_set = CalibrationSet(motors, joints)
        self.coupling_control = calibrate_coupling(self.last_calibration_set)
        self.teleport(self.home_q)
        return self.coupling_control

    def register(self, n_poses: int = None, samples_per_pose: int = 25) -> Registration:
        """Initialization sweep: tracker tip positions vs fk of the measured
        joints across n poses, solved as a rigid Procrustes fit."""
        n_poses = self.cfg.harness.registration_poses if n_poses is None else n_poses
        tracker_points = np.empty((n_poses, 3))
        base_points = np.empty((n_poses, 3))
        for i in range(n_poses):
            delta = self.rng.uniform(-1.0, 1.0, 8) * REGISTRATION_SPREAD
            self.teleport(self.home_q + delta)
            self.step_inner(30)  # fill the latency history at hold
            trk = np.zeros(3)
            q_acc = np.zeros(8)
            for _ in range(samples_per_pose):
                self.inner_tick()
                trk += sense_tracker(self.state, self.plant_cfg, self.rng).translation
                q_acc += sense_joints(self.state, self.plant_cfg, self.rng)
            tracker_points[i] = trk / samples_per_pose
            base_points[i] = forward_kinematics(self.chain, q_acc / samples_per_pose).translation
        self.registration = register_tracker(tracker_points, base_points)
        self.teleport(self.home_q)
        return self.registration
