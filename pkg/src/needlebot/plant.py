"""Ground-truth simulator of the physical arm.

Motors track commands through a bandwidth- and velocity-limited servo;
joints follow the true coupling matrix through a backlash deadband and
load-dependent cable stretch; the structure deflects under tip load with a
scalar compliance. Sensors return noisy, quantized (encoders) and noisy,
delayed (magnetic tracker) views of the ground truth. Everything is
deterministic for a fixed rng.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rotation_about_axis
from .kinematics import KinematicChain, forward_kinematics, jacobians, needle_arm_chain
from .transmission import CouplingMatrix

# Firmware disables the motors when the command stream stalls longer than this.
WATCHDOG_TIMEOUT = 0.010

# Cable-driven revolute joints (indices into the 8-vector).
CABLE_JOINTS = (4, 5, 6)

MAX_STEP_DT = 0.01


def default_velocity_limits() -> np.ndarray:
    """Per-axis limits: base linear stage in m/s, revolute joints in rad/s,
    insertion axis in m/s."""
    return np.array([0.166, 0.166, 0.332, 5.16, 5.16, 5.16, 5.16, 0.166])


@dataclass
class PlantConfig:
    coupling: CouplingMatrix = field(default_factory=CouplingMatrix.identity)
    chain: KinematicChain = field(default_factory=needle_arm_chain)
    motor_bandwidth: float = 30.0  # Hz
    cable_compliance: float = 0.01  # rad per N*m on cable joints
    backlash_width: float = float(np.deg2rad(0.5))  # rad, cable joints
    base_backlash: float = 1e-4  # m (linear axes) / rad (trunnion)
    tip_compliance: float = 10.3e-3 / 10.0  # m/N, matches the 10 N deflection test
    joint_velocity_limits: np.ndarray = field(default_factory=default_velocity_limits)
    joint_torque_limit: float = 3.36  # N*m, cable joints
    encoder_noise_sigma: float = 1e-4  # rad
    encoder_quantum: float = float(2.0 * np.pi / 2 ** 14)
    tracker_noise_sigma_pos: float = 0.3e-3  # m
    tracker_noise_sigma_ori: float = float(np.deg2rad(0.2))
    tracker_latency: float = 0.010  # s
    tracker_mount: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        self.joint_velocity_limits = np.asarray(self.joint_velocity_limits, dtype=float)
        numeric = [self.motor_bandwidth, self.cable_compliance, self.backlash_width,
                   self.base_backlash, self.tip_compliance, self.joint_torque_limit,
                   self.encoder_noise_sigma, self.encoder_quantum,
                   self.tracker_noise_sigma_pos, self.tracker_noise_sigma_ori,
                   self.tracker_latency]
        if any(v < 0.0 for v in numeric) or np.any(self.joint_velocity_limits < 0.0):
            raise ValueError("plant parameters must be non-negative")

    def backlash_vector(self) -> np.ndarray:
        widths = np.full(8, self.base_backlash)
        widths[list(CABLE_JOINTS)] = self.backlash_width
        return widths

    def compliance_vector(self) -> np.ndarray:
        compliance = np.zeros(8)
        compliance[list(CABLE_JOINTS)] = self.cable_compliance
        return compliance


@dataclass
class PlantState:
    motor_pos: np.ndarray
    motor_vel: np.ndarray
    backlash_pos: np.ndarray  # joint-side position of each deadband element
    joint_pos_true: np.ndarray
    applied_tip_wrench: np.ndarray
    clock: float = 0.0
    watchdog_tripped: bool = False
    # (time, q_true, wrench) samples kept long enough to serve tracker latency
    history: list = field(default_factory=list)
    # lazy cable-torque cache: joints move slowly between Jacobian refreshes
    torque_cache: np.ndarray | None = None
    torque_cache_q: np.ndarray | None = None
    torque_cache_wrench: np.ndarray | None = None


def initial_state(cfg: PlantConfig, q0=None) -> PlantState:
    q0 = np.zeros(8) if q0 is None else np.asarray(q0, dtype=float)
    theta0 = np.linalg.solve(cfg.coupling.matrix, q0)
    state = PlantState(
        motor_pos=theta0.copy(),
        motor_vel=np.zeros(8),
        backlash_pos=q0.copy(),
        joint_pos_true=q0.copy(),
        applied_tip_wrench=np.zeros(3),
    )
    state.history.append((0.0, q0.copy(), np.zeros(3)))
    return state


def _cable_torque(state: PlantState, cfg: PlantConfig, q: np.ndarray,
                  tip_force: np.ndarray) -> np.ndarray:
    """tau = J_pos^T F, refreshed only when the posture or load moved."""
    if (state.torque_cache is not None
            and np.abs(q - state.torque_cache_q).max() < 5e-3
            and np.abs(tip_force - state.torque_cache_wrench).max() < 1e-3):
        return state.torque_cache
    j_pos, _ = jacobians(cfg.chain, q)
    tau = j_pos.T @ tip_force
    limit = cfg.joint_torque_limit
    tau = np.clip(tau, -limit, limit)
    state.torque_cache = tau
    state.torque_cache_q = q.copy()
    state.torque_cache_wrench = np.asarray(tip_force, dtype=float).copy()
    return tau


def step_plant(state: PlantState, cfg: PlantConfig, theta_cmd, tip_force,
               dt: float) -> PlantState:
    """Advance the ground truth by dt (mutates and returns state)."""
    if not 0.0 < dt <= MAX_STEP_DT:
        raise ValueError(f"dt must be in (0, {MAX_STEP_DT}], got {dt}")
    theta_cmd = np.asarray(theta_cmd, dtype=float)
    tip_force = np.asarray(tip_force, dtype=float)
    if not (np.isfinite(theta_cmd).all() and np.isfinite(tip_force).all()):
        raise ValueError("non-finite plant command")

    if state.watchdog_tripped:
        theta_cmd = state.motor_pos  # motors disabled: hold, no tracking

    omega = 2.0 * np.pi * cfg.motor_bandwidth
    vel = np.clip(omega * (theta_cmd - state.motor_pos),
                  -cfg.joint_velocity_limits, cfg.joint_velocity_limits)
    state.motor_vel = vel
    state.motor_pos = state.motor_pos + vel * dt

    q_drive = cfg.coupling.matrix @ state.motor_pos
    half = cfg.backlash_vector() / 2.0
    state.backlash_pos = np.clip(state.backlash_pos, q_drive - half, q_drive + half)

    tau = _cable_torque(state, cfg, state.backlash_pos, tip_force)
    state.joint_pos_true = state.backlash_pos + cfg.compliance_vector() * tau
    state.applied_tip_wrench = tip_force.copy()
    state.clock += dt

    state.history.append((state.clock, state.joint_pos_true.copy(), tip_force.copy()))
    horizon = state.clock - cfg.tracker_latency - 0.05
    while len(state.history) > 2 and state.history[1][0] <= horizon:
        state.history.pop(0)
    return state


def trip_watchdog(state: PlantState) -> None:
    state.watchdog_tripped = True


def reset_watchdog(state: PlantState) -> None:
    state.watchdog_tripped = False


def watchdog_check(last_cmd_age: float) -> bool:
    """True (tripped) iff the command stream stalled beyond the deadline."""
    if last_cmd_age < 0.0:
        raise ValueError("command age must be non-negative")
    return last_cmd_age > WATCHDOG_TIMEOUT


def true_tip_pose(state: PlantState, cfg: PlantConfig, q=None, wrench=None) -> Pose:
    """fk of the true joints plus structural deflection under the tip load."""
    q = state.joint_pos_true if q is None else q
    wrench = state.applied_tip_wrench if wrench is None else wrench
    pose = forward_kinematics(cfg.chain, q)
    return Pose(pose.rotation, pose.translation + cfg.tip_compliance * wrench)


def sense_joints(state: PlantState, cfg: PlantConfig, rng) -> np.ndarray:
    """Encoder view: additive Gaussian noise then quantization."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    q = state.joint_pos_true.copy()
    if cfg.encoder_noise_sigma > 0.0:
        q = q + rng.normal(0.0, cfg.encoder_noise_sigma, 8)
    if cfg.encoder_quantum > 0.0:
        q = np.round(q / cfg.encoder_quantum) * cfg.encoder_quantum
    return q


def _delayed_sample(state: PlantState, at_time: float):
    """Linear interpolation of (q, wrench) history at at_time."""
    history = state.history
    if at_time <= history[0][0]:
        return history[0][1], history[0][2]
    for i in range(len(history) - 1, -1, -1):
        t_i = history[i][0]
        if t_i <= at_time:
            if i == len(history) - 1:
                return history[i][1], history[i][2]
            t_next = history[i + 1][0]
            w = (at_time - t_i) / (t_next - t_i)
            q = (1.0 - w) * history[i][1] + w * history[i + 1][1]
            wrench = (1.0 - w) * history[i][2] + w * history[i + 1][2]
            return q, wrench
    return history[0][1], history[0][2]


def state_csv_header() -> str:
    """Header for a full ground-truth state trace."""
    cols = (["clock_s"]
            + [f"motor{i + 1}_pos" for i in range(8)]
            + [f"motor{i + 1}_vel" for i in range(8)]
            + [f"q{i + 1}_true" for i in range(8)]
            + ["wrench_x_n", "wrench_y_n", "wrench_z_n", "watchdog_tripped"])
    return ",".join(cols)


def state_csv_row(state: PlantState) -> str:
    values = ([state.clock] + list(state.motor_pos) + list(state.motor_vel)
              + list(state.joint_pos_true) + list(state.applied_tip_wrench))
    return ",".join(repr(float(v)) for v in values) \
        + f",{int(state.watchdog_tripped)}"


def sense_tracker(state: PlantState, cfg: PlantConfig, rng) -> Pose:
    """Magnetic-tracker view of the tip, in the tracker's own frame:
    latency-delayed true pose with Gaussian position and small-angle
    orientation noise."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    q, wrench = _delayed_sample(state, state.clock - cfg.tracker_latency)
    pose = cfg.tracker_mount.inverse() @ true_tip_pose(state, cfg, q=q, wrench=wrench)
    translation = pose.translation
    rotation = pose.rotation
    if cfg.tracker_noise_sigma_pos > 0.0:
        translation = translation + rng.normal(0.0, cfg.tracker_noise_sigma_pos, 3)
    if cfg.tracker_noise_sigma_ori > 0.0:
        rotvec = rng.normal(0.0, cfg.tracker_noise_sigma_ori, 3)
        angle = np.linalg.norm(rotvec)
        if angle > 0.0:
            rotation = rotation_about_axis(rotvec, angle) @ rotation
    return Pose(rotation, translation)
