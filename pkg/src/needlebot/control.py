"""Three-level control stack.

Inner to outer: motor setpoint PD in joint space, end-effector pose error
(needle-symmetric: roll about the tool z-axis is ignored), and a
resolved-rate correction mapping task errors through damped pseudoinverses
of the position/orientation Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose
from .kinematics import FIXED, KinematicChain, PRISMATIC, jacobians
from .transmission import CouplingMatrix

# Per-tick joint-correction clamp: resolved-rate stability at the 100 Hz
# outer loop. Revolute joints in rad, prismatic in meters.
CLAMP_REVOLUTE = 0.01
CLAMP_PRISMATIC = 0.002


class SingularJacobianError(ValueError):
    """Undamped pseudoinverse requested at a rank-deficient Jacobian."""


@dataclass
class JointGains:
    kp: np.ndarray = field(default_factory=lambda: np.full(8, 40.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(8, 0.2))

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float) * np.ones(8)
        self.kd = np.asarray(self.kd, dtype=float) * np.ones(8)
        if np.any(self.kp < 0.0) or np.any(self.kd < 0.0):
            raise ValueError("joint gains must be non-negative")


@dataclass
class EEGains:
    k_pos: float = 0.3
    k_ori: float = 0.3
    damping: float = 0.02
    # raised near singularities; no damping schedule is published for the arm
    damping_boost: float = 0.1
    min_singular_value: float = 1e-3

    def __post_init__(self):
        if min(self.k_pos, self.k_ori, self.damping) < 0.0:
            raise ValueError("EE gains must be non-negative")


@dataclass
class PoseError:
    e_pos: np.ndarray
    e_ori: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.e_pos = np.asarray(self.e_pos, dtype=float)
        self.e_ori = np.asarray(self.e_ori, dtype=float)

    @property
    def pos_norm(self) -> float:
        return float(np.linalg.norm(self.e_pos))

    @property
    def ori_norm(self) -> float:
        return float(np.linalg.norm(self.e_ori))


def joint_pd_step(theta_set, e_q, e_q_rate, gains: JointGains,
                  coupling: CouplingMatrix) -> np.ndarray:
    """theta_set + L^-1 (Kp e_q + Kd e_q_rate), gains elementwise."""
    theta_set = np.asarray(theta_set, dtype=float)
    correction = gains.kp * np.asarray(e_q, dtype=float) \
        + gains.kd * np.asarray(e_q_rate, dtype=float)
    return theta_set + np.linalg.solve(coupling.matrix, correction)


def ee_pose_error(target: Pose, measured: Pose) -> PoseError:
    """Position difference plus axis-angle needle-direction error.

    e_ori = angle(z_t, z_m) * unit(z_m x z_t): the world-frame angular
    velocity direction that rotates the measured needle axis onto the
    target axis, so a +J_ori^+ e_ori update converges. Zero when the
    z-axes align, and by construction free of any roll about the tool
    axis. Antiparallel axes leave the axis undefined; a deterministic
    perpendicular is used and the error is flagged degenerate.
    """
    e_pos = target.translation - measured.translation
    z_t = target.z_axis
    z_m = measured.z_axis
    cross = np.cross(z_m, z_t)
    cos_angle = float(np.clip(z_t @ z_m, -1.0, 1.0))
    angle = float(np.arccos(cos_angle))
    norm = np.linalg.norm(cross)
    if norm > 1e-12:
        return PoseError(e_pos, angle * cross / norm)
    if cos_angle > 0.0:
        return PoseError(e_pos, np.zeros(3))
    # antiparallel: rotate pi about any axis perpendicular to z_t
    pick = np.zeros(3)
    pick[np.argmin(np.abs(z_t))] = 1.0
    axis = np.cross(z_t, pick)
    axis /= np.linalg.norm(axis)
    return PoseError(e_pos, np.pi * axis, degenerate=True)


def damped_pinv(j: np.ndarray, damping: float) -> np.ndarray:
    """J^T (J J^T + damping^2 I)^-1 (Levenberg-Marquardt style damping).

    With zero damping requires full row rank and reduces to the
    Moore-Penrose pseudoinverse.
    """
    j = np.asarray(j, dtype=float)
    if damping < 0.0:
        raise ValueError("damping must be non-negative")
    gram = j @ j.T
    if damping == 0.0:
        sv = np.linalg.svd(gram, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1.0):
            raise SingularJacobianError(
                "rank-deficient Jacobian with zero damping; pass damping > 0")
        return j.T @ np.linalg.inv(gram)
    return j.T @ np.linalg.inv(gram + damping ** 2 * np.eye(j.shape[0]))


def joint_step_clamp(chain: KinematicChain) -> np.ndarray:
    """Per-joint clamp vector matching the chain's joint kinds."""
    return np.array([CLAMP_PRISMATIC if f.joint_kind == PRISMATIC else CLAMP_REVOLUTE
                     for f in chain.frames if f.joint_kind != FIXED])


def ee_control_step(q_est, err: PoseError, chain: KinematicChain,
                    gains: EEGains) -> np.ndarray:
    """q_est + K_pos Jpos^+ e_pos + K_ori Jori^+ e_ori, clamped per joint."""
    q_est = np.asarray(q_est, dtype=float)
    if not (np.isfinite(err.e_pos).all() and np.isfinite(err.e_ori).all()):
        raise ValueError("non-finite pose error")
    j_pos, j_ori = jacobians(chain, q_est)
    damping = gains.damping
    sv = np.linalg.svd(j_pos, compute_uv=False)
    if sv[-1] < gains.min_singular_value:
        damping = max(damping, gains.damping_boost)
    dq = gains.k_pos * damped_pinv(j_pos, damping) @ err.e_pos \
        + gains.k_ori * damped_pinv(j_ori, damping) @ err.e_ori
    clamp = joint_step_clamp(chain)
    return q_est + np.clip(dq, -clamp, clamp)
