"""Joint-state estimation and tracker-to-base registration.

The joint estimate fuses integrated motor velocity (high rate, drifts with
transmission error) with joint encoders (drift-free, noisy) through a
complementary filter. The magnetic tracker is registered to the robot base
by a rigid Procrustes fit over point pairs collected during an
initialization sweep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Pose
from .transmission import CouplingMatrix, motors_to_joints


class DegenerateGeometryError(ValueError):
    """Registration points do not constrain a unique rigid transform."""


@dataclass
class FilterConfig:
    alpha: float = 0.95
    dt: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @classmethod
    def from_changeover(cls, freq_hz: float, dt: float) -> "FilterConfig":
        """Pick alpha so the integration/measurement split sits at freq_hz."""
        return cls(alpha=float(np.exp(-2.0 * np.pi * freq_hz * dt)), dt=dt)


@dataclass
class JointEstimate:
    q_est: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.q_est = np.asarray(self.q_est, dtype=float)


def complementary_filter_step(prev: JointEstimate, motor_vel, q_meas,
                              coupling: CouplingMatrix,
                              cfg: FilterConfig) -> JointEstimate:
    """q_est = alpha (q_prev + L theta_dot dt) + (1 - alpha) q_meas."""
    q_meas = np.asarray(q_meas, dtype=float)
    integrated = prev.q_est + motors_to_joints(coupling, motor_vel) * cfg.dt
    q_est = cfg.alpha * integrated + (1.0 - cfg.alpha) * q_meas
    return JointEstimate(q_est, prev.timestamp + cfg.dt)


@dataclass
class Registration:
    """Rigid transform taking tracker-frame coordinates into the robot base."""

    base_from_tracker: Pose
    rms_residual: float = 0.0

    def save(self, path) -> None:
        quat = Rotation.from_matrix(self.base_from_tracker.rotation).as_quat()
        payload = {
            "rotation_xyzw": [float(v) for v in quat],
            "translation_m": [float(v) for v in self.base_from_tracker.translation],
            "rms_residual_m": float(self.rms_residual),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Registration":
        with open(path) as fh:
            payload = json.load(fh)
        rotation = Rotation.from_quat(payload["rotation_xyzw"]).as_matrix()
        return cls(Pose(rotation, payload["translation_m"]),
                   payload["rms_residual_m"])


def register_tracker(tracker_points, base_points) -> Registration:
    """Least-squares rigid transform T minimizing sum ||base_i - T tracker_i||^2.

    Orthogonal-Procrustes rotation (SVD with determinant correction), then
    the centroid-matching translation. Needs >= 3 non-collinear pairs.
    """
    a = np.asarray(tracker_points, dtype=float)
    b = np.asarray(base_points, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ValueError("expected matching (n, 3) point arrays")
    if a.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")
    centroid_a = a.mean(axis=0)
    centroid_b = b.mean(axis=0)
    h = (a - centroid_a).T @ (b - centroid_b)
    u, s, vt = np.linalg.svd(h)
    spread = np.linalg.svd(a - centroid_a, compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1.0):
        raise DegenerateGeometryError("tracker points are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = centroid_b - rotation @ centroid_a
    residuals = b - (a @ rotation.T + translation)
    rms = float(np.sqrt(np.mean(np.sum(residuals ** 2, axis=1))))
    return Registration(Pose(rotation, translation), rms)


def tip_in_base(reg: Registration, tracker_pose: Pose) -> Pose:
    """Compose the tracker-frame tip pose into the robot base frame."""
    return reg.base_from_tracker @ tracker_pose
