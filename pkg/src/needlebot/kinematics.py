"""Serial-chain kinematics for the needle-placement arm.

The arm is described with Modified DH parameters, one frame per row:
three prismatic base axes, a rotary trunnion, three cable-driven in-bore
revolute joints, a prismatic needle-insertion axis, and a fixed
grasper-tip offset. Composition order per frame is fixed:
rotate alpha about x, translate a along x, rotate theta about z,
translate d along z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Pose

PRISMATIC = "prismatic"
REVOLUTE = "revolute"
FIXED = "fixed"
_KINDS = (PRISMATIC, REVOLUTE, FIXED)

# Travel limits used by the optional checker and by the service gate.
# Base linear axes: 400 mm total travel, centered. Cable-driven revolute
# joints: 200 deg total travel. Insertion axis: one 50 mm stroke each way.
LINEAR_TRAVEL = 0.4
REVOLUTE_TRAVEL = np.deg2rad(200.0)
INSERTION_TRAVEL = 0.1


class DimensionError(ValueError):
    """Joint vector length does not match the chain's dof."""


@dataclass(frozen=True)
class DHFrame:
    """One Modified-DH row. Lengths in meters, angles in radians.

    The joint variable adds to d_offset for prismatic frames and to
    theta_offset for revolute frames; fixed frames ignore it.
    """

    a: float
    alpha: float
    d_offset: float
    theta_offset: float
    joint_kind: str = REVOLUTE

    def __post_init__(self):
        if self.joint_kind not in _KINDS:
            raise ValueError(f"unknown joint kind {self.joint_kind!r}")


@dataclass(frozen=True)
class KinematicChain:
    frames: tuple[DHFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def dof(self) -> int:
        return sum(1 for f in self.frames if f.joint_kind != FIXED)

    def check_q(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (self.dof,):
            raise DimensionError(f"expected {self.dof} joint values, got {q.shape}")
        return q


def needle_arm_chain() -> KinematicChain:
    """Built-in 8-dof chain of the needle-placement arm (9 frames)."""
    half_pi = np.pi / 2.0
    return KinematicChain((
        DHFrame(0.0, -half_pi, 0.0, 0.0, PRISMATIC),
        DHFrame(0.0, -half_pi, 0.0, -half_pi, PRISMATIC),
        DHFrame(0.0, -half_pi, 0.0, -half_pi, PRISMATIC),
        DHFrame(0.0, 0.0, 0.0, 0.0, REVOLUTE),
        DHFrame(0.0, half_pi, 0.0, half_pi, REVOLUTE),
        DHFrame(7e-2, half_pi, 0.0, 0.0, REVOLUTE),
        DHFrame(7e-2, half_pi, 3e-2, -half_pi, REVOLUTE),
        DHFrame(1e-2, -half_pi, 0.0, 0.0, PRISMATIC),
        DHFrame(0.0, 0.0, 6e-2, half_pi, FIXED),
    ))


def default_joint_limits(chain: KinematicChain) -> np.ndarray:
    """(dof, 2) array of [lo, hi] per joint for the built-in geometry."""
    limits = []
    moving = [f for f in chain.frames if f.joint_kind != FIXED]
    for i, frame in enumerate(moving):
        if frame.joint_kind == REVOLUTE:
            limits.append((-REVOLUTE_TRAVEL / 2.0, REVOLUTE_TRAVEL / 2.0))
        elif i == len(moving) - 1:
            limits.append((-INSERTION_TRAVEL / 2.0, INSERTION_TRAVEL / 2.0))
        else:
            limits.append((-LINEAR_TRAVEL / 2.0, LINEAR_TRAVEL / 2.0))
    return np.array(limits)


def joint_limit_violations(chain: KinematicChain, q, limits=None) -> list[int]:
    """Indices of joints outside their travel. Not enforced by fk on purpose
    (the plant may simulate overtravel faults)."""
    q = chain.check_q(q)
    limits = default_joint_limits(chain) if limits is None else np.asarray(limits)
    return [i for i in range(len(q)) if not limits[i, 0] <= q[i] <= limits[i, 1]]


def link_transform(frame: DHFrame, joint_value: float = 0.0) -> Pose:
    """Frame-to-frame transform: Rx(alpha) Tx(a) Rz(theta) Tz(d)."""
    d = frame.d_offset
    theta = frame.theta_offset
    if frame.joint_kind == PRISMATIC:
        d = d + joint_value
    elif frame.joint_kind == REVOLUTE:
        theta = theta + joint_value
    ca, sa = np.cos(frame.alpha), np.sin(frame.alpha)
    ct, st = np.cos(theta), np.sin(theta)
    rotation = np.array([
        [ct, -st, 0.0],
        [ca * st, ca * ct, -sa],
        [sa * st, sa * ct, ca],
    ])
    translation = np.array([frame.a, -d * sa, d * ca])
    return Pose(rotation, translation)


class _ChainConstants:
    """Per-chain precomputation backing the hot-path kernels."""

    def __init__(self, chain: KinematicChain):
        n = len(chain.frames)
        self.n = n
        self.a = np.array([f.a for f in chain.frames], dtype=float)
        self.ca = np.cos([f.alpha for f in chain.frames])
        self.sa = np.sin([f.alpha for f in chain.frames])
        self.d0 = np.array([f.d_offset for f in chain.frames], dtype=float)
        self.th0 = np.array([f.theta_offset for f in chain.frames], dtype=float)
        self.prism = np.array([f.joint_kind == PRISMATIC for f in chain.frames])
        self.rev = np.array([f.joint_kind == REVOLUTE for f in chain.frames])
        moving = self.prism | self.rev
        # joint index feeding each frame (-1 for fixed frames)
        self.qidx = np.where(moving, np.cumsum(moving) - 1, -1)


@lru_cache(maxsize=8)
def _constants(chain: KinematicChain) -> _ChainConstants:
    return _ChainConstants(chain)


def _frame_arrays(chain: KinematicChain, q: np.ndarray):
    """Cumulative rotations (n,3,3) and origins (n,3) for all frames."""
    c = _constants(chain)
    d = c.d0.copy()
    th = c.th0.copy()
    if c.prism.any():
        d[c.prism] += q[c.qidx[c.prism]]
    if c.rev.any():
        th[c.rev] += q[c.qidx[c.rev]]
    ct, st = np.cos(th), np.sin(th)
    local_rot = np.zeros((c.n, 3, 3))
    local_rot[:, 0, 0] = ct
    local_rot[:, 0, 1] = -st
    local_rot[:, 1, 0] = c.ca * st
    local_rot[:, 1, 1] = c.ca * ct
    local_rot[:, 1, 2] = -c.sa
    local_rot[:, 2, 0] = c.sa * st
    local_rot[:, 2, 1] = c.sa * ct
    local_rot[:, 2, 2] = c.ca
    local_trans = np.empty((c.n, 3))
    local_trans[:, 0] = c.a
    local_trans[:, 1] = -d * c.sa
    local_trans[:, 2] = d * c.ca
    rots = np.empty((c.n, 3, 3))
    origins = np.empty((c.n, 3))
    r = np.eye(3)
    p = np.zeros(3)
    for i in range(c.n):
        p = p + r @ local_trans[i]
        r = r @ local_rot[i]
        rots[i] = r
        origins[i] = p
    return rots, origins


def frame_poses(chain: KinematicChain, q) -> list[Pose]:
    """Cumulative base-to-frame poses, one per frame."""
    q = chain.check_q(q)
    rots, origins = _frame_arrays(chain, q)
    return [Pose(rots[i], origins[i]) for i in range(len(chain.frames))]


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Base-to-tip pose, the ordered product of all link transforms."""
    q = chain.check_q(q)
    rots, origins = _frame_arrays(chain, q)
    return Pose(rots[-1], origins[-1])


def jacobians(chain: KinematicChain, q) -> tuple[np.ndarray, np.ndarray]:
    """Geometric position and orientation Jacobians (each 3 x dof).

    Revolute joint i contributes (z_i x (p_tip - p_i), z_i); prismatic
    contributes (z_i, 0). The joint's axis is the z-axis of its own
    cumulative frame (Rz/Tz leave z unchanged in the Modified-DH product).
    """
    q = chain.check_q(q)
    c = _constants(chain)
    rots, origins = _frame_arrays(chain, q)
    p_tip = origins[-1]
    j_pos = np.zeros((3, chain.dof))
    j_ori = np.zeros((3, chain.dof))
    z = rots[:, :, 2]
    rev_rows = np.nonzero(c.rev)[0]
    prism_rows = np.nonzero(c.prism)[0]
    if rev_rows.size:
        cols = c.qidx[rev_rows]
        j_pos[:, cols] = np.cross(z[rev_rows], p_tip - origins[rev_rows]).T
        j_ori[:, cols] = z[rev_rows].T
    if prism_rows.size:
        j_pos[:, c.qidx[prism_rows]] = z[prism_rows].T
    return j_pos, j_ori


def save_chain(chain: KinematicChain, path) -> None:
    """Plain-text chain config: one frame per line (kind a alpha d theta)."""
    with open(path, "w") as fh:
        fh.write("# kind a alpha d theta\n")
        for f in chain.frames:
            fh.write(f"{f.joint_kind} {f.a!r} {f.alpha!r} {f.d_offset!r} {f.theta_offset!r}\n")


def load_chain(path) -> KinematicChain:
    frames = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            kind, a, alpha, d, theta = line.split()
            frames.append(DHFrame(float(a), float(alpha), float(d), float(theta), kind))
    if not frames:
        raise ValueError(f"no frames found in {path}")
    return KinematicChain(tuple(frames))


def chain_to_json(chain: KinematicChain) -> str:
    """JSON asset consumed by the operator console's kinematic view."""
    rows = [{"kind": f.joint_kind, "a": f.a, "alpha": f.alpha,
             "d": f.d_offset, "theta": f.theta_offset} for f in chain.frames]
    return json.dumps({"frames": rows}, indent=2)
