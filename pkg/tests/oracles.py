"""Independent oracles used to derive and cross-check expected values.

Written before the package internals and kept deliberately separate from
them: the chain oracle accumulates rotation and position incrementally
(R_next = R Rx(alpha) Rz(theta); c_next = c + a*x_n + d*z_next) instead of
composing the package's per-link homogeneous transforms.
"""

import numpy as np

# (kind, a, alpha, d, theta) rows of the built-in arm, restated here by hand.
ARM_ROWS = [
    ("p", 0.0, -np.pi / 2, 0.0, 0.0),
    ("p", 0.0, -np.pi / 2, 0.0, -np.pi / 2),
    ("p", 0.0, -np.pi / 2, 0.0, -np.pi / 2),
    ("r", 0.0, 0.0, 0.0, 0.0),
    ("r", 0.0, np.pi / 2, 0.0, np.pi / 2),
    ("r", 7e-2, np.pi / 2, 0.0, 0.0),
    ("r", 7e-2, np.pi / 2, 3e-2, -np.pi / 2),
    ("p", 1e-2, -np.pi / 2, 0.0, 0.0),
    ("-", 0.0, 0.0, 6e-2, np.pi / 2),
]


def _rx(a):
    return np.array([[1, 0, 0],
                     [0, np.cos(a), -np.sin(a)],
                     [0, np.sin(a), np.cos(a)]])


def _rz(t):
    return np.array([[np.cos(t), -np.sin(t), 0],
                     [np.sin(t), np.cos(t), 0],
                     [0, 0, 1]])


def oracle_fk(q, rows=None):
    """Incremental rotation/position accumulation over the DH rows.

    Returns (R, c): base-to-tip rotation and position.
    """
    rows = ARM_ROWS if rows is None else rows
    q = list(q)
    rotation = np.eye(3)
    position = np.zeros(3)
    k = 0
    for kind, a, alpha, d, theta in rows:
        if kind == "p":
            d = d + q[k]
            k += 1
        elif kind == "r":
            theta = theta + q[k]
            k += 1
        x_axis = rotation[:, 0]
        rotation = rotation @ _rx(alpha) @ _rz(theta)
        z_next = rotation[:, 2]
        position = position + a * x_axis + d * z_next
    return rotation, position


def oracle_link(a, alpha, d, theta):
    """Single-row transform from the same incremental construction."""
    return oracle_fk([], rows=[("-", a, alpha, d, theta)])


def fd_jacobians(fk_fn, q, step=1e-6):
    """Central finite-difference position/orientation Jacobians.

    fk_fn(q) must return an object with .rotation and .translation.
    """
    q = np.asarray(q, dtype=float)
    n = len(q)
    j_pos = np.zeros((3, n))
    j_ori = np.zeros((3, n))
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = step
        hi = fk_fn(q + dq)
        lo = fk_fn(q - dq)
        j_pos[:, i] = (hi.translation - lo.translation) / (2 * step)
        # Rotation difference mapped to a rotation vector: dR R^T ~ skew(w*2h)
        d_rot = (hi.rotation - lo.rotation) @ fk_fn(q).rotation.T
        j_ori[:, i] = np.array([d_rot[2, 1] - d_rot[1, 2],
                                d_rot[0, 2] - d_rot[2, 0],
                                d_rot[1, 0] - d_rot[0, 1]]) / (2 * 2 * step)
    return j_pos, j_ori
