"""Motor-to-joint transmission: structured coupling matrix and its calibration.

Joint space and motor space are both 8-vectors related by q = L theta.
The first four rows of L are pure gear ratios (diagonal); the cable-driven
rows 5-8 are jointly coupled and upper triangular. L is built empirically
from motion data via row-wise restricted least squares.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

N_AXES = 8


class SingularCouplingError(ValueError):
    """Coupling matrix cannot be inverted."""


class CalibrationDataError(ValueError):
    """Calibration data does not excite every motor direction."""


def coupling_structure_mask(n_diagonal: int = 4, n: int = N_AXES) -> np.ndarray:
    """Boolean mask of permitted entries: leading rows diagonal-only, the
    remaining rows upper triangular."""
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        if i < n_diagonal:
            mask[i, i] = True
        else:
            mask[i, i:] = True
    return mask


@dataclass
class CouplingMatrix:
    matrix: np.ndarray
    structure_mask: np.ndarray = field(default_factory=coupling_structure_mask)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.structure_mask = np.asarray(self.structure_mask, dtype=bool)
        if self.matrix.shape != self.structure_mask.shape:
            raise ValueError("matrix and structure mask shapes differ")

    def validate(self) -> "CouplingMatrix":
        if np.any(self.matrix[~self.structure_mask] != 0.0):
            raise ValueError("nonzero entries outside the structure mask")
        if abs(np.linalg.det(self.matrix)) <= 1e-12:
            raise SingularCouplingError("coupling matrix is singular")
        return self

    @classmethod
    def identity(cls, n: int = N_AXES) -> "CouplingMatrix":
        return cls(np.eye(n), coupling_structure_mask(n=n))

    def inverse(self) -> np.ndarray:
        if abs(np.linalg.det(self.matrix)) <= 1e-12:
            raise SingularCouplingError("coupling matrix is singular")
        return np.linalg.inv(self.matrix)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# mask: " + ";".join(
            ",".join("1" if v else "0" for v in row) for row in self.structure_mask) + "\n")
        for row in self.matrix:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CouplingMatrix":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines[0].startswith("# mask:"):
            raise ValueError("missing structure-mask header line")
        mask = np.array([[c == "1" for c in row.split(",")]
                         for row in lines[0].split(":", 1)[1].strip().split(";")])
        matrix = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return cls(matrix, mask)


def motors_to_joints(coupling: CouplingMatrix, theta) -> np.ndarray:
    """q = L theta."""
    theta = np.asarray(theta, dtype=float)
    return coupling.matrix @ theta


def joints_to_motors(coupling: CouplingMatrix, q) -> np.ndarray:
    """theta = L^-1 q."""
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.det(coupling.matrix)) <= 1e-12:
        raise SingularCouplingError("coupling matrix is singular")
    return np.linalg.solve(coupling.matrix, q)


@dataclass
class CalibrationSet:
    """Paired motor/joint time series, one column per sample."""

    motor_series: np.ndarray
    joint_series: np.ndarray

    def __post_init__(self):
        self.motor_series = np.asarray(self.motor_series, dtype=float)
        self.joint_series = np.asarray(self.joint_series, dtype=float)
        if self.motor_series.shape != self.joint_series.shape:
            raise ValueError("motor and joint series shapes differ")
        if self.motor_series.shape[0] != N_AXES:
            raise ValueError(f"expected {N_AXES} rows, got {self.motor_series.shape[0]}")
        if self.m < N_AXES:
            raise ValueError(f"need at least {N_AXES} samples, got {self.m}")

    @property
    def m(self) -> int:
        return self.motor_series.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# rows 1-8 motor positions, rows 9-16 joint positions; one column per sample\n")
        for row in np.vstack([self.motor_series, self.joint_series]):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CalibrationSet":
        rows = [[float(v) for v in ln.split(",")]
                for ln in text.strip().splitlines() if not ln.startswith("#")]
        data = np.array(rows)
        return cls(data[:N_AXES], data[N_AXES:])


def calibrate_coupling(data: CalibrationSet, mask=None) -> CouplingMatrix:
    """Row-wise restricted least squares: L_i,* = q_i,* theta^+ over the
    permitted columns only; masked-out entries are exactly zero.

    Solved with an orthogonal decomposition (lstsq) rather than the normal
    equations; agrees with theta^T (theta theta^T)^-1 to 1e-9 on
    well-conditioned data.
    """
    mask = coupling_structure_mask() if mask is None else np.asarray(mask, dtype=bool)
    theta = data.motor_series
    matrix = np.zeros((N_AXES, N_AXES))
    for i in range(N_AXES):
        cols = np.nonzero(mask[i])[0]
        sub = theta[cols]  # (k, m)
        sv = np.linalg.svd(sub, compute_uv=False)
        if sv[-1] <= 1e-9 * max(sv[0], 1.0):
            weakest = _weakest_direction(sub, cols)
            raise CalibrationDataError(
                f"row {i + 1}: motor data is rank deficient along motor "
                f"combination {weakest}; excite those motors independently")
        solution, *_ = np.linalg.lstsq(sub.T, data.joint_series[i], rcond=None)
        matrix[i, cols] = solution
    return CouplingMatrix(matrix, mask)


def _weakest_direction(sub: np.ndarray, cols: np.ndarray) -> dict:
    _, _, vt = np.linalg.svd(sub @ sub.T)
    weights = vt[-1]
    return {int(c): round(float(w), 6) for c, w in zip(cols, weights)}


def excitation_series(m: int = 2000, amplitude: float = 0.3, seed: int = 0) -> np.ndarray:
    """Motor excitation guaranteeing full rank: per-motor ramps followed by
    combined incommensurate sinusoids (8 x m, radians)."""
    rng = np.random.default_rng(seed)
    theta = np.zeros((N_AXES, m))
    split = m // 2
    per = max(split // N_AXES, 1)
    for i in range(N_AXES):
        lo, hi = i * per, min((i + 1) * per, split)
        theta[i, lo:hi] = np.linspace(0.0, amplitude, hi - lo)
    t = np.linspace(0.0, 1.0, m - split)
    freqs = 1.7 + 2.9 * np.arange(N_AXES) + rng.uniform(0.0, 0.5, N_AXES)
    phases = rng.uniform(0.0, 2.0 * np.pi, N_AXES)
    theta[:, split:] = amplitude * np.sin(
        2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
    return theta
