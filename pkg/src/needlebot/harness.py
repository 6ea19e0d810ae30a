"""Trajectory-tracking experiment: virtual-RCM cone trajectories run
open- and closed-loop against the perturbed plant, with CSV/SVG reporting.

The cone keeps the needle axis pivoting about a fixed virtual tip point
(the apex); the grasper tip rides a circle at a fixed standoff below the
apex while the needle direction sweeps the cone surface.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .config import SimConfig, default_config
from .control import ee_pose_error
from .geometry import Pose
from .kinematics import forward_kinematics, needle_arm_chain
from .sim import ControllerDivergenceError, Simulator

OPEN_LOOP = "open_loop"
CLOSED_LOOP = "closed_loop"


@dataclass
class ConeTrajectory:
    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    period: float
    standoff: float
    samples: list = field(default_factory=list)

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float)
        self.axis = np.asarray(self.axis, dtype=float)


def _axis_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal complement (u, v) of the cone axis."""
    ref = np.zeros(3)
    ref[np.argmin(np.abs(axis))] = 1.0
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def cone_pose(traj: ConeTrajectory, azimuth: float) -> Pose:
    """Target pose at a cone azimuth: z-axis through the apex, tip at the
    standoff below it, roll chosen deterministically."""
    u, v = _axis_frame(traj.axis)
    z = (np.cos(traj.half_angle) * traj.axis
         + np.sin(traj.half_angle) * (np.cos(azimuth) * u + np.sin(azimuth) * v))
    x = u - (u @ z) * z
    x /= np.linalg.norm(x)
    rotation = np.column_stack([x, np.cross(z, x), z])
    return Pose(rotation, traj.apex - traj.standoff * z)


def generate_cone(apex, axis, half_angle: float, n: int, period: float,
                  standoff: float = 0.08) -> ConeTrajectory:
    """n poses sweeping the cone uniformly in azimuth."""
    if n < 8:
        raise ValueError("need at least 8 samples")
    if not 0.0 < half_angle < np.pi / 2.0:
        raise ValueError("half angle must be in (0, pi/2)")
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("degenerate cone axis")
    traj = ConeTrajectory(np.asarray(apex, dtype=float), axis / norm,
                          float(half_angle), float(period), float(standoff))
    traj.samples = [cone_pose(traj, 2.0 * np.pi * k / n) for k in range(n)]
    return traj


def default_cone(cfg: SimConfig) -> ConeTrajectory:
    """Cone anchored at the home posture's needle axis."""
    h = cfg.harness
    home_pose = forward_kinematics(needle_arm_chain(), np.asarray(h.home_q))
    apex = home_pose.translation + h.standoff * home_pose.z_axis
    return generate_cone(apex, home_pose.z_axis, np.deg2rad(h.half_angle_deg),
                         h.samples_per_revolution, h.period, h.standoff)


@dataclass
class TrackingRecord:
    mode: str
    seed: int
    times: np.ndarray
    target_pos: np.ndarray    # (n, 3)
    target_quat: np.ndarray   # (n, 4) xyzw
    measured_pos: np.ndarray
    measured_quat: np.ndarray
    e_pos: np.ndarray         # (n, 3)
    pos_err: np.ndarray       # (n,)
    ori_err: np.ndarray       # (n,) radians
    joints: np.ndarray        # (n, 8)

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# mode={self.mode} seed={self.seed}\n")
        cols = (["time_s"]
                + [f"target_p{c}" for c in "xyz"]
                + [f"target_q{c}" for c in "xyzw"]
                + [f"meas_p{c}" for c in "xyz"]
                + [f"meas_q{c}" for c in "xyzw"]
                + [f"e_pos_{c}" for c in "xyz"]
                + ["e_pos_norm_m", "e_ori_norm_rad"]
                + [f"q{i + 1}" for i in range(8)])
        buf.write(",".join(cols) + "\n")
        stacked = np.hstack([
            self.times[:, None], self.target_pos, self.target_quat,
            self.measured_pos, self.measured_quat, self.e_pos,
            self.pos_err[:, None], self.ori_err[:, None], self.joints])
        for row in stacked:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrackingRecord":
        lines = text.strip().splitlines()
        if not lines or not lines[0].startswith("# mode="):
            raise ValueError("missing record header")
        meta = dict(part.split("=") for part in lines[0][2:].split())
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        return cls(mode=meta["mode"], seed=int(meta["seed"]), times=data[:, 0],
                   target_pos=data[:, 1:4], target_quat=data[:, 4:8],
                   measured_pos=data[:, 8:11], measured_quat=data[:, 11:15],
                   e_pos=data[:, 15:18], pos_err=data[:, 18], ori_err=data[:, 19],
                   joints=data[:, 20:28])


@dataclass
class TrackingSummary:
    mode: str
    mean_pos_mm: float
    max_pos_mm: float
    mean_ori_deg: float
    max_ori_deg: float

    def text(self) -> str:
        return (f"mode: {self.mode}\n"
                f"mean position error: {self.mean_pos_mm:.4f} mm\n"
                f"max position error: {self.max_pos_mm:.4f} mm\n"
                f"mean orientation error: {self.mean_ori_deg:.4f} deg\n"
                f"max orientation error: {self.max_ori_deg:.4f} deg\n")


def steady_slice(record: TrackingRecord, transient_fraction: float = 0.1) -> slice:
    skip = int(len(record) * transient_fraction)
    if len(record) == 0 or skip >= len(record):
        raise ValueError("record shorter than the transient window")
    return slice(skip, len(record))


def summarize(record: TrackingRecord, transient_fraction: float = 0.1) -> TrackingSummary:
    """Mean/max errors over the steady-state window (first 10% discarded)."""
    window = steady_slice(record, transient_fraction)
    pos_mm = record.pos_err[window] * 1e3
    ori_deg = np.rad2deg(record.ori_err[window])
    return TrackingSummary(record.mode, float(pos_mm.mean()), float(pos_mm.max()),
                           float(ori_deg.mean()), float(ori_deg.max()))


def run_tracking(mode: str, traj: ConeTrajectory, cfg: SimConfig = None,
                 seed: int = 0, ideal_plant: bool = False,
                 revolutions: float = None) -> TrackingRecord:
    """Track the cone for >= 2 revolutions; deterministic per seed.

    Closed loop calibrates the coupling matrix and registers the tracker
    first; open loop runs on the ideal coupling matrix with fk predictions
    substituted for end-effector measurements (the tracker still scores the
    run). The record's errors always compare the tracker pipeline's output
    against the un-previewed target.
    """
    if mode not in (OPEN_LOOP, CLOSED_LOOP):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = default_config() if cfg is None else cfg
    h = cfg.harness
    revolutions = h.revolutions if revolutions is None else revolutions
    sim = Simulator(cfg, seed, open_loop=(mode == OPEN_LOOP), ideal_plant=ideal_plant)
    sim.tip_force = np.zeros(3) if ideal_plant else np.asarray(h.droop_force, dtype=float)
    if mode == CLOSED_LOOP and not ideal_plant:
        sim.calibrate()
    sim.register()
    sim.settle()

    ee_period = cfg.control.ee_period
    lead_pos = cfg.control.target_lead if mode == CLOSED_LOOP else 0.0
    lead_ori = cfg.control.target_lead_ori if mode == CLOSED_LOOP else 0.0
    n_ticks = int(round(revolutions * traj.period / ee_period))
    rows = dict(times=np.empty(n_ticks), target_pos=np.empty((n_ticks, 3)),
                target_quat=np.empty((n_ticks, 4)), measured_pos=np.empty((n_ticks, 3)),
                measured_quat=np.empty((n_ticks, 4)), e_pos=np.empty((n_ticks, 3)),
                pos_err=np.empty(n_ticks), ori_err=np.empty(n_ticks),
                joints=np.empty((n_ticks, 8)))
    t0 = sim.clock
    for k in range(n_ticks):
        t = sim.clock - t0
        target_now = cone_pose(traj, 2.0 * np.pi * t / traj.period)
        if lead_pos == lead_ori == 0.0:
            target_ctl = target_now
        else:
            # the position and orientation loops settle with different lags;
            # preview each part of the target by its own lead
            led_pos = cone_pose(traj, 2.0 * np.pi * (t + lead_pos) / traj.period)
            led_ori = cone_pose(traj, 2.0 * np.pi * (t + lead_ori) / traj.period)
            target_ctl = Pose(led_ori.rotation, led_pos.translation)
        sim.ee_tick(target_ctl)
        measured = sim.last_measured
        err = ee_pose_error(target_now, measured)
        if err.pos_norm > h.divergence_abort:
            raise ControllerDivergenceError(
                f"{mode} diverged at t={t:.2f}s (seed {seed}): "
                f"|e_pos|={err.pos_norm * 1e3:.1f} mm")
        rows["times"][k] = t
        rows["target_pos"][k] = target_now.translation
        rows["target_quat"][k] = Rotation.from_matrix(target_now.rotation).as_quat()
        rows["measured_pos"][k] = measured.translation
        rows["measured_quat"][k] = Rotation.from_matrix(measured.rotation).as_quat()
        rows["e_pos"][k] = err.e_pos
        rows["pos_err"][k] = err.pos_norm
        rows["ori_err"][k] = err.ori_norm
        rows["joints"][k] = sim.q_est
        sim.step_inner(sim.ticks_per_ee)
        assert np.all(np.abs(sim.state.motor_vel)
                      <= sim.plant_cfg.joint_velocity_limits + 1e-12)
    return TrackingRecord(mode=mode, seed=seed, **rows)


def apex_distances(record: TrackingRecord, apex) -> np.ndarray:
    """Closest approach of each measured needle-axis line to the apex."""
    apex = np.asarray(apex, dtype=float)
    z_axes = Rotation.from_quat(record.measured_quat).as_matrix()[:, :, 2]
    rel = apex - record.measured_pos
    along = np.sum(rel * z_axes, axis=1)
    return np.linalg.norm(rel - along[:, None] * z_axes, axis=1)


def smoothed_apex_distances(record: TrackingRecord, apex,
                            window: int = 13) -> np.ndarray:
    """Apex distances of the measured needle line after a short moving
    average, so the pivot-keeping geometry is judged against the motion
    rather than single-sample tracker noise."""
    apex = np.asarray(apex, dtype=float)
    z_axes = Rotation.from_quat(record.measured_quat).as_matrix()[:, :, 2]
    kernel = np.ones(window) / window
    pos = np.column_stack([np.convolve(record.measured_pos[:, i], kernel, "valid")
                           for i in range(3)])
    z_sm = np.column_stack([np.convolve(z_axes[:, i], kernel, "valid")
                            for i in range(3)])
    z_sm /= np.linalg.norm(z_sm, axis=1, keepdims=True)
    rel = apex - pos
    along = np.sum(rel * z_sm, axis=1)
    return np.linalg.norm(rel - along[:, None] * z_sm, axis=1)


def svg_error_plot(record: TrackingRecord) -> str:
    """Error-vs-time plot: position (mm, left axis) and orientation
    (deg, right axis) polylines."""
    width, height, margin = 860, 320, 50
    t = record.times
    pos = record.pos_err * 1e3
    ori = np.rad2deg(record.ori_err)

    def scale(values, lo, hi, out_lo, out_hi):
        span = hi - lo if hi > lo else 1.0
        return out_lo + (values - lo) * (out_hi - out_lo) / span

    x = scale(t, t.min(), t.max(), margin, width - margin)
    pos_hi = max(float(pos.max()) * 1.1, 1e-6)
    ori_hi = max(float(ori.max()) * 1.1, 1e-6)
    y_pos = scale(pos, 0.0, pos_hi, height - margin, margin)
    y_ori = scale(ori, 0.0, ori_hi, height - margin, margin)

    def polyline(xs, ys, color):
        pts = " ".join(f"{xx:.2f},{yy:.2f}" for xx, yy in zip(xs, ys))
        return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<line x1="{width - margin}" y1="{margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        polyline(x, y_pos, "#1f6fb2"),
        polyline(x, y_ori, "#c44e52"),
        f'<text x="{margin - 35}" y="{height / 2}" transform="rotate(-90 '
        f'{margin - 35} {height / 2})">mm</text>',
        f'<text x="{width - margin + 35}" y="{height / 2}" transform="rotate(90 '
        f'{width - margin + 35} {height / 2})">deg</text>',
        f'<text x="{width / 2}" y="{height - 10}">time (s)</text>',
        f'<text x="{margin + 10}" y="{margin - 10}" fill="#1f6fb2">position error '
        f'({record.mode}, max {pos.max():.3f} mm)</text>',
        f'<text x="{margin + 10}" y="{margin + 8}" fill="#c44e52">orientation error '
        f'(max {ori.max():.3f} deg)</text>',
        "</svg>",
    ]
    return "\n".join(parts)


def export(record: TrackingRecord, summary: TrackingSummary, out_dir) -> dict:
    """CSV + SVG + summary text; returns the written paths."""
    if len(record) < 10:
        raise ValueError("record too short to export")
    steady_slice(record)  # raises on an empty steady window
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, f"tracking_{record.mode}_seed{record.seed}.csv"),
        "svg": os.path.join(out_dir, f"tracking_{record.mode}_seed{record.seed}.svg"),
        "summary": os.path.join(out_dir, f"summary_{record.mode}_seed{record.seed}.txt"),
    }
    try:
        with open(paths["csv"], "w") as fh:
            fh.write(record.to_csv())
        with open(paths["svg"], "w") as fh:
            fh.write(svg_error_plot(record))
        with open(paths["summary"], "w") as fh:
            fh.write(summary.text())
    except OSError as exc:
        raise OSError(f"export failed for {out_dir}: {exc}") from exc
    return paths


def run_insertion_scenario(cfg: SimConfig = None, seed: int = 0) -> dict:
    """Straight-line needle insertion under closed-loop control with a
    resistance ramp up to the force ceiling; reports the angle between the
    measured insertion track and the nominal needle axis."""
    cfg = default_config() if cfg is None else cfg
    h = cfg.harness
    sim = Simulator(cfg, seed, open_loop=False)
    droop = np.asarray(h.droop_force, dtype=float)
    sim.tip_force = droop
    sim.calibrate()
    sim.register()
    sim.settle()

    start = forward_kinematics(needle_arm_chain(), sim.home_q)
    direction = start.z_axis
    depth, speed = h.insertion_depth, h.insertion_speed
    duration = depth / speed + 1.0
    ee_period = cfg.control.ee_period
    lead = cfg.control.target_lead
    n_ticks = int(round(duration / ee_period))
    t0 = sim.clock
    track_pos = []
    track_s = []
    for _ in range(n_ticks):
        t = sim.clock - t0
        s = min(speed * t, depth)
        s_led = min(speed * (t + lead), depth)
        target = Pose(start.rotation, start.translation + s_led * direction)
        sim.tip_force = droop - direction * (h.insertion_max_force * s / depth)
        sim.ee_tick(target)
        track_pos.append(sim.last_measured.translation.copy())
        track_s.append(s)
        sim.step_inner(sim.ticks_per_ee)
    track_pos = np.array(track_pos)
    track_s = np.array(track_s)
    used = track_pos[track_s > 0.002]
    centered = used - used.mean(axis=0)
    _, _, vt = np.linalg.svd(centered)
    fitted = vt[0] if vt[0] @ direction >= 0.0 else -vt[0]
    angle = float(np.degrees(np.arccos(np.clip(fitted @ direction, -1.0, 1.0))))
    return {"angle_deg": angle, "direction": direction, "fitted": fitted,
            "positions": track_pos, "depth_m": float(track_s[-1])}
