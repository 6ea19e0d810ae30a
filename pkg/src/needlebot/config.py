"""Single-file configuration for the simulator, controller, harness and
service. YAML on disk; nested dataclasses in memory."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

HOME_Q = (0.0, 0.0, 0.0, 0.0, -0.4, 0.7, -0.5, 0.0)


@dataclass
class ControlConfig:
    inner_dt: float = 0.002        # plant/filter/joint-PD period (s)
    ee_period: float = 0.02        # outer resolved-rate period (s)
    joint_kp: float = 120.0        # 1/s, integrated per tick
    joint_kd: float = 0.2          # dimensionless lead on the error rate
    error_rate_lpf_hz: float = 50.0
    k_pos: float = 0.5             # per outer tick
    k_ori: float = 0.5
    damping: float = 0.02
    filter_changeover_hz: float = 8.0
    tracker_boxcar: int = 10       # inner-tick tracker samples averaged per outer tick
    tracker_ema_tau: float = 0.02  # s, smoothing of the measured pose
    target_lead: float = 0.128     # s, position-target preview compensating loop lag
    target_lead_ori: float = 0.054  # s, orientation-target preview
    settle_time: float = 0.5       # s, before any experiment window


@dataclass
class PlantOverrides:
    """Plant parameters the config file may override (see plant.PlantConfig)."""

    motor_bandwidth: float = 30.0
    cable_compliance: float = 0.01
    backlash_width_deg: float = 0.5
    base_backlash: float = 1e-4
    tip_compliance: float = 10.3e-3 / 10.0
    encoder_noise_sigma: float = 1e-4
    encoder_quantum: float = float(2.0 * np.pi / 2 ** 14)
    tracker_noise_sigma_pos: float = 0.3e-3
    tracker_noise_sigma_ori_deg: float = 0.2
    tracker_latency: float = 0.010


@dataclass
class PerturbationConfig:
    """Manufacturing deviation of the true coupling matrix from the ideal
    (identity) design, drawn per seed."""

    diag_linear: float = 0.008   # relative, base axes
    diag_cable: float = 0.035    # relative, cable-driven rows
    coupling: float = 0.05       # absolute, upper-triangular cable couplings


@dataclass
class HarnessConfig:
    home_q: tuple = HOME_Q
    standoff: float = 0.08       # m from grasper tip to the virtual needle tip
    half_angle_deg: float = 15.0
    period: float = 20.0         # s per cone revolution
    samples_per_revolution: int = 360
    revolutions: float = 2.0
    transient_fraction: float = 0.1
    droop_force: tuple = (0.0, 0.0, -2.0)  # N, static structural load
    divergence_abort: float = 0.05         # m
    calibration_samples: int = 2000
    calibration_amplitude: float = 0.3
    registration_poses: int = 12
    insertion_depth: float = 0.04          # m, straight-insertion scenario
    insertion_speed: float = 0.004         # m/s
    insertion_max_force: float = 10.0      # N, resistance ramp ceiling


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    token: str = "change-me"
    snapshot_rate_hz: float = 30.0
    time_scale: float = 1.0      # >1 runs the sim faster than wall time
    client_hold_timeout: float = 0.5
    log_path: str = ""


@dataclass
class SimConfig:
    control: ControlConfig = field(default_factory=ControlConfig)
    plant: PlantOverrides = field(default_factory=PlantOverrides)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


def default_config() -> SimConfig:
    return SimConfig()


def save_config(cfg: SimConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(cfg), fh, sort_keys=False)


def _merge(section_cls, data: dict):
    known = {f: data[f] for f in data if f in section_cls.__dataclass_fields__}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {section_cls.__name__} keys: {sorted(unknown)}")
    return section_cls(**known)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    sections = dict(control=ControlConfig, plant=PlantOverrides,
                    perturbation=PerturbationConfig, harness=HarnessConfig,
                    service=ServiceConfig)
    unknown = set(data) - set(sections)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: _merge(cls, data.get(name, {}) or {})
              for name, cls in sections.items()}
    for name, section in kwargs.items():
        if name == "harness":
            section.home_q = tuple(section.home_q)
            section.droop_force = tuple(section.droop_force)
    return SimConfig(**kwargs)
