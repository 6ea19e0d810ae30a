"""Desk-scale simulator and controller for a cable-driven in-bore
needle-placement arm.

Modules by concern: kinematics (Modified-DH chain, fk, Jacobians),
transmission (coupling matrix + calibration), estimation (joint filter +
tracker registration), control (joint PD / pose error / resolved rate),
plant (ground-truth simulator), clutch (SMA needle clutches + inch-worm
insertion), harness (cone-tracking experiment), sim (the closed-loop
cascade), service (WebSocket teleoperation), cli (entry points).
"""

from .geometry import Pose
from .kinematics import (DHFrame, KinematicChain, forward_kinematics,
                         jacobians, link_transform, needle_arm_chain)
from .transmission import (CalibrationSet, CouplingMatrix, calibrate_coupling,
                           joints_to_motors, motors_to_joints)

__all__ = [
    "Pose", "DHFrame", "KinematicChain", "forward_kinematics", "jacobians",
    "link_transform", "needle_arm_chain", "CalibrationSet", "CouplingMatrix",
    "calibrate_coupling", "joints_to_motors", "motors_to_joints",
]

__version__ = "0.1.0"
