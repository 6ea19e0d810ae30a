"""Teleoperation service: the simulator and control cascade behind a
WebSocket state broadcast and command channel.

One thread owns the simulation clock and applies commands in arrival
order; the asyncio side holds connections, validates messages, and
broadcasts the latest snapshot at a fixed rate (latest-value, never
queued). Wire format: one JSON object per WebSocket text frame, with a
`v` schema version field (see PROTOCOL.md).
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .clutch import (ClutchState, InchwormState, InchwormStepper, PidGains,
                     fit_thermal_params, temp_pid_step, thermal_step)
from .config import SimConfig, default_config
from .control import ee_pose_error
from .geometry import Pose
from .kinematics import default_joint_limits, forward_kinematics
from .plant import reset_watchdog, trip_watchdog, true_tip_pose, watchdog_check
from .sim import Simulator

PROTOCOL_VERSION = 1

MODES = ("idle", "joint_jog", "ee_target", "insertion", "estopped")
MOTION_COMMANDS = ("set_ee_target", "jog_joint", "insert")

# a client driving a motion mode must stay audible at least this often
CLIENT_HOLD_TIMEOUT = 0.5
# furthest a single end-effector target may sit from the current tip
MAX_TARGET_JUMP = 0.05
# largest single jog increment (rad or m)
MAX_JOG_DELTA = 0.05
# reachable-box half width around the home tip position, per axis
WORKSPACE_HALF_WIDTH = 0.25


class Rejection(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def heartbeat_monitor(last_client_msg_age: float, mode: str) -> str:
    """'hold' when an operator in a motion mode has gone silent."""
    if mode in ("joint_jog", "ee_target", "insertion") \
            and last_client_msg_age > CLIENT_HOLD_TIMEOUT:
        return "hold"
    return "ok"


def stalled_control_tick(wall_gap: float, time_scale: float = 1.0) -> bool:
    """Plant-watchdog rule applied to the control loop's own cadence: the
    gap between applied motor commands, in robot time."""
    return watchdog_check(wall_gap * time_scale)


def command_gate(cmd: dict, snapshot: dict, home_tip, joint_limits) -> None:
    """Validate a decoded command against the published state; raises
    Rejection with the reason the client will see."""
    kind = cmd.get("kind")
    mode = snapshot["mode"]
    if mode == "estopped" and kind in MOTION_COMMANDS + ("set_mode", "clutch"):
        raise Rejection("estopped")
    if kind == "set_mode":
        if cmd.get("mode") not in MODES or cmd["mode"] == "estopped":
            raise Rejection("unknown_mode")
        return
    if kind == "jog_joint":
        if mode != "joint_jog":
            raise Rejection("mode_mismatch")
        joint = cmd.get("joint")
        if not isinstance(joint, int) or not 0 <= joint < 8:
            raise Rejection("bad_joint")
        delta = float(cmd.get("delta", 0.0))
        if not np.isfinite(delta) or abs(delta) > MAX_JOG_DELTA:
            raise Rejection("limit")
        target = snapshot["q_set"][joint] + delta
        if not joint_limits[joint][0] <= target <= joint_limits[joint][1]:
            raise Rejection("limit")
        return
    if kind == "set_ee_target":
        if mode != "ee_target":
            raise Rejection("mode_mismatch")
        position = np.asarray(cmd.get("position", ()), dtype=float)
        z_axis = np.asarray(cmd.get("z_axis", ()), dtype=float)
        if position.shape != (3,) or z_axis.shape != (3,) \
                or not np.isfinite(position).all() or not np.isfinite(z_axis).all() \
                or np.linalg.norm(z_axis) < 1e-6:
            raise Rejection("malformed")
        if np.any(np.abs(position - home_tip) > WORKSPACE_HALF_WIDTH):
            raise Rejection("limit")
        tip = np.asarray(snapshot["tip_measured"]["position"])
        if np.linalg.norm(position - tip) > MAX_TARGET_JUMP:
            raise Rejection("limit")
        return
    if kind == "insert":
        if mode != "insertion":
            raise Rejection("mode_mismatch")
        depth = float(cmd.get("depth", -1.0))
        if not 0.0 <= depth <= 0.3:
            raise Rejection("limit")
        if not (snapshot["clutch_a"]["engaged"] or snapshot["clutch_b"]["engaged"]):
            raise Rejection("no_grasp")
        return
    if kind == "clutch":
        if cmd.get("which") not in ("a", "b"):
            raise Rejection("bad_clutch")
        return
    if kind == "abort":
        return
    if kind in ("estop", "reset"):
        return
    raise Rejection("unknown_command")


def _pose_dict(pose: Pose) -> dict:
    return {"position": [float(v) for v in pose.translation],
            "z_axis": [float(v) for v in pose.z_axis]}


@dataclass
class _ClutchChannel:
    state: ClutchState = field(default_factory=ClutchState)
    commanded_on: bool = False


class RobotService:
    """Owns the simulation clock; all mutation happens on the sim thread."""

    def __init__(self, cfg: SimConfig = None, seed: int = 0):
        self.cfg = default_config() if cfg is None else cfg
        self.sim = Simulator(self.cfg, seed)
        self.sim.tip_force = np.asarray(self.cfg.harness.droop_force, dtype=float)
        self.sim.calibrate()
        self.sim.register()
        self.sim.settle()
        self.thermal = fit_thermal_params()
        self.pid_gains = PidGains()
        self.clutch_a = _ClutchChannel()
        self.clutch_b = _ClutchChannel()
        self.mode = "idle"
        self.target: Pose = None
        self.insertion = InchwormState(stroke=0.05)
        self.insertion.clutch_a = self.clutch_a.state
        self.insertion.clutch_b = self.clutch_b.state
        self._stepper: InchwormStepper = None
        self._insert_depth = 0.0
        self._insert_resistance = 0.0
        self.home_tip = forward_kinematics(self.sim.chain, self.sim.home_q).translation
        self.joint_limits = default_joint_limits(self.sim.chain)
        self.commands: "queue.Queue[dict]" = queue.Queue()
        self.last_client_msg = time.monotonic()
        self.hold_engaged = False
        self._snapshot_lock = threading.Lock()
        self._snapshot = {}
        self._stop = threading.Event()
        self._thread: threading.Thread = None
        self._tick_count = 0
        self._publish_snapshot()

    # -- sim-thread side ----------------------------------------------------

    def apply_command(self, cmd: dict) -> None:
        kind = cmd["kind"]
        if kind == "estop":
            self.mode = "estopped"
            self.target = None
            self._stepper = None
            self.sim.motors_held = True
            self.sim.theta_set = self.sim.state.motor_pos.copy()
            self.sim.q_set = self.sim.estimate.q_est.copy()
            return
        if kind == "reset":
            reset_watchdog(self.sim.state)
            self.mode = "idle"
            self.sim.motors_held = False
            self.sim.theta_set = self.sim.state.motor_pos.copy()
            self.sim.q_set = self.sim.estimate.q_est.copy()
            return
        if kind == "set_mode":
            self.mode = cmd["mode"]
            self.target = None
            self._stepper = None
            return
        if kind == "jog_joint":
            self.sim.q_set = self.sim.q_set.copy()
            self.sim.q_set[cmd["joint"]] += float(cmd["delta"])
            return
        if kind == "set_ee_target":
            z = np.asarray(cmd["z_axis"], dtype=float)
            z = z / np.linalg.norm(z)
            ref = np.zeros(3)
            ref[int(np.argmin(np.abs(z)))] = 1.0
            x = np.cross(ref, z)
            x /= np.linalg.norm(x)
            rotation = np.column_stack([x, np.cross(z, x), z])
            self.target = Pose(rotation, np.asarray(cmd["position"], dtype=float))
            return
        if kind == "clutch":
            channel = self.clutch_a if cmd["which"] == "a" else self.clutch_b
            channel.commanded_on = bool(cmd.get("engage", True))
            return
        if kind == "abort":
            self._stepper = None
            return
        if kind == "insert":
            self._insert_depth = float(cmd["depth"])
            self._insert_resistance = float(cmd.get("resistance", 5.0))
            self._stepper = InchwormStepper(
                self.insertion, self._insert_depth, self._insert_resistance,
                self.thermal, self.pid_gains)

    def _tick_clutches(self, dt: float) -> None:
        for channel in (self.clutch_a, self.clutch_b):
            if channel.commanded_on:
                channel.state.cooling_on = False
                temp_pid_step(channel.state, self.thermal.t_active + 5.0,
                              self.pid_gains, dt)
            else:
                channel.state.duty = 0.0
                channel.state.cooling_on = True
            thermal_step(channel.state, self.thermal, dt)

    def tick(self) -> None:
        """One inner control period: commands, safety, cascade, sensors."""
        dt = self.cfg.control.inner_dt
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                break
            self.apply_command(cmd)

        age = time.monotonic() - self.last_client_msg
        hold = heartbeat_monitor(age, self.mode) == "hold"
        if hold and not self.hold_engaged:
            self.target = None
            self.sim.q_set = self.sim.estimate.q_est.copy()
        self.hold_engaged = hold

        if self.mode == "estopped":
            self.sim.step_inner(1)
        else:
            if self._tick_count % self.sim.ticks_per_ee == 0:
                if self.mode == "ee_target" and self.target is not None and not hold:
                    self.sim.ee_tick(self.target)
                else:
                    self.sim.update_measurement()
            self.sim.step_inner(1)
            inserting = (self.mode == "insertion" and self._stepper is not None
                         and not hold)
            if inserting:
                if self._stepper.step(dt):
                    # cycle finished: chain the next one until depth reached
                    remaining = self._insert_depth - self.insertion.needle_depth
                    if remaining > 1e-12 and not self.insertion.slipped:
                        self._stepper = InchwormStepper(
                            self.insertion, self._insert_depth,
                            self._insert_resistance, self.thermal, self.pid_gains)
                    else:
                        self._stepper = None
        if self._stepper is None or self.mode != "insertion" or hold:
            self._tick_clutches(dt)
        self._tick_count += 1
        self._publish_snapshot()

    def note_stall(self, wall_gap: float) -> None:
        if stalled_control_tick(wall_gap, self.cfg.service.time_scale):
            trip_watchdog(self.sim.state)

    def _publish_snapshot(self) -> None:
        sim = self.sim
        measured = sim.last_measured
        if measured is None:
            measured = true_tip_pose(sim.state, sim.plant_cfg)
        error = (ee_pose_error(self.target, measured) if self.target is not None
                 else None)
        snap = {
            "v": PROTOCOL_VERSION,
            "type": "snapshot",
            "sim_time": float(sim.clock),
            "mode": self.mode,
            "joints_est": [float(v) for v in sim.q_est],
            "q_set": [float(v) for v in sim.q_set],
            "motors": [float(v) for v in sim.state.motor_pos],
            "tip_true": _pose_dict(true_tip_pose(sim.state, sim.plant_cfg)),
            "tip_measured": _pose_dict(measured),
            "target": _pose_dict(self.target) if self.target is not None else None,
            "e_pos_mm": float(error.pos_norm * 1e3) if error else None,
            "e_ori_deg": float(np.degrees(error.ori_norm)) if error else None,
            "clutch_a": {"temperature_c": float(self.clutch_a.state.temperature),
                         "engaged": bool(self.clutch_a.state.engaged)},
            "clutch_b": {"temperature_c": float(self.clutch_b.state.temperature),
                         "engaged": bool(self.clutch_b.state.engaged)},
            "needle_depth_m": float(self.insertion.needle_depth),
            "inserting": self._stepper is not None,
            "watchdog": "tripped" if sim.state.watchdog_tripped else "ok",
            "hold": self.hold_engaged,
        }
        flat = [snap["sim_time"]] + snap["joints_est"] + snap["motors"] \
            + snap["tip_measured"]["position"]
        if not np.isfinite(flat).all():
            raise RuntimeError("refusing to publish a non-finite snapshot")
        with self._snapshot_lock:
            self._snapshot = snap

    # -- shared --------------------------------------------------------------

    def snapshot(self) -> dict:
        with self._snapshot_lock:
            return dict(self._snapshot)

    def submit(self, cmd: dict) -> None:
        self.commands.put(cmd)

    def touch_client(self) -> None:
        self.last_client_msg = time.monotonic()

    # -- pacing thread --------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        # run inner ticks in 10 ms wall batches: fewer wakeups means the
        # scheduler jitter stays far from the watchdog budget
        batch_wall = 0.01
        ticks_per_batch = max(int(round(
            batch_wall * self.cfg.service.time_scale / self.cfg.control.inner_dt)), 1)
        grace_until = time.monotonic() + 0.5
        last_done = time.monotonic()
        next_due = last_done
        while not self._stop.is_set():
            now = time.monotonic()
            excess = (now - last_done) - batch_wall
            if excess > 0.0 and now > grace_until:
                self.note_stall(excess)
            for _ in range(ticks_per_batch):
                self.tick()
            last_done = time.monotonic()
            next_due += batch_wall
            sleep = next_due - last_done
            if sleep > 0:
                time.sleep(sleep)
            else:
                next_due = last_done  # fell behind: do not burst


async def serve(service: RobotService, host: str = None, port: int = None,
                ready: asyncio.Event = None) -> None:
    """Run the WebSocket endpoint until cancelled."""
    from websockets.asyncio.server import serve as ws_serve

    svc_cfg = service.cfg.service
    host = svc_cfg.host if host is None else host
    port = svc_cfg.port if port is None else port
    clients: set = set()
    sequences: dict = {}
    log_fh = open(svc_cfg.log_path, "a") if svc_cfg.log_path else None

    def log(kind: str, payload: dict) -> None:
        if log_fh is not None:
            log_fh.write(json.dumps({"t_wall": time.time(), "kind": kind,
                                     "payload": payload}) + "\n")
            log_fh.flush()

    async def handler(ws):
        role = "observer"
        client_id = None
        try:
            hello_raw = await ws.recv()
            hello = json.loads(hello_raw)
            if hello.get("type") != "hello":
                await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                          "reason": "expected_hello"}))
                return
            client_id = str(hello.get("client_id", id(ws)))
            if hello.get("token") == svc_cfg.token:
                role = "operator"
            await ws.send(json.dumps({
                "v": PROTOCOL_VERSION, "type": "welcome", "role": role,
                "snapshot_rate_hz": svc_cfg.snapshot_rate_hz,
                "time_scale": svc_cfg.time_scale}))
            clients.add(ws)
            async for raw in ws:
                service.touch_client()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                              "reason": "bad_json"}))
                    continue
                if msg.get("type") == "ping":
                    await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "pong"}))
                    continue
                if msg.get("type") != "command":
                    await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                              "reason": "unknown_type"}))
                    continue
                log("command", msg)
                seq = msg.get("seq")
                action = msg.get("action", {})
                reply = {"v": PROTOCOL_VERSION, "type": "ack", "seq": seq}
                try:
                    if role != "operator":
                        raise Rejection("read_only")
                    if not isinstance(seq, int) or seq <= sequences.get(client_id, -1):
                        raise Rejection("bad_sequence")
                    command_gate(action, service.snapshot(), service.home_tip,
                                 service.joint_limits)
                    sequences[client_id] = seq
                    service.submit(action)
                    reply["accepted"] = True
                except Rejection as rej:
                    reply.update({"type": "reject", "accepted": False,
                                  "reason": rej.reason})
                await ws.send(json.dumps(reply))
                log("ack", reply)
        finally:
            clients.discard(ws)

    async def broadcaster():
        period = 1.0 / svc_cfg.snapshot_rate_hz
        counter = 0
        loop = asyncio.get_running_loop()
        next_due = loop.time()
        while True:
            snap = json.dumps(service.snapshot())
            for ws in list(clients):
                try:
                    await ws.send(snap)
                except Exception:
                    clients.discard(ws)
            counter += 1
            if counter % max(int(svc_cfg.snapshot_rate_hz), 1) == 0:
                log("snapshot", service.snapshot())
            # absolute schedule: no duty-cycle drift under load
            next_due += period
            delay = next_due - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_due = loop.time()

    service.start()
    try:
        async with ws_serve(handler, host, port) as server:
            service.bound_port = next(iter(server.sockets)).getsockname()[1]
            if ready is not None:
                ready.set()
            broadcast_task = asyncio.create_task(broadcaster())
            try:
                await asyncio.Future()
            finally:
                broadcast_task.cancel()
    finally:
        service.stop()
        if log_fh is not None:
            log_fh.close()


def main(cfg: SimConfig, seed: int = 0) -> None:
    service = RobotService(cfg, seed)
    print(f"teleop service on ws://{cfg.service.host}:{cfg.service.port} "
          f"(time scale {cfg.service.time_scale}x)")
    try:
        asyncio.run(serve(service))
    except KeyboardInterrupt:
        pass
