"""SMA needle-clutch pair: thermal dynamics, temperature PID, grip force,
and the inch-worm insertion state machine.

The lumped thermal model is first order; only its two time constants are
observable (rise to activation under full power, air-cooled fall to
release), so the fitted parameters normalize heat capacity to 1 J/degC and
scale power/losses to match those two times exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

ACTIVATED_GRIP = 18.0  # N, conservative lower of the measured pair
RESIDUAL_DRAG = 2.25   # N, conservative upper of the measured pair

PHASE_ADVANCE = "A_grip_advance"
PHASE_HANDOFF_AB = "handoff_AB"
PHASE_RETRACT = "B_grip_retract"
PHASE_HANDOFF_BA = "handoff_BA"


class InsertionStallError(RuntimeError):
    """Tissue resistance exceeds both clutches' grip; no progress possible."""


@dataclass
class ClutchThermalParams:
    heat_capacity: float = 1.0       # J/degC (normalized)
    loss_coeff_passive: float = 0.05  # W/degC
    loss_coeff_aircool: float = 0.11584863887626283  # W/degC, fitted
    max_power: float = 24.68020046950533            # W, fitted
    ambient: float = 22.0
    t_active: float = 80.0
    t_release: float = 40.0
    t_max: float = 91.0

    def __post_init__(self):
        if not self.loss_coeff_aircool > self.loss_coeff_passive > 0.0:
            raise ValueError("need loss_coeff_aircool > loss_coeff_passive > 0")
        if not self.t_release < self.t_active < self.t_max:
            raise ValueError("need t_release < t_active < t_max")


def fit_thermal_params(rise_time: float = 2.5, fall_time: float = 10.1,
                       ambient: float = 22.0, loss_coeff_passive: float = 0.05,
                       t_active: float = 80.0, t_release: float = 40.0,
                       t_max: float = 91.0) -> ClutchThermalParams:
    """Two-point fit: full-power rise ambient->t_active in rise_time,
    air-cooled unpowered fall t_active->t_release in fall_time."""
    c = 1.0
    k_p = loss_coeff_passive
    span = t_active - ambient
    max_power = span * k_p / (1.0 - np.exp(-k_p * rise_time / c))
    k_cool = c * np.log(span / (t_release - ambient)) / fall_time
    return ClutchThermalParams(c, k_p, float(k_cool), float(max_power),
                               ambient, t_active, t_release, t_max)


@dataclass
class ClutchState:
    temperature: float = 22.0
    duty: float = 0.0
    cooling_on: bool = False
    engaged: bool = False
    pid_integrator: float = 0.0
    pid_prev_error: float | None = None


@dataclass
class PidGains:
    kp: float = 0.1   # duty per degC
    ki: float = 0.05  # duty per degC*s
    kd: float = 0.0


def thermal_step(state: ClutchState, params: ClutchThermalParams,
                 dt: float) -> ClutchState:
    """First-order Joule-heating step; power is cut above the safety ceiling
    so the temperature can never exceed t_max."""
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    loss_coeff = params.loss_coeff_aircool if state.cooling_on else params.loss_coeff_passive
    loss = loss_coeff * (state.temperature - params.ambient)
    duty = float(np.clip(state.duty, 0.0, 1.0))
    candidate = state.temperature + dt * (duty * params.max_power - loss) / params.heat_capacity
    if candidate > params.t_max:
        candidate = state.temperature + dt * (-loss) / params.heat_capacity
    state.temperature = candidate
    if state.temperature >= params.t_active:
        state.engaged = True
    elif state.temperature < params.t_release:
        state.engaged = False
    return state


def temp_pid_step(state: ClutchState, target: float, gains: PidGains,
                  dt: float) -> float:
    """PID duty command in [0, 1]; the integrator freezes while the output
    saturates (anti-windup)."""
    error = target - state.temperature
    derivative = 0.0
    if gains.kd > 0.0 and state.pid_prev_error is not None:
        derivative = (error - state.pid_prev_error) / dt
    raw = gains.kp * error + gains.ki * state.pid_integrator + gains.kd * derivative
    duty = float(np.clip(raw, 0.0, 1.0))
    if raw == duty or (raw > 1.0 and error < 0.0) or (raw < 0.0 and error > 0.0):
        state.pid_integrator += error * dt
    state.pid_prev_error = error
    state.duty = duty
    return duty


def grip_force(state: ClutchState) -> float:
    """Holding capacity: engagement hysteresis decides which endpoint."""
    return ACTIVATED_GRIP if state.engaged else RESIDUAL_DRAG


@dataclass
class InchwormState:
    stroke: float
    needle_depth: float = 0.0
    phase: str = PHASE_HANDOFF_BA
    clutch_a: ClutchState = field(default_factory=ClutchState)  # carriage side
    clutch_b: ClutchState = field(default_factory=ClutchState)  # static side
    carriage_pos: float = 0.0
    time: float = 0.0
    slipped: bool = False
    stalled: bool = False
    # (time, phase, temp_a, temp_b, engaged_a, engaged_b, depth) rows
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.stroke <= 0.0:
            raise ValueError("stroke must be positive")


def _log(state: InchwormState) -> None:
    state.log.append((state.time, state.phase, state.clutch_a.temperature,
                      state.clutch_b.temperature, state.clutch_a.engaged,
                      state.clutch_b.engaged, state.needle_depth))


class InchwormStepper:
    """Incremental executor of one grip/advance/handoff cycle.

    Call step(dt) repeatedly (e.g. from a live control loop) until it
    returns True. A clutch only counts as engaged after its temperature
    actually crosses the activation threshold; handoffs engage the incoming
    clutch before releasing the outgoing one so the needle is always held.
    If the tissue resistance beats the advancing clutch's grip the needle
    slips: the cycle is flagged and depth is left unchanged (stalled as
    well when no clutch could hold it).
    """

    CARRIAGE_SPEED = 0.01  # m/s
    PHASE_TIMEOUT = 60.0   # s, thermal transitions must finish within this

    def __init__(self, state: InchwormState, target_depth: float,
                 resistance_force: float, params: ClutchThermalParams = None,
                 gains: PidGains = None, direction: int = 1):
        if resistance_force < 0.0:
            raise ValueError("resistance force must be non-negative")
        self.state = state
        self.params = fit_thermal_params() if params is None else params
        self.gains = gains if gains is not None else PidGains()
        self.direction = direction
        self.resistance = resistance_force
        remaining = direction * (target_depth - state.needle_depth)
        self.advance = min(state.stroke, max(remaining, 0.0))
        self.moved = 0.0
        self.phase_time = 0.0
        # (phase, action, argument) program for one cycle
        self.program = [] if remaining <= 1e-12 else [
            (PHASE_ADVANCE, "engage", state.clutch_a),
            (PHASE_ADVANCE, "move", +1),
            (PHASE_HANDOFF_AB, "engage", state.clutch_b),
            (PHASE_HANDOFF_AB, "release", state.clutch_a),
            (PHASE_RETRACT, "move", -1),
            (PHASE_HANDOFF_BA, "engage", state.clutch_a),
            (PHASE_HANDOFF_BA, "release", state.clutch_b),
        ]
        self.pc = 0

    @property
    def done(self) -> bool:
        return self.pc >= len(self.program)

    def _thermal_tick(self, dt: float, engage_target: ClutchState = None,
                      release_target: ClutchState = None) -> None:
        state = self.state
        for clutch in (state.clutch_a, state.clutch_b):
            if clutch is release_target:
                clutch.cooling_on = True
                clutch.duty = 0.0
            elif clutch is engage_target or clutch.engaged:
                clutch.cooling_on = False
                temp_pid_step(clutch, self.params.t_active + 5.0, self.gains, dt)
            thermal_step(clutch, self.params, dt)
        state.time += dt
        self.phase_time += dt
        _log(state)

    def step(self, dt: float = 0.02) -> bool:
        """Advance the cycle by dt; returns True once the cycle finished."""
        if self.done:
            return True
        state = self.state
        phase, action, arg = self.program[self.pc]
        state.phase = phase
        if action == "engage":
            if arg.engaged:
                self._bump()
            else:
                self._thermal_tick(dt, engage_target=arg)
                if arg.engaged:
                    self._bump()
        elif action == "release":
            if not arg.engaged:
                self._bump()
            else:
                self._thermal_tick(dt, release_target=arg)
                if not arg.engaged:
                    self._bump()
        elif action == "move":
            if self.moved == 0.0 and arg > 0:
                # grip check happens once, as the advance begins
                state.slipped = self.resistance > grip_force(state.clutch_a)
                state.stalled = state.slipped and self.resistance > ACTIVATED_GRIP
            increment = min(self.CARRIAGE_SPEED * dt, self.advance - self.moved)
            state.carriage_pos += arg * self.direction * increment
            if arg > 0 and not state.slipped:
                state.needle_depth += self.direction * increment
            self.moved += increment
            self._thermal_tick(dt)
            if self.moved >= self.advance - 1e-12:
                self.moved = 0.0
                self._bump()
        if self.phase_time > self.PHASE_TIMEOUT:
            raise RuntimeError(f"inch-worm phase {phase}/{action} timed out")
        return self.done

    def _bump(self) -> None:
        self.pc += 1
        self.phase_time = 0.0


def inchworm_cycle(state: InchwormState, target_depth: float,
                   resistance_force: float, params: ClutchThermalParams = None,
                   gains: PidGains = None, dt: float = 0.02,
                   direction: int = 1) -> InchwormState:
    """One full grip/advance/handoff cycle toward target_depth (blocking
    form of InchwormStepper)."""
    stepper = InchwormStepper(state, target_depth, resistance_force, params,
                              gains, direction)
    while not stepper.step(dt):
        pass
    return state


def run_insertion(state: InchwormState, target_depth: float,
                  resistance_force: float, params: ClutchThermalParams = None,
                  gains: PidGains = None, dt: float = 0.02,
                  max_cycles: int = 1000) -> tuple[InchwormState, int]:
    """Cycle until the needle reaches target_depth; returns the cycle count.

    Raises InsertionStallError when a cycle stalls with resistance beyond
    both clutches' engaged grip.
    """
    cycles = 0
    while state.needle_depth < target_depth - 1e-12:
        before = state.needle_depth
        inchworm_cycle(state, target_depth, resistance_force, params, gains, dt)
        cycles += 1
        if state.stalled:
            raise InsertionStallError(
                f"insertion stalled at {state.needle_depth * 1e3:.1f} mm: "
                f"resistance {resistance_force} N exceeds both clutches' "
                f"{ACTIVATED_GRIP} N grip")
        if state.needle_depth <= before + 1e-12:
            raise InsertionStallError(
                f"no progress at {state.needle_depth * 1e3:.1f} mm "
                f"(slip against {resistance_force} N)")
        if cycles >= max_cycles:
            raise RuntimeError("insertion exceeded the cycle budget")
    return state, cycles


def log_to_csv(state: InchwormState) -> str:
    """Phase/temperature/depth time series for offline inspection."""
    buf = io.StringIO()
    buf.write("time_s,phase,temp_a_c,temp_b_c,engaged_a,engaged_b,depth_m\n")
    for t, phase, ta, tb, ea, eb, depth in state.log:
        buf.write(f"{t!r},{phase},{ta!r},{tb!r},{int(ea)},{int(eb)},{depth!r}\n")
    return buf.getvalue()
