"""Discrete-event simulation of the pneumatic controller and plant.

The plant is a first-order constant-rate fill/vent model with additive
Gaussian sensor noise; the controller runs the close/open/measure valve
sequences with a 500 ms sensor watchdog, a no-progress guard and an
always-available safe state (pump off, both circuits venting). Everything
advances on a virtual clock, so runs are deterministic under a fixed seed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig
from .errors import ControlError
from .traces import Channel, Trace


class Routing(enum.Enum):
    HOLD = "Hold"
    PUMP_TO_CLAMP_VENT_CUFF = "PumpToClampVentCuff"   # C1
    HOLD_ALL = "HoldAll"                              # C2
    VENT_CUFF = "VentCuff"                            # P1 / P3 full release
    PUMP_TO_CUFF = "PumpToCuff"                       # P2
    BLEED_CUFF = "BleedCuff"                          # controlled deflation
    VENT_ALL = "VentAll"                              # O1 and safe state


class Phase(enum.Enum):
    IDLE = "Idle"
    CLOSING = "Closing"
    CLOSED = "Closed"
    OPENING = "Opening"
    INFLATING = "Inflating"
    CONTROLLED_DEFLATE = "ControlledDeflate"
    VENTING = "Venting"
    FAULT = "Fault"


# Phases whose control loop blocks on pressure readings.
SENSOR_DEPENDENT_PHASES = frozenset(
    {Phase.CLOSING, Phase.OPENING, Phase.INFLATING, Phase.CONTROLLED_DEFLATE, Phase.VENTING}
)


@dataclass(frozen=True)
class PlantState:
    clamp_mmhg: float = 0.0
    cuff_mmhg: float = 0.0
    pump_on: bool = False
    valve: Routing = Routing.HOLD
    t_ms: int = 0


@dataclass
class ControllerState:
    phase: Phase = Phase.IDLE
    last_reading_t_ms: int = 0


def step_plant(state: PlantState, dt_ms: int, cfg: SimConfig | None = None) -> PlantState:
    """Advance the (noise-free) plant one tick. Pure function of its inputs."""
    cfg = cfg or SimConfig()
    if not 1 <= dt_ms <= 20:
        raise ValueError(f"dt_ms must be in [1, 20], got {dt_ms}")
    dt = dt_ms / 1000.0
    clamp, cuff = state.clamp_mmhg, state.cuff_mmhg
    pump = cfg.pump_rate_mmhg_s * dt if state.pump_on else 0.0
    vent = cfg.vent_rate_mmhg_s * dt
    if state.valve is Routing.PUMP_TO_CLAMP_VENT_CUFF:
        clamp += pump
        cuff -= vent
    elif state.valve is Routing.VENT_CUFF:
        cuff -= vent
    elif state.valve is Routing.PUMP_TO_CUFF:
        cuff += pump
    elif state.valve is Routing.BLEED_CUFF:
        cuff -= cfg.deflation_rate_mmhg_s * dt
    elif state.valve is Routing.VENT_ALL:
        clamp -= vent
        cuff -= vent
    clamp = float(np.clip(clamp, 0.0, cfg.clamp_ceiling_mmhg))
    cuff = float(np.clip(cuff, 0.0, cfg.cuff_ceiling_mmhg))
    return replace(state, clamp_mmhg=clamp, cuff_mmhg=cuff, t_ms=state.t_ms + dt_ms)


def watchdog_check(ctrl: ControllerState, now_ms: int, watchdog_ms: int = 500) -> bool:
    """True when the sensor silence exceeded the timeout in an active phase."""
    if ctrl.phase not in SENSOR_DEPENDENT_PHASES:
        return False
    return now_ms - ctrl.last_reading_t_ms > watchdog_ms


def safe_state(ctrl: ControllerState, plant: PlantState) -> PlantState:
    """Pump off, both circuits routed to vent. Idempotent."""
    return replace(plant, pump_on=False, valve=Routing.VENT_ALL)


class _ProgressGuard:
    """Faults a transition whose monitored pressure stops moving."""

    def __init__(self, window_ms: int, min_delta: float):
        self.window_ms = window_ms
        self.min_delta = min_delta
        self.ref_value = None
        self.ref_t_ms = None

    def stalled(self, t_ms: int, value: float) -> bool:
        if self.ref_value is None or abs(value - self.ref_value) >= self.min_delta:
            self.ref_value = value
            self.ref_t_ms = t_ms
            return False
        return t_ms - self.ref_t_ms > self.window_ms


class Simulator:
    """Controller + plant on a lockstep virtual clock.

    ``pulse_source`` (optional) is a callable f(t_s, cuff_mmhg) -> mmHg whose
    output rides on the cuff readings, which is how synthetic heartbeats
    reach the measurement trace.
    """

    HARD_CAP_MS = 600_000

    def __init__(self, cfg: SimConfig | None = None, seed: int = 0, pulse_source=None):
        self.cfg = cfg or SimConfig()
        self.rng = np.random.default_rng(seed)
        self.pulse_source = pulse_source
        self.plant = PlantState()
        self.ctrl = ControllerState()
        self.events: list[dict] = []
        self._dropouts: list[tuple[int, int]] = []
        self._last_clamp = 0.0
        self._last_cuff = 0.0

    # -- infrastructure ------------------------------------------------------

    @property
    def t_ms(self) -> int:
        return self.plant.t_ms

    def add_sensor_dropout(self, at_ms: int, duration_ms: int) -> None:
        self._dropouts.append((at_ms, at_ms + duration_ms))

    def _sensors_online(self) -> bool:
        t = self.plant.t_ms
        return not any(a <= t < b for a, b in self._dropouts)

    def _log(self, event: str) -> None:
        self.events.append(
            {
                "t_ms": self.plant.t_ms,
                "phase": self.ctrl.phase.value,
                "event": event,
                "clamp_mmhg": round(self._last_clamp, 3),
                "cuff_mmhg": round(self._last_cuff, 3),
            }
        )

    def _set(self, *, pump_on=None, valve=None) -> None:
        changes = {}
        if pump_on is not None:
            changes["pump_on"] = pump_on
        if valve is not None:
            changes["valve"] = valve
        self.plant = replace(self.plant, **changes)

    def _step(self) -> bool:
        """One tick: plant physics then the sensor sampling. True if read."""
        self.plant = step_plant(self.plant, self.cfg.dt_ms, self.cfg)
        if not self._sensors_online():
            return False
        sigma = self.cfg.sensor_noise_sigma
        noise = self.rng.normal(0.0, sigma, 2) if sigma > 0 else (0.0, 0.0)
        self._last_clamp = self.plant.clamp_mmhg + float(noise[0])
        cuff = self.plant.cuff_mmhg + float(noise[1])
        if self.pulse_source is not None:
            cuff += float(self.pulse_source(self.plant.t_ms / 1000.0, self.plant.cuff_mmhg))
        self._last_cuff = cuff
        self.ctrl.last_reading_t_ms = self.plant.t_ms
        return True

    def _fault(self, event: str) -> None:
        self._log(event)
        self.plant = safe_state(self.ctrl, self.plant)
        self.ctrl.phase = Phase.FAULT
        self._log("safe-state")

    def _run_until(self, done, monitor: str, record=None) -> bool:
        """Step until ``done(reading)``; False when a fault ended the phase."""
        guard = _ProgressGuard(self.cfg.noprogress_window_ms, self.cfg.noprogress_min_delta_mmhg)
        start = self.plant.t_ms
        while True:
            got = self._step()
            if watchdog_check(self.ctrl, self.plant.t_ms, self.cfg.watchdog_ms):
                self._fault("watchdog-timeout")
                return False
            if got:
                reading = self._last_clamp if monitor == "clamp" else self._last_cuff
                if record is not None:
                    record.append(reading)
                if guard.stalled(self.plant.t_ms, reading):
                    self._fault("no-progress")
                    return False
                if done(reading):
                    return True
            if self.plant.t_ms - start > self.HARD_CAP_MS:
                raise ControlError(f"{monitor} phase exceeded the simulation time budget")

    def _settled_below(self, threshold: float, consecutive: int = 3):
        state = {"count": 0}

        def done(reading: float) -> bool:
            state["count"] = state["count"] + 1 if reading < threshold else 0
            return state["count"] >= consecutive

        return done

    # -- command sequences ----------------------------------------------------

    def close_clamp(self) -> list:
        """C1: pump to the clamp while venting the cuff; C2: seal everything."""
        mark = len(self.events)
        if self.ctrl.phase is Phase.CLOSED:
            self._log("already-closed")
            return self.events[mark:]
        if self.ctrl.phase is not Phase.IDLE:
            raise ControlError(f"close requires Idle, controller is {self.ctrl.phase.value}")
        self.ctrl.phase = Phase.CLOSING
        self.ctrl.last_reading_t_ms = self.plant.t_ms
        self._set(pump_on=True, valve=Routing.PUMP_TO_CLAMP_VENT_CUFF)
        self._log("close-start")
        target = self.cfg.clamp_target_mmhg
        if self._run_until(lambda r: r >= target, monitor="clamp"):
            self._set(pump_on=False, valve=Routing.HOLD_ALL)
            self.ctrl.phase = Phase.CLOSED
            self._log("closed")
        return self.events[mark:]

    def open_clamp(self) -> list:
        """O1: vent both circuits; O2: confirm once pressures are negligible."""
        mark = len(self.events)
        if self.ctrl.phase is Phase.IDLE:
            self._log("already-open")
            return self.events[mark:]
        if self.ctrl.phase is not Phase.CLOSED:
            raise ControlError(f"open requires Closed, controller is {self.ctrl.phase.value}")
        self.ctrl.phase = Phase.OPENING
        self.ctrl.last_reading_t_ms = self.plant.t_ms
        self._set(pump_on=False, valve=Routing.VENT_ALL)
        self._log("open-start")
        thr = self.cfg.vent_threshold_mmhg
        clamp_done = self._settled_below(thr)
        cuff_low = {"ok": False}

        def done(clamp_reading: float) -> bool:
            cuff_low["ok"] = self._last_cuff < thr or cuff_low["ok"]
            return clamp_done(clamp_reading) and cuff_low["ok"]

        if self._run_until(done, monitor="clamp"):
            self._set(valve=Routing.HOLD)
            self.ctrl.phase = Phase.IDLE
            self._log("opened")
        return self.events[mark:]

    def measure_sequence(self) -> Trace | None:
        """P1 full cuff vent, P2 inflate to target, controlled deflation
        while recording, P3 full release. Returns the recorded cuff trace,
        or None when a fault aborted the sequence."""
        if self.ctrl.phase is not Phase.CLOSED:
            raise ControlError(f"measure requires Closed, controller is {self.ctrl.phase.value}")
        cfg = self.cfg
        record: list[float] = []
        t0_ms = self.plant.t_ms + cfg.dt_ms

        self.ctrl.phase = Phase.VENTING
        self.ctrl.last_reading_t_ms = self.plant.t_ms
        self._set(pump_on=False, valve=Routing.VENT_CUFF)
        self._log("measure-start")
        if not self._run_until(
            self._settled_below(cfg.vent_threshold_mmhg), monitor="cuff", record=record
        ):
            return None

        self.ctrl.phase = Phase.INFLATING
        self._set(pump_on=True, valve=Routing.PUMP_TO_CUFF)
        self._log("inflate-start")
        if not self._run_until(
            lambda r: r >= cfg.cuff_target_mmhg, monitor="cuff", record=record
        ):
            return None
        self._set(pump_on=False)
        self._log("inflate-done")

        self.ctrl.phase = Phase.CONTROLLED_DEFLATE
        self._set(valve=Routing.BLEED_CUFF)
        self._log("deflate-start")
        if not self._run_until(
            lambda r: r < cfg.deflation_stop_mmhg, monitor="cuff", record=record
        ):
            return None
        self._log("deflate-done")

        self.ctrl.phase = Phase.VENTING
        self._set(valve=Routing.VENT_CUFF)
        if not self._run_until(
            self._settled_below(cfg.vent_threshold_mmhg), monitor="cuff", record=record
        ):
            return None
        self._set(valve=Routing.HOLD_ALL)
        self.ctrl.phase = Phase.CLOSED
        self._log("measure-done")
        fs = 1000.0 / cfg.dt_ms
        return Trace(
            channel=Channel.CUFF_PRESSURE, fs_hz=fs, samples=np.asarray(record), t0_ms=t0_ms
        )

    def cancel(self) -> list:
        """User cancellation: safe state, vent out, back to Idle."""
        mark = len(self.events)
        self._log("cancel")
        self.plant = safe_state(self.ctrl, self.plant)
        self._vent_out()
        if self.ctrl.phase is not Phase.FAULT:
            self.ctrl.phase = Phase.IDLE
        self._log("cancelled")
        return self.events[mark:]

    def reset(self) -> list:
        """Clear an absorbed Fault after venting to a safe rest state."""
        mark = len(self.events)
        self.plant = safe_state(self.ctrl, self.plant)
        self._vent_out()
        self.ctrl.phase = Phase.IDLE
        self._log("reset")
        return self.events[mark:]

    def _vent_out(self) -> None:
        thr = self.cfg.vent_threshold_mmhg
        start = self.plant.t_ms
        while self.plant.clamp_mmhg >= thr or self.plant.cuff_mmhg >= thr:
            self.plant = step_plant(self.plant, self.cfg.dt_ms, self.cfg)
            if self.plant.t_ms - start > self.HARD_CAP_MS:
                raise ControlError("venting exceeded the simulation time budget")
        self._last_clamp = self.plant.clamp_mmhg
        self._last_cuff = self.plant.cuff_mmhg
        self.ctrl.last_reading_t_ms = self.plant.t_ms


def run_scenario(sim: Simulator, commands) -> list:
    """Drive a command sequence; faults absorb everything except reset."""
    traces = []
    for command in commands:
        op = command if isinstance(command, str) else command.get("op")
        if sim.ctrl.phase is Phase.FAULT and op != "reset":
            sim._log(f"rejected:{op}")
            continue
        if op == "close":
            sim.close_clamp()
        elif op == "open":
            sim.open_clamp()
        elif op == "measure":
            trace = sim.measure_sequence()
            if trace is not None:
                traces.append(trace)
        elif op == "cancel":
            sim.cancel()
        elif op == "reset":
            sim.reset()
        else:
            raise ControlError(f"unknown scenario command {op!r}")
    return traces


def events_to_ndjson(events) -> str:
    return "\n".join(json.dumps(e, sort_keys=True) for e in events) + ("\n" if events else "")
