"""Scripted end-to-end replay: a pressure-command script drives the
controller simulation while the twin pipeline records states to CSV.

Two run modes share one script format (CSV: time_ms,type,value):

* deterministic: a fixed-step virtual clock advances controller dynamics
  and polls in-process. Every controller interaction still round-trips
  through the wire codec (encode, decode, handle, encode, decode), so the
  replay exercises the same byte path as a socket run without sockets or
  sleeps. Same script + flags give byte-identical CSV.
* wall-clock: a real controller server and polling engine run on localhost
  and the script is replayed against them in real time.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .calibration import CubicFit
from .controller import (
    ControllerServer,
    ControllerState,
    DEFAULT_TAU_S,
    DEFAULT_TICK_HZ,
    REG_FAULT_FLAGS,
    REG_TRUE_PRESSURE,
    handle_request,
)
from .modbus import (
    ExceptionResponse,
    MbapHeader,
    Pdu,
    ReadHoldingRequest,
    ReadHoldingResponse,
    decode_frame,
    encode_frame,
    register_to_pressure,
)
from .twin import (
    TwinConfig,
    TwinEngine,
    TwinState,
    command_to_write,
    pipeline_step,
    write_twin_csv,
)

SCRIPT_HEADER = ["time_ms", "type", "value"]
DEFAULT_TAIL_MS = 1000.0


class ScriptError(ValueError):
    """Demo script file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ScriptCommand:
    time_ms: float
    command: str
    value: float


def read_script(path: str) -> list[ScriptCommand]:
    """Parse and validate a command script; times must be non-decreasing."""
    commands: list[ScriptCommand] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SCRIPT_HEADER:
            raise ScriptError(
                f"script header must be {','.join(SCRIPT_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ScriptError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                t = float(row[0])
                value = float(row[2])
            except ValueError as exc:
                raise ScriptError(str(exc), lineno) from exc
            command = row[1].strip()
            try:
                command_to_write(command, _coerce(command, value))
            except ValueError as exc:
                raise ScriptError(str(exc), lineno) from exc
            if commands and t < commands[-1].time_ms:
                raise ScriptError(
                    f"time {t} decreases after {commands[-1].time_ms}", lineno)
            commands.append(ScriptCommand(t, command, value))
    return commands


def _coerce(command: str, value: float):
    if command in ("set_pos_trigger", "set_neg_trigger"):
        if value not in (0.0, 1.0):
            raise ValueError(f"{command} takes 0 or 1, got {value}")
        return int(value)
    return value


def default_demo_fit() -> CubicFit:
    """Linear theta_i(p) = p over the calibrated span, for self-contained runs."""
    return CubicFit(intercept=np.zeros(4),
                    B=np.tile([1.0, 0.0, 0.0], (4, 1)),
                    valid_range=(-90.0, 120.0))


class CodecLoopback:
    """In-process controller reached only through encoded frames."""

    def __init__(self, state: ControllerState | None = None):
        self.state = state if state is not None else ControllerState()
        self._txn = 0

    def request(self, pdu: Pdu) -> Pdu:
        self._txn = (self._txn + 1) & 0xFFFF
        wire = encode_frame(MbapHeader(self._txn), pdu)
        header, request, consumed = decode_frame(wire)
        assert consumed == len(wire)
        self.state, response = handle_request(self.state, request)
        back = encode_frame(header, response)
        _, decoded, _ = decode_frame(back)
        return decoded

    def read_pressure_and_faults(self) -> tuple[float, int]:
        response = self.request(ReadHoldingRequest(REG_TRUE_PRESSURE, 2))
        if not isinstance(response, ReadHoldingResponse):
            raise RuntimeError(f"unexpected response {response!r}")
        raw_pressure, faults = response.values
        return register_to_pressure(raw_pressure), faults


def run_deterministic(script: list[ScriptCommand], cfg: TwinConfig, *,
                      tau: float = DEFAULT_TAU_S,
                      tick_hz: float = DEFAULT_TICK_HZ,
                      tail_ms: float = DEFAULT_TAIL_MS) -> list[TwinState]:
    """Fixed-step replay; an empty script records nothing."""
    if not script:
        return []
    from .controller import tick  # local import keeps module surface flat

    loop = CodecLoopback()
    period_ms = 1000.0 / cfg.poll_hz
    substeps = max(1, round(tick_hz / cfg.poll_hz))
    sub_dt = (period_ms / 1000.0) / substeps
    end_ms = script[-1].time_ms + tail_ms
    n_polls = int(end_ms // period_ms) + 1
    pending = list(script)
    states: list[TwinState] = []
    for i in range(n_polls):
        t_ms = i * period_ms
        if i > 0:
            for _ in range(substeps):
                loop.state = tick(loop.state, sub_dt, tau)
        while pending and pending[0].time_ms <= t_ms:
            cmd = pending.pop(0)
            write = command_to_write(cmd.command, _coerce(cmd.command, cmd.value))
            response = loop.request(write)
            if isinstance(response, ExceptionResponse):
                raise RuntimeError(
                    f"controller rejected {cmd.command}: code {response.code}")
        pressure, faults = loop.read_pressure_and_faults()
        states.append(pipeline_step(pressure, cfg, timestamp_ms=t_ms,
                                    controller_faults=faults))
    return states


def run_wall_clock(script: list[ScriptCommand], cfg: TwinConfig, *,
                   tau: float = DEFAULT_TAU_S,
                   tick_hz: float = DEFAULT_TICK_HZ,
                   sim_port: int = 0,
                   tail_ms: float = DEFAULT_TAIL_MS) -> list[TwinState]:
    """Replay against a real localhost controller at real poll cadence."""
    if not script:
        return []
    server = ControllerServer("127.0.0.1", sim_port, tau=tau, tick_hz=tick_hz)
    server.start()
    try:
        host, port = server.address
        run_cfg = TwinConfig(**{**_config_kwargs(cfg), "host": host, "port": port})
        states: list[TwinState] = []
        with TwinEngine(run_cfg) as engine:
            started = time.monotonic()
            end_s = (script[-1].time_ms + tail_ms) / 1000.0
            pending = list(script)
            seq = 0
            while (now := time.monotonic() - started) < end_s:
                while pending and pending[0].time_ms / 1000.0 <= now:
                    cmd = pending.pop(0)
                    engine.command(cmd.command, _coerce(cmd.command, cmd.value))
                got = engine.next_state(seq, timeout=0.1)
                if got is not None:
                    seq, state = got
                    states.append(state)
        return states
    finally:
        server.stop()


def _config_kwargs(cfg: TwinConfig) -> dict:
    return {
        "fit": cfg.fit, "host": cfg.host, "port": cfg.port,
        "poll_hz": cfg.poll_hz, "lengths": cfg.lengths, "phis": cfg.phis,
        "mount": cfg.mount, "flange": cfg.flange, "angle_mode": cfg.angle_mode,
    }


def run_demo(script_path: str, out_path: str, cfg: TwinConfig, *,
             deterministic: bool, tau: float = DEFAULT_TAU_S,
             tick_hz: float = DEFAULT_TICK_HZ, sim_port: int = 0,
             tail_ms: float = DEFAULT_TAIL_MS) -> int:
    """Read script, run, write CSV; returns the number of recorded states."""
    script = read_script(script_path)
    if deterministic:
        states = run_deterministic(script, cfg, tau=tau, tick_hz=tick_hz,
                                   tail_ms=tail_ms)
    else:
        states = run_wall_clock(script, cfg, tau=tau, tick_hz=tick_hz,
                                sim_port=sim_port, tail_ms=tail_ms)
    write_twin_csv(out_path, states)
    return len(states)
