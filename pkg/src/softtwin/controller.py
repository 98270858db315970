"""Simulated pneumatic controller: register map, first-order pressure dynamics,
and a Modbus TCP server front end.

The register map stands in for a proprietary device whose wire layout is not
public, so it is declared here and documented in the README as authoritative:

    0x0000  pos_trigger    0/1                          read/write
    0x0001  neg_trigger    0/1                          read/write
    0x0002  pos_target     0.1 kPa, 0..2000             read/write
    0x0003  neg_target     0.1 kPa signed, -1000..0     read/write
    0x0004  true_pressure  0.1 kPa signed               read-only
    0x0005  fault_flags    bit0 = conflicting triggers  read-only

Pressure follows a first-order lag toward the active target. With only the
positive trigger set the target is pos_target, with only the negative trigger
neg_target, with neither the chamber vents to 0 kPa (configurable to hold),
and with both set the previous target stays active and fault bit0 is raised.
"""

from __future__ import annotations

import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, replace

from .modbus import (
    EXC_ILLEGAL_DATA_ADDRESS,
    EXC_ILLEGAL_DATA_VALUE,
    EXC_ILLEGAL_FUNCTION,
    DecodeError,
    ExceptionResponse,
    FrameAssembler,
    FrameError,
    MbapHeader,
    Pdu,
    ReadHoldingRequest,
    ReadHoldingResponse,
    WriteMultipleRequest,
    WriteMultipleResponse,
    WriteSingle,
    encode_frame,
    pressure_to_register,
)

REG_POS_TRIGGER = 0x0000
REG_NEG_TRIGGER = 0x0001
REG_POS_TARGET = 0x0002
REG_NEG_TARGET = 0x0003
REG_TRUE_PRESSURE = 0x0004
REG_FAULT_FLAGS = 0x0005
REGISTER_COUNT = 6
WRITABLE_REGISTERS = (REG_POS_TRIGGER, REG_NEG_TRIGGER,
                      REG_POS_TARGET, REG_NEG_TARGET)

FAULT_CONFLICTING_TRIGGERS = 0x0001

PRESSURE_MIN_KPA = -100.0
PRESSURE_MAX_KPA = 200.0

DEFAULT_TAU_S = 0.15
DEFAULT_TICK_HZ = 100.0
# Regulation deadband: once the lag brings pressure this close, the
# controller reports the target itself, like a real regulator's resolution.
DEFAULT_SETTLE_BAND_KPA = 1.0

DEFAULT_PORT = 1502


class StartupError(RuntimeError):
    """Server could not start; message includes the bind address."""


@dataclass(frozen=True)
class ControllerState:
    """Full controller snapshot; active_target is dynamics bookkeeping
    (which target the lag is tracking), not a register-backed field."""

    pos_trigger: bool = False
    neg_trigger: bool = False
    pos_target: float = 0.0       # kPa, 0..200
    neg_target: float = 0.0       # kPa, -100..0
    true_pressure: float = 0.0    # kPa
    fault_flags: int = 0
    active_target: float = 0.0    # kPa

    def __post_init__(self) -> None:
        if not 0.0 <= self.pos_target <= PRESSURE_MAX_KPA:
            raise ValueError(f"pos_target {self.pos_target} outside 0..{PRESSURE_MAX_KPA}")
        if not PRESSURE_MIN_KPA <= self.neg_target <= 0.0:
            raise ValueError(f"neg_target {self.neg_target} outside {PRESSURE_MIN_KPA}..0")
        if not math.isfinite(self.true_pressure):
            raise ValueError("true_pressure must be finite")


def state_registers(state: ControllerState) -> tuple[int, ...]:
    """The six holding registers encoding this state, in address order."""
    return (
        int(state.pos_trigger),
        int(state.neg_trigger),
        pressure_to_register(state.pos_target),
        pressure_to_register(state.neg_target),
        pressure_to_register(state.true_pressure),
        state.fault_flags & 0xFFFF,
    )


def tick(state: ControllerState, dt: float, tau: float,
         settle_band: float = DEFAULT_SETTLE_BAND_KPA,
         hold_on_idle: bool = False) -> ControllerState:
    """Advance pressure dynamics by dt seconds (pure)."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")

    faults = state.fault_flags & ~FAULT_CONFLICTING_TRIGGERS
    if state.pos_trigger and state.neg_trigger:
        target = state.active_target
        faults |= FAULT_CONFLICTING_TRIGGERS
    elif state.pos_trigger:
        target = state.pos_target
    elif state.neg_trigger:
        target = state.neg_target
    else:
        target = state.active_target if hold_on_idle else 0.0

    pressure = target + (state.true_pressure - target) * math.exp(-dt / tau)
    if abs(pressure - target) <= settle_band:
        pressure = target
    pressure = min(max(pressure, PRESSURE_MIN_KPA), PRESSURE_MAX_KPA)
    return replace(state, true_pressure=pressure, fault_flags=faults,
                   active_target=target)


class _RequestFault(Exception):
    def __init__(self, code: int):
        self.code = code


def _signed(raw: int) -> int:
    raw &= 0xFFFF
    return raw - 0x10000 if raw >= 0x8000 else raw


def _apply_write(state: ControllerState, address: int, raw: int) -> ControllerState:
    if address == REG_POS_TRIGGER or address == REG_NEG_TRIGGER:
        if raw not in (0, 1):
            raise _RequestFault(EXC_ILLEGAL_DATA_VALUE)
        key = "pos_trigger" if address == REG_POS_TRIGGER else "neg_trigger"
        return replace(state, **{key: bool(raw)})
    if address == REG_POS_TARGET:
        value = _signed(raw)
        if not 0 <= value <= round(PRESSURE_MAX_KPA * 10):
            raise _RequestFault(EXC_ILLEGAL_DATA_VALUE)
        return replace(state, pos_target=value / 10.0)
    if address == REG_NEG_TARGET:
        value = _signed(raw)
        if not round(PRESSURE_MIN_KPA * 10) <= value <= 0:
            raise _RequestFault(EXC_ILLEGAL_DATA_VALUE)
        return replace(state, neg_target=value / 10.0)
    raise _RequestFault(EXC_ILLEGAL_DATA_ADDRESS)


def handle_request(state: ControllerState, pdu: Pdu
                   ) -> tuple[ControllerState, Pdu]:
    """Apply one decoded request (pure); faults become exception responses."""
    if isinstance(pdu, ReadHoldingRequest):
        if pdu.address + pdu.count > REGISTER_COUNT:
            return state, ExceptionResponse(pdu.function, EXC_ILLEGAL_DATA_ADDRESS)
        registers = state_registers(state)
        return state, ReadHoldingResponse(
            registers[pdu.address:pdu.address + pdu.count])

    if isinstance(pdu, WriteSingle):
        try:
            return _apply_write(state, pdu.address, pdu.value), pdu
        except _RequestFault as fault:
            return state, ExceptionResponse(pdu.function, fault.code)

    if isinstance(pdu, WriteMultipleRequest):
        window = range(pdu.address, pdu.address + len(pdu.values))
        if any(a not in WRITABLE_REGISTERS for a in window):
            return state, ExceptionResponse(pdu.function, EXC_ILLEGAL_DATA_ADDRESS)
        new_state = state
        try:
            for address, raw in zip(window, pdu.values):
                new_state = _apply_write(new_state, address, raw)
        except _RequestFault as fault:
            return state, ExceptionResponse(pdu.function, fault.code)
        return new_state, WriteMultipleResponse(pdu.address, len(pdu.values))

    # Response-shaped PDUs are not requests; answer rather than drop.
    function = getattr(pdu, "function", EXC_ILLEGAL_FUNCTION)
    return state, ExceptionResponse(function, EXC_ILLEGAL_FUNCTION)


class ControllerServer:
    """Modbus TCP server wrapping the pure state machine.

    One lock serializes request handling and dynamics ticks; each connection
    gets its own FrameAssembler. Multi-register writes are atomic because a
    request builds one replacement state under the lock.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, *,
                 tau: float = DEFAULT_TAU_S, tick_hz: float = DEFAULT_TICK_HZ,
                 hold_on_idle: bool = False,
                 settle_band: float = DEFAULT_SETTLE_BAND_KPA):
        if not tau > 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        if not tick_hz > 0:
            raise ValueError(f"tick_hz must be > 0, got {tick_hz}")
        self._host = host
        self._port = port
        self._tau = tau
        self._tick_hz = tick_hz
        self._hold_on_idle = hold_on_idle
        self._settle_band = settle_band
        self._state = ControllerState()
        self._lock = threading.Lock()
        self._stop_event = threading.Event()
        self._server: socketserver.ThreadingTCPServer | None = None
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        """Actual bound (host, port); resolves port 0 to the assigned one."""
        if self._server is None:
            return (self._host, self._port)
        return self._server.server_address[:2]

    def snapshot(self) -> ControllerState:
        with self._lock:
            return self._state

    def apply_pdu(self, pdu: Pdu) -> Pdu:
        with self._lock:
            self._state, response = handle_request(self._state, pdu)
            return response

    def tick_once(self, dt: float) -> ControllerState:
        with self._lock:
            self._state = tick(self._state, dt, self._tau,
                               self._settle_band, self._hold_on_idle)
            return self._state

    def start(self) -> "ControllerServer":
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self.request.settimeout(0.2)
                assembler = FrameAssembler()
                while not outer._stop_event.is_set():
                    try:
                        data = self.request.recv(4096)
                    except socket.timeout:
                        continue
                    except OSError:
                        return
                    if not data:
                        return
                    if not outer._serve_chunk(assembler, data, self.request):
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        try:
            self._server = Server((self._host, self._port), Handler)
        except OSError as exc:
            raise StartupError(
                f"cannot bind {self._host}:{self._port}: {exc}") from exc

        self._threads = [
            threading.Thread(target=self._server.serve_forever,
                             kwargs={"poll_interval": 0.1},
                             name="controller-accept", daemon=True),
            threading.Thread(target=self._run_ticker,
                             name="controller-tick", daemon=True),
        ]
        for t in self._threads:
            t.start()
        return self

    def _serve_chunk(self, assembler: FrameAssembler, data: bytes,
                     sock: socket.socket) -> bool:
        """Answer every frame in data; False means close the connection."""
        chunk = data
        while True:
            try:
                frames = assembler.feed(chunk)
            except FrameError as exc:
                for header, pdu in exc.pending:
                    self._respond(sock, header, pdu)
                if 1 <= exc.function <= 0x7F:
                    self._send(sock, encode_frame(
                        exc.header,
                        ExceptionResponse(exc.function, EXC_ILLEGAL_FUNCTION)))
                chunk = b""  # resume on the buffered remainder
                continue
            except DecodeError:
                # Broken framing (bad protocol id, oversize): unrecoverable.
                return False
            for header, pdu in frames:
                self._respond(sock, header, pdu)
            return True

    def _respond(self, sock: socket.socket, header: MbapHeader, pdu: Pdu) -> None:
        response = self.apply_pdu(pdu)
        self._send(sock, encode_frame(header, response))

    @staticmethod
    def _send(sock: socket.socket, frame: bytes) -> None:
        try:
            sock.sendall(frame)
        except OSError:
            pass

    def _run_ticker(self) -> None:
        period = 1.0 / self._tick_hz
        last = time.monotonic()
        while not self._stop_event.wait(period):
            now = time.monotonic()
            dt = now - last
            last = now
            if dt > 0:
                self.tick_once(dt)

    def stop(self) -> None:
        self._stop_event.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        for t in self._threads:
            t.join(timeout=2.0)
        self._threads = []

    def __enter__(self) -> "ControllerServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
