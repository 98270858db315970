"""The twin engine: polls controller pressure, maps it through the fitted
cubic and the arc-transform chain, and publishes immutable state snapshots.

The pipeline per poll is pressure -> bending angles (fit) -> arc parameters
-> end pose. A single writer thread publishes TwinState snapshots; readers
(HTTP handlers, stream subscribers) take the latest without blocking the
writer. Commands share the Modbus connection with polling under a lock.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import os
import socket
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CubicFit, load_fit_json, predict_thetas
from .controller import (
    REG_NEG_TARGET,
    REG_NEG_TRIGGER,
    REG_POS_TARGET,
    REG_POS_TRIGGER,
    REG_TRUE_PRESSURE,
    PRESSURE_MAX_KPA,
    PRESSURE_MIN_KPA,
)
from .kinematics import (
    DEFAULT_LENGTHS_MM,
    FlangePose,
    GripperMount,
    end_effector,
    matrix_to_quaternion,
    thetas_to_config,
)
from .modbus import (
    ExceptionResponse,
    FrameAssembler,
    MbapHeader,
    ModbusError,
    Pdu,
    ReadHoldingRequest,
    ReadHoldingResponse,
    WriteSingle,
    decode_frame,
    encode_frame,
    pressure_to_register,
    register_to_pressure,
)

DEFAULT_POLL_HZ = 50.0
POLL_HZ_MIN, POLL_HZ_MAX = 1.0, 500.0
RECONNECT_BACKOFF_START_S = 0.05
RECONNECT_BACKOFF_CAP_S = 2.0

ANGLE_MODES = ("cumulative", "incremental")

COMMAND_REGISTERS = {
    "set_pos_trigger": REG_POS_TRIGGER,
    "set_neg_trigger": REG_NEG_TRIGGER,
    "set_pos_target": REG_POS_TARGET,
    "set_neg_target": REG_NEG_TARGET,
}

EXCEPTION_NAMES = {1: "illegal function", 2: "illegal data address",
                   3: "illegal data value"}

TWIN_CSV_HEADER = [
    "t_ms", "pressure_kpa",
    "theta1_deg", "theta2_deg", "theta3_deg", "theta4_deg",
    "kappa1_inv_mm", "kappa2_inv_mm", "kappa3_inv_mm", "kappa4_inv_mm",
    "tip_x_mm", "tip_y_mm", "tip_z_mm",
    "tip_qw", "tip_qx", "tip_qy", "tip_qz",
    "extrapolated", "controller_faults", "link_ok",
]

TRAJECTORY_HEADER = ["t_ms", "tx", "ty", "tz", "qw", "qx", "qy", "qz"]


class LinkDownError(RuntimeError):
    """Controller connection is not available for the requested operation."""


class ConfigError(ValueError):
    """Twin configuration file or fields are invalid."""


@dataclass(frozen=True)
class FlangeSource:
    """Flange pose over time: a static pose or a zero-order-hold trajectory."""

    keyframes: tuple[tuple[float, FlangePose], ...]

    def __post_init__(self) -> None:
        if not self.keyframes:
            raise ConfigError("flange source needs at least one pose")
        times = [t for t, _ in self.keyframes]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("flange trajectory times must be non-decreasing")

    @classmethod
    def static(cls, pose: FlangePose) -> "FlangeSource":
        return cls(keyframes=((0.0, pose),))

    @classmethod
    def from_csv(cls, path: str) -> "FlangeSource":
        rows: list[tuple[float, FlangePose]] = []
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != TRAJECTORY_HEADER:
                raise ConfigError(
                    f"trajectory header must be {','.join(TRAJECTORY_HEADER)}")
            for row in reader:
                if not row:
                    continue
                if len(row) != 8:
                    raise ConfigError(f"trajectory row needs 8 fields: {row!r}")
                t, tx, ty, tz, qw, qx, qy, qz = (float(v) for v in row)
                rows.append((t, FlangePose((tx, ty, tz), (qw, qx, qy, qz))))
        return cls(keyframes=tuple(rows))

    def at(self, t_ms: float) -> FlangePose:
        """Pose active at t_ms: the latest keyframe not after it."""
        times = [t for t, _ in self.keyframes]
        i = bisect.bisect_right(times, t_ms) - 1
        return self.keyframes[max(i, 0)][1]


@dataclass(frozen=True)
class TwinConfig:
    fit: CubicFit
    host: str = "127.0.0.1"
    port: int = 1502
    poll_hz: float = DEFAULT_POLL_HZ
    lengths: tuple[float, float, float, float] = DEFAULT_LENGTHS_MM
    phis: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)  # radians
    mount: GripperMount = field(default_factory=GripperMount.identity)
    flange: FlangeSource = field(
        default_factory=lambda: FlangeSource.static(FlangePose.identity()))
    angle_mode: str = "cumulative"

    def __post_init__(self) -> None:
        if not POLL_HZ_MIN <= self.poll_hz <= POLL_HZ_MAX:
            raise ConfigError(
                f"poll_hz {self.poll_hz} outside {POLL_HZ_MIN}..{POLL_HZ_MAX}")
        if self.angle_mode not in ANGLE_MODES:
            raise ConfigError(f"angle mode {self.angle_mode!r} not in {ANGLE_MODES}")
        if len(self.lengths) != 4 or len(self.phis) != 4:
            raise ConfigError("lengths and phis must each have 4 entries")

    def to_dict(self) -> dict:
        return {
            "controller": {"host": self.host, "port": self.port},
            "poll_hz": self.poll_hz,
            "fit": self.fit.to_dict(),
            "lengths_mm": list(self.lengths),
            "phis_deg": [math.degrees(p) for p in self.phis],
            "angles": self.angle_mode,
            "mount": self.mount.matrix.tolist(),
            "flange_keyframes": len(self.flange.keyframes),
        }


def load_twin_config(path: str) -> TwinConfig:
    """Read twin configuration JSON; relative paths resolve against it."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        fit_field = raw["fit"]
    except KeyError:
        raise ConfigError("twin config requires a 'fit' entry") from None
    fit = (load_fit_json(resolve(fit_field)) if isinstance(fit_field, str)
           else CubicFit.from_dict(fit_field))

    controller = raw.get("controller", {})
    kwargs: dict = {
        "fit": fit,
        "host": controller.get("host", "127.0.0.1"),
        "port": int(controller.get("port", 1502)),
        "poll_hz": float(raw.get("poll_hz", DEFAULT_POLL_HZ)),
        "angle_mode": raw.get("angles", "cumulative"),
    }
    if "lengths_mm" in raw:
        kwargs["lengths"] = tuple(float(v) for v in raw["lengths_mm"])
    if "phis_deg" in raw:
        kwargs["phis"] = tuple(math.radians(float(v)) for v in raw["phis_deg"])
    if "mount" in raw:
        kwargs["mount"] = GripperMount(np.array(raw["mount"], dtype=float))
    if "flange" in raw and "flange_trajectory" in raw:
        raise ConfigError("give either 'flange' or 'flange_trajectory', not both")
    if "flange" in raw:
        f = raw["flange"]
        kwargs["flange"] = FlangeSource.static(
            FlangePose(tuple(f["translation"]), tuple(f["quaternion"])))
    elif "flange_trajectory" in raw:
        kwargs["flange"] = FlangeSource.from_csv(resolve(raw["flange_trajectory"]))
    try:
        return TwinConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class TwinState:
    timestamp_ms: float
    pressure_kpa: float
    thetas_deg: tuple[float, float, float, float]
    kappas: tuple[float, float, float, float]      # 1/mm
    end_pose: np.ndarray                           # 4x4, read-only
    flange_pose: FlangePose
    extrapolated: bool
    controller_faults: int
    link_ok: bool
    pipeline_fault: str | None = None

    def __post_init__(self) -> None:
        pose = np.asarray(self.end_pose, dtype=float).reshape(4, 4)
        pose.flags.writeable = False
        object.__setattr__(self, "end_pose", pose)

    @property
    def tip_position(self) -> tuple[float, float, float]:
        return tuple(float(v) for v in self.end_pose[:3, 3])

    @property
    def tip_quaternion(self) -> tuple[float, float, float, float]:
        return matrix_to_quaternion(self.end_pose[:3, :3])

    def to_dict(self) -> dict:
        return {
            "timestamp_ms": self.timestamp_ms,
            "pressure_kpa": self.pressure_kpa,
            "thetas_deg": list(self.thetas_deg),
            "kappas": list(self.kappas),
            "end_pose": self.end_pose.tolist(),
            "tip_position": list(self.tip_position),
            "tip_quaternion": list(self.tip_quaternion),
            "flange": {
                "translation": list(self.flange_pose.translation),
                "quaternion": list(self.flange_pose.quaternion),
            },
            "extrapolated": self.extrapolated,
            "controller_faults": self.controller_faults,
            "link_ok": self.link_ok,
            "pipeline_fault": self.pipeline_fault,
        }

    def to_csv_row(self) -> list[str]:
        x, y, z = self.tip_position
        qw, qx, qy, qz = self.tip_quaternion
        floats = [self.timestamp_ms, self.pressure_kpa,
                  *self.thetas_deg, *self.kappas, x, y, z, qw, qx, qy, qz]
        return [repr(float(v)) for v in floats] + [
            str(int(self.extrapolated)),
            str(self.controller_faults),
            str(int(self.link_ok)),
        ]


def section_angles(thetas_deg, angle_mode: str) -> np.ndarray:
    """Per-section bending in degrees from the measured angle vector.

    Cumulative measurements are differenced (each angle includes all
    sections below it); incremental ones pass through.
    """
    thetas = np.asarray(thetas_deg, dtype=float)
    if angle_mode == "cumulative":
        return np.diff(thetas, prepend=0.0)
    if angle_mode == "incremental":
        return thetas.copy()
    raise ConfigError(f"angle mode {angle_mode!r} not in {ANGLE_MODES}")


def pipeline_step(pressure_kpa: float, cfg: TwinConfig, *,
                  timestamp_ms: float = 0.0, controller_faults: int = 0,
                  link_ok: bool = True) -> TwinState:
    """One deterministic pass from pressure to end pose."""
    thetas, extrapolated = predict_thetas(cfg.fit, pressure_kpa)
    per_section = section_angles(thetas, cfg.angle_mode)
    config = thetas_to_config(np.deg2rad(per_section), phis=cfg.phis,
                              lengths=cfg.lengths)
    flange = cfg.flange.at(timestamp_ms)
    pose = end_effector(flange, config, cfg.mount)
    return TwinState(
        timestamp_ms=timestamp_ms,
        pressure_kpa=pressure_kpa,
        thetas_deg=tuple(float(t) for t in thetas),
        kappas=tuple(s.kappa for s in config.sections),
        end_pose=pose,
        flange_pose=flange,
        extrapolated=extrapolated,
        controller_faults=controller_faults,
        link_ok=link_ok,
    )


@dataclass(frozen=True)
class PoseError:
    reference_mm: tuple[float, float, float]
    computed_mm: tuple[float, float, float]
    error_percent: float


def evaluate_pose_error(state: TwinState,
                        reference_mm: tuple[float, float, float]) -> PoseError:
    """Relative tip position error E = |computed - reference| / |reference|."""
    reference = np.asarray(reference_mm, dtype=float).reshape(3)
    norm = float(np.linalg.norm(reference))
    if norm == 0.0:
        raise ValueError("reference position must be nonzero")
    computed = np.asarray(state.tip_position)
    error = float(np.linalg.norm(computed - reference) / norm * 100.0)
    return PoseError(tuple(float(v) for v in reference),
                     tuple(float(v) for v in computed), error)


@dataclass(frozen=True)
class CommandAck:
    ok: bool
    command: str
    register: int
    raw_value: int
    exception_code: int | None = None
    exception_name: str | None = None

    def to_dict(self) -> dict:
        d = {"ok": self.ok, "command": self.command,
             "register": self.register, "raw_value": self.raw_value}
        if not self.ok:
            d["exception_code"] = self.exception_code
            d["exception_name"] = self.exception_name
        return d


def command_to_write(command: str, value) -> WriteSingle:
    """Translate a named command to its register write; validates locally."""
    if command not in COMMAND_REGISTERS:
        raise ValueError(
            f"unknown command {command!r}, expected one of {sorted(COMMAND_REGISTERS)}")
    register = COMMAND_REGISTERS[command]
    if command in ("set_pos_trigger", "set_neg_trigger"):
        if not isinstance(value, (bool, int)) or value not in (0, 1, True, False):
            raise ValueError(f"{command} takes a boolean, got {value!r}")
        return WriteSingle(register, int(bool(value)))
    value = float(value)
    if command == "set_pos_target" and not 0.0 <= value <= PRESSURE_MAX_KPA:
        raise ValueError(
            f"set_pos_target {value} outside 0..{PRESSURE_MAX_KPA} kPa")
    if command == "set_neg_target" and not PRESSURE_MIN_KPA <= value <= 0.0:
        raise ValueError(
            f"set_neg_target {value} outside {PRESSURE_MIN_KPA}..0 kPa")
    return WriteSingle(register, pressure_to_register(value))


class ModbusTcpClient:
    """Blocking single-connection Modbus TCP client with transaction matching."""

    def __init__(self, host: str, port: int, timeout: float = 1.0):
        self._host = host
        self._port = port
        self._timeout = timeout
        self._sock: socket.socket | None = None
        self._assembler = FrameAssembler()
        self._txn = 0
        self._lock = threading.Lock()

    @property
    def connected(self) -> bool:
        return self._sock is not None

    def connect(self) -> None:
        with self._lock:
            if self._sock is not None:
                return
            sock = socket.create_connection((self._host, self._port),
                                            timeout=self._timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
            self._assembler = FrameAssembler()

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None

    def request(self, pdu: Pdu) -> Pdu:
        """Send one request and return its matching response PDU."""
        with self._lock:
            if self._sock is None:
                raise LinkDownError("not connected")
            self._txn = (self._txn + 1) & 0xFFFF
            txn = self._txn
            try:
                self._sock.sendall(encode_frame(MbapHeader(txn), pdu))
                while True:
                    data = self._sock.recv(4096)
                    if not data:
                        raise OSError("connection closed by peer")
                    for header, response in self._assembler.feed(data):
                        if header.transaction_id == txn:
                            return response
                        # stale responses from before a timeout are skipped
            except OSError:
                self._sock.close()
                self._sock = None
                raise

    def read_registers(self, address: int, count: int) -> tuple[int, ...]:
        response = self.request(ReadHoldingRequest(address, count))
        if isinstance(response, ExceptionResponse):
            raise ModbusError(
                f"read of {count}@{address:#06x} failed with code {response.code}")
        if not isinstance(response, ReadHoldingResponse):
            raise ModbusError(f"unexpected response {response!r}")
        return response.values


class TwinEngine:
    """Poll loop, snapshot publication, and the command path."""

    def __init__(self, config: TwinConfig):
        self.config = config
        self._client = ModbusTcpClient(config.host, config.port)
        self._cond = threading.Condition()
        self._latest: TwinState | None = None
        self._seq = 0
        self._stop_event = threading.Event()
        self._thread: threading.Thread | None = None
        self._epoch = time.monotonic()

    # -- snapshot plumbing ---------------------------------------------------

    def state(self) -> TwinState | None:
        with self._cond:
            return self._latest

    def state_seq(self) -> int:
        with self._cond:
            return self._seq

    def next_state(self, after_seq: int, timeout: float | None = None
                   ) -> tuple[int, TwinState] | None:
        """Block until a snapshot newer than after_seq exists; None on timeout."""
        with self._cond:
            if not self._cond.wait_for(
                    lambda: self._seq > after_seq, timeout=timeout):
                return None
            return self._seq, self._latest

    def publish(self, state: TwinState) -> TwinState:
        with self._cond:
            if self._latest is not None and \
                    state.timestamp_ms <= self._latest.timestamp_ms:
                state = replace(
                    state, timestamp_ms=self._latest.timestamp_ms + 1e-3)
            self._latest = state
            self._seq += 1
            self._cond.notify_all()
            return state

    # -- command path ----------------------------------------------------------

    def command(self, command: str, value) -> CommandAck:
        """Validate, forward to the controller, and report its answer."""
        write = command_to_write(command, value)
        if not self._client.connected:
            raise LinkDownError("controller link is down")
        response = self._client.request(write)
        if isinstance(response, ExceptionResponse):
            return CommandAck(
                ok=False, command=command, register=write.address,
                raw_value=write.value, exception_code=response.code,
                exception_name=EXCEPTION_NAMES.get(response.code,
                                                   f"code {response.code}"))
        return CommandAck(ok=True, command=command,
                          register=write.address, raw_value=write.value)

    # -- poll loop ---------------------------------------------------------------

    def now_ms(self) -> float:
        return (time.monotonic() - self._epoch) * 1000.0

    def poll_once(self) -> TwinState:
        """One synchronous poll + pipeline pass (raises on link failure)."""
        self._client.connect()
        pressure_raw, faults = self._client.read_registers(REG_TRUE_PRESSURE, 2)
        return self.publish(self._build_state(
            register_to_pressure(pressure_raw), faults, link_ok=True))

    def _build_state(self, pressure: float, faults: int, link_ok: bool) -> TwinState:
        t_ms = self.now_ms()
        try:
            return pipeline_step(pressure, self.config, timestamp_ms=t_ms,
                                 controller_faults=faults, link_ok=link_ok)
        except (ValueError, ArithmeticError) as exc:
            # keep the loop alive: carry the fault and the last good pose
            last = self.state()
            pose = last.end_pose if last is not None else np.eye(4)
            flange = last.flange_pose if last is not None else FlangePose.identity()
            thetas = last.thetas_deg if last is not None else (0.0,) * 4
            kappas = last.kappas if last is not None else (0.0,) * 4
            return TwinState(
                timestamp_ms=t_ms, pressure_kpa=pressure, thetas_deg=thetas,
                kappas=kappas, end_pose=pose, flange_pose=flange,
                extrapolated=False, controller_faults=faults, link_ok=link_ok,
                pipeline_fault=str(exc))

    def _degraded_state(self) -> TwinState:
        last = self.state()
        t_ms = self.now_ms()
        if last is None:
            return TwinState(
                timestamp_ms=t_ms, pressure_kpa=0.0, thetas_deg=(0.0,) * 4,
                kappas=(0.0,) * 4, end_pose=np.eye(4),
                flange_pose=FlangePose.identity(), extrapolated=False,
                controller_faults=0, link_ok=False)
        return replace(last, timestamp_ms=t_ms, link_ok=False)

    def run_loop(self) -> None:
        """Poll at poll_hz until stopped; reconnect with capped backoff."""
        period = 1.0 / self.config.poll_hz
        backoff = RECONNECT_BACKOFF_START_S
        while not self._stop_event.is_set():
            started = time.monotonic()
            try:
                self.poll_once()
                backoff = RECONNECT_BACKOFF_START_S
            except (OSError, ModbusError, LinkDownError):
                self._client.close()
                self.publish(self._degraded_state())
                if self._stop_event.wait(backoff):
                    return
                backoff = min(backoff * 2.0, RECONNECT_BACKOFF_CAP_S)
                continue
            elapsed = time.monotonic() - started
            if self._stop_event.wait(max(period - elapsed, 0.0)):
                return

    def start(self) -> "TwinEngine":
        if self._thread is not None:
            raise RuntimeError("engine already started")
        self._stop_event.clear()
        self._thread = threading.Thread(target=self.run_loop,
                                        name="twin-poll", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop_event.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self._client.close()

    def __enter__(self) -> "TwinEngine":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def write_twin_csv(path: str, states: list[TwinState]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TWIN_CSV_HEADER)
        for state in states:
            writer.writerow(state.to_csv_row())


def read_twin_csv(path: str) -> list[dict]:
    """Read a recorded run back as dict rows with floats parsed."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TWIN_CSV_HEADER:
            raise ValueError(f"unexpected twin CSV header: {header}")
        rows = []
        for row in reader:
            if not row:
                continue
            values = dict(zip(TWIN_CSV_HEADER, row))
            parsed = {k: float(v) for k, v in values.items()}
            parsed["extrapolated"] = bool(int(values["extrapolated"]))
            parsed["controller_faults"] = int(values["controller_faults"])
            parsed["link_ok"] = bool(int(values["link_ok"]))
            rows.append(parsed)
    return rows
