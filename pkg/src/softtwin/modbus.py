"""Modbus TCP codec: MBAP framing, PDU encode/decode, stream reassembly.

Supports holding-register traffic only (0x03 read, 0x06 write single,
0x10 write multiple) plus exception responses, big-endian throughout.
The codec is pure; FrameAssembler holds per-connection buffering state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

FUNC_READ_HOLDING = 0x03
FUNC_WRITE_SINGLE = 0x06
FUNC_WRITE_MULTIPLE = 0x10
SUPPORTED_FUNCTIONS = (FUNC_READ_HOLDING, FUNC_WRITE_SINGLE, FUNC_WRITE_MULTIPLE)

EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_DATA_ADDRESS = 0x02
EXC_ILLEGAL_DATA_VALUE = 0x03

MAX_FRAME = 260                  # MBAP + PDU
MAX_READ_COUNT = 125
MAX_WRITE_COUNT = 123

MBAP_SIZE = 7
_MBAP = struct.Struct(">HHHB")


class ModbusError(Exception):
    pass


class EncodeError(ModbusError):
    pass


class DecodeError(ModbusError):
    pass


class NeedMoreData(DecodeError):
    """Frame incomplete; `missing` is the exact byte count still required."""

    def __init__(self, missing: int):
        super().__init__(f"need {missing} more bytes")
        self.missing = missing


class ProtocolError(DecodeError):
    """MBAP protocol id was nonzero; the stream cannot be resynced."""


class FrameTooLong(DecodeError):
    """MBAP length implies a frame beyond the 260-byte Modbus TCP maximum."""


class FrameError(DecodeError):
    """Frame-local decode error; the frame boundary is known and skippable."""

    def __init__(self, message: str, header: "MbapHeader", function: int, consumed: int):
        super().__init__(message)
        self.header = header
        self.function = function
        self.consumed = consumed


class UnsupportedFunction(FrameError):
    pass


class SchemaError(FrameError):
    """Payload does not match the function code's schema."""


@dataclass(frozen=True)
class MbapHeader:
    transaction_id: int
    unit_id: int = 1
    protocol_id: int = 0


@dataclass(frozen=True)
class ReadHoldingRequest:
    address: int
    count: int
    function = FUNC_READ_HOLDING


@dataclass(frozen=True)
class ReadHoldingResponse:
    values: tuple[int, ...]
    function = FUNC_READ_HOLDING


@dataclass(frozen=True)
class WriteSingle:
    """0x06 request and its echo response share one layout."""

    address: int
    value: int
    function = FUNC_WRITE_SINGLE


@dataclass(frozen=True)
class WriteMultipleRequest:
    address: int
    values: tuple[int, ...]
    function = FUNC_WRITE_MULTIPLE


@dataclass(frozen=True)
class WriteMultipleResponse:
    address: int
    count: int
    function = FUNC_WRITE_MULTIPLE


@dataclass(frozen=True)
class ExceptionResponse:
    function: int       # the failing request's function code
    code: int           # Modbus exception code


Pdu = (ReadHoldingRequest | ReadHoldingResponse | WriteSingle
       | WriteMultipleRequest | WriteMultipleResponse | ExceptionResponse)


def _check_u16(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= 0xFFFF:
        raise EncodeError(f"{name} {value} out of u16 range")
    return value


def encode_pdu(pdu: Pdu) -> bytes:
    if isinstance(pdu, ReadHoldingRequest):
        if not 1 <= pdu.count <= MAX_READ_COUNT:
            raise EncodeError(f"read count {pdu.count} outside 1..{MAX_READ_COUNT}")
        return struct.pack(">BHH", FUNC_READ_HOLDING,
                           _check_u16("address", pdu.address), pdu.count)
    if isinstance(pdu, ReadHoldingResponse):
        n = len(pdu.values)
        if not 1 <= n <= MAX_READ_COUNT:
            raise EncodeError(f"read response with {n} registers")
        return struct.pack(">BB", FUNC_READ_HOLDING, 2 * n) + b"".join(
            struct.pack(">H", _check_u16("value", v)) for v in pdu.values)
    if isinstance(pdu, WriteSingle):
        return struct.pack(">BHH", FUNC_WRITE_SINGLE,
                           _check_u16("address", pdu.address),
                           _check_u16("value", pdu.value))
    if isinstance(pdu, WriteMultipleRequest):
        n = len(pdu.values)
        if not 1 <= n <= MAX_WRITE_COUNT:
            raise EncodeError(f"write count {n} outside 1..{MAX_WRITE_COUNT}")
        return struct.pack(">BHHB", FUNC_WRITE_MULTIPLE,
                           _check_u16("address", pdu.address), n, 2 * n) + b"".join(
            struct.pack(">H", _check_u16("value", v)) for v in pdu.values)
    if isinstance(pdu, WriteMultipleResponse):
        if not 1 <= pdu.count <= MAX_WRITE_COUNT:
            raise EncodeError(f"write count {pdu.count} outside 1..{MAX_WRITE_COUNT}")
        return struct.pack(">BHH", FUNC_WRITE_MULTIPLE,
                           _check_u16("address", pdu.address), pdu.count)
    if isinstance(pdu, ExceptionResponse):
        if not 1 <= pdu.function <= 0x7F:
            raise EncodeError(f"exception function {pdu.function:#x} outside 0x01..0x7F")
        if not 1 <= pdu.code <= 0xFF:
            raise EncodeError(f"exception code {pdu.code} out of range")
        return struct.pack(">BB", pdu.function | 0x80, pdu.code)
    raise EncodeError(f"cannot encode {type(pdu).__name__}")


def encode_frame(header: MbapHeader, pdu: Pdu) -> bytes:
    if header.protocol_id != 0:
        raise EncodeError(f"protocol id must be 0, got {header.protocol_id}")
    if not 0 <= header.unit_id <= 0xFF:
        raise EncodeError(f"unit id {header.unit_id} out of u8 range")
    body = encode_pdu(pdu)
    return _MBAP.pack(_check_u16("transaction id", header.transaction_id),
                      0, len(body) + 1, header.unit_id) + body


def decode_frame(buf: bytes | bytearray | memoryview) -> tuple[MbapHeader, Pdu, int]:
    """Decode one frame from the head of buf; returns (header, pdu, consumed).

    Raises NeedMoreData with the exact shortfall for partial frames,
    ProtocolError/FrameTooLong when the stream itself is broken, and
    UnsupportedFunction/SchemaError (both carrying the frame boundary)
    for well-framed but undecodable PDUs.
    """
    buf = bytes(buf)
    if len(buf) < MBAP_SIZE:
        raise NeedMoreData(MBAP_SIZE - len(buf))
    txn, proto, length, unit = _MBAP.unpack_from(buf)
    if proto != 0:
        raise ProtocolError(f"protocol id {proto}, expected 0")
    if length + 6 > MAX_FRAME:
        raise FrameTooLong(f"MBAP length {length} exceeds the {MAX_FRAME}-byte frame limit")
    total = 6 + length
    if len(buf) < total:
        raise NeedMoreData(total - len(buf))
    header = MbapHeader(transaction_id=txn, unit_id=unit)
    if length < 2:
        raise SchemaError(f"MBAP length {length} leaves no PDU", header, 0, total)
    function = buf[7]
    payload = buf[8:total]

    def schema(msg: str) -> SchemaError:
        return SchemaError(msg, header, function & 0x7F, total)

    if function == FUNC_READ_HOLDING:
        if len(payload) == 4:
            address, count = struct.unpack(">HH", payload)
            if not 1 <= count <= MAX_READ_COUNT:
                raise schema(f"read count {count} outside 1..{MAX_READ_COUNT}")
            return header, ReadHoldingRequest(address, count), total
        if len(payload) >= 1:
            byte_count = payload[0]
            if (byte_count == len(payload) - 1 and byte_count % 2 == 0
                    and 2 <= byte_count <= 2 * MAX_READ_COUNT):
                values = struct.unpack(f">{byte_count // 2}H", payload[1:])
                return header, ReadHoldingResponse(values), total
        raise schema("malformed read-holding payload")
    if function == FUNC_WRITE_SINGLE:
        if len(payload) != 4:
            raise schema("write-single payload must be 4 bytes")
        address, value = struct.unpack(">HH", payload)
        return header, WriteSingle(address, value), total
    if function == FUNC_WRITE_MULTIPLE:
        if len(payload) == 4:
            address, count = struct.unpack(">HH", payload)
            if not 1 <= count <= MAX_WRITE_COUNT:
                raise schema(f"write count {count} outside 1..{MAX_WRITE_COUNT}")
            return header, WriteMultipleResponse(address, count), total
        if len(payload) >= 5:
            address, count, byte_count = struct.unpack(">HHB", payload[:5])
            if (1 <= count <= MAX_WRITE_COUNT and byte_count == 2 * count
                    and len(payload) == 5 + byte_count):
                values = struct.unpack(f">{count}H", payload[5:])
                return header, WriteMultipleRequest(address, values), total
        raise schema("malformed write-multiple payload")
    if function & 0x80 and function & 0x7F:
        if len(payload) != 1:
            raise schema("exception payload must be 1 byte")
        return header, ExceptionResponse(function & 0x7F, payload[0]), total
    raise UnsupportedFunction(f"function code {function:#04x} unsupported",
                              header, function, total)


class FrameAssembler:
    """Per-connection streaming reassembler; never shared across connections."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[MbapHeader, Pdu]]:
        """Buffer data and return every complete frame now decodable.

        Frame-local errors (UnsupportedFunction, SchemaError) propagate after
        consuming the offending frame so the caller can answer and continue;
        ProtocolError/FrameTooLong propagate with the buffer left as-is since
        the stream has no recoverable framing.
        """
        self._buf.extend(data)
        frames = []
        while True:
            try:
                header, pdu, consumed = decode_frame(self._buf)
            except NeedMoreData:
                return frames
            except FrameError as exc:
                del self._buf[:exc.consumed]
                exc.pending = frames  # type: ignore[attr-defined]
                raise
            frames.append((header, pdu))
            del self._buf[:consumed]

    def pending_bytes(self) -> int:
        return len(self._buf)


def pressure_to_register(kpa: float) -> int:
    """Encode kPa as a signed 0.1-kPa register (two's complement u16)."""
    if not -3276.7 <= kpa <= 3276.7:
        raise EncodeError(f"pressure {kpa} kPa outside +/-3276.7 range")
    magnitude = int(abs(kpa) * 10.0 + 0.5)  # half away from zero
    raw = magnitude if kpa >= 0 else -magnitude
    return raw & 0xFFFF


def register_to_pressure(raw: int) -> float:
    raw &= 0xFFFF
    if raw >= 0x8000:
        raw -= 0x10000
    return raw / 10.0
