"""Framed binary wire protocol between client and server.

Request frame:   opcode u8 | body_length u32 LE | body
Response frame:  status u8 | body_length u32 LE | body

Opcodes:
    INFO      0x01  empty body; response body is n u64 | entry_size u64 | mode u8
    STREAM    0x02  empty body; response body is the n * entry_size database image
    FETCH     0x03  body is 0-based u64 LE indices; response is their entries
    XOR_FETCH 0x04  body as FETCH; response is the XOR of the entries

Error responses carry status 0x01 and a u16 LE error code as the body.
Indices are 0-based on the wire; the 1-based math layer converts here, in
query_for_targets, and nowhere else.  The full byte-level contract lives
in protocol.md at the repository root.

Decoding is total: any byte string either decodes or raises FramingError.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field

from .errors import FramingError

OP_INFO = 0x01
OP_STREAM = 0x02
OP_FETCH = 0x03
OP_XOR_FETCH = 0x04

OPCODES = (OP_INFO, OP_STREAM, OP_FETCH, OP_XOR_FETCH)
OPCODE_NAMES = {
    OP_INFO: "INFO",
    OP_STREAM: "STREAM",
    OP_FETCH: "FETCH",
    OP_XOR_FETCH: "XOR_FETCH",
}

STATUS_OK = 0x00
STATUS_ERROR = 0x01

ERR_BAD_FRAME = 1
ERR_UNKNOWN_OPCODE = 2
ERR_BAD_LENGTH = 3
ERR_INDEX_OUT_OF_RANGE = 4
ERR_UNSUPPORTED_OPCODE = 5
ERR_TOO_MANY_INDICES = 6

ERROR_NAMES = {
    ERR_BAD_FRAME: "bad frame",
    ERR_UNKNOWN_OPCODE: "unknown opcode",
    ERR_BAD_LENGTH: "bad length",
    ERR_INDEX_OUT_OF_RANGE: "index out of range",
    ERR_UNSUPPORTED_OPCODE: "unsupported opcode in this mode",
    ERR_TOO_MANY_INDICES: "too many indices in one request",
}

FRAME_HEADER = struct.Struct("<BI")
INDEX_WIDTH = 8
_INFO_BODY = struct.Struct("<QQB")
_ERROR_BODY = struct.Struct("<H")

MODE_COOPERATIVE = 0
MODE_DEFAULT = 1
MODE_NAMES = {MODE_COOPERATIVE: "cooperative", MODE_DEFAULT: "default"}
MODE_CODES = {name: code for code, name in MODE_NAMES.items()}


@dataclass(frozen=True)
class QueryMessage:
    """One client request; indices are 0-based wire values."""

    opcode: int
    indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class ResponseMessage:
    """One server response: OK with payload, or an error code."""

    status: int
    payload: bytes = b""
    error_code: int | None = None


def query_for_targets(opcode: int, math_indices: list[int] | tuple[int, ...]) -> QueryMessage:
    """Build a request from 1-based math-layer indices.

    This is the single point where the 1-based world becomes 0-based wire
    values.
    """
    return QueryMessage(opcode, tuple(index - 1 for index in math_indices))


def encode_query(message: QueryMessage) -> bytes:
    if message.opcode not in OPCODES:
        raise FramingError(f"unknown opcode {message.opcode:#x}")
    body = b"".join(index.to_bytes(INDEX_WIDTH, "little") for index in message.indices)
    if message.opcode in (OP_INFO, OP_STREAM) and message.indices:
        raise FramingError("INFO and STREAM take no indices")
    return FRAME_HEADER.pack(message.opcode, len(body)) + body


def decode_query(data: bytes) -> QueryMessage:
    """Decode one full request frame.  Raises FramingError on any defect."""
    if len(data) < FRAME_HEADER.size:
        raise FramingError(f"frame is {len(data)} bytes, need {FRAME_HEADER.size}")
    opcode, length = FRAME_HEADER.unpack_from(data)
    body = data[FRAME_HEADER.size :]
    if len(body) != length:
        raise FramingError(f"declared {length} body bytes, got {len(body)}")
    if opcode not in OPCODES:
        raise FramingError(f"unknown opcode {opcode:#x}")
    if opcode in (OP_INFO, OP_STREAM):
        if body:
            raise FramingError(f"{OPCODE_NAMES[opcode]} body must be empty")
        return QueryMessage(opcode)
    if length % INDEX_WIDTH != 0:
        raise FramingError(f"index body length {length} not a multiple of 8")
    indices = tuple(
        int.from_bytes(body[offset : offset + INDEX_WIDTH], "little")
        for offset in range(0, length, INDEX_WIDTH)
    )
    return QueryMessage(opcode, indices)


def encode_response(message: ResponseMessage) -> bytes:
    if message.status == STATUS_OK:
        return FRAME_HEADER.pack(STATUS_OK, len(message.payload)) + message.payload
    if message.status == STATUS_ERROR:
        if message.error_code is None:
            raise FramingError("error response without an error code")
        body = _ERROR_BODY.pack(message.error_code)
        return FRAME_HEADER.pack(STATUS_ERROR, len(body)) + body
    raise FramingError(f"unknown status {message.status:#x}")


def decode_response(data: bytes) -> ResponseMessage:
    """Decode one full response frame.  Raises FramingError on any defect."""
    if len(data) < FRAME_HEADER.size:
        raise FramingError(f"frame is {len(data)} bytes, need {FRAME_HEADER.size}")
    status, length = FRAME_HEADER.unpack_from(data)
    body = data[FRAME_HEADER.size :]
    if len(body) != length:
        raise FramingError(f"declared {length} body bytes, got {len(body)}")
    if status == STATUS_OK:
        return ResponseMessage(STATUS_OK, payload=bytes(body))
    if status == STATUS_ERROR:
        if length != _ERROR_BODY.size:
            raise FramingError(f"error body must be 2 bytes, got {length}")
        (code,) = _ERROR_BODY.unpack(body)
        return ResponseMessage(STATUS_ERROR, error_code=code)
    raise FramingError(f"unknown status {status:#x}")


def error_response(code: int) -> ResponseMessage:
    return ResponseMessage(STATUS_ERROR, error_code=code)


def info_payload(num_entries: int, entry_size: int, mode: str) -> bytes:
    return _INFO_BODY.pack(num_entries, entry_size, MODE_CODES[mode])


def parse_info(payload: bytes) -> tuple[int, int, str]:
    """(num_entries, entry_size, mode) from an INFO response payload."""
    if len(payload) != _INFO_BODY.size:
        raise FramingError(f"INFO payload must be {_INFO_BODY.size} bytes")
    num_entries, entry_size, mode_code = _INFO_BODY.unpack(payload)
    mode = MODE_NAMES.get(mode_code)
    if mode is None:
        raise FramingError(f"unknown mode code {mode_code}")
    return num_entries, entry_size, mode


# -- socket helpers --------------------------------------------------------


def recv_exact(sock: socket.socket, count: int) -> bytes:
    """Read exactly count bytes or raise ConnectionError on early EOF."""
    chunks = []
    remaining = count
    while remaining > 0:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    """Read one full frame (header plus body) from a socket."""
    header = recv_exact(sock, FRAME_HEADER.size)
    _, length = FRAME_HEADER.unpack(header)
    return header + (recv_exact(sock, length) if length else b"")


# -- transcripts -----------------------------------------------------------


@dataclass
class Transcript:
    """Ordered record of what went over the wire, as an observer sees it."""

    entries: list[tuple[QueryMessage, int]] = field(default_factory=list)

    def append(self, message: QueryMessage, response_payload_bytes: int):
        self.entries.append((message, response_payload_bytes))

    @property
    def uploaded_payload_bytes(self) -> int:
        return sum(len(m.indices) * INDEX_WIDTH for m, _ in self.entries)

    @property
    def downloaded_payload_bytes(self) -> int:
        return sum(size for _, size in self.entries)

    def __len__(self) -> int:
        return len(self.entries)
