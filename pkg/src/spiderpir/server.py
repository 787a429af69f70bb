"""PIR server: request handling core plus a threaded TCP front end.

Two modes:

    cooperative  answers XOR_FETCH by XORing the requested entries into a
                 single entry-sized word (one instruction's worth of help);
    default      a plain storage server: FETCH only, XOR_FETCH is rejected
                 with an unsupported-opcode error, and the XOR instruction
                 counter stays at zero by construction.

The server is stateless across requests and never writes to the database;
both properties are load-bearing for the privacy story and are asserted by
tests.  Requests containing repeated indices are served per occurrence
(multisets are legal on the wire).
"""

from __future__ import annotations

import logging
import math
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import protocol
from .database import Database
from .errors import ParameterError
from .protocol import QueryMessage, ResponseMessage
from .utils import xor_bytes, zero_entry

logger = logging.getLogger(__name__)

MODES = ("cooperative", "default")


def answer_fetch(db: Database, indices: tuple[int, ...]) -> bytes:
    """Entries for 0-based indices, concatenated in request order."""
    return b"".join(db.entry(index) for index in indices)


def answer_xor_fetch(db: Database, indices: tuple[int, ...]) -> bytes:
    """XOR of the entries at 0-based indices; zeros for an empty request."""
    accumulator = zero_entry(db.entry_size)
    for index in indices:
        accumulator = xor_bytes(accumulator, db.entry(index))
    return accumulator


@dataclass
class ServerConfig:
    db_path: str | Path
    mode: str = "cooperative"
    host: str = "127.0.0.1"
    port: int = 0
    max_indices: int | None = None  # defaults to 4 * ceil(sqrt(n))
    io_bytes_per_ms: float | None = None  # simulate storage throughput

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")


class ServerCore:
    """Mode-aware request handler over a loaded database.

    Thread-safe: the database is immutable and counters take a lock.
    xor_ops counts XOR instructions executed on entry words; entries_read
    counts entry fetches.  In default mode xor_ops can never move.
    """

    def __init__(
        self,
        db: Database,
        mode: str = "cooperative",
        max_indices: int | None = None,
    ):
        if mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
        self.db = db
        self.mode = mode
        if max_indices is None:
            max_indices = 4 * math.isqrt(db.num_entries - 1) + 4
        self.max_indices = max_indices
        self.xor_ops = 0
        self.entries_read = 0
        self._counter_lock = threading.Lock()

    def handle_query(self, message: QueryMessage) -> ResponseMessage:
        """Answer INFO, FETCH, or XOR_FETCH.  STREAM is the transport's job."""
        if message.opcode == protocol.OP_INFO:
            return ResponseMessage(
                protocol.STATUS_OK,
                payload=protocol.info_payload(
                    self.db.num_entries, self.db.entry_size, self.mode
                ),
            )
        if message.opcode == protocol.OP_STREAM:
            return ResponseMessage(protocol.STATUS_OK, payload=self.db.blob)
        if message.opcode not in (protocol.OP_FETCH, protocol.OP_XOR_FETCH):
            return protocol.error_response(protocol.ERR_UNKNOWN_OPCODE)
        if message.opcode == protocol.OP_XOR_FETCH and self.mode == "default":
            return protocol.error_response(protocol.ERR_UNSUPPORTED_OPCODE)
        if len(message.indices) > self.max_indices:
            return protocol.error_response(protocol.ERR_TOO_MANY_INDICES)
        for index in message.indices:
            if index >= self.db.num_entries:
                return protocol.error_response(protocol.ERR_INDEX_OUT_OF_RANGE)

        if message.opcode == protocol.OP_FETCH:
            payload = answer_fetch(self.db, message.indices)
            with self._counter_lock:
                self.entries_read += len(message.indices)
            return ResponseMessage(protocol.STATUS_OK, payload=payload)

        payload = answer_xor_fetch(self.db, message.indices)
        with self._counter_lock:
            self.entries_read += len(message.indices)
            self.xor_ops += len(message.indices)
        return ResponseMessage(protocol.STATUS_OK, payload=payload)

    def request_bytes_read(self, message: QueryMessage) -> int:
        return len(message.indices) * self.db.entry_size


class TcpPirServer:
    """Threaded TCP server speaking the framed protocol.

    One thread per connection; connections are independent sessions and
    share nothing but the immutable database and the counters.
    """

    def __init__(self, config: ServerConfig):
        self.config = config
        self.db = Database.load(config.db_path)
        self.core = ServerCore(self.db, config.mode, config.max_indices)
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._running = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server not started")
        return self._listener.getsockname()[:2]

    def start(self) -> "TcpPirServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.config.host, self.config.port))
        listener.listen(64)
        self._listener = listener
        self._running.set()
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="pir-accept", daemon=True
        )
        self._accept_thread.start()
        logger.info(
            "serving %s mode on %s:%d (n=%d, entry_size=%d)",
            self.config.mode,
            *self.address,
            self.db.num_entries,
            self.db.entry_size,
        )
        return self

    def stop(self):
        self._running.clear()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)

    def __enter__(self) -> "TcpPirServer":
        return self.start()

    def __exit__(self, *exc_info):
        self.stop()

    def serve_forever(self):
        """Block until stop() is called from another thread or a signal."""
        self.start()
        try:
            while self._running.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            logger.info("interrupted, shutting down")
        finally:
            self.stop()

    def _accept_loop(self):
        assert self._listener is not None
        while self._running.is_set():
            try:
                conn, peer = self._listener.accept()
            except OSError:
                break
            thread = threading.Thread(
                target=self._serve_connection,
                args=(conn, peer),
                name=f"pir-conn-{peer[1]}",
                daemon=True,
            )
            thread.start()

    def _simulate_io(self, num_bytes: int):
        throughput = self.config.io_bytes_per_ms
        if throughput and num_bytes:
            time.sleep(num_bytes / throughput / 1000.0)

    def _serve_connection(self, conn: socket.socket, peer):
        logger.debug("connection from %s:%d", *peer)
        with conn:
            while self._running.is_set():
                try:
                    frame = protocol.read_frame(conn)
                except (ConnectionError, OSError):
                    break
                try:
                    message = protocol.decode_query(frame)
                except protocol.FramingError:
                    conn.sendall(
                        protocol.encode_response(
                            protocol.error_response(protocol.ERR_BAD_FRAME)
                        )
                    )
                    continue
                if message.opcode == protocol.OP_STREAM:
                    self._simulate_io(len(self.db.blob))
                    header = protocol.FRAME_HEADER.pack(
                        protocol.STATUS_OK, len(self.db.blob)
                    )
                    conn.sendall(header)
                    for chunk in self.db.chunks():
                        conn.sendall(chunk)
                    continue
                response = self.core.handle_query(message)
                if response.status == protocol.STATUS_OK:
                    self._simulate_io(self.core.request_bytes_read(message))
                conn.sendall(protocol.encode_response(response))
        logger.debug("connection from %s:%d closed", *peer)
