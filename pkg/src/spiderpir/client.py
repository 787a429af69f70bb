"""PIR client: transports, the query state machine, and phase running.

The client holds all the state (hint pool, cache, shadow generation); the
server sees only fixed-shape requests.  Per query the wire carries exactly
k-1 indices up and, depending on server mode, either one entry-sized word
(cooperative XOR_FETCH) or k-1 entries (default FETCH) down.  Cache hits
touch the wire not at all, and queries for uncovered indices emit a dummy
request of identical shape so the transcript never distinguishes them.
"""

from __future__ import annotations

import logging
import socket
from dataclasses import dataclass, field

from . import protocol
from .errors import (
    CoverageError,
    NetworkError,
    ParameterError,
    ProtocolError,
)
from .hints import CacheHit, CoveringHint, HintPool, RefreshReport, UncoveredEntry, preprocess
from .params import CoverageParams, compute_params
from .protocol import QueryMessage, ResponseMessage, Transcript
from .server import ServerCore
from .utils import xor_bytes, zero_entry

logger = logging.getLogger(__name__)


class Transport:
    """Request/response plus bulk streaming; concrete in Tcp/Local below."""

    def request(self, message: QueryMessage) -> ResponseMessage:
        raise NotImplementedError

    def close(self):
        pass


class TcpTransport(Transport):
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise NetworkError(f"cannot connect to {host}:{port}: {exc}") from exc

    def request(self, message: QueryMessage) -> ResponseMessage:
        try:
            self._sock.sendall(protocol.encode_query(message))
            frame = protocol.read_frame(self._sock)
        except OSError as exc:
            raise NetworkError(f"request failed: {exc}") from exc
        return protocol.decode_response(frame)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class LocalTransport(Transport):
    """In-process transport over a ServerCore, for tests and the harness."""

    def __init__(self, core: ServerCore):
        self.core = core

    def request(self, message: QueryMessage) -> ResponseMessage:
        return self.core.handle_query(message)


@dataclass
class QueryRecord:
    """Accounting for one logical client query."""

    target: int  # 1-based
    outcome: str  # "hint", "cache", "uncovered"
    uploaded_payload_bytes: int
    downloaded_payload_bytes: int


@dataclass
class PhaseReport:
    queries: int = 0
    correct: int | None = None
    uploaded_payload_bytes: int = 0
    downloaded_payload_bytes: int = 0
    refresh: RefreshReport | None = None


class ClientSession:
    """One client against one server.

    Wire activity is recorded twice: `transcript` logs every message as an
    observer would see it, and `records` logs per-logical-query accounting
    (cache hits appear here with zero bytes but never in the transcript).
    """

    def __init__(self, transport: Transport):
        self.transport = transport
        num_entries, entry_size, mode = protocol.parse_info(
            self._request_ok(QueryMessage(protocol.OP_INFO))
        )
        self.num_entries = num_entries
        self.entry_size = entry_size
        self.mode = mode
        self.pool: HintPool | None = None
        self.transcript = Transcript()
        self.records: list[QueryRecord] = []

    # -- plumbing ----------------------------------------------------------

    def _request_ok(self, message: QueryMessage) -> bytes:
        response = self.transport.request(message)
        if response.status != protocol.STATUS_OK:
            name = protocol.ERROR_NAMES.get(response.error_code, "unknown error")
            raise ProtocolError(
                f"server rejected {protocol.OPCODE_NAMES[message.opcode]}: {name}"
            )
        return response.payload

    def _wire_query(self, message: QueryMessage, expected_bytes: int) -> bytes:
        payload = self._request_ok(message)
        if len(payload) != expected_bytes:
            raise ProtocolError(
                f"expected {expected_bytes} payload bytes, got {len(payload)}"
            )
        self.transcript.append(message, len(payload))
        return payload

    # -- setup -------------------------------------------------------------

    def stream_entries(self):
        """Stream the database, yielding (1-based index, entry)."""
        payload = self._request_ok(QueryMessage(protocol.OP_STREAM))
        expected = self.num_entries * self.entry_size
        if len(payload) != expected:
            raise ProtocolError(
                f"stream was {len(payload)} bytes, expected {expected}"
            )
        for index in range(self.num_entries):
            start = index * self.entry_size
            yield index + 1, payload[start : start + self.entry_size]

    def run_preprocessing(
        self,
        master_seed: int,
        coverage_constant: float = 4.0,
        delta_slack: float = 0.6,
        params: CoverageParams | None = None,
        build_next_generation: bool = True,
    ) -> HintPool:
        """Stream the database once and build the hint pool."""
        if params is None:
            params = compute_params(
                self.num_entries,
                self.entry_size,
                coverage_constant=coverage_constant,
                delta_slack=delta_slack,
            )
        elif (
            params.num_entries != self.num_entries
            or params.entry_size != self.entry_size
        ):
            raise ParameterError("params do not match the server's database")
        self.pool = preprocess(
            self.stream_entries(),
            params,
            master_seed,
            build_next_generation=build_next_generation,
        )
        return self.pool

    def attach_pool(self, pool: HintPool):
        if (
            pool.params.num_entries != self.num_entries
            or pool.params.entry_size != self.entry_size
        ):
            raise ParameterError("pool does not match the server's database")
        self.pool = pool

    # -- the query path ------------------------------------------------------

    def _require_pool(self) -> HintPool:
        if self.pool is None:
            raise ParameterError("no hint pool attached; preprocess first")
        return self.pool

    def _retrieve_with_hint(self, handle: int, index: int) -> bytes:
        """Send the redacted hint and reconstruct the entry at index."""
        pool = self._require_pool()
        redacted = pool.redacted_for(handle, index)
        hint_parity = pool.hints[handle].parity
        if self.mode == "cooperative":
            message = protocol.query_for_targets(protocol.OP_XOR_FETCH, redacted)
            payload = self._wire_query(message, self.entry_size)
            value = xor_bytes(payload, hint_parity)
        else:
            message = protocol.query_for_targets(protocol.OP_FETCH, redacted)
            payload = self._wire_query(message, len(redacted) * self.entry_size)
            value = hint_parity
            for offset in range(0, len(payload), self.entry_size):
                value = xor_bytes(value, payload[offset : offset + self.entry_size])
            for position, returned_index in enumerate(redacted):
                entry = payload[
                    position * self.entry_size : (position + 1) * self.entry_size
                ]
                pool.ingest_for_next_generation(returned_index, entry)
        pool.consume_and_replenish(handle, index, value)
        pool.cache_entry(index, value)
        return value

    def query(self, index: int) -> bytes:
        """Retrieve the entry at a 1-based index, privately.

        Refreshes the phase first if its consumption budget is spent.
        Cache hits are free; uncovered indices run a dummy hint query so
        the wire shape is indistinguishable from the covered case.
        """
        pool = self._require_pool()
        if pool.queries_this_phase >= pool.params.hint_size:
            self.refresh()
            pool = self._require_pool()

        before_up = self.transcript.uploaded_payload_bytes
        before_down = self.transcript.downloaded_payload_bytes
        lookup = pool.find_covering_hint(index)

        if isinstance(lookup, CacheHit):
            self.records.append(QueryRecord(index, "cache", 0, 0))
            return lookup.value

        if isinstance(lookup, CoveringHint):
            value = self._retrieve_with_hint(lookup.handle, index)
            outcome = "hint"
        elif isinstance(lookup, UncoveredEntry):
            # dummy query for a random covered index keeps the shape uniform
            try:
                dummy_handle, dummy_index = pool.dummy_target()
            except CoverageError:
                logger.warning("pool exhausted, serving uncovered index bare")
                self.records.append(QueryRecord(index, "uncovered", 0, 0))
                return lookup.value
            self._retrieve_with_hint(dummy_handle, dummy_index)
            pool.cache_entry(index, lookup.value)
            value = lookup.value
            outcome = "uncovered"
        else:  # pragma: no cover - lookup is a closed union
            raise AssertionError(f"unexpected lookup result {lookup!r}")

        self.records.append(
            QueryRecord(
                index,
                outcome,
                self.transcript.uploaded_payload_bytes - before_up,
                self.transcript.downloaded_payload_bytes - before_down,
            )
        )
        return value

    # -- refresh -------------------------------------------------------------

    def _fetch_batch(self, indices: list[int]) -> list[bytes]:
        message = protocol.query_for_targets(protocol.OP_FETCH, indices)
        payload = self._wire_query(message, len(indices) * self.entry_size)
        return [
            payload[offset : offset + self.entry_size]
            for offset in range(0, len(payload), self.entry_size)
        ]

    def refresh(self) -> RefreshReport:
        """Promote the shadow generation, fetching whatever is missing."""
        report = self._require_pool().refresh_phase(self._fetch_batch)
        logger.info(
            "refresh: %d fetches, %d bytes, cold=%s",
            report.completion_queries,
            report.fetched_payload_bytes,
            report.cold_start,
        )
        return report

    # -- batch driving -------------------------------------------------------

    def run_phases(
        self,
        targets_per_phase: list[list[int]],
        expected: dict[int, bytes] | None = None,
    ) -> list[PhaseReport]:
        """Run full phases of queries, refreshing after each phase.

        When `expected` maps 1-based indices to entry values, each phase
        report carries a correctness count.
        """
        reports = []
        for targets in targets_per_phase:
            report = PhaseReport()
            correct = 0
            before_up = self.transcript.uploaded_payload_bytes
            before_down = self.transcript.downloaded_payload_bytes
            for target in targets:
                value = self.query(target)
                report.queries += 1
                if expected is not None and value == expected[target]:
                    correct += 1
            report.uploaded_payload_bytes = (
                self.transcript.uploaded_payload_bytes - before_up
            )
            report.downloaded_payload_bytes = (
                self.transcript.downloaded_payload_bytes - before_down
            )
            if expected is not None:
                report.correct = correct
            report.refresh = self.refresh()
            reports.append(report)
        return reports

    def close(self):
        self.transport.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc_info):
        self.close()
