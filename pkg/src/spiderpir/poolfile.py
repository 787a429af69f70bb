"""Hint pool persistence (SPHP files).

Layout, all integers little-endian:

    magic            4 bytes  "SPHP"
    version          u16      currently 1
    num_entries      u64
    hint_size        u32
    num_hints        u64
    coverage_const   u32      fixed-point, milli-units (4.0 -> 4000)
    delta_slack      u32      fixed-point, milli-units (0.6 -> 600)
    entry_size       u64
    master_seed      u64
    seed_counter     u64
    hint_count       u64
    hints            hint_count records:
        seed               u64
        parity             entry_size bytes
        replacement_pos    u16      1-based
        replacement_index  u64      1-based
        replacement_value  entry_size bytes
        flags              u8       bit 0: consumed
    uncovered_count  u64
    uncovered        records of index u64 + value (entry_size bytes)

followed by query-state sections so CLI invocations can resume mid-phase:

    queries_this_phase  u32
    cache_count         u64, then index u64 + value records
    partial_count       u64, then per partial hint:
        seed           u64
        parity_so_far  entry_size bytes
        missing_count  u32
        missing        (position u16, index u64) pairs
        has_value      u8, followed by entry_size bytes when 1

Hint and partial indices are 1-based (math layer); each hint record is
2 * entry_size + 19 bytes.  Expansions and replacement positions are
recomputed from seeds on load, never stored.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

from .errors import PoolFormatError
from .hints import Hint, HintPool, PartialHint, replacement_position_for_seed
from .multiset import _expand_raw
from .params import CoverageParams

MAGIC = b"SPHP"
VERSION = 1

_HEADER = struct.Struct("<4sHQIQIIQQQQ")
HINT_FIXED_OVERHEAD = 19  # seed + position + index + flags, without the two values


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise PoolFormatError("pool file truncated")
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def done(self) -> bool:
        return self.offset == len(self.data)


_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")


def save_pool(pool: HintPool, path: str | Path):
    """Serialize a pool, writing atomically via a temp file and rename."""
    path = Path(path)
    beta = pool.params.entry_size
    parts: list[bytes] = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            pool.params.num_entries,
            pool.params.hint_size,
            pool.params.num_hints,
            round(pool.params.coverage_constant * 1000),
            round(pool.params.delta_slack * 1000),
            beta,
            pool.master_seed,
            pool.seed_counter,
            len(pool.hints),
        )
    ]
    for hint in pool.hints:
        parts.append(_U64.pack(hint.seed))
        parts.append(hint.parity)
        parts.append(_U16.pack(hint.replacement_position))
        parts.append(_U64.pack(hint.replacement_index))
        parts.append(hint.replacement_value)
        parts.append(_U8.pack(1 if hint.consumed else 0))
    parts.append(_U64.pack(len(pool.side_store)))
    for index in sorted(pool.side_store):
        parts.append(_U64.pack(index))
        parts.append(pool.side_store[index])
    parts.append(_U32.pack(pool.queries_this_phase))
    parts.append(_U64.pack(len(pool.entry_cache)))
    for index in sorted(pool.entry_cache):
        parts.append(_U64.pack(index))
        parts.append(pool.entry_cache[index])
    parts.append(_U64.pack(len(pool.partials)))
    for partial in pool.partials:
        parts.append(_U64.pack(partial.seed))
        parts.append(partial.parity_acc.to_bytes(beta, "little"))
        parts.append(_U32.pack(len(partial.missing)))
        for position, index in sorted(partial.missing):
            parts.append(_U16.pack(position))
            parts.append(_U64.pack(index))
        if partial.replacement_value is None:
            parts.append(_U8.pack(0))
        else:
            parts.append(_U8.pack(1))
            parts.append(partial.replacement_value)

    blob = b"".join(parts)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(temp_name, path)
    except BaseException:
        try:
            os.unlink(temp_name)
        except FileNotFoundError:
            pass
        raise


def load_pool(path: str | Path) -> HintPool:
    """Load and rehydrate a pool saved by save_pool."""
    reader = _Reader(Path(path).read_bytes())
    (
        magic,
        version,
        num_entries,
        hint_size,
        num_hints,
        coverage_milli,
        delta_milli,
        entry_size,
        master_seed,
        seed_counter,
        hint_count,
    ) = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise PoolFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PoolFormatError(f"unsupported pool version {version}")
    params = CoverageParams(
        num_entries=num_entries,
        hint_size=hint_size,
        num_hints=num_hints,
        coverage_constant=coverage_milli / 1000.0,
        delta_slack=delta_milli / 1000.0,
        entry_size=entry_size,
    )

    hints: list[Hint] = []
    for _ in range(hint_count):
        (seed,) = reader.unpack(_U64)
        parity = reader.take(entry_size)
        (position,) = reader.unpack(_U16)
        (replacement_index,) = reader.unpack(_U64)
        replacement_value = reader.take(entry_size)
        (flags,) = reader.unpack(_U8)
        hint = Hint(
            seed=seed,
            parity=parity,
            replacement_position=position,
            replacement_index=replacement_index,
            replacement_value=replacement_value,
            consumed=bool(flags & 1),
        )
        hint.hydrate(num_entries, hint_size)
        hints.append(hint)

    (uncovered_count,) = reader.unpack(_U64)
    side_store: dict[int, bytes] = {}
    for _ in range(uncovered_count):
        (index,) = reader.unpack(_U64)
        side_store[index] = reader.take(entry_size)

    (queries_this_phase,) = reader.unpack(_U32)
    (cache_count,) = reader.unpack(_U64)
    entry_cache: dict[int, bytes] = {}
    for _ in range(cache_count):
        (index,) = reader.unpack(_U64)
        entry_cache[index] = reader.take(entry_size)

    (partial_count,) = reader.unpack(_U64)
    partials: list[PartialHint] = []
    for _ in range(partial_count):
        (seed,) = reader.unpack(_U64)
        parity_acc = int.from_bytes(reader.take(entry_size), "little")
        (missing_count,) = reader.unpack(_U32)
        missing = set()
        for _ in range(missing_count):
            (position,) = reader.unpack(_U16)
            (index,) = reader.unpack(_U64)
            missing.add((position, index))
        (has_value,) = reader.unpack(_U8)
        replacement_value = reader.take(entry_size) if has_value else None
        partials.append(
            PartialHint(
                seed=seed,
                replacement_position=replacement_position_for_seed(seed, hint_size),
                expansion=_expand_raw(num_entries, hint_size, seed),
                parity_acc=parity_acc,
                missing=missing,
                replacement_value=replacement_value,
            )
        )

    if not reader.done():
        raise PoolFormatError("trailing bytes after pool sections")
    return HintPool(
        params=params,
        master_seed=master_seed,
        seed_counter=seed_counter,
        hints=hints,
        side_store=side_store,
        partials=partials,
        entry_cache=entry_cache,
        queries_this_phase=queries_this_phase,
    )
