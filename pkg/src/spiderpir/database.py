"""Database files (SPDB) and seeded corpus generation.

Layout: magic "SPDB" (4 bytes) | version u16 LE | num_entries u64 LE |
entry_size u64 LE | entries back to back.  The header is 22 bytes, so a
valid file is exactly 22 + n * entry_size bytes.  Entries are addressed
0-based here, matching the wire.

Generated corpora are filled from the same counter-mode stream the hint
seeds use (one 64-bit word per output position), so any entry can be
recomputed independently for verification.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DatabaseFormatError, ParameterError
from .prg import counter_output

MAGIC = b"SPDB"
VERSION = 1
HEADER = struct.Struct("<4sHQQ")
HEADER_SIZE = HEADER.size  # 22

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)


def _keystream_words(seed: int, start: int, count: int) -> np.ndarray:
    """Vectorized counter-mode outputs [start, start+count) for a seed.

    Matches prg.counter_output word for word; uint64 arithmetic wraps
    exactly like the scalar masking.
    """
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed) + counters * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


def keystream_bytes(seed: int, num_bytes: int, start_word: int = 0) -> bytes:
    """num_bytes of deterministic stream output, 8 bytes per counter word."""
    words = (num_bytes + 7) // 8
    return _keystream_words(seed, start_word, words).tobytes()[:num_bytes]


def entry_at(seed: int, index: int, entry_size: int) -> bytes:
    """Recompute entry `index` of a generated corpus without the file."""
    words_per_entry = (entry_size + 7) // 8
    return keystream_bytes(seed, entry_size, start_word=index * words_per_entry)


def generate_database(
    path: str | Path, num_entries: int, entry_size: int, seed: int
) -> Path:
    """Write a seeded corpus of num_entries entries of entry_size bytes."""
    if num_entries < 1:
        raise ParameterError(f"num_entries must be >= 1, got {num_entries}")
    if entry_size < 1:
        raise ParameterError(f"entry_size must be >= 1, got {entry_size}")
    path = Path(path)
    words_per_entry = (entry_size + 7) // 8
    trim = entry_size != words_per_entry * 8
    with open(path, "wb") as handle:
        handle.write(HEADER.pack(MAGIC, VERSION, num_entries, entry_size))
        chunk_entries = max(1, (1 << 22) // (words_per_entry * 8))
        for first in range(0, num_entries, chunk_entries):
            count = min(chunk_entries, num_entries - first)
            words = _keystream_words(
                seed, first * words_per_entry, count * words_per_entry
            )
            if trim:
                block = words.view(np.uint8).reshape(count, words_per_entry * 8)
                handle.write(block[:, :entry_size].tobytes())
            else:
                handle.write(words.tobytes())
    return path


class Database:
    """A loaded database image with 0-based entry access."""

    def __init__(self, num_entries: int, entry_size: int, blob: bytes):
        if len(blob) != num_entries * entry_size:
            raise DatabaseFormatError(
                f"blob is {len(blob)} bytes, expected {num_entries * entry_size}"
            )
        self.num_entries = num_entries
        self.entry_size = entry_size
        self.blob = blob

    @classmethod
    def load(cls, path: str | Path) -> "Database":
        data = Path(path).read_bytes()
        if len(data) < HEADER_SIZE:
            raise DatabaseFormatError(f"file is {len(data)} bytes, no header")
        magic, version, num_entries, entry_size = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise DatabaseFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DatabaseFormatError(f"unsupported version {version}")
        expected = HEADER_SIZE + num_entries * entry_size
        if len(data) != expected:
            raise DatabaseFormatError(
                f"file is {len(data)} bytes, header implies {expected}"
            )
        return cls(num_entries, entry_size, data[HEADER_SIZE:])

    def entry(self, index: int) -> bytes:
        """Entry at a 0-based index."""
        if not 0 <= index < self.num_entries:
            raise ParameterError(
                f"index {index} outside [0, {self.num_entries})"
            )
        start = index * self.entry_size
        return self.blob[start : start + self.entry_size]

    def entry_1based(self, index: int) -> bytes:
        return self.entry(index - 1)

    def chunks(self, chunk_size: int = 1 << 20):
        """Yield the entry region as memoryview chunks, for streaming."""
        view = memoryview(self.blob)
        for start in range(0, len(view), chunk_size):
            yield view[start : start + chunk_size]
