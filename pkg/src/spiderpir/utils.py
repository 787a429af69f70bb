"""Small byte-level helpers used across client, server, and pool code."""

from __future__ import annotations


def xor_bytes(a: bytes, b: bytes) -> bytes:
    """XOR two equal-length byte strings."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    # int XOR is much faster than a per-byte loop for entry-sized values
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(
        len(a), "little"
    )


def zero_entry(size: int) -> bytes:
    """An all-zero entry of the given size."""
    return bytes(size)
