"""Seeded deterministic randomness for hint expansion.

Hints are persisted as bare 64-bit seeds, so every byte of randomness that
feeds multiset expansion is part of the on-disk compatibility contract: the
same seed must reconstruct the same multiset on any platform, in any
process, forever.  This module pins that contract to SplitMix64 run in
counter mode:

    output(seed, t) = mix64((seed + (t + 1) * GOLDEN_GAMMA) mod 2**64)

where mix64 is the xorshift-multiply finalizer with constants
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB and shifts 30/27/31.  Counter
mode means outputs are addressable by position: deriving the t-th child
seed from a master seed is the same operation as drawing the t-th value
from a stream.

Bounded draws use rejection sampling on the low residue, so they are
exactly uniform over [0, bound) rather than merely close to uniform.
Nothing here is cryptographic; unpredictability is supplied by the caller
choosing seeds, not by this generator.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_MIX_MUL_A = 0xBF58476D1CE4E5B9
_MIX_MUL_B = 0x94D049BB133111EB


def mix64(value: int) -> int:
    """Finalize a 64-bit value into a well-mixed 64-bit output."""
    value &= MASK64
    value = ((value ^ (value >> 30)) * _MIX_MUL_A) & MASK64
    value = ((value ^ (value >> 27)) * _MIX_MUL_B) & MASK64
    return value ^ (value >> 31)


def counter_output(seed: int, index: int) -> int:
    """Return output number `index` (0-based) of the stream keyed by `seed`."""
    return mix64((seed + ((index + 1) * GOLDEN_GAMMA)) & MASK64)


def derive_seed(master_seed: int, counter: int) -> int:
    """Derive the counter-th child seed from a master seed.

    Child seeds are the stream outputs themselves, so a master seed plus a
    persisted counter is enough to regenerate or extend a hint pool.
    """
    return counter_output(master_seed, counter)


class SplitMix64:
    """Counter-mode stream over a fixed 64-bit seed.

    The stream position is explicit state (`counter`), so a generator can
    be reconstructed mid-stream from (seed, counter) alone.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        value = counter_output(self.seed, self.counter)
        self.counter += 1
        return value

    def below(self, bound: int) -> int:
        """Draw an exactly uniform integer in [0, bound).

        Rejection threshold: values below (2**64 - bound) % bound are
        re-drawn so every residue class keeps equal mass.
        """
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        if bound == 1:
            return 0
        threshold = ((MASK64 + 1) - bound) % bound
        while True:
            value = self.next_u64()
            if value >= threshold:
                return value % bound
