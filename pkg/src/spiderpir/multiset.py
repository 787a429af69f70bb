"""Uniform multiset sampling via the subset bijection, plus exact oracles.

A size-k multiset over {1..n} is interchangeable with a k-subset of
{1..n+k-1}: sorting the multiset and adding positional offsets makes its
elements strictly increasing, and subtracting the offsets undoes it.
Concretely, with the multiset sorted as h_1 <= ... <= h_k,

    subset element   u_t = h_t + (t - 1)
    multiset element h_t = u_t - (t - 1)

so for example the multiset (2, 2, 3) over {1..3} maps to the subset
(2, 3, 5) over {1..5}.  Sampling a uniform subset with Floyd's algorithm
therefore yields an exactly uniform multiset.

Everything downstream (hint pools, redaction, privacy arguments) leans on
two facts proved here by brute force at small sizes:

  * the maps above are mutually inverse bijections, so uniform subsets
    give uniform multisets;
  * for any fixed element i, adjoining i is a bijection from (k-1)-size
    multisets onto the k-size multisets that contain i, so redacting one
    occurrence of i from a uniform i-containing multiset leaves an exactly
    uniform (k-1)-size multiset.

All indices in this module are 1-based; the wire layer converts to 0-based
at the protocol boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement

from .errors import NotCoveredError, OracleTooLargeError, ParameterError
from .prg import SplitMix64

# Enumeration oracles refuse to materialize spaces larger than this unless
# the caller raises the cap explicitly.
DEFAULT_ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class SubsetSample:
    """A strictly increasing k-subset of {1..universe_size}."""

    elements: tuple[int, ...]
    universe_size: int

    def __post_init__(self):
        if not self.elements:
            raise ParameterError("subset must be non-empty")
        previous = 0
        for value in self.elements:
            if not previous < value <= self.universe_size:
                raise ParameterError(
                    f"subset {self.elements} is not strictly increasing "
                    f"within [1, {self.universe_size}]"
                )
            previous = value

    @property
    def size(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class Multiset:
    """A sorted multiset of elements drawn from {1..universe_size}."""

    elements: tuple[int, ...]
    universe_size: int

    def __post_init__(self):
        if not self.elements:
            raise ParameterError("multiset must be non-empty")
        previous = 1
        for value in self.elements:
            if not previous <= value <= self.universe_size:
                raise ParameterError(
                    f"multiset {self.elements} is not sorted within "
                    f"[1, {self.universe_size}]"
                )
            previous = value

    @property
    def size(self) -> int:
        return len(self.elements)

    def count(self, value: int) -> int:
        return self.elements.count(value)


@dataclass(frozen=True)
class CombinatorialCounts:
    """Exact counts for the k-multiset space over {1..n}.

    total_multisets:       C(n+k-1, k), all size-k multisets
    containing_multisets:  C(n+k-2, k-1), those containing a fixed element
    inclusion_probability: k / (n+k-1), their exact ratio
    """

    total_multisets: int
    containing_multisets: int
    inclusion_probability: Fraction


def _check_shape(universe: int, size: int):
    if universe < 1:
        raise ParameterError(f"universe size must be >= 1, got {universe}")
    if size < 1:
        raise ParameterError(f"multiset size must be >= 1, got {size}")


def floyd_sample(universe: int, size: int, seed: int) -> SubsetSample:
    """Sample a uniform size-k subset of {1..universe} from a seed.

    Floyd's algorithm: iterate j from universe-size+1 up to universe,
    draw r uniform in [1, j], and insert r unless already present, in
    which case insert j.  Each draw is rejection-sampled, so the subset
    distribution is exactly uniform given a uniform stream.
    """
    _check_shape(universe, size)
    if size > universe:
        raise ParameterError(f"cannot pick {size} distinct values from {universe}")
    return SubsetSample(_floyd_raw(universe, size, seed), universe)


def _floyd_raw(universe: int, size: int, seed: int) -> tuple[int, ...]:
    stream = SplitMix64(seed)
    chosen: set[int] = set()
    for j in range(universe - size + 1, universe + 1):
        r = stream.below(j) + 1
        if r in chosen:
            chosen.add(j)
        else:
            chosen.add(r)
    return tuple(sorted(chosen))


def subset_from_multiset(multiset: Multiset) -> SubsetSample:
    """Map a sorted k-multiset over {1..n} to a k-subset of {1..n+k-1}."""
    k = multiset.size
    return SubsetSample(
        tuple(value + offset for offset, value in enumerate(multiset.elements)),
        multiset.universe_size + k - 1,
    )


def multiset_from_subset(subset: SubsetSample, universe: int) -> Multiset:
    """Map a k-subset of {1..n+k-1} back to a sorted k-multiset over {1..n}."""
    k = subset.size
    if subset.universe_size != universe + k - 1:
        raise ParameterError(
            f"subset universe {subset.universe_size} does not match "
            f"{universe} + {k} - 1"
        )
    return Multiset(
        tuple(value - offset for offset, value in enumerate(subset.elements)),
        universe,
    )


def _expand_raw(universe: int, size: int, seed: int) -> tuple[int, ...]:
    """Seed-to-multiset expansion without dataclass wrapping (hot path)."""
    ordered = _floyd_raw(universe + size - 1, size, seed)
    return tuple(value - offset for offset, value in enumerate(ordered))


def expand_multiset_from_seed(universe: int, size: int, seed: int) -> Multiset:
    """Expand a 64-bit seed into a uniform size-k multiset over {1..universe}.

    This is a pure function of (universe, size, seed) and is the expansion
    used for persisted hints, so its behavior is frozen; see the prg module
    for the underlying stream contract.
    """
    _check_shape(universe, size)
    return Multiset(_expand_raw(universe, size, seed), universe)


def redact(multiset: Multiset, element: int) -> Multiset:
    """Remove exactly one occurrence of `element`.

    Raises NotCoveredError if the element is absent, ParameterError if the
    multiset has only one element (an empty multiset is not representable).
    """
    if element not in multiset.elements:
        raise NotCoveredError(f"{element} not in multiset {multiset.elements}")
    if multiset.size == 1:
        raise ParameterError("cannot redact the sole element of a multiset")
    elements = list(multiset.elements)
    elements.remove(element)
    return Multiset(tuple(elements), multiset.universe_size)


def combinatorial_counts(universe: int, size: int) -> CombinatorialCounts:
    """Exact counts for the size-k multiset space over {1..universe}."""
    _check_shape(universe, size)
    n, k = universe, size
    return CombinatorialCounts(
        total_multisets=math.comb(n + k - 1, k),
        containing_multisets=math.comb(n + k - 2, k - 1),
        inclusion_probability=Fraction(k, n + k - 1),
    )


def enumerate_multisets(
    universe: int, size: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Multiset]:
    """All size-k multisets over {1..universe} in lexicographic order.

    Brute-force oracle for tests; refuses spaces larger than `cap`.
    """
    _check_shape(universe, size)
    total = math.comb(universe + size - 1, size)
    if total > cap:
        raise OracleTooLargeError(
            f"{total} multisets exceed enumeration cap {cap}"
        )
    return [
        Multiset(elements, universe)
        for elements in combinations_with_replacement(range(1, universe + 1), size)
    ]


def multiset_space_at_least(universe: int, size: int, threshold: int) -> bool:
    """Whether the k-multiset space has at least `threshold` members.

    Avoids computing the full binomial when a cheap log-gamma lower bound
    already clears the threshold (the count can have hundreds of thousands
    of bits at realistic parameters).
    """
    _check_shape(universe, size)
    if threshold <= 1:
        return True
    n_total = universe + size - 1
    log_count = (
        math.lgamma(n_total + 1)
        - math.lgamma(size + 1)
        - math.lgamma(n_total - size + 1)
    )
    # one-nat margin absorbs lgamma rounding before falling back to exact
    if log_count > math.log(threshold) + 1.0:
        return True
    return math.comb(n_total, size) >= threshold


def verify_redaction_bijection(
    universe: int, size: int, element: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> bool:
    """Exhaustively verify that adjoining `element` bijects smaller multisets
    onto the multisets containing it, and that redact() inverts the map.

    This is the structural fact behind per-query privacy: a uniform hint
    conditioned on containing i, redacted at i, is exactly uniform over the
    (k-1)-size multiset space.  Verified by enumeration, so only feasible
    at small sizes.
    """
    _check_shape(universe, size)
    if size < 2:
        raise ParameterError("bijection check needs size >= 2")
    if not 1 <= element <= universe:
        raise ParameterError(f"element {element} outside [1, {universe}]")

    containing = [
        m for m in enumerate_multisets(universe, size, cap) if element in m.elements
    ]
    smaller = enumerate_multisets(universe, size - 1, cap)

    expected = combinatorial_counts(universe, size).containing_multisets
    if len(containing) != expected or len(smaller) != expected:
        return False

    adjoined = {
        tuple(sorted(m.elements + (element,))): m.elements for m in smaller
    }
    if len(adjoined) != len(smaller):
        return False

    for m in containing:
        partner = adjoined.get(m.elements)
        if partner is None:
            return False
        if redact(m, element).elements != partner:
            return False
    return True
