"""Coverage parameter selection and failure-probability bounds.

A pool of m uniform size-k multiset hints over {1..n} covers a fixed index
with probability p = k/(n+k-1) per hint, so the number of hints covering
any fixed index is hypergeometric-like across the pool.  Sizing

    k = ceil(sqrt(n))
    m = ceil(2 * C * ln(n) * n / k)

puts the expected cover count near 2*C*ln(n) and drives the probability
that any index is uncovered polynomially small in n.  Two bounds on that
failure probability are computed independently so tests can cross-check
them:

  * a Markov/union bound, n * C(M-S, m) / C(M, m), with M the number of
    size-k multisets and S the number containing a fixed index, evaluated
    in log space (the binomials are astronomically large at real sizes);
  * a Chernoff-style bound n**(1 - delta**2 * C), meaningful only when
    delta**2 * C > 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import OracleTooLargeError, ParameterError
from .multiset import combinatorial_counts


@dataclass(frozen=True)
class CoverageParams:
    """Sizing of one hint pool.

    num_entries:        database size n
    hint_size:          elements per hint multiset, k
    num_hints:          pool size m
    coverage_constant:  the C in m = ceil(2*C*ln(n)*n/k)
    delta_slack:        slack for the Chernoff bound
    entry_size:         database entry size in bytes
    """

    num_entries: int
    hint_size: int
    num_hints: int
    coverage_constant: float
    delta_slack: float
    entry_size: int

    def __post_init__(self):
        if self.num_entries < 1:
            raise ParameterError(f"num_entries must be >= 1, got {self.num_entries}")
        if self.hint_size < 1:
            raise ParameterError(f"hint_size must be >= 1, got {self.hint_size}")
        if self.num_hints < 0:
            raise ParameterError(f"num_hints must be >= 0, got {self.num_hints}")
        if self.entry_size < 1:
            raise ParameterError(f"entry_size must be >= 1, got {self.entry_size}")
        if self.coverage_constant <= 0:
            raise ParameterError("coverage_constant must be positive")
        if not 0 < self.delta_slack < 1:
            raise ParameterError("delta_slack must be in (0, 1)")

    @property
    def has_intended_coverage(self) -> bool:
        """Whether the Chernoff bound decays (delta**2 * C > 1)."""
        return self.delta_slack**2 * self.coverage_constant > 1


@dataclass(frozen=True)
class CoverageBounds:
    """Failure-probability bounds and the exact expected cover count."""

    markov_failure_bound: float
    chernoff_failure_bound: float
    expected_cover_count: Fraction


def compute_params(
    num_entries: int,
    entry_size: int,
    coverage_constant: float = 4.0,
    delta_slack: float = 0.6,
) -> CoverageParams:
    """Choose hint-pool sizing for a database of n entries.

    k = ceil(sqrt(n)) balances hint storage against per-query work;
    m = ceil(2*C*ln(n)*n/k) targets an expected cover count of 2*C*ln(n)
    per index.  Requires n >= 2 (the log term vanishes at n = 1; pools
    over single-entry databases can still be built from an explicit
    CoverageParams).
    """
    if num_entries < 2:
        raise ParameterError(f"num_entries must be >= 2, got {num_entries}")
    k = math.isqrt(num_entries)
    if k * k < num_entries:
        k += 1
    m = math.ceil(
        2.0 * coverage_constant * math.log(num_entries) * num_entries / k
    )
    return CoverageParams(
        num_entries=num_entries,
        hint_size=k,
        num_hints=m,
        coverage_constant=coverage_constant,
        delta_slack=delta_slack,
        entry_size=entry_size,
    )


def coverage_bounds(params: CoverageParams) -> CoverageBounds:
    """Compute both failure bounds and the exact expected cover count."""
    n, k, m = params.num_entries, params.hint_size, params.num_hints
    counts = combinatorial_counts(n, k)
    total = counts.total_multisets
    containing = counts.containing_multisets

    markov = _markov_log_space(n, total, containing, m)
    chernoff = min(
        1.0, n ** (1.0 - params.delta_slack**2 * params.coverage_constant)
    )
    expected = Fraction(m * k, n + k - 1)
    return CoverageBounds(
        markov_failure_bound=markov,
        chernoff_failure_bound=chernoff,
        expected_cover_count=expected,
    )


def _markov_log_space(n: int, total: int, containing: int, m: int) -> float:
    """n * C(total-containing, m) / C(total, m), evaluated in log space.

    The ratio telescopes into a product of m factors
    (total-containing-t)/(total-t), each in (0, 1), so the sum of logs is
    stable even when the binomials themselves have 10**5 bits.  m = 0
    yields the vacuous bound min(1, n) = 1.
    """
    missing_space = total - containing
    if m > missing_space:
        return 0.0
    log_ratio = 0.0
    for t in range(m):
        log_ratio += math.log(missing_space - t) - math.log(total - t)
    return min(1.0, math.exp(math.log(n) + log_ratio))


def markov_bound_exact(
    num_entries: int, hint_size: int, num_hints: int, cap_bits: int = 200_000
) -> Fraction:
    """Exact big-integer Markov bound, as a Fraction, for cross-checks.

    Independent of the log-space path: builds the two binomials outright.
    Refuses when the total-multiset count exceeds cap_bits bits.
    """
    counts = combinatorial_counts(num_entries, hint_size)
    total, containing = counts.total_multisets, counts.containing_multisets
    if total.bit_length() > cap_bits:
        raise OracleTooLargeError(
            f"multiset space needs {total.bit_length()} bits, cap {cap_bits}"
        )
    numerator = math.comb(total - containing, num_hints)
    denominator = math.comb(total, num_hints)
    if denominator == 0:
        # more hints than distinct multisets: every multiset is present
        return Fraction(0)
    bound = Fraction(num_entries) * Fraction(numerator, denominator)
    return min(bound, Fraction(1))
