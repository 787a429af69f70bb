"""Transcript indistinguishability harness.

Per-query privacy is structural: a uniform covering hint redacted at the
queried index is exactly uniform over the (k-1)-size multiset space, by
the adjoin/redact bijection.  Across a phase the property is distributional:
the sequence of redacted multisets a server sees should not depend on which
indices the client asked for, including repeats.  Replenishment exists to
rebalance the pool after each consumption toward exactly that; the
rebalancing is not perfect, though.  Re-pointing a survivor's slot at the
queried index leaves a small residual dependence on recent targets
(exact enumeration at toy sizes puts the transcript total variation
in the low percent range by round three), so later rounds are
near-uniform rather than exactly uniform.

This harness measures that empirically: run two fixed target sequences
many times over freshly preprocessed pools and compare, round by round,
the distribution of the redacted multiset actually sent.  Entry caching
is disabled here, deliberately: with caching on, repeated targets emit no
wire message at all, so round counts would differ and there would be no
distribution to compare.  The cache's traffic behavior is tested
separately; this harness isolates hint selection, redaction, and
replenishment.

Round 1 additionally gets an exact-uniformity check against the enumerated
(k-1)-multiset space, since for a fresh pool the property is exact, not
just sequence-invariant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ParameterError
from .hints import HintPool, preprocess
from .multiset import enumerate_multisets
from .params import CoverageParams
from .prg import derive_seed
from .utils import zero_entry

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.001


@dataclass(frozen=True)
class RoundComparison:
    round_number: int
    chi2_statistic: float
    p_value: float
    total_variation: float


@dataclass(frozen=True)
class TranscriptReport:
    """Outcome of one indistinguishability run.

    indistinguishable is True when no per-round chi-square rejects at
    alpha; round1_uniform_p holds the goodness-of-fit p-values of each
    sequence's first round against the exactly uniform law.
    """

    trials: int
    num_cells: int
    alpha: float
    rounds: list[RoundComparison]
    round1_uniform_p: tuple[float, float]
    indistinguishable: bool
    round1_uniform: bool


def harness_params(
    universe: int, hint_size: int, coverage_constant: float = 4.0
) -> CoverageParams:
    """Pool sizing for the harness: explicit k, 1-byte zero entries."""
    if universe < 2:
        raise ParameterError("harness needs universe >= 2")
    num_hints = math.ceil(
        2.0 * coverage_constant * math.log(universe) * universe / hint_size
    )
    return CoverageParams(
        num_entries=universe,
        hint_size=hint_size,
        num_hints=num_hints,
        coverage_constant=coverage_constant,
        delta_slack=0.6,
        entry_size=1,
    )


def _zero_stream(universe: int):
    value = zero_entry(1)
    return ((index, value) for index in range(1, universe + 1))


def _redactions_for_sequence(
    pool: HintPool, targets: list[int], value: bytes
) -> list[tuple[int, ...]]:
    """Run one query sequence, cache disabled, returning redactions sent."""
    redactions = []
    for target in targets:
        lookup_candidates = pool.covering_candidates(target)
        if lookup_candidates:
            handle = pool._rng.choice(lookup_candidates)
            index = target
        else:
            handle, index = pool.dummy_target()
        redactions.append(pool.redacted_for(handle, index))
        pool.consume_and_replenish(handle, index, value)
    return redactions


def transcript_distribution_test(
    universe: int,
    hint_size: int,
    targets_a: list[int],
    targets_b: list[int],
    trials: int,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 1,
    cap: int = 100_000,
) -> TranscriptReport:
    """Compare per-round redaction distributions of two target sequences.

    Each trial preprocesses two fresh pools (independent master seeds) over
    an all-zero single-byte database and replays both sequences without
    caching.  Per round, a two-sample chi-square on the observed redacted
    multisets must fail to reject at `alpha` for the sequences to be
    declared indistinguishable.
    """
    if len(targets_a) != len(targets_b):
        raise ParameterError("sequences must have equal length")
    if len(targets_a) > hint_size:
        raise ParameterError("sequence longer than the phase budget")
    for target in targets_a + targets_b:
        if not 1 <= target <= universe:
            raise ParameterError(f"target {target} outside [1, {universe}]")

    cells = [
        m.elements for m in enumerate_multisets(universe, hint_size - 1, cap)
    ]
    cell_index = {elements: i for i, elements in enumerate(cells)}
    num_rounds = len(targets_a)
    counts_a = np.zeros((num_rounds, len(cells)), dtype=np.int64)
    counts_b = np.zeros((num_rounds, len(cells)), dtype=np.int64)

    params = harness_params(universe, hint_size)
    value = zero_entry(1)
    for trial in range(trials):
        for targets, counts, lane in (
            (targets_a, counts_a, 0),
            (targets_b, counts_b, 1),
        ):
            master = derive_seed(seed, 2 * trial + lane)
            pool = preprocess(
                _zero_stream(universe),
                params,
                master,
                build_next_generation=False,
            )
            for round_number, redaction in enumerate(
                _redactions_for_sequence(pool, targets, value)
            ):
                counts[round_number, cell_index[redaction]] += 1

    rounds = []
    rejected = False
    for round_number in range(num_rounds):
        observed = np.vstack([counts_a[round_number], counts_b[round_number]])
        nonzero = observed.sum(axis=0) > 0
        chi2, p = stats.chi2_contingency(observed[:, nonzero], correction=False)[:2]
        freq_a = counts_a[round_number] / trials
        freq_b = counts_b[round_number] / trials
        tv = 0.5 * float(np.abs(freq_a - freq_b).sum())
        rounds.append(RoundComparison(round_number + 1, float(chi2), float(p), tv))
        if p < alpha:
            rejected = True
            logger.warning(
                "round %d rejects at alpha=%g (p=%g)", round_number + 1, alpha, p
            )

    p_uniform_a = float(stats.chisquare(counts_a[0]).pvalue)
    p_uniform_b = float(stats.chisquare(counts_b[0]).pvalue)
    return TranscriptReport(
        trials=trials,
        num_cells=len(cells),
        alpha=alpha,
        rounds=rounds,
        round1_uniform_p=(p_uniform_a, p_uniform_b),
        indistinguishable=not rejected,
        round1_uniform=min(p_uniform_a, p_uniform_b) >= alpha,
    )


def empirical_coverage(
    params: CoverageParams,
    num_pools: int,
    seed: int = 7,
) -> tuple[int, float, list[int]]:
    """Build fresh pools over a zero database and measure index coverage.

    Returns (pools with every index covered, mean cover count over sampled
    indices, per-pool uncovered-index counts).  Cover counts are sampled
    at a few random indices per pool to keep this O(pools * m) rather than
    O(pools * n * m).
    """
    import random as _random

    rng = _random.Random(seed)
    n = params.num_entries
    fully_covered = 0
    uncovered_counts = []
    cover_samples = []
    for pool_number in range(num_pools):
        master = derive_seed(seed, pool_number)
        pool = preprocess(
            (
                (index, zero_entry(params.entry_size))
                for index in range(1, n + 1)
            ),
            params,
            master,
            build_next_generation=False,
        )
        uncovered = len(pool.side_store)
        uncovered_counts.append(uncovered)
        if uncovered == 0:
            fully_covered += 1
        for _ in range(4):
            cover_samples.append(pool.cover_count(rng.randint(1, n)))
    mean_cover = sum(cover_samples) / len(cover_samples)
    return fully_covered, mean_cover, uncovered_counts
