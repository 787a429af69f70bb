"""Transcript harness behaviour at quick-test scale.

The full-scale statistical runs live in the acceptance suite; these keep
the harness itself honest (plumbing, determinism, report shape).
"""

import pytest

from spiderpir.errors import ParameterError
from spiderpir.privacy import (
    empirical_coverage,
    harness_params,
    transcript_distribution_test,
)


def test_identical_sequences_are_indistinguishable():
    # same targets on both lanes: any rejection would be a pure false
    # positive, so at alpha=0.001 and 3 rounds this is effectively a
    # self-consistency check of the harness
    report = transcript_distribution_test(
        universe=4,
        hint_size=3,
        targets_a=[2, 2, 2],
        targets_b=[2, 2, 2],
        trials=4_000,
        seed=5,
    )
    assert report.indistinguishable
    assert len(report.rounds) == 3
    assert report.trials == 4_000


def test_distinct_sequences_quick_run():
    report = transcript_distribution_test(
        universe=4,
        hint_size=3,
        targets_a=[1, 1, 1],
        targets_b=[1, 2, 3],
        trials=4_000,
        seed=6,
    )
    assert report.indistinguishable
    assert report.round1_uniform
    # C(4+2-1, 2) = C(5, 2) = 10 possible redacted pairs
    assert report.num_cells == 10


def test_harness_is_deterministic():
    kwargs = dict(
        universe=4,
        hint_size=3,
        targets_a=[1, 2, 1],
        targets_b=[3, 3, 3],
        trials=1_000,
        seed=9,
    )
    first = transcript_distribution_test(**kwargs)
    second = transcript_distribution_test(**kwargs)
    assert first == second


def test_mismatched_sequence_lengths_rejected():
    with pytest.raises(ParameterError):
        transcript_distribution_test(
            universe=4,
            hint_size=3,
            targets_a=[1],
            targets_b=[1, 2],
            trials=10,
        )


def test_cell_cap_rejects_huge_spaces():
    from spiderpir.errors import OracleTooLargeError

    with pytest.raises(OracleTooLargeError):
        transcript_distribution_test(
            universe=1000,
            hint_size=30,
            targets_a=[1],
            targets_b=[2],
            trials=10,
            cap=100,
        )


def test_harness_params_shape():
    params = harness_params(4, 3)
    assert params.num_entries == 4
    assert params.hint_size == 3
    assert params.entry_size == 1
    # m = ceil(2 * 4 * ln(4) * 4 / 3)
    assert params.num_hints == 15


def test_empirical_coverage_small():
    params = harness_params(32, 6)
    fully, mean_cover, uncovered = empirical_coverage(params, num_pools=5, seed=3)
    assert fully == len(uncovered) == 5
    assert all(count == 0 for count in uncovered)
    # E[cover] = m * k / (n + k - 1) = 148 * 6 / 37 = 24
    assert params.num_hints == 148
    assert mean_cover == pytest.approx(148 * 6 / 37, rel=0.25)
