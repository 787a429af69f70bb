"""Shared fixtures and brute-force helpers for the test suite."""

from __future__ import annotations

import pytest

from spiderpir.database import Database, generate_database
from spiderpir.multiset import _expand_raw
from spiderpir.params import CoverageParams
from spiderpir.utils import zero_entry


def seed_for_expansion(universe: int, size: int, target: tuple[int, ...], limit: int = 200_000) -> int:
    """Search for a seed expanding to a specific multiset (tiny spaces only)."""
    for seed in range(limit):
        if _expand_raw(universe, size, seed) == target:
            return seed
    raise AssertionError(f"no seed found for {target} within {limit}")


def zero_stream(universe: int, entry_size: int = 1):
    value = zero_entry(entry_size)
    return ((index, value) for index in range(1, universe + 1))


def toy_params(universe: int, hint_size: int, num_hints: int, entry_size: int = 1) -> CoverageParams:
    return CoverageParams(
        num_entries=universe,
        hint_size=hint_size,
        num_hints=num_hints,
        coverage_constant=4.0,
        delta_slack=0.6,
        entry_size=entry_size,
    )


@pytest.fixture(scope="session")
def small_db(tmp_path_factory) -> Database:
    path = tmp_path_factory.mktemp("db") / "small.db"
    generate_database(path, 64, 16, seed=11)
    return Database.load(path)
