"""Round-trip and layout checks for pool persistence."""

import math

import pytest

from conftest import toy_params, zero_stream
from spiderpir.database import Database, generate_database
from spiderpir.errors import PoolFormatError
from spiderpir.hints import preprocess
from spiderpir.poolfile import HINT_FIXED_OVERHEAD, load_pool, save_pool


def full_pool(db: Database, master_seed: int = 21):
    k = math.isqrt(db.num_entries - 1) + 1
    params = toy_params(db.num_entries, k, 64, db.entry_size)
    pool = preprocess(
        ((i + 1, db.entry(i)) for i in range(db.num_entries)), params, master_seed
    )
    # exercise all the stateful sections before saving
    for target in (3, 9, 60):
        result = pool.find_covering_hint(target)
        pool.consume_and_replenish(result.handle, target, db.entry_1based(target))
        pool.cache_entry(target, db.entry_1based(target))
    for index in range(1, 20):
        pool.ingest_for_next_generation(index, db.entry_1based(index))
    return pool


def pools_equal(a, b) -> bool:
    if a.params != b.params or a.master_seed != b.master_seed:
        return False
    if a.seed_counter != b.seed_counter:
        return False
    if a.queries_this_phase != b.queries_this_phase:
        return False
    if a.entry_cache != b.entry_cache or a.side_store != b.side_store:
        return False
    if [
        (h.seed, h.parity, h.replacement_position, h.replacement_index,
         h.replacement_value, h.consumed, h.positional, h.members)
        for h in a.hints
    ] != [
        (h.seed, h.parity, h.replacement_position, h.replacement_index,
         h.replacement_value, h.consumed, h.positional, h.members)
        for h in b.hints
    ]:
        return False
    return [
        (p.seed, p.parity_acc, sorted(p.missing), p.replacement_value, p.expansion)
        for p in a.partials
    ] == [
        (p.seed, p.parity_acc, sorted(p.missing), p.replacement_value, p.expansion)
        for p in b.partials
    ]


def test_round_trip_preserves_everything(small_db, tmp_path):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    assert pools_equal(pool, load_pool(path))


def test_hint_record_size(small_db, tmp_path):
    # two pools differing by one hint differ by exactly 2*beta + 19 bytes
    beta = small_db.entry_size
    base = full_pool(small_db)
    path_a = tmp_path / "a.sphp"
    path_b = tmp_path / "b.sphp"
    save_pool(base, path_a)
    base.hints.append(base.hints[0])
    save_pool(base, path_b)
    assert path_b.stat().st_size - path_a.stat().st_size == 2 * beta + HINT_FIXED_OVERHEAD


def test_bad_magic_rejected(tmp_path, small_db):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(PoolFormatError):
        load_pool(path)


def test_truncation_rejected(tmp_path, small_db):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(PoolFormatError):
        load_pool(path)


def test_trailing_garbage_rejected(tmp_path, small_db):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(PoolFormatError):
        load_pool(path)


def test_save_is_atomic_no_temp_left_behind(tmp_path, small_db):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    save_pool(pool, path)  # overwrite in place
    assert [p.name for p in tmp_path.iterdir()] == ["pool.sphp"]


def test_loaded_pool_keeps_working(small_db, tmp_path):
    pool = full_pool(small_db)
    path = tmp_path / "pool.sphp"
    save_pool(pool, path)
    loaded = load_pool(path)
    assert loaded.verify_parities(small_db.entry_1based)
    result = loaded.find_covering_hint(40)
    loaded.consume_and_replenish(result.handle, 40, small_db.entry_1based(40))
    assert loaded.verify_parities(small_db.entry_1based)
