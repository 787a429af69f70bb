"""Client-side hint pool: preprocessing, lookup, consumption, refresh.

A hint is a size-k multiset over the database indices {1..n}, stored as a
64-bit expansion seed plus the XOR (parity) of the entries it names.  One
position of each hint is an explicit replacement slot: the element at that
position, its index, and its current value are stored outright so the slot
can be rewritten after the hint survives someone else's query.

Lifecycle per query for index i:

  1. find an unconsumed hint whose effective multiset contains i
     (uniformly among candidates, so the transcript leaks nothing about
     which index repeats);
  2. redact one occurrence of i and send the remaining k-1 indices;
  3. reconstruct the entry by XORing the answer against the parity;
  4. mark the hint consumed, then rewrite the replacement slot of one
     uniformly random surviving hint to i (parity patched with
     old-slot-value XOR new-value) so hint mass drifts back toward
     recently queried indices;
  5. cache the entry for the rest of the phase.

A phase lasts at most k consumptions.  While a phase runs, a shadow
generation of partial hints accumulates XORs from entries the server
already returned; refresh_phase fetches whatever is still missing in
batches shaped exactly like queries, promotes the shadow generation, and
starts the next one.

Indices are 1-based throughout this module.
"""

from __future__ import annotations

import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .errors import (
    CoverageError,
    IntegrityError,
    ParameterError,
    PhaseExhaustedError,
    PoolStateError,
)
from .multiset import _expand_raw, multiset_space_at_least
from .params import CoverageParams
from .prg import SplitMix64, derive_seed, mix64

logger = logging.getLogger(__name__)

# Salts separating the replacement-slot stream and the online choice
# stream from the expansion stream; arbitrary fixed odd constants.
REPLACEMENT_SALT = 0xD1B54A32D192ED03
ONLINE_SALT = 0x2545F4914F6CDD1D


def replacement_position_for_seed(seed: int, hint_size: int) -> int:
    """Deterministic replacement slot (1-based position) for a hint seed."""
    return SplitMix64(mix64(seed ^ REPLACEMENT_SALT)).below(hint_size) + 1


@dataclass
class Hint:
    """One hint: persisted fields plus derived lookup caches.

    positional is the effective multiset in expansion order with the
    replacement slot substituted; members maps index -> multiplicity in
    positional.  Both are rebuilt from the persisted fields on load.
    """

    seed: int
    parity: bytes
    replacement_position: int
    replacement_index: int
    replacement_value: bytes
    consumed: bool = False
    positional: tuple[int, ...] = field(default=(), repr=False, compare=False)
    members: dict[int, int] = field(default_factory=dict, repr=False, compare=False)

    def hydrate(self, universe: int, size: int):
        expansion = list(_expand_raw(universe, size, self.seed))
        expansion[self.replacement_position - 1] = self.replacement_index
        self.positional = tuple(expansion)
        self.members = dict(Counter(self.positional))


@dataclass
class PartialHint:
    """A next-generation hint whose parity is still accumulating.

    missing holds (position, index) pairs not yet folded in; positions are
    tracked individually so duplicate indices fold once per occurrence.
    """

    seed: int
    replacement_position: int
    expansion: tuple[int, ...] = field(repr=False)
    parity_acc: int = 0
    missing: set[tuple[int, int]] = field(default_factory=set)
    replacement_value: bytes | None = None


@dataclass(frozen=True)
class CacheHit:
    value: bytes


@dataclass(frozen=True)
class CoveringHint:
    handle: int


@dataclass(frozen=True)
class UncoveredEntry:
    value: bytes


@dataclass(frozen=True)
class RefreshReport:
    """Accounting for one phase refresh."""

    completion_queries: int
    fetched_payload_bytes: int
    promoted_hints: int
    uncovered_entries: int
    cold_start: bool


@dataclass(frozen=True)
class GenerationProgress:
    complete_hints: int
    total_hints: int
    resolved_slots: int
    total_slots: int

    @property
    def slot_fraction(self) -> float:
        return self.resolved_slots / self.total_slots if self.total_slots else 0.0


def _generate_hint_specs(
    params: CoverageParams, master_seed: int, start_counter: int
) -> tuple[list[tuple[int, tuple[int, ...]]], int]:
    """Draw m deduplicated (seed, expansion) pairs from the counter stream.

    Seeds whose expansion duplicates an already accepted multiset are
    skipped, except once every distinct multiset is already present, at
    which point duplicates are admitted (otherwise m greater than the size
    of the multiset space could never terminate; only reachable at toy
    parameters).
    """
    n, k, m = params.num_entries, params.hint_size, params.num_hints
    space: int | None = None
    if not multiset_space_at_least(n, k, m + 1):
        space = math.comb(n + k - 1, k)
    seen: set[tuple[int, ...]] = set()
    specs: list[tuple[int, tuple[int, ...]]] = []
    counter = start_counter
    while len(specs) < m:
        seed = derive_seed(master_seed, counter)
        counter += 1
        expansion = _expand_raw(n, k, seed)
        if expansion in seen and (space is None or len(seen) < space):
            continue
        seen.add(expansion)
        specs.append((seed, expansion))
    return specs, counter


def _build_partials(
    specs: list[tuple[int, tuple[int, ...]]], hint_size: int
) -> tuple[list[PartialHint], dict[int, list[tuple[int, int]]]]:
    partials: list[PartialHint] = []
    index_map: dict[int, list[tuple[int, int]]] = {}
    for pid, (seed, expansion) in enumerate(specs):
        partial = PartialHint(
            seed=seed,
            replacement_position=replacement_position_for_seed(seed, hint_size),
            expansion=expansion,
        )
        for position, index in enumerate(expansion, start=1):
            partial.missing.add((position, index))
            index_map.setdefault(index, []).append((pid, position))
        partials.append(partial)
    return partials, index_map


class HintPool:
    """All client-side query state for one database."""

    def __init__(
        self,
        params: CoverageParams,
        master_seed: int,
        seed_counter: int,
        hints: list[Hint],
        side_store: dict[int, bytes],
        partials: list[PartialHint] | None = None,
        entry_cache: dict[int, bytes] | None = None,
        queries_this_phase: int = 0,
    ):
        self.params = params
        self.master_seed = master_seed
        self.seed_counter = seed_counter
        self.hints = hints
        self.side_store = side_store
        self.partials = partials if partials is not None else []
        self.entry_cache = entry_cache if entry_cache is not None else {}
        self.queries_this_phase = queries_this_phase
        self._rng = random.Random(mix64(master_seed ^ ONLINE_SALT))
        self._next_index: dict[int, list[tuple[int, int]]] = {}
        for pid, partial in enumerate(self.partials):
            for position, index in partial.missing:
                self._next_index.setdefault(index, []).append((pid, position))

    # -- introspection ----------------------------------------------------

    @property
    def unconsumed_count(self) -> int:
        return sum(1 for h in self.hints if not h.consumed)

    def cover_count(self, index: int) -> int:
        """Number of unconsumed hints whose effective multiset contains index."""
        return len(self.covering_candidates(index))

    def next_generation_progress(self) -> GenerationProgress:
        total_slots = sum(len(p.expansion) for p in self.partials)
        resolved = total_slots - sum(len(p.missing) for p in self.partials)
        complete = sum(1 for p in self.partials if not p.missing)
        return GenerationProgress(
            complete_hints=complete,
            total_hints=len(self.partials),
            resolved_slots=resolved,
            total_slots=total_slots,
        )

    def verify_parities(self, get_entry: Callable[[int], bytes]) -> bool:
        """Recompute every parity from raw entries (test oracle, O(m*k))."""
        for hint in self.hints:
            acc = 0
            for index in hint.positional:
                acc ^= int.from_bytes(get_entry(index), "little")
            if acc != int.from_bytes(hint.parity, "little"):
                return False
            if hint.positional[hint.replacement_position - 1] != hint.replacement_index:
                return False
            if get_entry(hint.replacement_index) != hint.replacement_value:
                return False
        return True

    # -- lookup ------------------------------------------------------------

    def _check_index(self, index: int):
        if not 1 <= index <= self.params.num_entries:
            raise ParameterError(
                f"index {index} outside [1, {self.params.num_entries}]"
            )

    def covering_candidates(self, index: int) -> list[int]:
        """Handles of all unconsumed hints covering index (cache ignored)."""
        self._check_index(index)
        return [
            handle
            for handle, hint in enumerate(self.hints)
            if not hint.consumed and index in hint.members
        ]

    def find_covering_hint(self, index: int) -> CacheHit | CoveringHint | UncoveredEntry:
        """Resolve a query target to a cache hit, a hint, or a side-store read.

        The covering hint is chosen uniformly among candidates.  Raises
        CoverageError when nothing covers the index and the side store has
        no value for it (possible only after heavy mid-phase consumption).
        """
        self._check_index(index)
        cached = self.entry_cache.get(index)
        if cached is not None:
            return CacheHit(cached)
        candidates = self.covering_candidates(index)
        if candidates:
            return CoveringHint(self._rng.choice(candidates))
        side = self.side_store.get(index)
        if side is not None:
            return UncoveredEntry(side)
        raise CoverageError(f"no unconsumed hint covers index {index}")

    def effective_sorted(self, handle: int) -> tuple[int, ...]:
        return tuple(sorted(self.hints[handle].positional))

    def redacted_for(self, handle: int, index: int) -> tuple[int, ...]:
        """The hint's sorted multiset with one occurrence of index removed."""
        hint = self.hints[handle]
        if index not in hint.members:
            raise PoolStateError(f"hint {handle} does not cover index {index}")
        elements = sorted(hint.positional)
        elements.remove(index)
        return tuple(elements)

    def dummy_target(self) -> tuple[int, int]:
        """(handle, index) for a dummy query: uniform hint, uniform slot."""
        survivors = [h for h, hint in enumerate(self.hints) if not hint.consumed]
        if not survivors:
            raise CoverageError("no unconsumed hint available for a dummy query")
        handle = self._rng.choice(survivors)
        position = self._rng.randrange(self.params.hint_size)
        return handle, self.hints[handle].positional[position]

    # -- mutation ----------------------------------------------------------

    def cache_entry(self, index: int, value: bytes):
        self._check_index(index)
        self.entry_cache[index] = value

    def consume_and_replenish(self, handle: int, index: int, value: bytes):
        """Mark a hint consumed and re-point one survivor's slot at index.

        The survivor's parity is patched with old-slot-value XOR new-value,
        preserving the invariant parity == XOR of its effective multiset.
        """
        if not 0 <= handle < len(self.hints):
            raise PoolStateError(f"no hint with handle {handle}")
        hint = self.hints[handle]
        if hint.consumed:
            raise PoolStateError(f"hint {handle} already consumed")
        if index not in hint.members:
            raise PoolStateError(f"hint {handle} does not cover index {index}")
        if len(value) != self.params.entry_size:
            raise ParameterError(
                f"entry is {len(value)} bytes, expected {self.params.entry_size}"
            )
        if self.queries_this_phase >= self.params.hint_size:
            raise PhaseExhaustedError(
                f"phase budget of {self.params.hint_size} consumptions spent"
            )

        hint.consumed = True
        self.queries_this_phase += 1

        survivors = [h for h, s in enumerate(self.hints) if not s.consumed]
        if not survivors:
            logger.warning("replenish skipped: no surviving hint in pool")
            return
        survivor = self.hints[self._rng.choice(survivors)]
        patch = (
            int.from_bytes(survivor.parity, "little")
            ^ int.from_bytes(survivor.replacement_value, "little")
            ^ int.from_bytes(value, "little")
        )
        survivor.parity = patch.to_bytes(self.params.entry_size, "little")

        old_index = survivor.replacement_index
        slot = survivor.replacement_position - 1
        positional = list(survivor.positional)
        positional[slot] = index
        survivor.positional = tuple(positional)
        count = survivor.members[old_index]
        if count == 1:
            del survivor.members[old_index]
        else:
            survivor.members[old_index] = count - 1
        survivor.members[index] = survivor.members.get(index, 0) + 1
        survivor.replacement_index = index
        survivor.replacement_value = value

    def ingest_for_next_generation(self, index: int, value: bytes):
        """Fold a server-returned entry into every partial hint awaiting it.

        No-op when no partial is waiting on the index (including repeats of
        an already folded index, so callers may ingest duplicates safely).
        """
        self._check_index(index)
        if len(value) != self.params.entry_size:
            raise ParameterError(
                f"entry is {len(value)} bytes, expected {self.params.entry_size}"
            )
        waiting = self._next_index.pop(index, None)
        if not waiting:
            return
        word = int.from_bytes(value, "little")
        for pid, position in waiting:
            partial = self.partials[pid]
            pair = (position, index)
            if pair not in partial.missing:
                continue
            partial.missing.remove(pair)
            partial.parity_acc ^= word
            if position == partial.replacement_position:
                partial.replacement_value = value

    # -- refresh -----------------------------------------------------------

    def refresh_phase(
        self,
        fetch_missing: Callable[[list[int]], list[bytes]],
        build_next_generation: bool = True,
    ) -> RefreshReport:
        """End the phase: complete and promote the shadow generation.

        fetch_missing receives batches of exactly max(1, k-1) 1-based
        indices (the last batch padded with uniform random indices so every
        request is shaped like a query) and returns the entries in order.
        All fetches complete before any pool state changes, so a failing
        callback leaves the pool untouched.
        """
        if self.partials:
            return self._refresh_from_partials(fetch_missing, build_next_generation)
        return self._refresh_cold(fetch_missing, build_next_generation)

    def _batches(self, indices: list[int]) -> Iterator[list[int]]:
        size = max(1, self.params.hint_size - 1)
        for start in range(0, len(indices), size):
            batch = indices[start : start + size]
            while len(batch) < size:
                batch.append(self._rng.randint(1, self.params.num_entries))
            yield batch

    def _fetch_all(
        self,
        indices: list[int],
        fetch_missing: Callable[[list[int]], list[bytes]],
    ) -> tuple[dict[int, bytes], int, int]:
        fetched: dict[int, bytes] = {}
        queries = 0
        payload = 0
        for batch in self._batches(indices):
            entries = fetch_missing(list(batch))
            if len(entries) != len(batch):
                raise IntegrityError(
                    f"fetch returned {len(entries)} entries for {len(batch)} indices"
                )
            for index, entry in zip(batch, entries):
                if len(entry) != self.params.entry_size:
                    raise IntegrityError(
                        f"fetched entry is {len(entry)} bytes, "
                        f"expected {self.params.entry_size}"
                    )
                fetched[index] = entry
            queries += 1
            payload += len(batch) * self.params.entry_size
        return fetched, queries, payload

    def _refresh_from_partials(
        self,
        fetch_missing: Callable[[list[int]], list[bytes]],
        build_next_generation: bool,
    ) -> RefreshReport:
        n = self.params.num_entries
        needed = {index for p in self.partials for (_, index) in p.missing}
        covered = set()
        for partial in self.partials:
            covered.update(partial.expansion)
        uncovered_new = [i for i in range(1, n + 1) if i not in covered]
        to_fetch = sorted(needed | set(uncovered_new))

        fetched, queries, payload = self._fetch_all(to_fetch, fetch_missing)

        # fetches all succeeded; mutation is safe from here on
        promoted: list[Hint] = []
        for partial in self.partials:
            for position, index in sorted(partial.missing):
                word = int.from_bytes(fetched[index], "little")
                partial.parity_acc ^= word
                if position == partial.replacement_position:
                    partial.replacement_value = fetched[index]
            partial.missing.clear()
            if partial.replacement_value is None:
                raise PoolStateError(
                    "promoted hint is missing its replacement slot value"
                )
            slot_index = partial.expansion[partial.replacement_position - 1]
            hint = Hint(
                seed=partial.seed,
                parity=partial.parity_acc.to_bytes(self.params.entry_size, "little"),
                replacement_position=partial.replacement_position,
                replacement_index=slot_index,
                replacement_value=partial.replacement_value,
            )
            hint.hydrate(n, self.params.hint_size)
            promoted.append(hint)

        self.hints = promoted
        self.side_store = {index: fetched[index] for index in uncovered_new}
        self._start_new_phase(build_next_generation)
        logger.info(
            "phase refreshed: %d hints promoted, %d completion fetches",
            len(promoted),
            queries,
        )
        return RefreshReport(
            completion_queries=queries,
            fetched_payload_bytes=payload,
            promoted_hints=len(promoted),
            uncovered_entries=len(self.side_store),
            cold_start=False,
        )

    def _refresh_cold(
        self,
        fetch_missing: Callable[[list[int]], list[bytes]],
        build_next_generation: bool,
    ) -> RefreshReport:
        """No shadow generation exists: fetch everything and rebuild."""
        n = self.params.num_entries
        fetched, queries, payload = self._fetch_all(
            list(range(1, n + 1)), fetch_missing
        )
        rebuilt = preprocess(
            ((index, fetched[index]) for index in range(1, n + 1)),
            self.params,
            self.master_seed,
            start_counter=self.seed_counter,
            build_next_generation=build_next_generation,
        )
        self.hints = rebuilt.hints
        self.side_store = rebuilt.side_store
        self.partials = rebuilt.partials
        self._next_index = rebuilt._next_index
        self.seed_counter = rebuilt.seed_counter
        self.entry_cache = {}
        self.queries_this_phase = 0
        logger.info("cold refresh: pool rebuilt with %d hints", len(self.hints))
        return RefreshReport(
            completion_queries=queries,
            fetched_payload_bytes=payload,
            promoted_hints=len(self.hints),
            uncovered_entries=len(self.side_store),
            cold_start=True,
        )

    def _start_new_phase(self, build_next_generation: bool):
        self.entry_cache = {}
        self.queries_this_phase = 0
        if build_next_generation:
            specs, self.seed_counter = _generate_hint_specs(
                self.params, self.master_seed, self.seed_counter
            )
            self.partials, self._next_index = _build_partials(
                specs, self.params.hint_size
            )
        else:
            self.partials = []
            self._next_index = {}


def preprocess(
    db_source: Iterable[tuple[int, bytes]],
    params: CoverageParams,
    master_seed: int,
    start_counter: int = 0,
    build_next_generation: bool = True,
) -> HintPool:
    """Build a hint pool from one streaming pass over the database.

    db_source yields (index, entry) with indices exactly 1..n in order.
    Each hint's parity folds every entry its expansion names (an index
    appearing twice cancels, so only odd multiplicities are XORed), the
    replacement slot's value is captured, and entries covered by no hint
    go to the uncovered side store.
    """
    n, k = params.num_entries, params.hint_size
    beta = params.entry_size

    specs, counter = _generate_hint_specs(params, master_seed, start_counter)

    need_parity: dict[int, list[tuple[int, int]]] = {}
    need_value: dict[int, list[int]] = {}
    slots: list[int] = []
    slot_indices: list[int] = []
    for hid, (seed, expansion) in enumerate(specs):
        position = replacement_position_for_seed(seed, k)
        slots.append(position)
        slot_index = expansion[position - 1]
        slot_indices.append(slot_index)
        for index, multiplicity in Counter(expansion).items():
            need_parity.setdefault(index, []).append((hid, multiplicity))
        need_value.setdefault(slot_index, []).append(hid)

    parity_acc = [0] * len(specs)
    slot_values: list[bytes | None] = [None] * len(specs)
    side_store: dict[int, bytes] = {}
    expected = 1
    for index, entry in db_source:
        if index != expected:
            raise IntegrityError(f"stream gave index {index}, expected {expected}")
        if len(entry) != beta:
            raise IntegrityError(
                f"entry {index} is {len(entry)} bytes, expected {beta}"
            )
        expected += 1
        referenced = False
        parity_refs = need_parity.get(index)
        if parity_refs:
            referenced = True
            word = int.from_bytes(entry, "little")
            for hid, multiplicity in parity_refs:
                if multiplicity & 1:
                    parity_acc[hid] ^= word
        value_refs = need_value.get(index)
        if value_refs:
            for hid in value_refs:
                slot_values[hid] = entry
        if not referenced:
            side_store[index] = entry
    if expected != n + 1:
        raise IntegrityError(f"stream ended at {expected - 1} of {n} entries")

    hints: list[Hint] = []
    for hid, (seed, expansion) in enumerate(specs):
        value = slot_values[hid]
        if value is None:
            raise PoolStateError("replacement slot value missing after stream")
        hint = Hint(
            seed=seed,
            parity=parity_acc[hid].to_bytes(beta, "little"),
            replacement_position=slots[hid],
            replacement_index=slot_indices[hid],
            replacement_value=value,
        )
        hint.positional = expansion
        hint.members = dict(Counter(expansion))
        hints.append(hint)

    pool = HintPool(
        params=params,
        master_seed=master_seed,
        seed_counter=counter,
        hints=hints,
        side_store=side_store,
    )
    if build_next_generation:
        pool._start_new_phase(build_next_generation=True)
    logger.info(
        "preprocessed %d hints over n=%d (%d uncovered)",
        len(hints),
        n,
        len(side_store),
    )
    return pool
