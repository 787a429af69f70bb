"""Acceptance suite: one verdict line per promised behaviour.

Every test prints "[PASS] ..." or "[FAIL] ..." before asserting, so a
`pytest -s tests/test_acceptance.py` run reads as a checklist even when
something is red.  Statistical checks use alpha = 0.001 throughout.
"""

import math
import random
from itertools import combinations_with_replacement
from types import SimpleNamespace

import pytest
from scipy import stats

from spiderpir.bench import (
    BenchConfig,
    LatencyScenario,
    find_crossover,
    network_ms,
    queue,
    scheme_traffic,
    service_ms,
    sweep,
)
from spiderpir.client import ClientSession, LocalTransport
from spiderpir.database import Database, generate_database
from spiderpir.multiset import (
    Multiset,
    combinatorial_counts,
    enumerate_multisets,
    expand_multiset_from_seed,
    multiset_from_subset,
    subset_from_multiset,
    verify_redaction_bijection,
)
from spiderpir.params import compute_params
from spiderpir.prg import derive_seed
from spiderpir.privacy import empirical_coverage, transcript_distribution_test
from spiderpir.protocol import INDEX_WIDTH
from spiderpir.server import ServerCore, answer_xor_fetch
from spiderpir.utils import xor_bytes, zero_entry

ALPHA = 0.001


def verdict(ok: bool, name: str, detail: str = "") -> bool:
    tail = f"  ({detail})" if detail else ""
    print(f"[{'PASS' if ok else 'FAIL'}] {name}{tail}")
    return ok


# -- 1: the multiset <-> subset bijection, exhaustively ------------------------


def test_01_bijection_exhaustive():
    checked = 0
    ok = True
    for n in range(1, 7):
        for k in range(1, 5):
            multisets = enumerate_multisets(n, k)
            ok = ok and len(multisets) == math.comb(n + k - 1, k)
            seen = set()
            for m in multisets:
                subset = subset_from_multiset(m)
                seen.add(subset.elements)
                ok = ok and multiset_from_subset(subset, n) == m
                checked += 1
            ok = ok and len(seen) == len(multisets)
    assert verdict(
        ok,
        "multiset/subset bijection exact for all n<=6, k<=4",
        f"{checked} round trips",
    )


# -- 2: the worked example ------------------------------------------------------


def test_02_worked_example():
    multiset = Multiset((2, 2, 3), universe_size=4)
    subset = subset_from_multiset(multiset)
    ok = subset.elements == (2, 3, 5)
    ok = ok and multiset_from_subset(subset, 4) == multiset
    assert verdict(ok, "worked example (2,2,3) <-> (2,3,5)")


# -- 3: redaction bijection sizes ------------------------------------------------


def test_03_redaction_bijection():
    ok = True
    for n, k in ((4, 3), (5, 2), (3, 3)):
        expected_size = math.comb(n + k - 2, k - 1)
        for element in range(1, n + 1):
            containing = [
                m for m in enumerate_multisets(n, k) if element in m.elements
            ]
            ok = ok and len(containing) == expected_size
            ok = ok and verify_redaction_bijection(n, k, element)
    assert verdict(
        ok, "redaction bijection verified for (4,3), (5,2), (3,3), every element"
    )


# -- 4: seed expansion uniformity --------------------------------------------------


def test_04_seed_expansion_uniformity():
    n, k, samples = 5, 2, 150_000
    cells = {
        elements: 0
        for elements in combinations_with_replacement(range(1, n + 1), k)
    }
    master = 20_240_817
    for counter in range(samples):
        expansion = expand_multiset_from_seed(n, k, derive_seed(master, counter))
        cells[expansion.elements] += 1
    result = stats.chisquare(list(cells.values()))
    ok = bool(result.pvalue >= ALPHA) and len(cells) == 15
    assert verdict(
        ok,
        f"{samples} seed expansions uniform over {len(cells)} multisets",
        f"chi2={result.statistic:.2f}, p={result.pvalue:.4f}",
    )


# -- 5, 6, 12: one full retrieval workload, shared ----------------------------------


@pytest.fixture(scope="module")
def retrieval_runs(tmp_path_factory):
    """Both serving modes over the same corpus: 4 phases x 32 queries each."""
    root = tmp_path_factory.mktemp("acceptance")
    db_path = generate_database(root / "corpus.db", 1024, 64, seed=1001)
    db = Database.load(db_path)
    truth = {i: db.entry_1based(i) for i in range(1, 1025)}
    params = compute_params(1024, 64, coverage_constant=4.0)
    runs = {}
    for mode in ("cooperative", "default"):
        core = ServerCore(db, mode)
        session = ClientSession(LocalTransport(core))
        session.run_preprocessing(master_seed=77, params=params)
        rng = random.Random(55)
        phases = [[rng.randint(1, 1024) for _ in range(32)] for _ in range(4)]
        reports = session.run_phases(phases, expected=truth)
        runs[mode] = SimpleNamespace(
            core=core, session=session, reports=reports, params=params
        )
    return runs


def test_05_end_to_end_both_modes(retrieval_runs):
    params = retrieval_runs["cooperative"].params
    sizing_ok = params.hint_size == 32 and params.num_hints == 1775
    correct = {
        mode: sum(r.correct for r in run.reports)
        for mode, run in retrieval_runs.items()
    }
    queries = {
        mode: sum(r.queries for r in run.reports)
        for mode, run in retrieval_runs.items()
    }
    ok = (
        sizing_ok
        and queries == {"cooperative": 128, "default": 128}
        and correct == queries
    )
    assert verdict(
        ok,
        "end-to-end retrieval correct in both modes across refreshes",
        f"m={params.num_hints}, correct {correct['cooperative']}+{correct['default']}"
        f"/{queries['cooperative'] + queries['default']}",
    )


def test_06_download_exactness(retrieval_runs):
    beta, k = 64, 32
    expected = {"cooperative": beta, "default": (k - 1) * beta}
    ok = True
    wire_queries = 0
    for mode, run in retrieval_runs.items():
        for record in run.session.records:
            if record.outcome == "cache":
                ok = ok and record.downloaded_payload_bytes == 0
                continue
            wire_queries += 1
            ok = ok and record.downloaded_payload_bytes == expected[mode]
            ok = ok and record.uploaded_payload_bytes == (k - 1) * INDEX_WIDTH
    ok = ok and wire_queries > 0
    assert verdict(
        ok,
        "per-query download exactly beta (cooperative) / (k-1)*beta (default)",
        f"{wire_queries} wire queries checked, dummies included",
    )


def test_12_default_mode_never_xors(retrieval_runs):
    default_ops = retrieval_runs["default"].core.xor_ops
    cooperative_ops = retrieval_runs["cooperative"].core.xor_ops
    ok = default_ops == 0 and cooperative_ops > 0
    assert verdict(
        ok,
        "default-mode server performed zero XOR operations",
        f"default={default_ops}, cooperative={cooperative_ops}",
    )


# -- 7: coverage ---------------------------------------------------------------------


def test_07_coverage_of_fresh_pools():
    params = compute_params(1024, 8, coverage_constant=4.0)
    fully_covered, mean_cover, _ = empirical_coverage(params, num_pools=100, seed=2024)
    target = 2 * 4.0 * math.log(1024)
    ok = fully_covered >= 99 and abs(mean_cover - target) / target < 0.05
    assert verdict(
        ok,
        "100 fresh pools: >=99 fully covered, mean cover within 5% of 2C*ln(n)",
        f"covered {fully_covered}/100, mean {mean_cover:.2f} vs {target:.2f}",
    )


# -- 8: transcript indistinguishability ------------------------------------------------


def test_08_transcript_indistinguishability():
    # The slot-rewrite replenishment carries a small residual sequence
    # dependence: by exact enumeration at toy sizes the transcript total
    # variation between target sequences is positive (about 1% here by
    # round 3), so this chi-square procedure has partial power against a
    # real effect and its verdict depends on the seed.  The seed below was
    # fixed before observing any outcome and must not be tuned.
    report = transcript_distribution_test(
        universe=4,
        hint_size=3,
        targets_a=[1, 1, 1],
        targets_b=[2, 3, 4],
        trials=100_000,
        alpha=ALPHA,
        seed=1,
    )
    ok = (
        report.indistinguishable
        and report.round1_uniform
        and report.num_cells == 10
    )
    worst = min(r.p_value for r in report.rounds)
    assert verdict(
        ok,
        "repeated vs distinct target sequences indistinguishable (100k trials)",
        f"worst round p={worst:.4f}, round-1 uniform p={min(report.round1_uniform_p):.4f}",
    )


# -- 9: server XOR oracle ----------------------------------------------------------------


def test_09_server_xor_oracle(tmp_path):
    db = Database.load(generate_database(tmp_path / "o.db", 512, 32, seed=3003))
    rng = random.Random(3003)
    ok = True
    for trial in range(1_000):
        length = rng.randint(0, 64)
        indices = [rng.randrange(512) for _ in range(length)]
        if trial % 3 == 0 and indices:
            indices.append(indices[0])  # force an x^x=0 pair
        expected = zero_entry(32)
        for index in indices:
            expected = xor_bytes(expected, db.entry(index))
        ok = ok and answer_xor_fetch(db, tuple(indices)) == expected
    assert verdict(ok, "server XOR answer matches brute force on 1000 random lists")


# -- 10: latency formulas -------------------------------------------------------------------


def test_10_latency_formulas():
    # 4 MiB download at 50,000 bits/ms
    expected_network = 33_554_432 / 50_000
    got_network = network_ms(0, 4 << 20, 50_000.0)
    ok = abs(got_network - expected_network) <= 1e-6 * expected_network

    rng = random.Random(42)
    for _ in range(20):
        base = rng.uniform(0.1, 2_000.0)
        svc = rng.uniform(0.1, 500.0)
        clients = rng.randint(0, 64)
        scenario = LatencyScenario(
            n=1024,
            beta=64,
            bandwidth=50_000.0,
            io_throughput=1e6,
            num_clients=clients,
            scheme="basespider",
            hint_search_ms=0.0,
        )
        result = queue(scenario, base, svc)
        rho = clients * svc / (base + svc)
        ok = ok and abs(result.rho - rho) <= 1e-9 * max(1.0, rho)
        if rho >= 1.0:
            ok = ok and result.saturated and math.isinf(result.total_ms)
        else:
            wait = svc * rho / (1.0 - rho)
            total = base + svc + wait
            ok = ok and abs(result.wait_ms - wait) <= 1e-9 * max(1.0, wait)
            ok = ok and abs(result.total_ms - total) <= 1e-9 * max(1.0, total)
            ok = ok and not result.saturated

    # the saturated flag flips exactly at rho = 1
    at_one = queue(
        LatencyScenario(
            n=1024, beta=64, bandwidth=50_000.0, io_throughput=1e6,
            num_clients=2, scheme="basespider", hint_search_ms=0.0,
        ),
        base_ms=10.0,
        svc_ms=10.0,
    )
    below_one = queue(
        LatencyScenario(
            n=1024, beta=64, bandwidth=50_000.0, io_throughput=1e6,
            num_clients=2, scheme="basespider", hint_search_ms=0.0,
        ),
        base_ms=10.0 + 1e-9,
        svc_ms=10.0,
    )
    ok = ok and at_one.rho == 1.0 and at_one.saturated
    ok = ok and below_one.rho < 1.0 and not below_one.saturated
    assert verdict(
        ok,
        "network/service/queue formulas match independent re-derivation",
        f"network_ms={got_network:.5f}, saturation flips at rho=1",
    )


# -- 11: benchmark shape -----------------------------------------------------------------------


def test_11_benchmark_shape():
    betas = [65536, 262144, 1048576, 4194304]
    config = BenchConfig(
        n=[1024],
        beta=betas,
        bandwidth=[50_000.0],
        io_throughput=[1e6],
        num_clients=[1, 2, 4, 8, 16, 32, 64, 128],
        scheme=["basespider", "spider", "rms24"],
        hint_search_ms="measured",
        search_trials=3,
        seed=5,
    )
    rows = sweep(config)

    # (a) the cooperative response is half the plain-read pair at every beta
    download_ok = all(
        scheme_traffic("rms24", 1024, beta)[1]
        == 2 * scheme_traffic("basespider", 1024, beta)[1]
        for beta in betas
    )

    # (b) a crossover entry size exists at this bandwidth
    crossover = find_crossover(rows, bandwidth=50_000.0, num_clients=1)
    crossover_ok = crossover is not None

    # (c) latency diverges as the client count approaches saturation
    lane = sorted(
        (row for row in rows if row.scheme == "basespider" and row.beta == 4194304),
        key=lambda row: row.clients,
    )
    totals = [row.total for row in lane]
    monotone = all(a <= b for a, b in zip(totals, totals[1:]))
    finite = [t for t in totals if math.isfinite(t)]
    diverges = (
        len(finite) >= 2
        and finite[-1] > finite[0]
        and math.isinf(totals[-1])
    )
    ok = download_ok and crossover_ok and monotone and diverges
    assert verdict(
        ok,
        "sweep shape: 2x download ratio, crossover exists, saturation diverges",
        f"crossover beta={crossover}, finite->inf over {len(lane)} client counts",
    )
