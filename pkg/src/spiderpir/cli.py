"""Command-line interface.

Every subcommand is deterministic given its flags and seeds.  All options
can also be set via SPIDERPIR_<COMMAND>_<OPTION> environment variables.
Exit codes: 0 success, 1 failure, 2 usage, 3 network, 4 protocol, 5 pool
state or format, 6 coverage.
"""

from __future__ import annotations

import functools
import json
import logging
import math
import random
import sys
import time
from pathlib import Path

import click

from . import __version__
from .bench import (
    SweepRow,
    find_crossover,
    load_config,
    sweep,
    write_csv,
)
from .client import ClientSession, TcpTransport
from .database import Database, generate_database
from .errors import (
    CoverageError,
    DatabaseFormatError,
    DuplicateKeyError,
    FramingError,
    IntegrityError,
    NetworkError,
    OracleTooLargeError,
    ParameterError,
    PhaseExhaustedError,
    PoolFormatError,
    PoolStateError,
    ProtocolError,
)
from .keymap import build_keymap, load_keymap, save_keymap
from .multiset import (
    combinatorial_counts,
    enumerate_multisets,
    expand_multiset_from_seed,
    multiset_from_subset,
    subset_from_multiset,
    verify_redaction_bijection,
)
from .params import CoverageParams, compute_params, coverage_bounds
from .poolfile import load_pool, save_pool
from .privacy import empirical_coverage, transcript_distribution_test
from .prg import derive_seed
from .server import ServerConfig, TcpPirServer

EXIT_FAILURE = 1
EXIT_NETWORK = 3
EXIT_PROTOCOL = 4
EXIT_POOL = 5
EXIT_COVERAGE = 6

logger = logging.getLogger(__name__)


def _emit(report: dict, as_json: bool, lines: list[str]):
    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True, default=str))
    else:
        for line in lines:
            click.echo(line)


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, NetworkError):
        return EXIT_NETWORK
    if isinstance(exc, (FramingError, ProtocolError)):
        return EXIT_PROTOCOL
    if isinstance(exc, (PoolFormatError, PoolStateError, PhaseExhaustedError)):
        return EXIT_POOL
    if isinstance(exc, CoverageError):
        return EXIT_COVERAGE
    return EXIT_FAILURE


def handles_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (
            NetworkError,
            FramingError,
            ProtocolError,
            PoolFormatError,
            PoolStateError,
            PhaseExhaustedError,
            CoverageError,
            ParameterError,
            DatabaseFormatError,
            IntegrityError,
            OracleTooLargeError,
            DuplicateKeyError,
        ) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code_for(exc))

    return wrapper


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port:
        raise ParameterError(f"listen address must be host:port, got {value!r}")
    return host, int(port)


def _connect(server: str) -> TcpTransport:
    host, port = _parse_listen(server)
    return TcpTransport(host, port)


def _writable(out: Path) -> Path:
    """Create the parent directory up front so long jobs cannot fail at the end."""
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


@click.group(context_settings={"auto_envvar_prefix": "SPIDERPIR"})
@click.version_option(version=__version__)
@click.option("--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Stateful single-server PIR with multiset hints."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command("gen-db")
@click.option("--n", "num_entries", type=int, required=True, help="Number of entries.")
@click.option("--beta", "entry_size", type=int, required=True, help="Entry size in bytes.")
@click.option("--seed", type=int, required=True, help="Corpus generation seed.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def gen_db(num_entries: int, entry_size: int, seed: int, out: Path, as_json: bool):
    """Generate a seeded database file."""
    generate_database(_writable(out), num_entries, entry_size, seed)
    size = out.stat().st_size
    report = {
        "path": str(out),
        "n": num_entries,
        "beta": entry_size,
        "seed": seed,
        "file_bytes": size,
    }
    _emit(report, as_json, [f"wrote {out} ({size} bytes, n={num_entries}, beta={entry_size})"])


@main.command()
@click.option("--db", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--mode", type=click.Choice(["cooperative", "default"]), default="cooperative", show_default=True)
@click.option("--listen", default="127.0.0.1:7070", show_default=True, help="host:port to bind.")
@click.option("--max-indices", type=int, default=None, help="Cap on indices per request (default 4*sqrt(n)).")
@click.option("--io-bytes-per-ms", type=float, default=None, help="Simulated storage throughput.")
@handles_errors
def serve(db: Path, mode: str, listen: str, max_indices: int | None, io_bytes_per_ms: float | None):
    """Serve a database over TCP until interrupted."""
    host, port = _parse_listen(listen)
    server = TcpPirServer(
        ServerConfig(
            db_path=db,
            mode=mode,
            host=host,
            port=port,
            max_indices=max_indices,
            io_bytes_per_ms=io_bytes_per_ms,
        )
    )
    server.start()
    click.echo(f"serving {db} in {mode} mode on {server.address[0]}:{server.address[1]}", err=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


@main.command()
@click.option("--server", required=True, help="host:port of a running server.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Pool file to write.")
@click.option("--master-seed", type=int, default=1, show_default=True)
@click.option("--coverage-constant", "-C", type=float, default=4.0, show_default=True)
@click.option("--delta-slack", type=float, default=0.6, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def preprocess(server: str, out: Path, master_seed: int, coverage_constant: float, delta_slack: float, as_json: bool):
    """Stream the database once and build a hint pool."""
    _writable(out)
    with ClientSession(_connect(server)) as session:
        pool = session.run_preprocessing(
            master_seed,
            coverage_constant=coverage_constant,
            delta_slack=delta_slack,
        )
        save_pool(pool, out)
        report = {
            "path": str(out),
            "n": pool.params.num_entries,
            "k": pool.params.hint_size,
            "m": pool.params.num_hints,
            "beta": pool.params.entry_size,
            "uncovered": len(pool.side_store),
            "streamed_bytes": pool.params.num_entries * pool.params.entry_size,
        }
    _emit(
        report,
        as_json,
        [
            f"pool written to {out}",
            f"n={report['n']} k={report['k']} m={report['m']} beta={report['beta']}",
            f"uncovered indices: {report['uncovered']}",
        ],
    )


def _resolve_index(index: int | None, key: str | None, keymap_path: Path | None) -> int:
    if (index is None) == (key is None):
        raise ParameterError("give exactly one of --index or --key")
    if index is not None:
        return index
    if keymap_path is None:
        raise ParameterError("--key requires --keymap")
    keymap = load_keymap(keymap_path)
    if key not in keymap:
        raise ParameterError(f"key {key!r} not in keymap")
    return keymap[key]


@main.command()
@click.option("--server", required=True, help="host:port of a running server.")
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--index", type=int, default=None, help="0-based entry index.")
@click.option("--key", default=None, help="Key to look up via --keymap.")
@click.option("--keymap", "keymap_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def query(server: str, pool_path: Path, index: int | None, key: str | None, keymap_path: Path | None, as_json: bool):
    """Retrieve one entry privately; pool state is updated in place."""
    wire_index = _resolve_index(index, key, keymap_path)
    pool = load_pool(pool_path)
    if not 0 <= wire_index < pool.params.num_entries:
        raise ParameterError(
            f"index {wire_index} outside [0, {pool.params.num_entries})"
        )
    with ClientSession(_connect(server)) as session:
        session.attach_pool(pool)
        value = session.query(wire_index + 1)
        save_pool(pool, pool_path)
        record = session.records[-1]
        report = {
            "index": wire_index,
            "value_hex": value.hex(),
            "outcome": record.outcome,
            "uploaded_payload_bytes": record.uploaded_payload_bytes,
            "downloaded_payload_bytes": record.downloaded_payload_bytes,
            "queries_this_phase": pool.queries_this_phase,
        }
    _emit(
        report,
        as_json,
        [
            f"entry {wire_index}: {value.hex()}",
            f"outcome: {record.outcome}, payload up {record.uploaded_payload_bytes} B, "
            f"down {record.downloaded_payload_bytes} B",
        ],
    )


@main.command("run-phases")
@click.option("--server", required=True, help="host:port of a running server.")
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--phases", type=int, required=True)
@click.option("--queries-per-phase", type=int, default=None, help="Defaults to the phase budget k.")
@click.option("--seed", type=int, default=1, show_default=True, help="Target selection seed.")
@click.option("--oracle-db", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Local database copy for correctness checking.")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def run_phases(server: str, pool_path: Path, phases: int, queries_per_phase: int | None, seed: int, oracle_db: Path | None, as_json: bool):
    """Run whole phases of uniform random queries, refreshing between them."""
    if phases < 0:
        raise ParameterError("--phases must be >= 0")
    if phases == 0:
        _emit({"phases": 0, "queries": 0}, as_json, ["nothing to do (0 phases)"])
        return
    pool = load_pool(pool_path)
    n = pool.params.num_entries
    per_phase = queries_per_phase or pool.params.hint_size
    rng = random.Random(seed)
    targets = [
        [rng.randint(1, n) for _ in range(per_phase)] for _ in range(phases)
    ]
    expected = None
    if oracle_db is not None:
        db = Database.load(oracle_db)
        if db.num_entries != n or db.entry_size != pool.params.entry_size:
            raise ParameterError("oracle database does not match the pool")
        expected = {i: db.entry(i - 1) for i in range(1, n + 1)}
    with ClientSession(_connect(server)) as session:
        session.attach_pool(pool)
        reports = session.run_phases(targets, expected)
        save_pool(pool, pool_path)

    total_queries = sum(r.queries for r in reports)
    total_correct = sum(r.correct for r in reports) if expected is not None else None
    refresh_bytes = sum(r.refresh.fetched_payload_bytes for r in reports)
    online_down = sum(r.downloaded_payload_bytes for r in reports)
    report = {
        "phases": phases,
        "queries": total_queries,
        "correct": total_correct,
        "online_download_payload_bytes": online_down,
        "refresh_download_payload_bytes": refresh_bytes,
        "amortized_download_per_query": (online_down + refresh_bytes) / total_queries,
        "per_phase": [
            {
                "queries": r.queries,
                "correct": r.correct,
                "downloaded_payload_bytes": r.downloaded_payload_bytes,
                "refresh_fetches": r.refresh.completion_queries,
                "refresh_bytes": r.refresh.fetched_payload_bytes,
                "cold_start": r.refresh.cold_start,
            }
            for r in reports
        ],
    }
    lines = [
        f"ran {phases} phases, {total_queries} queries",
        f"online download {online_down} B, refresh download {refresh_bytes} B",
    ]
    if total_correct is not None:
        lines.insert(0, f"correct: {total_correct}/{total_queries}")
    _emit(report, as_json, lines)
    if total_correct is not None and total_correct != total_queries:
        sys.exit(EXIT_FAILURE)


@main.command()
@click.argument("suite", type=click.Choice(["bijection", "counts", "lemma1", "uniformity", "coverage", "transcript"]))
@click.option("--n", "universe", type=int, default=None, help="Universe size.")
@click.option("--k", "hint_size", type=int, default=None, help="Multiset size.")
@click.option("--element", type=int, default=None, help="Fixed element (lemma1).")
@click.option("--samples", type=int, default=60000, show_default=True, help="Seeds for uniformity.")
@click.option("--trials", type=int, default=20000, show_default=True, help="Trials per sequence (transcript).")
@click.option("--queries", type=int, default=3, show_default=True, help="Queries per sequence (transcript).")
@click.option("--runs", type=int, default=20, show_default=True, help="Pools to build (coverage).")
@click.option("--coverage-constant", "-C", type=float, default=4.0, show_default=True)
@click.option("--alpha", type=float, default=0.001, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def verify(suite: str, universe: int | None, hint_size: int | None, element: int | None, samples: int, trials: int, queries: int, runs: int, coverage_constant: float, alpha: float, seed: int, as_json: bool):
    """Run an exact or statistical verification suite."""
    passed, report, lines = _run_verify_suite(
        suite, universe, hint_size, element, samples, trials, queries, runs,
        coverage_constant, alpha, seed,
    )
    report["suite"] = suite
    report["passed"] = passed
    lines.append(f"{suite}: {'PASS' if passed else 'FAIL'}")
    _emit(report, as_json, lines)
    if not passed:
        sys.exit(EXIT_FAILURE)


def _run_verify_suite(suite, universe, hint_size, element, samples, trials, queries, runs, coverage_constant, alpha, seed):
    from scipy import stats

    if suite == "bijection":
        n = universe or 4
        k = hint_size or 3
        multisets = enumerate_multisets(n, k)
        subsets = {subset_from_multiset(m).elements for m in multisets}
        round_trip = all(
            multiset_from_subset(subset_from_multiset(m), n) == m for m in multisets
        )
        passed = round_trip and len(subsets) == len(multisets)
        report = {"n": n, "k": k, "multisets": len(multisets), "distinct_subsets": len(subsets), "round_trip": round_trip}
        lines = [f"{len(multisets)} multisets <-> {len(subsets)} subsets, round-trip {'ok' if round_trip else 'BROKEN'}"]
        return passed, report, lines

    if suite == "counts":
        n = universe or 3
        k = hint_size or 2
        counts = combinatorial_counts(n, k)
        report = {
            "n": n,
            "k": k,
            "total_multisets": counts.total_multisets,
            "containing_multisets": counts.containing_multisets,
            "inclusion_probability": str(counts.inclusion_probability),
        }
        passed = True
        if counts.total_multisets <= 1_000_000:
            enumerated = enumerate_multisets(n, k)
            containing = sum(1 for m in enumerated if 1 in m.elements)
            passed = (
                len(enumerated) == counts.total_multisets
                and containing == counts.containing_multisets
            )
            report["enumeration_cross_check"] = passed
        lines = [
            f"M={counts.total_multisets} S={counts.containing_multisets} p={counts.inclusion_probability}"
        ]
        return passed, report, lines

    if suite == "lemma1":
        n = universe or 4
        k = hint_size or 3
        elements = [element] if element else list(range(1, n + 1))
        results = {i: verify_redaction_bijection(n, k, i) for i in elements}
        expected_size = combinatorial_counts(n, k).containing_multisets
        passed = all(results.values())
        report = {"n": n, "k": k, "containing_size": expected_size, "elements_checked": len(results)}
        lines = [f"|R_i| = {expected_size} for each of {len(results)} elements, bijections {'all verified' if passed else 'BROKEN'}"]
        return passed, report, lines

    if suite == "uniformity":
        n = universe or 5
        k = hint_size or 2
        cells = {m.elements: 0 for m in enumerate_multisets(n, k)}
        for counter in range(samples):
            expansion = expand_multiset_from_seed(n, k, derive_seed(seed, counter))
            cells[expansion.elements] += 1
        observed = list(cells.values())
        result = stats.chisquare(observed)
        passed = bool(result.pvalue >= alpha)
        report = {"n": n, "k": k, "samples": samples, "cells": len(cells), "chi2": float(result.statistic), "p_value": float(result.pvalue), "alpha": alpha}
        lines = [f"chi2={result.statistic:.2f} over {len(cells)} cells, p={result.pvalue:.4f} (alpha={alpha})"]
        return passed, report, lines

    if suite == "coverage":
        n = universe or 1024
        params = compute_params(n, 8, coverage_constant=coverage_constant)
        bounds = coverage_bounds(params)
        covered, mean_cover, uncovered_counts = empirical_coverage(params, runs, seed)
        expected = float(bounds.expected_cover_count)
        passed = covered == runs and abs(mean_cover - expected) / expected < 0.25
        report = {
            "n": n,
            "k": params.hint_size,
            "m": params.num_hints,
            "pools": runs,
            "fully_covered": covered,
            "mean_cover_count": mean_cover,
            "expected_cover_count": expected,
            "markov_failure_bound": bounds.markov_failure_bound,
            "chernoff_failure_bound": bounds.chernoff_failure_bound,
        }
        lines = [
            f"{covered}/{runs} pools fully covered; mean cover {mean_cover:.2f} vs expected {expected:.2f}",
            f"bounds: markov={bounds.markov_failure_bound:.3g} chernoff={bounds.chernoff_failure_bound:.3g}",
        ]
        return passed, report, lines

    if suite == "transcript":
        n = universe or 4
        k = hint_size or 3
        rng = random.Random(seed)
        repeated = [rng.randint(1, n)] * queries
        distinct = []
        while len(distinct) < queries:
            candidate = rng.randint(1, n)
            if candidate not in distinct or len(distinct) >= n:
                distinct.append(candidate)
        result = transcript_distribution_test(
            n, k, repeated, distinct, trials, alpha=alpha, seed=seed
        )
        passed = result.indistinguishable and result.round1_uniform
        report = {
            "n": n,
            "k": k,
            "trials": trials,
            "cells": result.num_cells,
            "rounds": [
                {"round": r.round_number, "p_value": r.p_value, "total_variation": r.total_variation}
                for r in result.rounds
            ],
            "round1_uniform_p": list(result.round1_uniform_p),
            "indistinguishable": result.indistinguishable,
        }
        lines = [
            f"sequences {repeated} vs {distinct}: "
            + ", ".join(f"round {r.round_number} p={r.p_value:.4f}" for r in result.rounds),
            f"round-1 uniformity p={result.round1_uniform_p[0]:.4f}/{result.round1_uniform_p[1]:.4f}",
        ]
        return passed, report, lines

    raise ParameterError(f"unknown suite {suite!r}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True, help="TOML or JSON sweep definition.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="CSV output path.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--figures-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Defaults to the CSV's directory.")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def bench(config_path: Path, out: Path, figures: bool, figures_dir: Path | None, as_json: bool):
    """Evaluate the latency model over a sweep and write CSV plus figures."""
    config = load_config(config_path)
    _writable(out)
    if figures_dir is not None:
        figures_dir.mkdir(parents=True, exist_ok=True)
    rows = sweep(config)
    write_csv(rows, out)
    figure_paths: list[Path] = []
    if figures:
        from .figures import render_sweep_figures

        figure_paths = render_sweep_figures(rows, figures_dir or out.parent)
    # compare the schemes on the lightest-load lane; mixing client counts
    # would pit saturated rows against idle ones
    lightest = min(config.num_clients)
    crossovers = {}
    for bandwidth in config.bandwidth:
        crossovers[bandwidth] = find_crossover(rows, bandwidth, num_clients=lightest)
    saturated = sum(1 for row in rows if math.isinf(row.total))
    report = {
        "rows": len(rows),
        "csv": str(out),
        "figures": [str(p) for p in figure_paths],
        "crossover_beta_by_bandwidth": {str(k): v for k, v in crossovers.items()},
        "crossover_clients": lightest,
        "saturated_rows": saturated,
    }
    lines = [f"wrote {len(rows)} rows to {out}"]
    for bandwidth, beta in crossovers.items():
        if beta is None:
            lines.append(
                f"bandwidth {bandwidth:g} bits/ms: basespider never beats rms24 "
                f"in this sweep ({lightest} client)"
            )
        else:
            lines.append(
                f"bandwidth {bandwidth:g} bits/ms: basespider beats rms24 "
                f"from beta={beta} ({lightest} client)"
            )
    if saturated:
        lines.append(f"{saturated} scenarios saturated (rho >= 1)")
    lines.extend(f"figure: {p}" for p in figure_paths)
    _emit(report, as_json, lines)


@main.command("keymap")
@click.option("--keys", "keys_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True, help="File with one key per line.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def keymap_command(keys_path: Path, out: Path, as_json: bool):
    """Build a sorted key-to-index map from a key list."""
    keys = [
        line for line in keys_path.read_text(encoding="utf-8").splitlines() if line
    ]
    mapping = build_keymap(keys)
    save_keymap(mapping, _writable(out))
    report = {"keys": len(mapping), "path": str(out)}
    _emit(report, as_json, [f"wrote {len(mapping)} keys to {out}"])


if __name__ == "__main__":
    main()
