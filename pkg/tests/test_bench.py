"""Latency model: traffic accounting, queueing, sweeps, crossover, output."""

import csv
import json
import math
import random

import pytest

from spiderpir.bench import (
    CSV_FIELDS,
    BenchConfig,
    LatencyScenario,
    SweepRow,
    find_crossover,
    hint_size_for,
    load_config,
    measure_hint_search_ms,
    network_ms,
    queue,
    scheme_traffic,
    service_ms,
    sweep,
    write_csv,
)
from spiderpir.errors import ParameterError
from spiderpir.figures import render_sweep_figures


# -- traffic -----------------------------------------------------------------


def test_hint_size_for():
    assert hint_size_for(1 << 20) == 1024
    assert hint_size_for(1024) == 32
    assert hint_size_for(1023) == 32
    assert hint_size_for(2) == 2


def test_traffic_at_four_mebibyte_entries():
    # n = 2^20, beta = 4 MiB
    n, beta = 1 << 20, 4 << 20
    assert scheme_traffic("basespider", n, beta) == (1023 * 8, beta)
    assert scheme_traffic("spider", n, beta) == (1023 * 8, 1023 * beta)
    assert scheme_traffic("rms24", n, beta) == (1024 * 8, 2 * beta)


def test_basespider_downloads_half_of_rms24():
    for n in (1024, 1 << 20):
        for beta in (65536, 4 << 20):
            _, down_base = scheme_traffic("basespider", n, beta)
            _, down_rms = scheme_traffic("rms24", n, beta)
            assert down_rms == 2 * down_base


def test_unknown_scheme_rejected():
    with pytest.raises(ParameterError):
        scheme_traffic("seal", 1024, 64)


# -- the per-query model -------------------------------------------------------


def test_network_time_halves_when_bandwidth_doubles():
    slow = network_ms(8184, 4 << 20, 50_000.0)
    fast = network_ms(8184, 4 << 20, 100_000.0)
    assert slow == pytest.approx(2 * fast)


def test_network_time_exact():
    # (0 + 4 * 2^20 bytes) * 8 bits / 50_000 bits per ms
    assert network_ms(0, 4 << 20, 50_000.0) == pytest.approx((4 << 20) * 8 / 50_000)


def test_service_time_exact():
    # k = 1024 entries of 65536 bytes at 1e6 bytes/ms
    assert service_ms(1 << 20, 65536, 1_000_000.0) == pytest.approx(67.108864)


def scenario(**overrides) -> LatencyScenario:
    values = dict(
        n=1024,
        beta=65536,
        bandwidth=50_000.0,
        io_throughput=1_000_000.0,
        num_clients=1,
        scheme="basespider",
        hint_search_ms=0.0,
    )
    values.update(overrides)
    return LatencyScenario(**values)


def test_queue_half_load():
    # svc=10, base=10: rho = 1 * 10/20 = 0.5, w = 10 * 0.5/0.5 = 10
    result = queue(scenario(num_clients=1), base_ms=10.0, svc_ms=10.0)
    assert result.rho == pytest.approx(0.5)
    assert result.wait_ms == pytest.approx(10.0)
    assert result.total_ms == pytest.approx(30.0)
    assert not result.saturated


def test_queue_idle_server():
    result = queue(scenario(num_clients=0), base_ms=25.0, svc_ms=5.0)
    assert result.rho == 0.0
    assert result.wait_ms == 0.0
    assert result.total_ms == pytest.approx(30.0)


def test_queue_saturates():
    # rho = 4 * 10 / 20 = 2 >= 1
    result = queue(scenario(num_clients=4), base_ms=10.0, svc_ms=10.0)
    assert result.saturated
    assert result.rho == pytest.approx(2.0)
    assert math.isinf(result.total_ms)


def test_sweep_rows_match_hand_derivation():
    # independent re-derivation of every row over randomized scenarios
    rng = random.Random(14)
    for _ in range(20):
        n = rng.choice([256, 1024, 1 << 20])
        beta = rng.choice([4096, 65536, 1 << 20])
        bandwidth = rng.uniform(1_000.0, 200_000.0)
        io = rng.uniform(10_000.0, 2_000_000.0)
        clients = rng.randint(0, 64)
        scheme = rng.choice(["basespider", "spider", "rms24"])
        search = rng.uniform(0.0, 5.0)
        config = BenchConfig(
            n=[n],
            beta=[beta],
            bandwidth=[bandwidth],
            io_throughput=[io],
            num_clients=[clients],
            scheme=[scheme],
            hint_search_ms={scheme: search},
        )
        (row,) = sweep(config)

        upload, download = scheme_traffic(scheme, n, beta)
        net = (upload + download) * 8.0 / bandwidth
        svc = hint_size_for(n) * beta / io
        base = net + search + svc
        rho = clients * svc / (base + svc)
        assert abs(row.network_ms - net) <= 1e-9 * max(1.0, net)
        assert abs(row.service_ms - svc) <= 1e-9 * max(1.0, svc)
        assert abs(row.rho - rho) <= 1e-9 * max(1.0, rho)
        if rho >= 1.0:
            assert math.isinf(row.total)
        else:
            wait = svc * rho / (1.0 - rho)
            total = base + svc + wait
            assert abs(row.wait - wait) <= 1e-9 * max(1.0, wait)
            assert abs(row.total - total) <= 1e-9 * max(1.0, total)


# -- measured hint search ------------------------------------------------------


def test_measured_search_orders_schemes():
    # full re-expansion per seed dwarfs one counter word per seed
    expansion = measure_hint_search_ms("basespider", 256, trials=3, seed=2)
    counter = measure_hint_search_ms("rms24", 256, trials=3, seed=2)
    assert expansion > 0.0
    assert counter > 0.0
    assert expansion > counter


# -- sweeps and outputs ----------------------------------------------------------


def fixed_search_config(**overrides) -> BenchConfig:
    values = dict(
        n=[1024],
        beta=[65536, 262144, 1048576, 4194304],
        bandwidth=[50_000.0, 100_000.0],
        io_throughput=[1_000_000.0],
        num_clients=[1],
        scheme=["basespider", "spider", "rms24"],
        hint_search_ms={"basespider": 1.0, "spider": 1.0, "rms24": 0.05},
    )
    values.update(overrides)
    return BenchConfig(**values)


def test_sweep_covers_cartesian_product():
    rows = sweep(fixed_search_config())
    assert len(rows) == 4 * 2 * 3
    assert {row.scheme for row in rows} == {"basespider", "spider", "rms24"}


def test_csv_layout(tmp_path):
    rows = sweep(fixed_search_config())
    path = write_csv(rows, tmp_path / "results.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# bench-csv v1"
    parsed = list(csv.reader(lines[1:]))
    assert parsed[0] == list(CSV_FIELDS)
    assert len(parsed) == len(rows) + 1
    # spot-check one data row against its SweepRow
    first = parsed[1]
    assert first[0] == rows[0].scheme
    assert float(first[-1]) == pytest.approx(rows[0].total)


def test_crossover_found_at_large_entries():
    # at low bandwidth the download term dominates: basespider (one beta)
    # beats rms24 (two betas) once beta outweighs rms24's cheaper search
    rows = sweep(fixed_search_config(bandwidth=[50.0]))
    crossover = find_crossover(rows, bandwidth=50.0)
    assert crossover is not None
    base = {r.beta: r.total for r in rows if r.scheme == "basespider"}
    rms = {r.beta: r.total for r in rows if r.scheme == "rms24"}
    assert all(base[b] < rms[b] for b in base if b >= crossover)
    assert all(base[b] >= rms[b] for b in base if b < crossover)


def test_crossover_absent_when_rms24_always_wins():
    # huge bandwidth: downloads are free, rms24's cheap search always wins
    rows = sweep(fixed_search_config(bandwidth=[1e12]))
    assert find_crossover(rows, bandwidth=1e12) is None


def test_crossover_requires_suffix_not_single_point():
    def row(scheme, beta, total):
        return SweepRow(
            scheme=scheme,
            n=1024,
            beta=beta,
            bandwidth=1.0,
            io=1.0,
            clients=1,
            network_ms=0.0,
            service_ms=0.0,
            hint_search_ms=0.0,
            rho=0.0,
            wait=0.0,
            total=total,
        )

    # basespider wins at beta=2 only, loses again at beta=4
    rows = [
        row("basespider", 1, 10.0),
        row("rms24", 1, 5.0),
        row("basespider", 2, 10.0),
        row("rms24", 2, 20.0),
        row("basespider", 4, 10.0),
        row("rms24", 4, 5.0),
    ]
    assert find_crossover(rows, bandwidth=1.0) is None
    rows[-1] = row("rms24", 4, 30.0)
    assert find_crossover(rows, bandwidth=1.0) == 2


# -- config files ---------------------------------------------------------------


def test_config_from_toml(tmp_path):
    path = tmp_path / "sweep.toml"
    path.write_text(
        'n = [1024]\nbeta = [65536, 262144]\nbandwidth = 50000.0\n'
        'scheme = ["basespider", "rms24"]\nseed = 3\n'
        "[hint_search_ms]\nbasespider = 1.0\nrms24 = 0.05\n"
    )
    config = load_config(path)
    assert config.n == [1024]
    assert config.beta == [65536, 262144]
    assert config.bandwidth == [50000.0]  # scalar promoted to a one-item axis
    assert config.scheme == ["basespider", "rms24"]
    assert config.hint_search_ms == {"basespider": 1.0, "rms24": 0.05}
    assert config.seed == 3


def test_config_from_json(tmp_path):
    path = tmp_path / "sweep.json"
    path.write_text(
        json.dumps(
            {
                "n": 256,
                "beta": [4096],
                "num_clients": [1, 8],
                "hint_search_ms": "measured",
                "search_trials": 2,
            }
        )
    )
    config = load_config(path)
    assert config.n == [256]
    assert config.num_clients == [1, 8]
    assert config.hint_search_ms == "measured"
    assert config.search_trials == 2


def test_config_rejects_unknown_fields():
    with pytest.raises(ParameterError):
        BenchConfig.from_dict({"bandwith": 50000.0})


def test_config_rejects_unknown_scheme():
    with pytest.raises(ParameterError):
        BenchConfig.from_dict({"scheme": ["basespider", "sealpir"]})


def test_search_table_must_cover_swept_schemes():
    config = fixed_search_config(hint_search_ms={"basespider": 1.0})
    with pytest.raises(ParameterError):
        sweep(config)


# -- figures ----------------------------------------------------------------------


def test_figures_render(tmp_path):
    rows = sweep(fixed_search_config(num_clients=[1, 8, 64, 512]))
    paths = render_sweep_figures(rows, tmp_path)
    names = {p.name for p in paths}
    assert names == {"latency_vs_beta.png", "latency_vs_clients.png"}
    for path in paths:
        assert path.stat().st_size > 1000
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_figures_skip_degenerate_axes(tmp_path):
    rows = sweep(fixed_search_config(beta=[65536], num_clients=[4]))
    paths = render_sweep_figures(rows, tmp_path)
    assert paths == []
