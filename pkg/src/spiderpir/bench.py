"""Analytical latency model with optional measured hint-search cost.

Per-query traffic by scheme (k = ceil(sqrt(n)), entry size beta bytes):

    basespider  upload (k-1)*8   download beta          (server XORs)
    spider      upload (k-1)*8   download (k-1)*beta    (server only reads)
    rms24       upload k*8       download 2*beta        (two half-size
                                 queries of k/2 indices, double response)

Latency per query is modeled in milliseconds as

    network_ms = (upload_bytes + download_bytes) * 8 / bandwidth
    service_ms = ceil(sqrt(n)) * beta / io_throughput
    base_ms    = network_ms + hint_search_ms + service_ms

with the server treated as an M/M/1 queue under num_clients closed-loop
clients:

    rho = num_clients * service_ms / (base_ms + service_ms)
    w   = service_ms * rho / (1 - rho)      (infinite when rho >= 1)
    total_ms = base_ms + service_ms + w

Hint search can be measured instead of assumed: schemes that scan by
re-expanding every seed pay for full expansion per hint, while rms24-style
pools are modeled as one counter output plus one comparison per seed.
The measured cost is beta-independent, so measurement uses small entries
regardless of the scenario's beta.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError
from .multiset import _expand_raw
from .params import CoverageParams, compute_params
from .prg import SplitMix64, counter_output, derive_seed

logger = logging.getLogger(__name__)

SCHEMES = ("basespider", "spider", "rms24")

CSV_VERSION = "bench-csv v1"
CSV_FIELDS = (
    "scheme",
    "n",
    "beta",
    "bandwidth",
    "io",
    "clients",
    "network_ms",
    "service_ms",
    "hint_search_ms",
    "rho",
    "wait",
    "total",
)

# bits per millisecond for the two bandwidths quoted throughout: 50 and
# 250 Mbit/s
DEFAULT_BANDWIDTHS = (50_000.0, 250_000.0)


def hint_size_for(num_entries: int) -> int:
    k = math.isqrt(num_entries)
    return k if k * k == num_entries else k + 1


@dataclass(frozen=True)
class LatencyScenario:
    """One point of the model; field names match the config file schema."""

    n: int
    beta: int
    bandwidth: float  # bits per millisecond
    io_throughput: float  # bytes per millisecond
    num_clients: int
    scheme: str
    hint_search_ms: float

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}")
        if self.n < 1 or self.beta < 1:
            raise ParameterError("n and beta must be positive")
        if self.bandwidth <= 0 or self.io_throughput <= 0:
            raise ParameterError("bandwidth and io_throughput must be positive")
        if self.num_clients < 0:
            raise ParameterError("num_clients must be >= 0")
        if self.hint_search_ms < 0:
            raise ParameterError("hint_search_ms must be >= 0")


@dataclass(frozen=True)
class QueueResult:
    rho: float
    wait_ms: float
    total_ms: float
    saturated: bool


def scheme_traffic(scheme: str, num_entries: int, beta: int) -> tuple[int, int]:
    """(upload_bytes, download_bytes) per query for a scheme."""
    k = hint_size_for(num_entries)
    if scheme == "basespider":
        return (k - 1) * 8, beta
    if scheme == "spider":
        return (k - 1) * 8, (k - 1) * beta
    if scheme == "rms24":
        # two queries of k/2 indices each, each answered by one word
        return 2 * (k // 2) * 8, 2 * beta
    raise ParameterError(f"unknown scheme {scheme!r}")


def network_ms(upload_bytes: int, download_bytes: int, bandwidth: float) -> float:
    """Transfer time for a query's traffic at bandwidth bits/ms."""
    if bandwidth <= 0:
        raise ParameterError("bandwidth must be positive")
    return (upload_bytes + download_bytes) * 8.0 / bandwidth


def scenario_network_ms(scenario: LatencyScenario) -> float:
    upload, download = scheme_traffic(scenario.scheme, scenario.n, scenario.beta)
    return network_ms(upload, download, scenario.bandwidth)


def service_ms(num_entries: int, beta: int, io_throughput: float) -> float:
    """Server storage time: k entries of beta bytes at io_throughput B/ms."""
    if io_throughput <= 0:
        raise ParameterError("io_throughput must be positive")
    return hint_size_for(num_entries) * beta / io_throughput


def scenario_service_ms(scenario: LatencyScenario) -> float:
    return service_ms(scenario.n, scenario.beta, scenario.io_throughput)


def queue(scenario: LatencyScenario, base_ms: float, svc_ms: float) -> QueueResult:
    """M/M/1 waiting time under num_clients closed-loop clients."""
    if base_ms + svc_ms <= 0:
        raise ParameterError("base_ms + service_ms must be positive")
    rho = scenario.num_clients * svc_ms / (base_ms + svc_ms)
    if rho >= 1.0:
        return QueueResult(rho=rho, wait_ms=math.inf, total_ms=math.inf, saturated=True)
    wait = svc_ms * rho / (1.0 - rho)
    return QueueResult(
        rho=rho, wait_ms=wait, total_ms=base_ms + svc_ms + wait, saturated=False
    )


# -- measured hint search ---------------------------------------------------

_MEASURE_ENTRY_SIZE = 8


def _search_seeds(num_entries: int, seed: int) -> tuple[CoverageParams, list[int]]:
    """Hint seeds a fresh pool would hold, without paying for the pool.

    Pools draw seeds from the same counter stream; the dedup they apply on
    top only ever fires at toy parameters, and building real parities for a
    scan benchmark costs gigabytes at large n for no change in the timing.
    """
    params = compute_params(num_entries, _MEASURE_ENTRY_SIZE)
    master = derive_seed(seed, 0)
    return params, [derive_seed(master, i) for i in range(params.num_hints)]


def _scan_ms(scheme: str, n: int, k: int, seeds: list[int], trials: int, seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 1))
    elapsed = 0.0
    for _ in range(trials):
        target = rng.below(n) + 1
        if scheme in ("basespider", "spider"):
            begin = time.perf_counter()
            hits = 0
            for hint_seed in seeds:
                if target in _expand_raw(n, k, hint_seed):
                    hits += 1
            elapsed += time.perf_counter() - begin
        else:
            begin = time.perf_counter()
            hits = 0
            for hint_seed in seeds:
                if counter_output(hint_seed, 0) % n + 1 == target:
                    hits += 1
            elapsed += time.perf_counter() - begin
    return elapsed / trials * 1000.0


def measure_hint_search_ms(
    scheme: str, num_entries: int, trials: int = 5, seed: int = 1
) -> float:
    """Mean wall-clock time to find a covering hint in a fresh pool.

    Expansion-scanning schemes (basespider, spider) pay a full seed
    re-expansion per hint per scan; rms24 is modeled as one counter output
    and one comparison per seed.  Returns milliseconds per search.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"scheme must be one of {SCHEMES}")
    params, seeds = _search_seeds(num_entries, seed)
    return _scan_ms(
        scheme, params.num_entries, params.hint_size, seeds, trials, seed
    )


# -- sweeps ------------------------------------------------------------------


@dataclass
class BenchConfig:
    """Sweep definition; every list field is a sweep axis.

    hint_search_ms may be "measured" (time it on a real pool at each n) or
    a mapping of scheme name to a fixed cost in ms.
    """

    n: list[int] = field(default_factory=lambda: [1024])
    beta: list[int] = field(
        default_factory=lambda: [65536, 262144, 1048576, 4194304]
    )
    bandwidth: list[float] = field(default_factory=lambda: list(DEFAULT_BANDWIDTHS))
    io_throughput: list[float] = field(default_factory=lambda: [1_000_000.0])
    num_clients: list[int] = field(default_factory=lambda: [1])
    scheme: list[str] = field(default_factory=lambda: list(SCHEMES))
    hint_search_ms: str | dict[str, float] = "measured"
    search_trials: int = 5
    seed: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        def listify(value):
            return value if isinstance(value, list) else [value]

        config = cls()
        for key in ("n", "beta", "bandwidth", "io_throughput", "num_clients", "scheme"):
            if key in raw:
                setattr(config, key, listify(raw[key]))
        if "hint_search_ms" in raw:
            config.hint_search_ms = raw["hint_search_ms"]
        config.search_trials = int(raw.get("search_trials", config.search_trials))
        config.seed = int(raw.get("seed", config.seed))
        unknown = set(raw) - {
            "n",
            "beta",
            "bandwidth",
            "io_throughput",
            "num_clients",
            "scheme",
            "hint_search_ms",
            "search_trials",
            "seed",
        }
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        for scheme in config.scheme:
            if scheme not in SCHEMES:
                raise ParameterError(f"unknown scheme {scheme!r} in config")
        return config


def load_config(path: str | Path) -> BenchConfig:
    """Read a sweep config from a TOML or JSON file."""
    import json

    try:
        import tomllib
    except ModuleNotFoundError:  # 3.10
        import tomli as tomllib

    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".json":
        return BenchConfig.from_dict(json.loads(data))
    return BenchConfig.from_dict(tomllib.loads(data.decode()))


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    n: int
    beta: int
    bandwidth: float
    io: float
    clients: int
    network_ms: float
    service_ms: float
    hint_search_ms: float
    rho: float
    wait: float
    total: float


def _search_costs(config: BenchConfig) -> dict[tuple[str, int], float]:
    costs: dict[tuple[str, int], float] = {}
    for num_entries in config.n:
        if config.hint_search_ms == "measured":
            # the seed list depends on n only, so derive it once per n
            params, seeds = _search_seeds(num_entries, config.seed)
            for scheme in config.scheme:
                costs[(scheme, num_entries)] = _scan_ms(
                    scheme,
                    params.num_entries,
                    params.hint_size,
                    seeds,
                    config.search_trials,
                    config.seed,
                )
                logger.info(
                    "measured %s at n=%d: %.3f ms",
                    scheme,
                    num_entries,
                    costs[(scheme, num_entries)],
                )
        elif isinstance(config.hint_search_ms, dict):
            for scheme in config.scheme:
                try:
                    costs[(scheme, num_entries)] = float(
                        config.hint_search_ms[scheme]
                    )
                except KeyError:
                    raise ParameterError(
                        f"hint_search_ms table is missing scheme {scheme!r}"
                    ) from None
        else:
            raise ParameterError(
                "hint_search_ms must be 'measured' or a scheme table"
            )
    return costs


def sweep(config: BenchConfig) -> list[SweepRow]:
    """Evaluate the model over the whole cartesian sweep."""
    costs = _search_costs(config)
    rows = []
    for num_entries in config.n:
        for scheme in config.scheme:
            search = costs[(scheme, num_entries)]
            for beta in config.beta:
                for bandwidth in config.bandwidth:
                    for io_throughput in config.io_throughput:
                        for clients in config.num_clients:
                            scenario = LatencyScenario(
                                n=num_entries,
                                beta=beta,
                                bandwidth=bandwidth,
                                io_throughput=io_throughput,
                                num_clients=clients,
                                scheme=scheme,
                                hint_search_ms=search,
                            )
                            net = scenario_network_ms(scenario)
                            svc = scenario_service_ms(scenario)
                            base = net + search + svc
                            queued = queue(scenario, base, svc)
                            rows.append(
                                SweepRow(
                                    scheme=scheme,
                                    n=num_entries,
                                    beta=beta,
                                    bandwidth=bandwidth,
                                    io=io_throughput,
                                    clients=clients,
                                    network_ms=net,
                                    service_ms=svc,
                                    hint_search_ms=search,
                                    rho=queued.rho,
                                    wait=queued.wait_ms,
                                    total=queued.total_ms,
                                )
                            )
    return rows


def write_csv(rows: list[SweepRow], path: str | Path):
    """Write sweep rows with the fixed, versioned header."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        handle.write(f"# {CSV_VERSION}\n")
        writer = csv.writer(handle)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([getattr(row, name) for name in CSV_FIELDS])
    return path


def find_crossover(
    rows: list[SweepRow],
    bandwidth: float,
    io_throughput: float | None = None,
    num_clients: int | None = None,
) -> int | None:
    """Smallest beta from which basespider beats rms24 at this bandwidth.

    Returns the smallest beta in the sweep such that basespider's total
    latency is below rms24's for it and every larger swept beta, or None
    when no such beta exists (or either scheme is missing).
    """
    def keep(row: SweepRow) -> bool:
        if row.bandwidth != bandwidth:
            return False
        if io_throughput is not None and row.io != io_throughput:
            return False
        if num_clients is not None and row.clients != num_clients:
            return False
        return True

    base = {row.beta: row.total for row in rows if keep(row) and row.scheme == "basespider"}
    rms = {row.beta: row.total for row in rows if keep(row) and row.scheme == "rms24"}
    shared = sorted(set(base) & set(rms))
    if not shared:
        return None
    crossover = None
    for beta in shared:
        if base[beta] < rms[beta]:
            if crossover is None:
                crossover = beta
        else:
            crossover = None
    return crossover
