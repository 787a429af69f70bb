"""Stateful single-server private information retrieval with multiset hints.

The client streams the database once, keeps a pool of seed-compressed
multiset hints, and afterwards retrieves entries by sending k-1 indices
that are statistically independent of the target.  Works against a
cooperative server (answers with one XOR word) and against a default
storage server that only reads entries.  Also ships exact combinatorial
verification oracles and an analytical latency model.
"""

__version__ = "0.1.0"

from .client import ClientSession, LocalTransport, TcpTransport
from .database import Database, generate_database
from .hints import HintPool, preprocess
from .params import CoverageParams, compute_params, coverage_bounds
from .poolfile import load_pool, save_pool
from .server import ServerConfig, ServerCore, TcpPirServer

__all__ = [
    "ClientSession",
    "CoverageParams",
    "Database",
    "HintPool",
    "LocalTransport",
    "ServerConfig",
    "ServerCore",
    "TcpPirServer",
    "TcpTransport",
    "compute_params",
    "coverage_bounds",
    "generate_database",
    "load_pool",
    "preprocess",
    "save_pool",
    "__version__",
]
