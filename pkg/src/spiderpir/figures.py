"""Render sweep results to figures next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import SweepRow

_SCHEME_STYLE = {
    "basespider": {"color": "#1f77b4", "marker": "o"},
    "spider": {"color": "#2ca02c", "marker": "s"},
    "rms24": {"color": "#d62728", "marker": "^"},
}


def _finite(points: list[tuple[float, float]]) -> tuple[list[float], list[float]]:
    xs = [x for x, y in points if y != float("inf")]
    ys = [y for _, y in points if y != float("inf")]
    return xs, ys


def render_sweep_figures(rows: list[SweepRow], out_dir: str | Path) -> list[Path]:
    """Write latency-vs-beta and latency-vs-clients figures when the sweep
    has enough points along those axes; returns the files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    betas = sorted({row.beta for row in rows})
    bandwidths = sorted({row.bandwidth for row in rows})
    clients = sorted({row.clients for row in rows})
    ios = sorted({row.io for row in rows})
    schemes = [s for s in _SCHEME_STYLE if any(r.scheme == s for r in rows)]

    if len(betas) > 1:
        fig, axes = plt.subplots(
            1, len(bandwidths), figsize=(5.5 * len(bandwidths), 4.2), squeeze=False
        )
        for axis, bandwidth in zip(axes[0], bandwidths):
            for scheme in schemes:
                points = sorted(
                    (row.beta, row.total)
                    for row in rows
                    if row.scheme == scheme
                    and row.bandwidth == bandwidth
                    and row.clients == clients[0]
                    and row.io == ios[0]
                )
                xs, ys = _finite(points)
                if xs:
                    axis.plot(xs, ys, label=scheme, **_SCHEME_STYLE[scheme])
            axis.set_xscale("log", base=2)
            axis.set_yscale("log")
            axis.set_xlabel("entry size (bytes)")
            axis.set_ylabel("per-query latency (ms)")
            axis.set_title(f"{bandwidth / 1000:g} Mbit/s")
            axis.grid(True, which="both", alpha=0.3)
            axis.legend()
        fig.tight_layout()
        target = out_dir / "latency_vs_beta.png"
        fig.savefig(target, dpi=130)
        plt.close(fig)
        written.append(target)

    if len(clients) > 1:
        fig, axis = plt.subplots(figsize=(6.0, 4.2))
        beta_mid = betas[len(betas) // 2]
        for scheme in schemes:
            points = sorted(
                (row.clients, row.total)
                for row in rows
                if row.scheme == scheme
                and row.beta == beta_mid
                and row.bandwidth == bandwidths[0]
                and row.io == ios[0]
            )
            xs, ys = _finite(points)
            if xs:
                axis.plot(xs, ys, label=scheme, **_SCHEME_STYLE[scheme])
            saturated = [x for x, y in points if y == float("inf")]
            if saturated:
                axis.axvline(min(saturated), linestyle=":", color="#888888")
        axis.set_xlabel("concurrent clients")
        axis.set_ylabel("per-query latency (ms)")
        axis.set_title(
            f"beta={beta_mid}, {bandwidths[0] / 1000:g} Mbit/s "
            "(dotted: saturation)"
        )
        axis.grid(True, alpha=0.3)
        axis.legend()
        fig.tight_layout()
        target = out_dir / "latency_vs_clients.png"
        fig.savefig(target, dpi=130)
        plt.close(fig)
        written.append(target)

    return written
