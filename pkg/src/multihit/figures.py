"""Report figures rendered next to the delimited outputs.

All rendering uses the Agg backend so the CLI works headless; figures land
as PNG files beside the CSV they visualize.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from multihit.metrics import RunMetrics


def save_busy_histogram(rows: list[tuple[int, RunMetrics]], path: str | Path) -> Path:
    """Per-worker busy-time distribution, summed over rounds."""
    path = Path(path)
    totals: dict[str, float] = {}
    for _round, m in rows:
        totals[m.worker_id] = totals.get(m.worker_id, 0.0) + m.busy_seconds
    workers = sorted(totals)
    values = [totals[w] for w in workers]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(workers)), 3.2))
    ax.bar(range(len(workers)), values, color="#d95f02")
    ax.set_xticks(range(len(workers)))
    ax.set_xticklabels(workers, rotation=90, fontsize=7)
    ax.set_ylabel("busy time (s)")
    ax.set_title("Per-worker busy time")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_bench_figures(rows: list[dict], out_dir: str | Path) -> list[Path]:
    """Wall time vs. worker count (per hit size) and visited fraction by
    hit size, from bench sweep rows."""
    out_dir = Path(out_dir)
    paths = []

    by_hits: dict[int, list[dict]] = {}
    for row in rows:
        by_hits.setdefault(row["hits"], []).append(row)

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for hits, entries in sorted(by_hits.items()):
        entries = sorted(entries, key=lambda r: r["total_workers"])
        ax.plot(
            [e["total_workers"] for e in entries],
            [e["wall_seconds"] for e in entries],
            marker="o",
            label=f"{hits} hits",
        )
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("workers")
    ax.set_ylabel("wall time (s)")
    ax.set_title("Search wall time vs. parallelism")
    ax.legend()
    fig.tight_layout()
    wall_path = out_dir / "bench_wall_time.png"
    fig.savefig(wall_path, dpi=150)
    plt.close(fig)
    paths.append(wall_path)

    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    hits_sorted = sorted(by_hits)
    fractions = [
        sum(e["visited_fraction"] for e in by_hits[h]) / len(by_hits[h]) for h in hits_sorted
    ]
    ax.bar([str(h) for h in hits_sorted], fractions, color="#1b9e77")
    ax.set_xlabel("hits")
    ax.set_ylabel("mean visited fraction")
    ax.set_title("Fraction of combinations visited")
    fig.tight_layout()
    frac_path = out_dir / "bench_visited_fraction.png"
    fig.savefig(frac_path, dpi=150)
    plt.close(fig)
    paths.append(frac_path)
    return paths
