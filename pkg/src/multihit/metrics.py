"""Run metrics, their CSV schema, coverage verification, and index naming.

verify_cover deliberately recomputes coverage from the raw text
intermediates rather than the bit-packed matrix, so it cross-checks the
whole packed pipeline through an independent path.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, TextIO

from multihit.bitmat import GeneMap
from multihit.cover import SolutionLine, parse_solution_file
from multihit.ingest import read_normal_list, read_tumor_matrix


@dataclass
class RunMetrics:
    """Counters for one worker (or leader) in one search round."""

    leader: int
    worker: int  # -1 for the leader's own row
    busy_seconds: float = 0.0
    idle_seconds: float = 0.0
    chunks_processed: int = 0
    visited: int = 0
    pruned_combinations: int = 0
    steals_initiated: int = 0
    steals_served: int = 0

    @property
    def worker_id(self) -> str:
        if self.worker < 0:
            return f"l{self.leader}"
        return f"l{self.leader}w{self.worker}"


@dataclass(frozen=True)
class RunSummary:
    busy_min: float
    busy_max: float
    busy_mean: float
    busy_stddev: float
    total_visited: int
    total_pruned: int
    visited_fraction: float


def summarize(all_metrics: list[RunMetrics], num_genes: int, hits: int) -> RunSummary:
    """Aggregate per-worker metrics; the visited fraction divides by the
    exact big-integer binomial C(G, h)."""
    if not all_metrics:
        raise ValueError("cannot summarize an empty metrics list")
    busy = [m.busy_seconds for m in all_metrics]
    visited = sum(m.visited for m in all_metrics)
    pruned = sum(m.pruned_combinations for m in all_metrics)
    total = comb(num_genes, hits)
    fraction = float(Fraction(visited, total)) if total else 0.0
    return RunSummary(
        busy_min=min(busy),
        busy_max=max(busy),
        busy_mean=statistics.fmean(busy),
        busy_stddev=statistics.pstdev(busy),
        total_visited=visited,
        total_pruned=pruned,
        visited_fraction=fraction,
    )


METRICS_FIELDS = [
    "worker_id",
    "busy_seconds",
    "idle_seconds",
    "chunks_processed",
    "visited",
    "pruned_combinations",
    "steals_initiated",
    "steals_served",
    "round",
]


def write_metrics_csv(sink: TextIO, rows: Iterable[tuple[int, RunMetrics]]) -> None:
    """One CSV row per worker per round, fixed header."""
    writer = csv.writer(sink)
    writer.writerow(METRICS_FIELDS)
    for round_index, m in rows:
        writer.writerow(
            [
                m.worker_id,
                f"{m.busy_seconds:.6f}",
                f"{m.idle_seconds:.6f}",
                m.chunks_processed,
                m.visited,
                m.pruned_combinations,
                m.steals_initiated,
                m.steals_served,
                round_index,
            ]
        )


@dataclass
class CoverageReport:
    total_tumor: int
    total_normal: int
    covered_tumor: int
    covered_normal: int
    uncovered_tumor_ids: list[str]

    @property
    def tumor_fraction(self) -> float:
        return self.covered_tumor / self.total_tumor if self.total_tumor else 1.0


def _combination_names(
    lines: list[SolutionLine], gene_map: GeneMap | None
) -> list[tuple[str, ...]]:
    """Resolve solution tokens to gene names; integer tokens go through the
    gene map, name tokens pass through."""
    combos = []
    mapping = gene_map.lookup() if gene_map is not None else None
    for entry in lines:
        if all(t.lstrip("-").isdigit() for t in entry.tokens):
            if mapping is None:
                raise ValueError(
                    f"solution line {entry.line_no} uses gene indices; a gene map is required"
                )
            missing = [t for t in entry.tokens if int(t) not in mapping]
            if missing:
                raise ValueError(
                    f"solution line {entry.line_no} references unknown gene indices: "
                    f"{', '.join(missing)}"
                )
            combos.append(tuple(mapping[int(t)] for t in entry.tokens))
        else:
            combos.append(entry.tokens)
    return combos


def verify_cover(
    solution: TextIO,
    tumor_matrix: TextIO,
    normal_list: TextIO,
    gene_map: GeneMap | None = None,
) -> CoverageReport:
    """Recompute per-sample coverage of a solution from the raw
    intermediates and report covered counts plus uncovered tumor IDs."""
    lines = parse_solution_file(solution)
    combos = _combination_names(lines, gene_map)
    tumor_samples, tumor_sets = read_tumor_matrix(tumor_matrix)
    normal_samples, normal_sets = read_normal_list(normal_list)
    known = set(tumor_sets) | set(normal_sets)
    for entry, combo in zip(lines, combos):
        unknown = [g for g in combo if g not in known]
        if unknown:
            raise ValueError(
                f"solution line {entry.line_no} references unknown genes: {', '.join(unknown)}"
            )

    def covered(sample: str, gene_sets: dict[str, set[str]]) -> bool:
        return any(
            all(sample in gene_sets.get(g, ()) for g in combo) for combo in combos
        )

    uncovered = [s for s in tumor_samples if not covered(s, tumor_sets)]
    covered_normal = sum(1 for s in normal_samples if covered(s, normal_sets))
    return CoverageReport(
        total_tumor=len(tumor_samples),
        total_normal=len(normal_samples),
        covered_tumor=len(tumor_samples) - len(uncovered),
        covered_normal=covered_normal,
        uncovered_tumor_ids=uncovered,
    )


def convert_indices(solution: TextIO, gene_map: GeneMap, sink: TextIO) -> int:
    """Rewrite a solution file with gene indices replaced by names,
    preserving the rest of each line. Returns the number of lines written."""
    lines = parse_solution_file(solution)
    mapping = gene_map.lookup()
    missing: set[int] = set()
    for entry in lines:
        for token in entry.tokens:
            if not token.lstrip("-").isdigit():
                raise ValueError(
                    f"solution line {entry.line_no}: non-integer gene token {token!r}"
                )
            if int(token) not in mapping:
                missing.add(int(token))
    if missing:
        raise ValueError(
            "solution references indices missing from the gene map: "
            + ", ".join(str(i) for i in sorted(missing))
        )
    for entry in lines:
        names = ", ".join(mapping[int(t)] for t in entry.tokens)
        sink.write(f"({names}){entry.trailer}\n")
    return len(lines)
