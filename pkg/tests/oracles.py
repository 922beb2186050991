"""Independent reference implementations used to check the engine.

Everything here works on explicit sets of sample indices and
itertools.combinations, never on bitsets or the lambda enumeration, so a
bug in the fast path cannot hide in its own oracle.
"""

from __future__ import annotations

import itertools

from multihit.bitmat import MutationMatrix


def row_sample_sets(m: MutationMatrix) -> list[set[int]]:
    return [{s for s in range(m.num_samples) if row.get(s)} for row in m.rows]


def naive_score(
    gene_sets: list[set[int]],
    num_tumor: int,
    num_normal: int,
    combo: tuple[int, ...],
    active: set[int],
    alpha: float,
) -> tuple[float, int, int]:
    """Count T+ and T- by iterating samples, then apply the weight formula."""
    t_plus = sum(1 for s in active if all(s in gene_sets[g] for g in combo))
    normals = range(num_tumor, num_tumor + num_normal)
    t_minus = sum(1 for s in normals if all(s not in gene_sets[g] for g in combo))
    denom = len(active) + num_normal
    return (alpha * t_plus + t_minus) / denom, t_plus, t_minus


def naive_argmax(
    m: MutationMatrix,
    hits: int,
    active: set[int],
    alpha: float,
    gene_sets: list[set[int]] | None = None,
) -> tuple[float, tuple[int, ...]] | None:
    """Materialize every C(G, h) combination; argmax restricted to
    combinations covering at least one active tumor sample."""
    if gene_sets is None:
        gene_sets = row_sample_sets(m)
    best = None
    for combo in itertools.combinations(range(m.num_genes), hits):
        value, t_plus, _ = naive_score(gene_sets, m.num_tumor, m.num_normal, combo, active, alpha)
        if t_plus == 0:
            continue
        if best is None or value > best[0] or (value == best[0] and combo < best[1]):
            best = (value, combo)
    return best


def naive_greedy(m: MutationMatrix, hits: int, alpha: float, max_rounds: int = 64):
    """Reference greedy cover; returns (rounds, complete) where each round
    is (combo, score, newly_covered)."""
    gene_sets = row_sample_sets(m)
    active = set(range(m.num_tumor))
    rounds = []
    for _ in range(max_rounds):
        if not active:
            return rounds, True
        best = naive_argmax(m, hits, active, alpha, gene_sets)
        if best is None:
            return rounds, False
        value, combo = best
        covered = {s for s in active if all(s in gene_sets[g] for g in combo)}
        if not covered:
            return rounds, False
        rounds.append((combo, value, len(covered)))
        active -= covered
    return rounds, not active
