"""Pruned depth-first argmax over h-gene combinations.

The search tree is rooted at (g1, g2) pairs; those pairs are flattened into
a single lambda index so any contiguous lambda interval is an independent,
distributable unit of work. Descending the tree maintains the running AND of
the chosen gene rows and backtracks the moment its active-tumor part goes
empty, since no superset of an empty cover can cover anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional

from multihit.bitmat import BitRow, MutationMatrix

DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class LambdaInterval:
    """Half-open range [start, end) of flattened (g1, g2) pair indices."""

    start: int
    end: int

    @property
    def size(self) -> int:
        return max(0, self.end - self.start)


@dataclass
class SearchStats:
    """Exact accounting of the combinations handled by one search.

    visited counts depth-h combinations actually scored; pruned_combinations
    counts the ones skipped, derived from binomial subtree sizes so that
    visited + pruned_combinations always equals the reachable total.
    """

    visited: int = 0
    pruned_subtrees: int = 0
    pruned_combinations: int = 0

    def merge(self, other: "SearchStats") -> None:
        self.visited += other.visited
        self.pruned_subtrees += other.pruned_subtrees
        self.pruned_combinations += other.pruned_combinations

    @property
    def total_accounted(self) -> int:
        return self.visited + self.pruned_combinations


@dataclass(frozen=True)
class ScoredCombination:
    """A strictly increasing gene-index tuple with its weight and coverage."""

    genes: tuple[int, ...]
    score: float
    t_plus: int
    t_minus: int
    tumor_cover: BitRow


def validate_combination(genes: tuple[int, ...], num_genes: int) -> None:
    if len(genes) < 1:
        raise ValueError("combination must contain at least one gene")
    prev = -1
    for g in genes:
        if not prev < g < num_genes:
            raise ValueError(f"combination {genes} is not strictly increasing within range")
        prev = g


def lambda_total(num_genes: int, hits: int) -> int:
    """Number of admissible (g1, g2) pairs for an h-hit search over G genes."""
    if hits < 2:
        raise ValueError("hits must be >= 2")
    span = num_genes - hits + 2
    if span < 2:
        return 0
    return span * (span - 1) // 2


def _pair_prefix(g1: int, span: int) -> int:
    # Pairs with first element < g1 in the lexicographic enumeration.
    return g1 * (2 * span - g1 - 1) // 2


def lambda_decode(lam: int, num_genes: int, hits: int) -> tuple[int, int]:
    """Inverse of the lexicographic pair enumeration; O(log G) binary search."""
    total = lambda_total(num_genes, hits)
    if not 0 <= lam < total:
        raise ValueError(f"lambda {lam} out of range [0, {total})")
    span = num_genes - hits + 2
    lo, hi = 0, span - 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _pair_prefix(mid, span) <= lam:
            lo = mid
        else:
            hi = mid - 1
    g1 = lo
    g2 = g1 + 1 + (lam - _pair_prefix(g1, span))
    return g1, g2


def lambda_encode(g1: int, g2: int, num_genes: int, hits: int) -> int:
    span = num_genes - hits + 2
    if not 0 <= g1 < g2 <= span - 1:
        raise ValueError(f"pair ({g1}, {g2}) not admissible for G={num_genes}, h={hits}")
    return _pair_prefix(g1, span) + (g2 - g1 - 1)


def full_interval(num_genes: int, hits: int) -> LambdaInterval:
    return LambdaInterval(0, lambda_total(num_genes, hits))


def interval_leaf_total(num_genes: int, hits: int, interval: LambdaInterval) -> int:
    """Exact number of depth-h combinations reachable from an interval."""
    if interval.size == 0:
        return 0
    g1, g2 = lambda_decode(interval.start, num_genes, hits)
    span = num_genes - hits + 2
    total = 0
    for _ in range(interval.start, interval.end):
        total += comb(num_genes - 1 - g2, hits - 2)
        g2 += 1
        if g2 >= span:
            g1 += 1
            g2 = g1 + 1
    return total


def score(genes: tuple[int, ...], m: MutationMatrix, alpha: float = DEFAULT_ALPHA) -> ScoredCombination:
    """Weight of one combination against the current active-tumor mask.

    t_plus counts active tumor samples mutated in every gene of the
    combination; t_minus counts normal samples mutated in none of them. The
    denominator uses the current active tumor count, so the weight of a
    fixed combination changes as the greedy driver masks covered samples.
    """
    validate_combination(genes, m.num_genes)
    tmask = m.active_tumor_mask.bits
    denom = tmask.bit_count() + m.num_normal
    if denom == 0:
        raise ValueError("matrix has no active tumor samples and no normals to score against")
    y_and = (1 << m.num_samples) - 1
    y_or = 0
    for g in genes:
        bits = m.rows[g].bits
        y_and &= bits
        y_or |= bits
    t_cov = y_and & tmask
    t_plus = t_cov.bit_count()
    t_minus = m.num_normal - (y_or & m.normal_mask_bits).bit_count()
    value = (alpha * t_plus + t_minus) / denom
    return ScoredCombination(tuple(genes), value, t_plus, t_minus, BitRow(m.num_tumor, t_cov))


def fold_best(a, b):
    """Argmax fold under the total order: higher score wins, then the
    lexicographically smaller gene tuple. Accepts None operands."""
    if b is None:
        return a
    if a is None:
        return b
    if b.score > a.score or (b.score == a.score and b.genes < a.genes):
        return b
    return a


def pdfs_best(
    m: MutationMatrix,
    hits: int,
    interval: LambdaInterval | None = None,
    alpha: float = DEFAULT_ALPHA,
    prune: bool = True,
) -> tuple[Optional[ScoredCombination], SearchStats]:
    """Argmax of the weight function over the interval's combinations.

    With prune=True any subtree whose running intersection has no active
    tumor bit is skipped and accounted via its exact binomial size. With
    prune=False every depth-h combination is scored (exhaustive baseline).
    Combinations covering zero active tumor samples are never candidates
    for the argmax in either mode: they cannot advance the set cover, and
    excluding them keeps both modes returning the same result. Returns
    (None, stats) when no candidate survives.
    """
    if hits < 2:
        raise ValueError("hits must be >= 2")
    num_genes = m.num_genes
    total = lambda_total(num_genes, hits)
    if interval is None:
        interval = LambdaInterval(0, total)
    if not 0 <= interval.start <= interval.end <= total:
        raise ValueError(f"interval {interval} out of range [0, {total})")
    stats = SearchStats()
    if interval.size == 0:
        return None, stats

    rows = [r.bits for r in m.rows]
    tmask = m.active_tumor_mask.bits
    nmask = m.normal_mask_bits
    n_norm = m.num_normal
    denom = tmask.bit_count() + n_norm
    if denom == 0:
        raise ValueError("matrix has no active tumor samples and no normals to score against")

    # leaf_counts[level][g]: combinations below gene g chosen at this level.
    leaf_counts = {
        level: [comb(num_genes - 1 - g, hits - level) for g in range(num_genes)]
        for level in range(2, hits + 1)
    }

    best_score = -1.0
    best_genes: tuple[int, ...] | None = None
    visited = 0
    pruned_sub = 0
    pruned_comb = 0

    def descend(level: int, gprev: int, yand: int, yor: int, prefix: tuple[int, ...]) -> None:
        nonlocal best_score, best_genes, visited, pruned_sub, pruned_comb
        last = level == hits
        hi = num_genes - hits + level
        counts = leaf_counts[level]
        for g in range(gprev + 1, hi):
            row = rows[g]
            ya = yand & row
            tcov = ya & tmask
            if last:
                if prune and not tcov:
                    pruned_sub += 1
                    pruned_comb += 1
                    continue
                visited += 1
                if tcov:
                    tn = n_norm - ((yor | row) & nmask).bit_count()
                    sc = (alpha * tcov.bit_count() + tn) / denom
                    # depth-first order is lexicographic, so strict > keeps
                    # the smallest tuple on ties
                    if sc > best_score:
                        best_score = sc
                        best_genes = prefix + (g,)
                continue
            if prune and not tcov:
                pruned_sub += 1
                pruned_comb += counts[g]
                continue
            descend(level + 1, g, ya, yor | row, prefix + (g,))

    span = num_genes - hits + 2
    g1, g2 = lambda_decode(interval.start, num_genes, hits)
    pair_counts = leaf_counts[2]
    for _ in range(interval.start, interval.end):
        r1 = rows[g1]
        r2 = rows[g2]
        y2 = r1 & r2
        tcov = y2 & tmask
        if prune and not tcov:
            pruned_sub += 1
            pruned_comb += pair_counts[g2]
        elif hits == 2:
            visited += 1
            if tcov:
                tn = n_norm - ((r1 | r2) & nmask).bit_count()
                sc = (alpha * tcov.bit_count() + tn) / denom
                if sc > best_score:
                    best_score = sc
                    best_genes = (g1, g2)
        else:
            descend(3, g2, y2, r1 | r2, (g1, g2))
        g2 += 1
        if g2 >= span:
            g1 += 1
            g2 = g1 + 1

    stats.visited = visited
    stats.pruned_subtrees = pruned_sub
    stats.pruned_combinations = pruned_comb
    if best_genes is None:
        return None, stats
    return score(best_genes, m, alpha), stats
