"""Seeded random matrices for desk-scale experiments and tests.

Real cohorts live behind controlled access, so the CLI and the test suite
generate matrices with the same shape characteristics instead: mostly-zero
rows whose density is controlled by a sparsity parameter.
"""

from __future__ import annotations

import random

from multihit.bitmat import BitRow, MutationMatrix


def random_matrix(
    num_genes: int,
    num_tumor: int,
    num_normal: int,
    sparsity: float,
    seed: int,
) -> MutationMatrix:
    """Matrix where each bit is set independently with probability
    1 - sparsity. Deterministic for a given seed."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must be in [0, 1]")
    rng = random.Random(f"multihit-synthetic:{seed}")
    density = 1.0 - sparsity
    width = num_tumor + num_normal
    rows = []
    for _ in range(num_genes):
        bits = 0
        for s in range(width):
            if rng.random() < density:
                bits |= 1 << s
        rows.append(BitRow(width, bits))
    return MutationMatrix(rows, num_tumor, num_normal)


def skewed_matrix(
    num_genes: int,
    num_tumor: int,
    num_normal: int,
    dense_genes: int,
    dense_density: float,
    seed: int,
) -> MutationMatrix:
    """Worst-case load-balance shape: the last dense_genes rows are dense,
    the rest are all-zero. Every pair rooted in the zero block prunes
    immediately, so all real work concentrates in the tail of the lambda
    range (one leader's partition)."""
    if dense_genes > num_genes:
        raise ValueError("dense_genes exceeds num_genes")
    rng = random.Random(f"multihit-skew:{seed}")
    width = num_tumor + num_normal
    rows = [BitRow(width) for _ in range(num_genes - dense_genes)]
    for _ in range(dense_genes):
        bits = 0
        for s in range(num_tumor):
            if rng.random() < dense_density:
                bits |= 1 << s
        rows.append(BitRow(width, bits))
    return MutationMatrix(rows, num_tumor, num_normal)
