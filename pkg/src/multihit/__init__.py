"""Multi-hit gene combination discovery.

Finds small sets of h-gene combinations that jointly cover all tumor
samples of a cohort while avoiding normal samples. The argmax over
candidate combinations runs as a sparsity-pruned depth-first search,
either sequentially or on a leader/worker scheduler with work stealing.
"""

from multihit.bitmat import BitRow, GeneMap, MutationMatrix, read_packed, write_packed
from multihit.cover import CoverSolution, greedy_cover, sequential_executor
from multihit.search import (
    DEFAULT_ALPHA,
    LambdaInterval,
    ScoredCombination,
    SearchStats,
    lambda_decode,
    lambda_total,
    pdfs_best,
    score,
)

__version__ = "0.1.0"

__all__ = [
    "BitRow",
    "CoverSolution",
    "DEFAULT_ALPHA",
    "GeneMap",
    "LambdaInterval",
    "MutationMatrix",
    "ScoredCombination",
    "SearchStats",
    "greedy_cover",
    "lambda_decode",
    "lambda_total",
    "pdfs_best",
    "read_packed",
    "score",
    "sequential_executor",
    "write_packed",
]
