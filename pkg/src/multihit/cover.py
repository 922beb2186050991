"""Greedy weighted set cover driver.

Repeatedly asks an argmax executor for the best combination against the
current active-tumor mask, records it, masks the tumor samples it covers,
and stops when every tumor sample is covered or no combination can make
progress.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

from multihit.bitmat import MutationMatrix
from multihit.search import DEFAULT_ALPHA, ScoredCombination, pdfs_best, score

# An executor returns the global argmax over the full lambda range for the
# matrix's current active mask, or None when no combination covers any
# still-active tumor sample.
ArgmaxExecutor = Callable[[MutationMatrix, int, float], Optional[ScoredCombination]]

DEFAULT_MAX_ROUNDS = 64


@dataclass
class CoverSolution:
    rounds: list[ScoredCombination] = field(default_factory=list)
    covered_history: list[int] = field(default_factory=list)
    complete: bool = False
    stall_reason: str | None = None


def sequential_executor(prune: bool = True) -> ArgmaxExecutor:
    """Single-process executor: one pruned (or exhaustive) search over the
    whole lambda range."""

    def execute(m: MutationMatrix, hits: int, alpha: float) -> Optional[ScoredCombination]:
        best, _ = pdfs_best(m, hits, None, alpha, prune)
        return best

    return execute


def greedy_cover(
    m: MutationMatrix,
    hits: int,
    alpha: float = DEFAULT_ALPHA,
    executor: ArgmaxExecutor | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> CoverSolution:
    """Run the greedy cover loop. Resets the active mask, then each round
    selects the executor's argmax, masks its covered tumor samples, and
    repeats. A best that covers no new tumor sample is a stall, not an
    error: real cohorts can contain uncoverable samples.
    """
    if m.num_tumor < 1:
        raise ValueError("matrix has no tumor samples to cover")
    if executor is None:
        executor = sequential_executor()
    m.reset_active_mask()
    solution = CoverSolution()
    for _ in range(max_rounds):
        if m.active_tumor_mask.bits == 0:
            solution.complete = True
            return solution
        best = executor(m, hits, alpha)
        if best is None:
            solution.stall_reason = "no combination covers any remaining tumor sample"
            return solution
        # Recompute locally: executors may hand back only (genes, score),
        # e.g. when the result crossed a wire.
        chosen = score(best.genes, m, alpha)
        newly = chosen.tumor_cover.popcount()
        if newly == 0:
            solution.stall_reason = "best combination covers zero new tumor samples"
            return solution
        solution.rounds.append(chosen)
        solution.covered_history.append(newly)
        m.active_tumor_mask.bits &= ~chosen.tumor_cover.bits
    if m.active_tumor_mask.bits == 0:
        solution.complete = True
    else:
        solution.stall_reason = f"max_rounds={max_rounds} exhausted before full coverage"
    return solution


def format_solution_line(entry: ScoredCombination, newly_covered: int) -> str:
    genes = ", ".join(str(g) for g in entry.genes)
    return f"({genes})\t{entry.score!r}\t{newly_covered}"


def write_solution(sink: TextIO, solution: CoverSolution) -> None:
    """One combination per line: parenthesized index tuple, then
    tab-separated score and newly-covered tumor count."""
    for entry, newly in zip(solution.rounds, solution.covered_history):
        sink.write(format_solution_line(entry, newly) + "\n")


@dataclass(frozen=True)
class SolutionLine:
    line_no: int
    tokens: tuple[str, ...]
    trailer: str


def parse_solution_file(source: TextIO) -> list[SolutionLine]:
    """Parse solution lines back into token tuples, preserving trailers."""
    parsed = []
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if not line.startswith("(") or ")" not in line:
            raise ValueError(f"solution line {line_no}: expected a parenthesized tuple: {line!r}")
        close = line.index(")")
        inside = line[1:close]
        tokens = tuple(t.strip() for t in inside.split(",") if t.strip())
        if not tokens:
            raise ValueError(f"solution line {line_no}: empty combination: {line!r}")
        parsed.append(SolutionLine(line_no, tokens, line[close + 1 :]))
    return parsed
