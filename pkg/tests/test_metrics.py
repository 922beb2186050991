import io
from math import comb

import pytest

from multihit.bitmat import GeneMap
from multihit.metrics import (
    METRICS_FIELDS,
    RunMetrics,
    convert_indices,
    summarize,
    verify_cover,
    write_metrics_csv,
)


def worker_row(leader=0, worker=0, busy=0.0, visited=0, pruned=0):
    return RunMetrics(leader, worker, busy_seconds=busy, visited=visited,
                      pruned_combinations=pruned)


def test_summarize_single_worker():
    summary = summarize([worker_row(busy=2.0, visited=10)], num_genes=20, hits=3)
    assert summary.busy_stddev == 0.0
    assert summary.busy_mean == 2.0
    assert summary.total_visited == 10


def test_summarize_arithmetic():
    summary = summarize([worker_row(busy=1.0), worker_row(worker=1, busy=3.0)], 20, 3)
    assert summary.busy_mean == 2.0
    assert summary.busy_stddev == 1.0  # population stddev
    assert summary.busy_min == 1.0 and summary.busy_max == 3.0


def test_summarize_visited_fraction_exact():
    summary = summarize([worker_row(visited=10)], num_genes=20, hits=3)
    assert comb(20, 3) == 1140
    assert summary.visited_fraction == 10 / 1140


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([], 10, 2)


def test_summarize_fraction_agrees_with_search_accounting():
    from multihit.bitmat import sort_by_sparsity
    from multihit.sched import run_round
    from multihit.synthetic import random_matrix

    m, _ = sort_by_sparsity(random_matrix(16, 10, 4, 0.85, seed=6))
    outcome = run_round(m, 3, topology=(2, 2), chunk_size=8, transport="channel")
    summary = summarize(outcome.metrics, 16, 3)
    assert summary.total_visited == outcome.stats.visited
    assert summary.total_pruned == outcome.stats.pruned_combinations
    assert summary.visited_fraction == outcome.stats.visited / comb(16, 3)
    assert summary.total_visited + summary.total_pruned == comb(16, 3)


def test_metrics_csv_schema():
    rows = [(0, worker_row(busy=1.5, visited=7)), (1, RunMetrics(1, -1, steals_initiated=2))]
    sink = io.StringIO()
    write_metrics_csv(sink, rows)
    lines = sink.getvalue().strip().splitlines()
    assert lines[0] == ",".join(METRICS_FIELDS)
    first = lines[1].split(",")
    assert first[0] == "l0w0"
    assert first[-1] == "0"
    second = lines[2].split(",")
    assert second[0] == "l1"
    assert second[-3] == "2"  # steals_initiated
    assert second[-1] == "1"  # round index


TUMOR_MATRIX = "T1\tT2\tT3\nA\t1,1,0\nB\t1,1,0\nC\t0,0,1\nD\t0,0,1\n"
NORMAL_LIST = "A\tN1\n"
GENE_MAP = GeneMap(((0, "A"), (1, "B"), (2, "C"), (3, "D")))


def run_verify(solution_text, gene_map=GENE_MAP):
    return verify_cover(
        io.StringIO(solution_text),
        io.StringIO(TUMOR_MATRIX),
        io.StringIO(NORMAL_LIST),
        gene_map,
    )


def test_verify_complete_solution():
    report = run_verify("(0, 1)\t0.5\t2\n(2, 3)\t0.4\t1\n")
    assert report.covered_tumor == 3
    assert report.uncovered_tumor_ids == []
    assert report.tumor_fraction == 1.0


def test_verify_missing_combination_leaves_uncovered():
    report = run_verify("(0, 1)\t0.5\t2\n")
    assert report.covered_tumor == 2
    assert report.uncovered_tumor_ids == ["T3"]


def test_verify_counts_normal_coverage():
    # gene A alone mutates normal N1
    report = run_verify("(0)\t0.1\t2\n")
    assert report.covered_normal == 1


def test_verify_accepts_named_solutions():
    report = verify_cover(
        io.StringIO("(A, B)\t0.5\t2\n"),
        io.StringIO(TUMOR_MATRIX),
        io.StringIO(NORMAL_LIST),
        gene_map=None,
    )
    assert report.covered_tumor == 2


def test_verify_unknown_index_fatal():
    with pytest.raises(ValueError, match="unknown gene indices"):
        run_verify("(0, 9)\t0.5\t2\n")


def test_verify_indices_require_map():
    with pytest.raises(ValueError, match="gene map is required"):
        verify_cover(
            io.StringIO("(0, 1)\t0.5\t2\n"),
            io.StringIO(TUMOR_MATRIX),
            io.StringIO(NORMAL_LIST),
            gene_map=None,
        )


def test_convert_indices_basic():
    sink = io.StringIO()
    count = convert_indices(io.StringIO("(0, 2)\t0.5\t2\n"), GeneMap(((0, "TP53"), (2, "KRAS"))), sink)
    assert count == 1
    assert sink.getvalue() == "(TP53, KRAS)\t0.5\t2\n"


def test_convert_empty_solution():
    sink = io.StringIO()
    assert convert_indices(io.StringIO(""), GENE_MAP, sink) == 0
    assert sink.getvalue() == ""


def test_convert_missing_indices_listed():
    with pytest.raises(ValueError, match="7, 9"):
        convert_indices(io.StringIO("(7, 9)\t0.5\t1\n"), GENE_MAP, io.StringIO())


def test_convert_rejects_named_input():
    with pytest.raises(ValueError, match="non-integer"):
        convert_indices(io.StringIO("(TP53, KRAS)\t0.5\t1\n"), GENE_MAP, io.StringIO())


def test_convert_round_trip_through_names():
    import random

    rng = random.Random(3)
    names = [f"G{i}" for i in range(8)]
    rng.shuffle(names)
    gene_map = GeneMap(tuple(enumerate(names)))
    combos = [(0, 3, 5), (1, 2, 7)]
    text = "".join(f"({', '.join(map(str, c))})\t0.5\t1\n" for c in combos)
    named = io.StringIO()
    convert_indices(io.StringIO(text), gene_map, named)
    reverse = {name: i for i, name in gene_map.entries}
    back = []
    for line in named.getvalue().splitlines():
        inside = line[1 : line.index(")")]
        back.append(tuple(reverse[t.strip()] for t in inside.split(",")))
    assert back == combos
