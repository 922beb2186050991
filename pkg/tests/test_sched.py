import random
from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multihit.bitmat import sort_by_sparsity
from multihit.metrics import RunMetrics
from multihit.search import LambdaInterval, SearchStats, lambda_total, pdfs_best
from multihit.sched import (
    Candidate,
    MatrixBlock,
    MetricsReport,
    NodeGroup,
    NoWork,
    Report,
    RoundResult,
    StealReply,
    StealRequest,
    Terminate,
    Token,
    WorkGrant,
    WorkRequest,
    decode_message,
    encode_message,
    plan_partition,
    run_round,
    run_simulated_round,
    steal_victim_select,
    token_rules,
)
from multihit.sched.messages import BLACK, WHITE, decode_payload, encode_frame
from multihit.synthetic import random_matrix, skewed_matrix


# --- plan_partition ---------------------------------------------------------

def test_plan_partition_examples():
    assert plan_partition(10, 3) == [
        LambdaInterval(0, 4), LambdaInterval(4, 7), LambdaInterval(7, 10)
    ]
    assert plan_partition(5, 1) == [LambdaInterval(0, 5)]


@given(lam=st.integers(0, 10_000), leaders=st.integers(1, 64))
@settings(max_examples=80, deadline=None)
def test_plan_partition_properties(lam, leaders):
    parts = plan_partition(lam, leaders)
    assert len(parts) == leaders
    assert parts[0].start == 0 and parts[-1].end == lam
    sizes = []
    for prev, cur in zip(parts, parts[1:]):
        assert prev.end == cur.start
    for p in parts:
        sizes.append(p.size)
    assert max(sizes) - min(sizes) <= 1


# --- leader unit behavior ---------------------------------------------------

def make_leader(queue=(0, 100), chunk=16, workers=(10, 11), leaders=2):
    group = NodeGroup(0, leaders, list(workers), chunk_size=chunk, rng=random.Random(1))
    group.matrix = object()  # mark the assignment as received
    group.local_queue = tuple(queue) if queue else None
    return group


def test_leader_grants_chunk_from_front():
    group = make_leader()
    out = group.handle(10, WorkRequest())
    assert (10, WorkGrant(LambdaInterval(0, 16))) in out
    assert group.local_queue == (16, 100)
    assert group.outstanding == 1


def test_leader_grants_remainder_when_short():
    group = make_leader(queue=(95, 100))
    out = group.handle(10, WorkRequest())
    assert (10, WorkGrant(LambdaInterval(95, 100))) in out
    assert group.local_queue is None


def test_leader_steal_reply_upper_half_ceil():
    group = make_leader(queue=(16, 100))
    out = group.handle(1, StealRequest())
    assert (1, StealReply(LambdaInterval(58, 100))) in out
    assert group.local_queue == (16, 58)
    assert group.donated_since_token
    assert group.steals_served == 1


def test_leader_steal_reply_empty_queue():
    group = make_leader(queue=None)
    out = group.handle(1, StealRequest())
    assert (1, StealReply(None)) in out
    assert not group.donated_since_token


def test_leader_steal_reply_singleton_donates_everything():
    group = make_leader(queue=(7, 8))
    out = group.handle(1, StealRequest())
    assert (1, StealReply(LambdaInterval(7, 8))) in out
    assert group.local_queue is None


def test_leader_parks_then_steals():
    group = make_leader(queue=None)
    out = group.handle(10, WorkRequest())
    steal_msgs = [(d, m) for d, m in out if isinstance(m, StealRequest)]
    assert steal_msgs == [(1, StealRequest())]
    assert list(group.pending) == [10]
    # empty reply exhausts the only peer -> NoWork
    out = group.handle(1, StealReply(None))
    assert (10, NoWork()) in out
    assert group.no_more_work


def test_leader_grants_stolen_work_to_parked_workers():
    group = make_leader(queue=None)
    group.handle(10, WorkRequest())
    group.handle(11, WorkRequest())
    out = group.handle(1, StealReply(LambdaInterval(40, 60)))
    grants = [(d, m) for d, m in out if isinstance(m, WorkGrant)]
    assert grants == [
        (10, WorkGrant(LambdaInterval(40, 56))),
        (11, WorkGrant(LambdaInterval(56, 60))),
    ]
    assert group.retries_left == group.steal_retries


def test_late_requests_after_giving_up_get_nowork():
    group = make_leader(queue=None)
    group.handle(10, WorkRequest())
    group.handle(1, StealReply(None))  # only peer empty -> no_more_work
    assert group.no_more_work
    out = group.handle(11, WorkRequest())
    assert (11, NoWork()) in out


def test_leader_step_wrapper():
    from multihit.sched import leader_step

    group = make_leader()
    out = leader_step(group, WorkRequest(), src=10)
    assert (10, WorkGrant(LambdaInterval(0, 16))) in out


# --- steal victim selection -------------------------------------------------

def test_steal_victim_only_peer():
    rng = random.Random(0)
    assert steal_victim_select(0, 2, rng) == 1


def test_steal_victim_no_peers():
    assert steal_victim_select(0, 1, random.Random(0)) is None
    assert steal_victim_select(0, 4, random.Random(0), exclude={1, 2, 3}) is None


def test_steal_victim_deterministic_with_seed():
    seq1 = [steal_victim_select(3, 8, random.Random(99)) for _ in range(10)]
    seq2 = [steal_victim_select(3, 8, random.Random(99)) for _ in range(10)]
    assert seq1 == seq2


def test_steal_victim_uniformity():
    rng = random.Random(5)
    counts = {i: 0 for i in range(10) if i != 4}
    draws = 10_000
    for _ in range(draws):
        counts[steal_victim_select(4, 10, rng)] += 1
    expected = draws / 9
    chi_square = sum((c - expected) ** 2 / expected for c in counts.values())
    # 8 degrees of freedom, p=0.001 critical value is 26.12
    assert chi_square < 26.12


# --- token rules -------------------------------------------------------------

def test_token_held_while_busy():
    group = make_leader(queue=(0, 10))
    token, forward = token_rules(group, Token(WHITE))
    assert not forward


def test_token_blackened_after_donation():
    group = make_leader(queue=None)
    group.donated_since_token = True
    token, forward = token_rules(group, Token(WHITE))
    assert forward and token.color == BLACK


def test_token_stays_black():
    group = make_leader(queue=None)
    token, forward = token_rules(group, Token(BLACK))
    assert forward and token.color == BLACK


def test_single_leader_terminates_on_two_white_returns():
    matrix, _ = sort_by_sparsity(random_matrix(8, 6, 2, 0.8, seed=0))
    outcome, nodes = run_simulated_round(matrix, 2, topology=(1, 1), chunk_size=8, seed=0)
    root = nodes[0]
    assert root.white_streak == 2
    assert root.terminated and root.done


# --- frame codec -------------------------------------------------------------

ALL_MESSAGES = [
    WorkRequest(),
    WorkGrant(LambdaInterval(3, 17)),
    NoWork(),
    StealRequest(),
    StealReply(None),
    StealReply(LambdaInterval(58, 100)),
    Token(WHITE),
    Token(BLACK),
    Terminate(),
    Report(None, SearchStats(5, 2, 95)),
    Report(Candidate((1, 4, 9), 0.625), SearchStats(7, 0, 0)),
    MetricsReport(RunMetrics(2, 3, 1.25, 0.75, 4, 100, 900, 2, 1)),
    RoundResult(Candidate((0, 2), 0.5), SearchStats(1, 2, 3),
                (RunMetrics(0, 0, 0.5, 0.5, 1, 10, 90, 0, 0),)),
]


@pytest.mark.parametrize("msg", ALL_MESSAGES, ids=lambda m: type(m).__name__ + str(ALL_MESSAGES.index(m) if m in ALL_MESSAGES else ""))
def test_message_round_trip(msg):
    assert decode_message(encode_message(msg)) == msg


def test_matrix_block_round_trip():
    matrix, _ = sort_by_sparsity(random_matrix(6, 5, 3, 0.7, seed=8))
    matrix.active_tumor_mask.bits = 0b10110
    block = MatrixBlock(matrix, 3, 0.1, True, LambdaInterval(0, 9))
    back = decode_message(encode_message(block))
    assert back.matrix == matrix
    assert back.matrix.active_tumor_mask == matrix.active_tumor_mask
    assert (back.hits, back.alpha, back.prune, back.interval) == (3, 0.1, True, LambdaInterval(0, 9))


def test_frame_envelope():
    frame = encode_frame(7, 9, Token(BLACK))
    assert int.from_bytes(frame[:4], "little") == len(frame) - 4
    src, dst, msg = decode_payload(frame[4:])
    assert (src, dst, msg) == (7, 9, Token(BLACK))


@given(
    genes=st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=9, unique=True),
    value=st.floats(allow_nan=False, allow_infinity=False),
    visited=st.integers(0, 2**63 - 1),
    pruned=st.integers(0, 2**63 - 1),
)
@settings(max_examples=60, deadline=None)
def test_report_round_trip_random(genes, value, visited, pruned):
    msg = Report(Candidate(tuple(sorted(genes)), value), SearchStats(visited, 0, pruned))
    assert decode_message(encode_message(msg)) == msg


# --- end-to-end rounds -------------------------------------------------------

def test_degenerate_topology_equals_sequential():
    matrix, _ = sort_by_sparsity(random_matrix(18, 12, 6, 0.85, seed=2))
    sequential, _ = pdfs_best(matrix, 3)
    outcome = run_round(matrix, 3, topology=(1, 1), chunk_size=16, transport="channel")
    assert outcome.best.genes == sequential.genes
    assert outcome.best.score == sequential.score


@pytest.mark.parametrize("transport", ["sim", "channel", "socket"])
def test_transports_agree_with_sequential(transport):
    matrix, _ = sort_by_sparsity(random_matrix(20, 14, 6, 0.85, seed=6))
    sequential, seq_stats = pdfs_best(matrix, 3)
    outcome = run_round(
        matrix, 3, topology=(2, 2), chunk_size=9, seed=11, transport=transport
    )
    assert outcome.best.genes == sequential.genes
    assert outcome.best.score == sequential.score
    assert outcome.stats.total_accounted == seq_stats.total_accounted == comb(20, 3)
    assert len(outcome.metrics) == 2 * (2 + 1)


def test_seed_and_chunk_do_not_change_result():
    matrix, _ = sort_by_sparsity(random_matrix(16, 10, 4, 0.82, seed=3))
    results = set()
    for seed in (0, 1, 2):
        for chunk in (1, 5, 64):
            outcome, _ = run_simulated_round(
                matrix, 2, topology=(2, 2), chunk_size=chunk, seed=seed, interleave_seed=seed * 7
            )
            results.add((outcome.best.genes, outcome.best.score))
    assert len(results) == 1


def _assert_exactly_once(nodes, lam: int) -> None:
    grants = sorted(
        (s, e)
        for node in nodes.values()
        if isinstance(node, NodeGroup)
        for _, s, e in node.grant_log
    )
    position = 0
    for start, end in grants:
        assert start == position
        position = end
    assert position == lam


def test_exactly_once_under_fuzzed_interleavings():
    matrix, _ = sort_by_sparsity(random_matrix(15, 10, 5, 0.85, seed=4))
    lam = lambda_total(15, 3)
    sequential, _ = pdfs_best(matrix, 3)
    for trial in range(40):
        outcome, nodes = run_simulated_round(
            matrix, 3, topology=(4, 2), chunk_size=4, seed=trial, interleave_seed=trial * 13 + 1
        )
        _assert_exactly_once(nodes, lam)
        assert outcome.best.genes == sequential.genes
        assert sum(n.faults for n in nodes.values()) == 0


def test_leader_computes_mode():
    matrix, _ = sort_by_sparsity(random_matrix(14, 10, 4, 0.8, seed=9))
    sequential, _ = pdfs_best(matrix, 2)
    outcome, nodes = run_simulated_round(
        matrix, 2, topology=(2, 1), chunk_size=5, seed=3, leader_computes=True
    )
    assert outcome.best.genes == sequential.genes
    leader_rows = [m for m in outcome.metrics if m.worker == -1]
    assert sum(m.chunks_processed for m in leader_rows) > 0
    assert outcome.stats.total_accounted == comb(14, 2)


def test_stealing_disabled_still_completes():
    matrix, _ = sort_by_sparsity(random_matrix(14, 10, 4, 0.8, seed=10))
    sequential, _ = pdfs_best(matrix, 2)
    outcome, nodes = run_simulated_round(
        matrix, 2, topology=(3, 2), chunk_size=4, seed=1, stealing=False
    )
    assert outcome.best.genes == sequential.genes
    assert all(n.steals_initiated == 0 for n in nodes.values() if isinstance(n, NodeGroup))


def test_stealing_rebalances_skewed_workload():
    # dense tail heavy enough that thieves find the victim's queue alive
    matrix = skewed_matrix(144, 64, 8, dense_genes=64, dense_density=0.8, seed=5)
    res_on = run_round(matrix, 4, topology=(4, 2), chunk_size=128, seed=2,
                       stealing=True, transport="channel")
    res_off = run_round(matrix, 4, topology=(4, 2), chunk_size=128, seed=2,
                        stealing=False, transport="channel")
    assert res_on.best.genes == res_off.best.genes
    served = sum(m.steals_served for m in res_on.metrics)
    assert served > 0


def test_empty_lambda_range():
    matrix = random_matrix(3, 2, 1, 0.5, seed=1)  # G < h
    outcome, nodes = run_simulated_round(matrix, 4, topology=(2, 2), chunk_size=8, seed=0)
    assert outcome.best is None
    assert outcome.stats.total_accounted == 0


def test_fuzz_with_masked_matrices():
    # mid-greedy state: partially covered tumor masks, wilder parameters
    from multihit.bitmat import BitRow

    rng = random.Random("masked-fuzz")
    for trial in range(120):
        num_genes = rng.randint(4, 20)
        num_tumor = rng.randint(1, 16)
        num_normal = rng.randint(0, 6)
        hits = rng.choice((2, 3, 4))
        m, _ = sort_by_sparsity(
            random_matrix(num_genes, num_tumor, num_normal, rng.uniform(0.5, 0.99), seed=trial)
        )
        m.active_tumor_mask = BitRow(num_tumor, rng.getrandbits(num_tumor))
        if m.active_tumor_mask.popcount() + num_normal == 0:
            continue
        seq_best, _ = pdfs_best(m, hits)
        outcome, nodes = run_simulated_round(
            m, hits,
            topology=(rng.randint(1, 6), rng.randint(1, 4)),
            chunk_size=rng.choice((1, 5, 37)),
            seed=trial,
            interleave_seed=rng.getrandbits(30),
            stealing=rng.random() < 0.8,
            leader_computes=rng.random() < 0.2,
            steal_retries=rng.choice((1, 3, 5)),
        )
        _assert_exactly_once(nodes, lambda_total(num_genes, hits))
        if seq_best is None:
            assert outcome.best is None
        else:
            assert (outcome.best.genes, outcome.best.score) == (seq_best.genes, seq_best.score)
        assert sum(getattr(node, "faults", 0) for node in nodes.values()) == 0
