"""Leader and worker state machines for one distributed argmax round.

Every node is a sequential message handler: handle(src, msg) mutates local
state and returns the messages to send. Nothing here touches a transport,
which is what lets the same logic run under threads, sockets, or the
deterministic seeded simulator used for protocol fuzzing.

Protocol sketch (one round):
  coordinator -> leaders: MatrixBlock with each leader's lambda interval
  leaders -> workers:     MatrixBlock relay, then grant/report loops
  leader out of work:     randomized steal from a peer; the victim donates
                          the upper half of its remaining interval
  quiescence:             white/black token ring over the leaders; a leader
                          forwards only while idle, a donation since its
                          last forward turns the token black, and the root
                          terminates after seeing a white token twice in a
                          row
  wind-down:              workers return their metrics, leaders fold and
                          report to the root, the root emits a RoundResult
"""

from __future__ import annotations

import logging
import random
import time
from collections import deque
from typing import Optional

from multihit.metrics import RunMetrics
from multihit.search import LambdaInterval, SearchStats, fold_best, pdfs_best
from multihit.sched.messages import (
    BLACK,
    WHITE,
    Candidate,
    MatrixBlock,
    MetricsReport,
    NoWork,
    Report,
    RoundResult,
    StealReply,
    StealRequest,
    Terminate,
    Token,
    WorkGrant,
    WorkRequest,
)

log = logging.getLogger(__name__)

COORDINATOR_ID = 0xFFFFFFFF
DEFAULT_CHUNK_SIZE = 1024
DEFAULT_STEAL_RETRIES = 3

Outgoing = list[tuple[int, object]]


def plan_partition(lam_total: int, num_leaders: int) -> list[LambdaInterval]:
    """Contiguous, disjoint, covering intervals whose sizes differ by at
    most one."""
    if num_leaders < 1:
        raise ValueError("num_leaders must be >= 1")
    base, extra = divmod(lam_total, num_leaders)
    parts = []
    start = 0
    for i in range(num_leaders):
        size = base + (1 if i < extra else 0)
        parts.append(LambdaInterval(start, start + size))
        start += size
    return parts


def steal_victim_select(
    self_id: int,
    num_leaders: int,
    rng: random.Random,
    exclude: frozenset[int] | set[int] = frozenset(),
) -> Optional[int]:
    """Uniform random peer leader, excluding self and any peers already
    probed in the current steal burst. None means nobody left to ask."""
    if num_leaders < 2:
        return None
    candidates = [i for i in range(num_leaders) if i != self_id and i not in exclude]
    if not candidates:
        return None
    return rng.choice(candidates)


class WorkerNode:
    """Pull-compute-report loop around pdfs_best."""

    def __init__(self, node_id: int, leader_id: int, worker_index: int):
        self.node_id = node_id
        self.leader_id = leader_id
        self.worker_index = worker_index
        self.matrix = None
        self.hits = 0
        self.alpha = 0.0
        self.prune = True
        self.busy_seconds = 0.0
        self.chunks = 0
        self.visited = 0
        self.pruned_combinations = 0
        self.processed: list[LambdaInterval] = []
        self.started_at: float | None = None
        self.idle = False
        self.done = False
        self.faults = 0

    def handle(self, src: int, msg) -> Outgoing:
        if isinstance(msg, MatrixBlock):
            self.matrix = msg.matrix
            self.hits = msg.hits
            self.alpha = msg.alpha
            self.prune = msg.prune
            self.started_at = time.perf_counter()
            return [(self.leader_id, WorkRequest())]
        if isinstance(msg, WorkGrant):
            # busy accumulates around the compute call only, monotonic clock
            t0 = time.perf_counter()
            best, stats = pdfs_best(self.matrix, self.hits, msg.interval, self.alpha, self.prune)
            self.busy_seconds += time.perf_counter() - t0
            self.chunks += 1
            self.visited += stats.visited
            self.pruned_combinations += stats.pruned_combinations
            self.processed.append(msg.interval)
            candidate = Candidate(best.genes, best.score) if best is not None else None
            return [(self.leader_id, Report(candidate, stats)), (self.leader_id, WorkRequest())]
        if isinstance(msg, NoWork):
            self.idle = True
            return []
        if isinstance(msg, Terminate):
            lifetime = time.perf_counter() - (self.started_at or time.perf_counter())
            row = RunMetrics(
                leader=self.leader_id,
                worker=self.worker_index,
                busy_seconds=self.busy_seconds,
                idle_seconds=max(lifetime - self.busy_seconds, 0.0),
                chunks_processed=self.chunks,
                visited=self.visited,
                pruned_combinations=self.pruned_combinations,
            )
            self.done = True
            return [(self.leader_id, MetricsReport(row))]
        self.faults += 1
        log.warning("worker %d dropping unexpected %s from %d", self.node_id, type(msg).__name__, src)
        return []


def token_rules(group: "NodeGroup", token: Token) -> tuple[Token, bool]:
    """Forwarding decision for a non-root token holder: hold while busy,
    blacken when this leader donated since it last saw the token."""
    if not group.token_idle():
        return token, False
    color = BLACK if (token.color == BLACK or group.donated_since_token) else WHITE
    return Token(color), True


class NodeGroup:
    """Leader state: the node-local queue of lambda work, its workers, the
    steal/token bookkeeping, and the fold of its group's results."""

    def __init__(
        self,
        leader_id: int,
        num_leaders: int,
        worker_ids: list[int],
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        rng: random.Random | None = None,
        stealing: bool = True,
        steal_retries: int = DEFAULT_STEAL_RETRIES,
        leader_computes: bool = False,
        expected_summaries: int = 0,
        expected_metrics: int = 0,
    ):
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.leader_id = leader_id
        self.num_leaders = num_leaders
        self.worker_ids = list(worker_ids)
        self.chunk_size = chunk_size
        self.rng = rng if rng is not None else random.Random(leader_id)
        self.stealing = stealing
        self.steal_retries = steal_retries
        self.leader_computes = leader_computes
        self.is_root = leader_id == 0
        self.next_leader = (leader_id + 1) % num_leaders

        self.matrix = None
        self.hits = 0
        self.alpha = 0.0
        self.prune = True
        self.local_queue: tuple[int, int] | None = None
        self.pending: deque[int] = deque()
        self.outstanding = 0
        self.steal_victim: int | None = None
        self.tried_victims: set[int] = set()
        self.retries_left = steal_retries
        self.no_more_work = False
        self.donated_since_token = False
        self.token_held: Token | None = None
        self.token_started = False
        self.white_streak = 0
        self.terminated = False
        self.done = False

        self.best: Candidate | None = None
        self.group_stats = SearchStats()
        self.grant_log: list[tuple[int, int, int]] = []
        self.steals_initiated = 0
        self.steals_served = 0
        self.worker_rows: list[RunMetrics] = []
        self.started_at: float | None = None
        self.self_busy = 0.0
        self.self_chunks = 0
        self.self_visited = 0
        self.self_pruned = 0
        self.self_idle = False
        self.faults = 0

        # Root-only reduction bookkeeping.
        self.expected_summaries = expected_summaries
        self.expected_metrics = expected_metrics
        self.summaries_seen = 0
        self.global_best: Candidate | None = None
        self.global_stats = SearchStats()
        self.global_rows: list[RunMetrics] = []

    # -- helpers -----------------------------------------------------------

    def token_idle(self) -> bool:
        """Idle enough to let the token go: assignment received, no queued
        work, no granted chunk still unreported, and no steal awaiting a
        reply. The assignment gate matters: without it a leader whose
        MatrixBlock is still in flight would look idle and the root could
        terminate before that partition was ever processed."""
        return (
            self.matrix is not None
            and self.local_queue is None
            and self.outstanding == 0
            and self.steal_victim is None
        )

    def queue_size(self) -> int:
        if self.local_queue is None:
            return 0
        return self.local_queue[1] - self.local_queue[0]

    def _grant(self, worker: int, out: Outgoing) -> None:
        start, end = self.local_queue
        take = min(self.chunk_size, end - start)
        interval = LambdaInterval(start, start + take)
        self.local_queue = (start + take, end) if start + take < end else None
        self.outstanding += 1
        self.grant_log.append((worker, interval.start, interval.end))
        out.append((worker, WorkGrant(interval)))

    def _compute_chunk(self, interval: LambdaInterval, out: Outgoing) -> None:
        # leader_computes mode: the leader acts as one extra worker via
        # messages to itself, so granting/reporting stays uniform.
        t0 = time.perf_counter()
        best, stats = pdfs_best(self.matrix, self.hits, interval, self.alpha, self.prune)
        self.self_busy += time.perf_counter() - t0
        self.self_chunks += 1
        self.self_visited += stats.visited
        self.self_pruned += stats.pruned_combinations
        candidate = Candidate(best.genes, best.score) if best is not None else None
        out.append((self.leader_id, Report(candidate, stats)))
        out.append((self.leader_id, WorkRequest()))

    def _fault(self, src: int, msg) -> None:
        self.faults += 1
        log.warning(
            "leader %d dropping unexpected %s from %d", self.leader_id, type(msg).__name__, src
        )

    # -- message handlers ---------------------------------------------------

    def handle(self, src: int, msg) -> Outgoing:
        out: Outgoing = []
        if isinstance(msg, MatrixBlock):
            self._on_matrix(msg, out)
        elif isinstance(msg, WorkRequest):
            self._on_work_request(src, out)
        elif isinstance(msg, WorkGrant):
            if self.leader_computes and src == self.leader_id and not self.terminated:
                self._compute_chunk(msg.interval, out)
            else:
                self._fault(src, msg)
        elif isinstance(msg, Report):
            self._on_report(src, msg, out)
        elif isinstance(msg, StealRequest):
            self._on_steal_request(src, out)
        elif isinstance(msg, StealReply):
            self._on_steal_reply(msg, out)
        elif isinstance(msg, Token):
            if self.terminated:
                self._fault(src, msg)
            else:
                self.token_held = msg
        elif isinstance(msg, Terminate):
            self._on_terminate(out)
        elif isinstance(msg, MetricsReport):
            self._on_metrics(src, msg, out)
        elif isinstance(msg, NoWork):
            self.self_idle = True
        else:
            self._fault(src, msg)
        self._after(out)
        return out

    def _on_matrix(self, msg: MatrixBlock, out: Outgoing) -> None:
        self.matrix = msg.matrix
        self.hits = msg.hits
        self.alpha = msg.alpha
        self.prune = msg.prune
        self.started_at = time.perf_counter()
        if msg.interval is not None and msg.interval.size > 0:
            self.local_queue = (msg.interval.start, msg.interval.end)
        relay = MatrixBlock(msg.matrix, msg.hits, msg.alpha, msg.prune, None)
        for wid in self.worker_ids:
            out.append((wid, relay))
        if self.leader_computes:
            out.append((self.leader_id, WorkRequest()))

    def _on_work_request(self, src: int, out: Outgoing) -> None:
        if self.terminated:
            # Normal race: the request crossed the Terminate broadcast.
            log.debug("leader %d ignoring late work request from %d", self.leader_id, src)
            return
        if self.local_queue is not None:
            self._grant(src, out)
        else:
            self.pending.append(src)

    def _on_report(self, src: int, msg: Report, out: Outgoing) -> None:
        if self.is_root and self.terminated and src < self.num_leaders:
            # Leader-level reduction stage: fold a group summary.
            self.summaries_seen += 1
            self.global_best = fold_best(self.global_best, msg.best)
            self.global_stats.merge(msg.stats)
            self._maybe_finish(out)
            return
        self.outstanding -= 1
        self.best = fold_best(self.best, msg.best)
        self.group_stats.merge(msg.stats)

    def _on_steal_request(self, src: int, out: Outgoing) -> None:
        if self.terminated:
            # A steal triggered by a work request that crossed the token can
            # land here after termination. It carries no work, so it cannot
            # violate exactly-once; drop it like a late work request.
            log.debug("leader %d ignoring late steal request from %d", self.leader_id, src)
            return
        if self.local_queue is None:
            out.append((src, StealReply(None)))
            return
        start, end = self.local_queue
        keep = (end - start) // 2
        donated = LambdaInterval(start + keep, end)
        self.local_queue = (start, start + keep) if keep > 0 else None
        self.donated_since_token = True
        self.steals_served += 1
        out.append((src, StealReply(donated)))

    def _on_steal_reply(self, msg: StealReply, out: Outgoing) -> None:
        self.steal_victim = None
        if self.terminated:
            # Empty replies can legitimately trail the Terminate broadcast;
            # a work-carrying one cannot (its donor would have been holding
            # the token), so there is nothing to grant here.
            return
        if msg.interval is not None and msg.interval.size > 0:
            if self.local_queue is not None:
                # Cannot happen: steals are only issued from an empty queue.
                self._fault(self.leader_id, msg)
                return
            self.local_queue = (msg.interval.start, msg.interval.end)
            self.retries_left = self.steal_retries
            self.tried_victims.clear()
            while self.local_queue is not None and self.pending:
                self._grant(self.pending.popleft(), out)
        else:
            self.retries_left -= 1

    def _on_terminate(self, out: Outgoing) -> None:
        if self.terminated:
            return
        self.terminated = True
        for wid in self.worker_ids:
            out.append((wid, Terminate()))
        if not self.worker_ids:
            self._send_summary(out)

    def _on_metrics(self, src: int, msg: MetricsReport, out: Outgoing) -> None:
        if self.is_root and self.terminated and src < self.num_leaders:
            self.global_rows.append(msg.metrics)
            self._maybe_finish(out)
            return
        self.worker_rows.append(msg.metrics)
        if len(self.worker_rows) == len(self.worker_ids):
            self._send_summary(out)

    # -- wind-down ----------------------------------------------------------

    def _own_row(self) -> RunMetrics:
        lifetime = time.perf_counter() - (self.started_at or time.perf_counter())
        return RunMetrics(
            leader=self.leader_id,
            worker=-1,
            busy_seconds=self.self_busy,
            idle_seconds=max(lifetime - self.self_busy, 0.0),
            chunks_processed=self.self_chunks,
            visited=self.self_visited,
            pruned_combinations=self.self_pruned,
            steals_initiated=self.steals_initiated,
            steals_served=self.steals_served,
        )

    def _send_summary(self, out: Outgoing) -> None:
        root = 0
        out.append((root, Report(self.best, self.group_stats)))
        out.append((root, MetricsReport(self._own_row())))
        for row in self.worker_rows:
            out.append((root, MetricsReport(row)))
        if not self.is_root:
            self.done = True

    def _maybe_finish(self, out: Outgoing) -> None:
        if self.summaries_seen == self.expected_summaries and len(self.global_rows) == self.expected_metrics:
            result = RoundResult(self.global_best, self.global_stats, tuple(self.global_rows))
            out.append((COORDINATOR_ID, result))
            self.done = True

    def _begin_termination(self, out: Outgoing) -> None:
        self.token_held = None
        for lid in range(self.num_leaders):
            if lid != self.leader_id:
                out.append((lid, Terminate()))
        # The root terminates inline rather than via a self-message: its
        # terminated flag must be set before any peer's summary Report can
        # arrive, or that summary would be misread as a worker chunk report.
        self._on_terminate(out)

    # -- idle-time reactions ------------------------------------------------

    def _maybe_steal(self, out: Outgoing) -> None:
        if (
            self.terminated
            or self.local_queue is not None
            or not self.pending
            or self.steal_victim is not None
        ):
            return
        can_steal = (
            not self.no_more_work
            and self.stealing
            and self.num_leaders >= 2
            and self.retries_left > 0
        )
        victim = None
        if can_steal:
            victim = steal_victim_select(
                self.leader_id, self.num_leaders, self.rng, self.tried_victims
            )
        if victim is None:
            # Retries exhausted (or nothing to steal from): this group is
            # permanently out of work; release parked workers, including any
            # whose requests arrive later.
            self.no_more_work = True
            while self.pending:
                out.append((self.pending.popleft(), NoWork()))
            return
        self.tried_victims.add(victim)
        self.steal_victim = victim
        self.steals_initiated += 1
        out.append((victim, StealRequest()))

    def _maybe_token(self, out: Outgoing) -> None:
        if self.terminated or self.token_held is None:
            return
        if self.is_root:
            if not self.token_idle():
                return
            token = self.token_held
            self.token_held = None
            color = BLACK if (token.color == BLACK or self.donated_since_token) else WHITE
            self.donated_since_token = False
            if color == BLACK:
                self.white_streak = 0
                out.append((self.next_leader, Token(WHITE)))
                return
            self.white_streak += 1
            if self.white_streak >= 2:
                self._begin_termination(out)
            else:
                out.append((self.next_leader, Token(WHITE)))
            return
        token, forward = token_rules(self, self.token_held)
        if forward:
            self.token_held = None
            self.donated_since_token = False
            out.append((self.next_leader, token))

    def _after(self, out: Outgoing) -> None:
        self._maybe_steal(out)
        if (
            self.is_root
            and not self.token_started
            and not self.terminated
            and self.matrix is not None
            and self.token_idle()
        ):
            self.token_started = True
            out.append((self.next_leader, Token(WHITE)))
        self._maybe_token(out)


def leader_step(state: NodeGroup, msg, src: int = COORDINATOR_ID) -> Outgoing:
    """Feed one message to a leader and get its outgoing messages."""
    return state.handle(src, msg)
