"""Transports for one scheduler round, plus the round orchestration.

Three interchangeable ways to move the same messages:

* ``sim``     - single-threaded, seeded-random interleaving with per-link
                FIFO order; deterministic, used for protocol fuzzing.
* ``channel`` - one thread per node with queue.Queue inboxes (reference).
* ``socket``  - every node talks length-prefixed binary frames over
                loopback TCP through a tiny router, exercising the wire
                encoding of every message on every hop.
"""

from __future__ import annotations

import logging
import queue
import random
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Optional

from multihit.bitmat import MutationMatrix
from multihit.cover import ArgmaxExecutor
from multihit.metrics import RunMetrics
from multihit.search import (
    DEFAULT_ALPHA,
    ScoredCombination,
    SearchStats,
    lambda_total,
    score,
)
from multihit.sched.messages import (
    MatrixBlock,
    RoundResult,
    decode_payload,
    encode_frame,
)
from multihit.sched.protocol import (
    COORDINATOR_ID,
    DEFAULT_CHUNK_SIZE,
    DEFAULT_STEAL_RETRIES,
    NodeGroup,
    WorkerNode,
    plan_partition,
)

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """A round failed to complete: thread fault, socket failure, or a
    drained/overrun simulation."""


@dataclass
class RoundOutcome:
    best: Optional[ScoredCombination]
    metrics: list[RunMetrics]
    stats: SearchStats


def _build_nodes(
    matrix: MutationMatrix,
    hits: int,
    alpha: float,
    topology: tuple[int, int],
    chunk_size: int,
    seed: int,
    prune: bool,
    stealing: bool,
    leader_computes: bool,
    steal_retries: int,
):
    num_leaders, workers_per_leader = topology
    if num_leaders < 1 or workers_per_leader < 1:
        raise ValueError("topology counts must be >= 1")
    parts = plan_partition(lambda_total(matrix.num_genes, hits), num_leaders)
    nodes: dict[int, object] = {}
    initial = []
    for lid in range(num_leaders):
        worker_ids = [num_leaders + lid * workers_per_leader + w for w in range(workers_per_leader)]
        nodes[lid] = NodeGroup(
            leader_id=lid,
            num_leaders=num_leaders,
            worker_ids=worker_ids,
            chunk_size=chunk_size,
            rng=random.Random(f"{seed}:leader:{lid}"),
            stealing=stealing,
            steal_retries=steal_retries,
            leader_computes=leader_computes,
            expected_summaries=num_leaders if lid == 0 else 0,
            expected_metrics=num_leaders * (workers_per_leader + 1) if lid == 0 else 0,
        )
        for w, gid in enumerate(worker_ids):
            nodes[gid] = WorkerNode(gid, lid, w)
        initial.append((COORDINATOR_ID, lid, MatrixBlock(matrix, hits, alpha, prune, parts[lid])))
    return nodes, initial


def _run_sim(nodes, initial, interleave_seed: int, max_steps: int) -> RoundResult:
    rng = random.Random(f"{interleave_seed}:interleave")
    channels: dict[tuple[int, int], deque] = {}
    links: list[tuple[int, int]] = []

    def post(src: int, dst: int, msg) -> None:
        key = (src, dst)
        chan = channels.get(key)
        if chan is None:
            chan = channels[key] = deque()
            links.append(key)
        chan.append(msg)

    for src, dst, msg in initial:
        post(src, dst, msg)
    result: RoundResult | None = None
    steps = 0
    while True:
        live = [key for key in links if channels[key]]
        if not live:
            break
        src, dst = rng.choice(live)
        msg = channels[(src, dst)].popleft()
        steps += 1
        if steps > max_steps:
            raise TransportError(f"simulation exceeded {max_steps} deliveries without finishing")
        if dst == COORDINATOR_ID:
            if isinstance(msg, RoundResult):
                result = msg
            continue
        for out_dst, out_msg in nodes[dst].handle(src, msg):
            post(dst, out_dst, out_msg)
    if result is None:
        raise TransportError("simulation drained without producing a round result")
    return result


def _run_channel(nodes, initial, timeout: float) -> RoundResult:
    inboxes: dict[int, queue.Queue] = {nid: queue.Queue() for nid in nodes}
    coordinator: queue.Queue = queue.Queue()
    errors: list[BaseException] = []

    def route(src: int, dst: int, msg) -> None:
        if dst == COORDINATOR_ID:
            coordinator.put((src, msg))
        else:
            inboxes[dst].put((src, msg))

    def loop(nid: int, node) -> None:
        inbox = inboxes[nid]
        try:
            while not node.done:
                src, msg = inbox.get(timeout=timeout)
                for dst, out in node.handle(src, msg):
                    route(nid, dst, out)
        except BaseException as exc:  # surfaced to the caller as TransportError
            errors.append(exc)

    threads = [
        threading.Thread(target=loop, args=(nid, node), name=f"multihit-node-{nid}", daemon=True)
        for nid, node in nodes.items()
    ]
    for t in threads:
        t.start()
    for src, dst, msg in initial:
        route(src, dst, msg)
    deadline = timeout
    result: RoundResult | None = None
    waited = 0.0
    while result is None:
        try:
            _, msg = coordinator.get(timeout=0.1)
            if isinstance(msg, RoundResult):
                result = msg
        except queue.Empty:
            waited += 0.1
            if errors:
                raise TransportError("node thread failed") from errors[0]
            if waited > deadline:
                raise TransportError(f"round did not complete within {timeout}s")
    for t in threads:
        t.join(timeout=10)
    if errors:
        raise TransportError("node thread failed") from errors[0]
    return result


_LEN = struct.Struct("<I")


def _recv_exact(conn: socket.socket, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        data = conn.recv(remaining)
        if not data:
            return None
        chunks.append(data)
        remaining -= len(data)
    return b"".join(chunks)


def _recv_frame(conn: socket.socket) -> bytes | None:
    head = _recv_exact(conn, _LEN.size)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    return _recv_exact(conn, length)


def _run_socket(nodes, initial, timeout: float) -> RoundResult:
    listener = socket.create_server(("127.0.0.1", 0), backlog=256)
    listener.settimeout(timeout)
    port = listener.getsockname()[1]
    errors: list[BaseException] = []
    ids = list(nodes) + [COORDINATOR_ID]

    conns: dict[int, socket.socket] = {}
    send_locks: dict[int, threading.Lock] = {}

    def connect(node_id: int) -> socket.socket:
        conn = socket.create_connection(("127.0.0.1", port), timeout=timeout)
        conn.sendall(_LEN.pack(node_id))
        return conn

    def node_loop(nid: int, node, conn: socket.socket) -> None:
        try:
            while not node.done:
                payload = _recv_frame(conn)
                if payload is None:
                    return
                src, _dst, msg = decode_payload(payload)
                for dst, out in node.handle(src, msg):
                    conn.sendall(encode_frame(nid, dst, out))
        except BaseException as exc:
            errors.append(exc)
        finally:
            try:
                conn.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            conn.close()

    def router_loop(conn: socket.socket) -> None:
        try:
            while True:
                payload = _recv_frame(conn)
                if payload is None:
                    return
                (dst,) = _LEN.unpack_from(payload, 4)
                target = conns.get(dst)
                if target is None:
                    log.warning("router dropping frame for unknown node %d", dst)
                    continue
                try:
                    with send_locks[dst]:
                        target.sendall(_LEN.pack(len(payload)) + payload)
                except OSError:
                    # destination already hung up; late frames are droppable
                    log.debug("router dropping frame for closed node %d", dst)
        except OSError:
            return
        except BaseException as exc:
            errors.append(exc)

    node_threads = []
    router_threads = []
    coord_conn: socket.socket | None = None
    try:
        # Every node dials in and identifies itself; the router then just
        # forwards frames by their destination id.
        entity_conns = {nid: connect(nid) for nid in nodes}
        coord_conn = connect(COORDINATOR_ID)
        for _ in ids:
            server_side, _addr = listener.accept()
            hello = _recv_exact(server_side, _LEN.size)
            if hello is None:
                raise TransportError("connection closed during handshake")
            (nid,) = _LEN.unpack(hello)
            conns[nid] = server_side
            send_locks[nid] = threading.Lock()
        for nid, node in nodes.items():
            t = threading.Thread(
                target=node_loop,
                args=(nid, node, entity_conns[nid]),
                name=f"multihit-sock-{nid}",
                daemon=True,
            )
            node_threads.append(t)
            t.start()
        for nid, server_side in conns.items():
            t = threading.Thread(
                target=router_loop, args=(server_side,), name=f"multihit-route-{nid}", daemon=True
            )
            router_threads.append(t)
            t.start()
        coord_conn.settimeout(timeout)
        for src, dst, msg in initial:
            coord_conn.sendall(encode_frame(src, dst, msg))
        result: RoundResult | None = None
        while result is None:
            if errors:
                raise TransportError("socket node failed") from errors[0]
            payload = _recv_frame(coord_conn)
            if payload is None:
                raise TransportError("socket transport closed before the round finished")
            _src, _dst, msg = decode_payload(payload)
            if isinstance(msg, RoundResult):
                result = msg
        for t in node_threads:
            t.join(timeout=10)
        if errors:
            raise TransportError("socket node failed") from errors[0]
        return result
    except socket.timeout as exc:
        raise TransportError(f"socket round did not complete within {timeout}s") from exc
    finally:
        if coord_conn is not None:
            coord_conn.close()
        for conn in conns.values():
            conn.close()
        listener.close()


def run_round(
    matrix: MutationMatrix,
    hits: int,
    alpha: float = DEFAULT_ALPHA,
    topology: tuple[int, int] = (1, 1),
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    seed: int = 0,
    prune: bool = True,
    stealing: bool = True,
    leader_computes: bool = False,
    steal_retries: int = DEFAULT_STEAL_RETRIES,
    transport: str = "channel",
    max_steps: int = 1_000_000,
    timeout: float = 300.0,
) -> RoundOutcome:
    """Execute one argmax round over the full lambda range.

    The result is independent of topology, chunk size, seed, and message
    interleaving, and equals the sequential search over the same matrix.
    """
    nodes, initial = _build_nodes(
        matrix, hits, alpha, (topology[0], topology[1]), chunk_size, seed, prune, stealing,
        leader_computes, steal_retries,
    )
    if transport == "sim":
        raw = _run_sim(nodes, initial, seed, max_steps)
    elif transport == "channel":
        raw = _run_channel(nodes, initial, timeout)
    elif transport == "socket":
        raw = _run_socket(nodes, initial, timeout)
    else:
        raise ValueError(f"unknown transport {transport!r} (expected sim, channel, or socket)")
    best = score(raw.best.genes, matrix, alpha) if raw.best is not None else None
    return RoundOutcome(best, list(raw.metrics), raw.stats)


def run_simulated_round(
    matrix: MutationMatrix,
    hits: int,
    alpha: float = DEFAULT_ALPHA,
    topology: tuple[int, int] = (1, 1),
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    seed: int = 0,
    interleave_seed: int | None = None,
    prune: bool = True,
    stealing: bool = True,
    leader_computes: bool = False,
    steal_retries: int = DEFAULT_STEAL_RETRIES,
    max_steps: int = 1_000_000,
) -> tuple[RoundOutcome, dict[int, object]]:
    """Deterministic simulated round; also returns the node objects so
    callers can audit grant logs, processed intervals, and fault counts."""
    nodes, initial = _build_nodes(
        matrix, hits, alpha, topology, chunk_size, seed, prune, stealing,
        leader_computes, steal_retries,
    )
    raw = _run_sim(nodes, initial, interleave_seed if interleave_seed is not None else seed, max_steps)
    best = score(raw.best.genes, matrix, alpha) if raw.best is not None else None
    return RoundOutcome(best, list(raw.metrics), raw.stats), nodes


def round_executor(
    topology: tuple[int, int],
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    seed: int = 0,
    prune: bool = True,
    stealing: bool = True,
    leader_computes: bool = False,
    transport: str = "channel",
    metrics_sink: list[tuple[int, RunMetrics]] | None = None,
) -> ArgmaxExecutor:
    """Adapt run_round into a greedy-cover executor; per-round metrics rows
    are appended to metrics_sink tagged with the round index."""
    round_counter = [0]

    def execute(m: MutationMatrix, hits: int, alpha: float):
        outcome = run_round(
            m,
            hits,
            alpha,
            topology,
            chunk_size=chunk_size,
            seed=seed,
            prune=prune,
            stealing=stealing,
            leader_computes=leader_computes,
            transport=transport,
        )
        if metrics_sink is not None:
            metrics_sink.extend((round_counter[0], row) for row in outcome.metrics)
        round_counter[0] += 1
        return outcome.best

    return execute
