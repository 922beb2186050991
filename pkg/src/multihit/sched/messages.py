"""Scheduler protocol messages and their binary frame encoding.

Frames are what the socket transport ships: a 1-byte variant tag followed
by fixed-width little-endian fields. Intervals travel as two u64 values and
a best combination as a u32 gene count, that many u32 indices, and one f64
score. The in-process transports pass the same dataclasses by reference.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Optional

from multihit.bitmat import BitRow, MutationMatrix, read_packed, write_packed
from multihit.metrics import RunMetrics
from multihit.search import LambdaInterval, SearchStats

WHITE = "white"
BLACK = "black"


@dataclass(frozen=True)
class Candidate:
    """Wire-sized view of a scored combination: indices plus score."""

    genes: tuple[int, ...]
    score: float


@dataclass(frozen=True)
class WorkRequest:
    pass


@dataclass(frozen=True)
class WorkGrant:
    interval: LambdaInterval


@dataclass(frozen=True)
class NoWork:
    pass


@dataclass(frozen=True)
class StealRequest:
    pass


@dataclass(frozen=True)
class StealReply:
    interval: Optional[LambdaInterval]


@dataclass(frozen=True)
class Token:
    color: str  # WHITE or BLACK


@dataclass(frozen=True)
class Terminate:
    pass


@dataclass(frozen=True)
class Report:
    best: Optional[Candidate]
    stats: SearchStats


@dataclass(frozen=True)
class MetricsReport:
    metrics: RunMetrics


@dataclass(frozen=True)
class MatrixBlock:
    """Round broadcast: the matrix snapshot (with its current active mask)
    plus the round parameters; leaders additionally receive their assigned
    lambda interval."""

    matrix: MutationMatrix
    hits: int
    alpha: float
    prune: bool
    interval: Optional[LambdaInterval] = None


@dataclass(frozen=True)
class RoundResult:
    """Root-to-coordinator summary closing a round."""

    best: Optional[Candidate]
    stats: SearchStats
    metrics: tuple[RunMetrics, ...]


_TAGS = {
    WorkRequest: 1,
    WorkGrant: 2,
    NoWork: 3,
    StealRequest: 4,
    StealReply: 5,
    Token: 6,
    Terminate: 7,
    Report: 8,
    MetricsReport: 9,
    MatrixBlock: 10,
    RoundResult: 11,
}

_U32 = struct.Struct("<I")
_INTERVAL = struct.Struct("<QQ")
_STATS = struct.Struct("<QQQ")
_SCORE = struct.Struct("<d")
_METRICS = struct.Struct("<IiddQQQQQ")
_BLOCK_HEAD = struct.Struct("<IdB")


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, fmt: struct.Struct):
        values = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return values

    def take_bytes(self, n: int) -> bytes:
        chunk = self.data[self.pos : self.pos + n]
        if len(chunk) < n:
            raise ValueError("truncated frame body")
        self.pos += n
        return chunk

    def rest(self) -> bytes:
        chunk = self.data[self.pos :]
        self.pos = len(self.data)
        return chunk


def _put_candidate(out: bytearray, best: Optional[Candidate]) -> None:
    if best is None:
        out.append(0)
        return
    out.append(1)
    out += _U32.pack(len(best.genes))
    for g in best.genes:
        out += _U32.pack(g)
    out += _SCORE.pack(best.score)


def _take_candidate(reader: _Reader) -> Optional[Candidate]:
    (present,) = reader.take(struct.Struct("<B"))
    if not present:
        return None
    (count,) = reader.take(_U32)
    genes = tuple(reader.take(_U32)[0] for _ in range(count))
    (score,) = reader.take(_SCORE)
    return Candidate(genes, score)


def _put_stats(out: bytearray, stats: SearchStats) -> None:
    out += _STATS.pack(stats.visited, stats.pruned_subtrees, stats.pruned_combinations)


def _take_stats(reader: _Reader) -> SearchStats:
    visited, subtrees, combos = reader.take(_STATS)
    return SearchStats(visited, subtrees, combos)


def _put_metrics(out: bytearray, m: RunMetrics) -> None:
    out += _METRICS.pack(
        m.leader,
        m.worker,
        m.busy_seconds,
        m.idle_seconds,
        m.chunks_processed,
        m.visited,
        m.pruned_combinations,
        m.steals_initiated,
        m.steals_served,
    )


def _take_metrics(reader: _Reader) -> RunMetrics:
    leader, worker, busy, idle, chunks, visited, pruned, initiated, served = reader.take(_METRICS)
    return RunMetrics(leader, worker, busy, idle, chunks, visited, pruned, initiated, served)


def encode_message(msg) -> bytes:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise ValueError(f"cannot encode message type {type(msg).__name__}")
    out = bytearray([tag])
    if isinstance(msg, WorkGrant):
        out += _INTERVAL.pack(msg.interval.start, msg.interval.end)
    elif isinstance(msg, StealReply):
        if msg.interval is None:
            out.append(0)
            out += _INTERVAL.pack(0, 0)
        else:
            out.append(1)
            out += _INTERVAL.pack(msg.interval.start, msg.interval.end)
    elif isinstance(msg, Token):
        out.append(1 if msg.color == BLACK else 0)
    elif isinstance(msg, Report):
        _put_candidate(out, msg.best)
        _put_stats(out, msg.stats)
    elif isinstance(msg, MetricsReport):
        _put_metrics(out, msg.metrics)
    elif isinstance(msg, MatrixBlock):
        out += _BLOCK_HEAD.pack(msg.hits, msg.alpha, 1 if msg.prune else 0)
        if msg.interval is None:
            out.append(0)
            out += _INTERVAL.pack(0, 0)
        else:
            out.append(1)
            out += _INTERVAL.pack(msg.interval.start, msg.interval.end)
        mask = msg.matrix.active_tumor_mask.to_words_bytes()
        out += _U32.pack(len(mask))
        out += mask
        packed = io.BytesIO()
        write_packed(msg.matrix, packed)
        out += packed.getvalue()
    elif isinstance(msg, RoundResult):
        _put_candidate(out, msg.best)
        _put_stats(out, msg.stats)
        out += _U32.pack(len(msg.metrics))
        for m in msg.metrics:
            _put_metrics(out, m)
    return bytes(out)


def decode_message(data: bytes):
    if not data:
        raise ValueError("empty frame body")
    tag = data[0]
    reader = _Reader(data, 1)
    if tag == _TAGS[WorkRequest]:
        return WorkRequest()
    if tag == _TAGS[WorkGrant]:
        start, end = reader.take(_INTERVAL)
        return WorkGrant(LambdaInterval(start, end))
    if tag == _TAGS[NoWork]:
        return NoWork()
    if tag == _TAGS[StealRequest]:
        return StealRequest()
    if tag == _TAGS[StealReply]:
        (present,) = reader.take(struct.Struct("<B"))
        start, end = reader.take(_INTERVAL)
        return StealReply(LambdaInterval(start, end) if present else None)
    if tag == _TAGS[Token]:
        (black,) = reader.take(struct.Struct("<B"))
        return Token(BLACK if black else WHITE)
    if tag == _TAGS[Terminate]:
        return Terminate()
    if tag == _TAGS[Report]:
        best = _take_candidate(reader)
        stats = _take_stats(reader)
        return Report(best, stats)
    if tag == _TAGS[MetricsReport]:
        return MetricsReport(_take_metrics(reader))
    if tag == _TAGS[MatrixBlock]:
        hits, alpha, prune = reader.take(_BLOCK_HEAD)
        (present,) = reader.take(struct.Struct("<B"))
        start, end = reader.take(_INTERVAL)
        interval = LambdaInterval(start, end) if present else None
        (mask_len,) = reader.take(_U32)
        mask_bytes = reader.take_bytes(mask_len)
        matrix = read_packed(io.BytesIO(reader.rest()))
        matrix.active_tumor_mask = BitRow.from_words_bytes(matrix.num_tumor, mask_bytes)
        return MatrixBlock(matrix, hits, alpha, bool(prune), interval)
    if tag == _TAGS[RoundResult]:
        best = _take_candidate(reader)
        stats = _take_stats(reader)
        (count,) = reader.take(_U32)
        metrics = tuple(_take_metrics(reader) for _ in range(count))
        return RoundResult(best, stats, metrics)
    raise ValueError(f"unknown frame tag {tag}")


def encode_frame(src: int, dst: int, msg) -> bytes:
    """Length-prefixed frame: u32 payload length, u32 src, u32 dst, body."""
    body = encode_message(msg)
    payload = _U32.pack(src) + _U32.pack(dst) + body
    return _U32.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> tuple[int, int, object]:
    (src,) = _U32.unpack_from(payload, 0)
    (dst,) = _U32.unpack_from(payload, 4)
    return src, dst, decode_message(payload[8:])
