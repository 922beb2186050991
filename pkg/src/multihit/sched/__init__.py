"""Distributed execution of one argmax round.

Leaders hand fixed-size lambda chunks to their workers, steal from random
peer leaders when their own queue drains, and detect global quiescence with
a white/black token ring. The protocol is plain message passing over an
abstract transport: a deterministic seeded simulator (for protocol
fuzzing), in-process channels between threads (the reference), and a
loopback socket transport carrying length-prefixed binary frames.
"""

from multihit.sched.messages import (
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
    decode_message,
    encode_message,
)
from multihit.sched.protocol import (
    NodeGroup,
    WorkerNode,
    leader_step,
    plan_partition,
    steal_victim_select,
    token_rules,
)
from multihit.sched.transport import (
    RoundOutcome,
    TransportError,
    round_executor,
    run_round,
    run_simulated_round,
)

__all__ = [
    "Candidate",
    "MatrixBlock",
    "MetricsReport",
    "NodeGroup",
    "NoWork",
    "Report",
    "RoundOutcome",
    "RoundResult",
    "StealReply",
    "StealRequest",
    "Terminate",
    "Token",
    "TransportError",
    "WorkGrant",
    "WorkRequest",
    "WorkerNode",
    "decode_message",
    "encode_message",
    "leader_step",
    "plan_partition",
    "round_executor",
    "run_round",
    "run_simulated_round",
    "steal_victim_select",
    "token_rules",
]
