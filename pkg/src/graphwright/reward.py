"""Hierarchical terminal reward and group-relative objective math.

Two veto gates (format, trace/workflow consistency) guard a graded
node-type recall score; any failed gate forces the reward to -1,
otherwise the score lands in [2/3, 1]. The group math computes
mean-centered advantages and the regularized objective value from
recorded log-probabilities; it is a value oracle, not a trainer.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .actions import TraceDocument, parse_trace, _split_assignment, _IDENT
from .episode import replay
from .errors import (
    EmptyTarget,
    GroupTooSmall,
    InvalidDistribution,
    MalformedTrace,
    MismatchedLengths,
)
from .graph import WorkflowGraph, final_check
from .registry import SchemaRegistry

FORMAT_FAIL = -1
CONSISTENCY_FAIL = -1
OK = 0

_CALL_RE = re.compile(rf"\s*({_IDENT})\s*\(")
_KEYWORDS = {"connect", "disconnect", "set", "STOP"}


@dataclass(frozen=True)
class RewardBreakdown:
    """Gate outcomes and the graded score.

    When a gate fails, later components are not evaluated and are
    reported at their floor (-1); ``final`` is -1 exactly when any gate
    failed, else (3 + recall_term) / 3.
    """

    r_f: int
    r_c: int
    recall_term: float
    final: float

    def to_dict(self) -> dict:
        return {
            "r_f": self.r_f,
            "r_c": self.r_c,
            "recall_term": self.recall_term,
            "final": self.final,
        }


def graph_types(graph: WorkflowGraph) -> set[str]:
    return {inst.type_name for inst in graph.nodes.values()}


def _workflow_graph(trace: TraceDocument, registry: SchemaRegistry) -> Optional[WorkflowGraph]:
    """Graph built by the workflow block, or None if any line fails."""
    episode, outcomes = replay(list(trace.workflow_lines), registry)
    if any(not o.accepted for o in outcomes):
        return None
    return episode.graph


def _parse_scored(doc: bytes | str, registry: SchemaRegistry
                  ) -> Optional[tuple[TraceDocument, WorkflowGraph]]:
    try:
        trace = parse_trace(doc)
    except MalformedTrace:
        return None
    if not trace.steps or not trace.workflow_lines:
        return None
    graph = _workflow_graph(trace, registry)
    if graph is None or not final_check(graph, registry).accepted:
        return None
    return trace, graph


def score_format(doc: bytes | str, registry: SchemaRegistry) -> int:
    """-1 unless the document parses and its workflow block rebuilds an
    executable graph line by line."""
    return OK if _parse_scored(doc, registry) is not None else FORMAT_FAIL


def mentioned_type(line: str) -> Optional[str]:
    """Node type name at the call position of an action line, if any."""
    split = _split_assignment(line)
    call = split[1] if split else line
    m = _CALL_RE.match(call)
    if m is None or m.group(1) in _KEYWORDS:
        return None
    return m.group(1)


def score_consistency(trace: TraceDocument, registry: SchemaRegistry) -> int:
    """-1 unless every node type instantiated by the workflow block is
    the call token of at least one node line in the reasoning."""
    graph = _workflow_graph(trace, registry)
    if graph is None:
        return CONSISTENCY_FAIL
    used = graph_types(graph)
    mentioned = {mentioned_type(s.node_line) for s in trace.steps}
    return OK if used <= mentioned else CONSISTENCY_FAIL


def recall_term(g_t: WorkflowGraph, g_star: WorkflowGraph) -> float:
    """Node-type recall minus one: 0 when every target type is present."""
    target = graph_types(g_star)
    if not target:
        raise EmptyTarget("target graph has no nodes")
    hit = graph_types(g_t) & target
    return len(hit) / len(target) - 1.0


def final_reward(doc: bytes | str, g_star: WorkflowGraph,
                 registry: SchemaRegistry) -> RewardBreakdown:
    """Gates then graded score; the scored graph is the workflow block's."""
    parsed = _parse_scored(doc, registry)
    if parsed is None:
        return RewardBreakdown(r_f=FORMAT_FAIL, r_c=CONSISTENCY_FAIL,
                               recall_term=-1.0, final=-1.0)
    trace, graph = parsed
    if score_consistency(trace, registry) == CONSISTENCY_FAIL:
        return RewardBreakdown(r_f=OK, r_c=CONSISTENCY_FAIL,
                               recall_term=-1.0, final=-1.0)
    recall = recall_term(graph, g_star)
    return RewardBreakdown(r_f=OK, r_c=OK, recall_term=recall,
                           final=(3.0 + recall) / 3.0)


# --- group-relative math ---------------------------------------------------------


@dataclass(frozen=True)
class StepLogProb:
    logprob_current: float
    logprob_reference: float
    dist_current: tuple[float, ...]
    dist_reference: tuple[float, ...]


@dataclass(frozen=True)
class Trajectory:
    reward: float
    steps: tuple[StepLogProb, ...] = ()


@dataclass(frozen=True)
class GroupRollout:
    trajectories: tuple[Trajectory, ...]


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Mean-centered rewards; zero-sum and shift-invariant by construction."""
    if len(rewards) < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {len(rewards)}")
    mean = math.fsum(rewards) / len(rewards)
    return [r - mean for r in rewards]


def _check_dist(probs: Sequence[float]) -> None:
    if any(p < 0 for p in probs):
        raise InvalidDistribution("negative probability")
    if abs(math.fsum(probs) - 1.0) > 1e-9:
        raise InvalidDistribution(f"probabilities sum to {math.fsum(probs)}")


def step_kl(step: StepLogProb) -> float:
    """Exact KL(current || reference) over the recorded candidate set."""
    p, q = step.dist_current, step.dist_reference
    if len(p) != len(q):
        raise MismatchedLengths(
            f"distributions of length {len(p)} vs {len(q)}")
    _check_dist(p)
    _check_dist(q)
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise InvalidDistribution(
                "reference assigns zero mass to a supported candidate")
        total += pi * math.log(pi / qi)
    return max(total, 0.0)


def grpo_objective_value(group: GroupRollout, lambda_kl: float = 0.01) -> float:
    """Scalar objective: mean advantage-weighted log-prob minus the
    KL penalty, both averaged over every (trajectory, step) pair."""
    advantages = group_advantages([t.reward for t in group.trajectories])
    weighted: list[float] = []
    kls: list[float] = []
    for adv, traj in zip(advantages, group.trajectories):
        for step in traj.steps:
            weighted.append(adv * step.logprob_current)
            kls.append(step_kl(step))
    if not weighted:
        return 0.0
    term = math.fsum(weighted) / len(weighted)
    kl = math.fsum(kls) / len(kls)
    return term - lambda_kl * kl


def _as_logprob(value) -> float:
    # per-token lists are aggregated to one action-level log-prob
    if isinstance(value, (list, tuple)):
        return math.fsum(float(v) for v in value)
    return float(value)


def load_group_jsonl(data: bytes | str) -> GroupRollout:
    """One trajectory record per line: reward plus per-step log-probs."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    trajectories = []
    for line in data.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        steps = tuple(
            StepLogProb(
                logprob_current=_as_logprob(s["logprob_current"]),
                logprob_reference=_as_logprob(s["logprob_reference"]),
                dist_current=tuple(s["dist_current"]),
                dist_reference=tuple(s["dist_reference"]),
            )
            for s in doc.get("steps", ())
        )
        trajectories.append(Trajectory(reward=float(doc["reward"]), steps=steps))
    return GroupRollout(trajectories=tuple(trajectories))
