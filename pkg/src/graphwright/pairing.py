"""Consistency-filtered pairing of queries to workflows and SFT emission.

Groups of queries arrive as explicit files; each group is paired with the
workflow that succeeds most often across the group (ties to the smallest
workflow id). Records are emitted only when the trace, its workflow
block, and the paired target agree with each other.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import NoEligibleWorkflow
from .graph import WorkflowGraph, final_check
from .registry import SchemaRegistry
from .reward import _parse_scored, score_consistency

DEFAULT_INSTRUCTION = (
    "You are a workflow-construction assistant. Reason step by step about "
    "which nodes are required and how they connect, proposing one node line "
    "at a time inside <node> tags; validator feedback appears in <result> "
    "tags. Finish with a <workflow> block holding only the validated lines "
    "in order, one per node."
)

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class QueryGroup:
    group_id: str
    query_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.query_ids:
            raise ValueError(f"group {self.group_id!r} has no queries")


@dataclass(frozen=True)
class CorrectnessMatrix:
    """Binary judge scores s(workflow, query)."""

    entries: dict[tuple[str, str], int] = field(default_factory=dict)
    provenance: str = ""

    def score(self, workflow_id: str, query_id: str) -> int:
        return self.entries.get((workflow_id, query_id), 0)

    def workflow_ids(self) -> set[str]:
        return {w for w, _ in self.entries}


def load_matrix_csv(text: str, provenance: str = "csv") -> CorrectnessMatrix:
    entries: dict[tuple[str, str], int] = {}
    reader = csv.DictReader(io.StringIO(text))
    required = {"workflow_id", "query_id", "score"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise ValueError("matrix CSV needs workflow_id,query_id,score columns")
    for row in reader:
        score = int(row["score"])
        if score not in (0, 1):
            raise ValueError(f"score must be binary, got {row['score']!r}")
        entries[(row["workflow_id"], row["query_id"])] = score
    return CorrectnessMatrix(entries=entries, provenance=provenance)


def load_groups(text: str) -> list[QueryGroup]:
    doc = json.loads(text)
    groups = [
        QueryGroup(g["group_id"], tuple(g["query_ids"])) for g in doc["groups"]
    ]
    seen: set[str] = set()
    for g in groups:
        overlap = seen & set(g.query_ids)
        if overlap:
            raise ValueError(f"groups overlap on queries {sorted(overlap)}")
        seen.update(g.query_ids)
    return groups


def eligible_workflows(group: QueryGroup, matrix: CorrectnessMatrix) -> set[str]:
    """Workflows that succeed for at least one query in the group."""
    return {
        w
        for w in matrix.workflow_ids()
        if any(matrix.score(w, q) == 1 for q in group.query_ids)
    }


def canonical_workflow(group: QueryGroup, matrix: CorrectnessMatrix) -> str:
    """The workflow with the highest summed score over the group.

    Ties go to the lexicographically smallest workflow id.
    """
    eligible = eligible_workflows(group, matrix)
    if not eligible:
        raise NoEligibleWorkflow(f"group {group.group_id!r} has no successful workflow")
    return min(
        eligible,
        key=lambda w: (-sum(matrix.score(w, q) for q in group.query_ids), w),
    )


def pair_groups(groups: Iterable[QueryGroup], matrix: CorrectnessMatrix,
                emission: str = "all") -> list[dict]:
    """One pairing record per query (emission=all) or per group
    representative (emission=representative, smallest query id)."""
    if emission not in ("all", "representative"):
        raise ValueError("emission must be 'all' or 'representative'")
    out = []
    for group in groups:
        workflow_id = canonical_workflow(group, matrix)
        query_ids = sorted(group.query_ids) if emission == "all" else [min(group.query_ids)]
        for qid in query_ids:
            out.append({
                "group_id": group.group_id,
                "query_id": qid,
                "workflow_id": workflow_id,
            })
    return out


def normalize_query(text: str) -> str:
    return _WS_RE.sub(" ", text.strip().lower())


def group_by_normalization(queries: dict[str, str]) -> list[QueryGroup]:
    """Baseline grouper: exact duplicates after case/whitespace folding."""
    buckets: dict[str, list[str]] = {}
    for qid in sorted(queries):
        buckets.setdefault(normalize_query(queries[qid]), []).append(qid)
    return [
        QueryGroup(group_id=f"group_{i}", query_ids=tuple(qids))
        for i, (_, qids) in enumerate(sorted(buckets.items(), key=lambda kv: kv[1][0]))
    ]


def synthesize_matrix(
    workflows: dict[str, tuple[WorkflowGraph, str]],
    queries: dict[str, str],
    registry: SchemaRegistry,
) -> CorrectnessMatrix:
    """Structural stand-in for judge scores: a workflow succeeds on a
    query iff it is executable and their modality family tags match."""
    entries = {}
    for wid, (graph, family) in workflows.items():
        ok = final_check(graph, registry).accepted
        for qid, q_family in queries.items():
            entries[(wid, qid)] = 1 if ok and family == q_family else 0
    return CorrectnessMatrix(entries=entries, provenance="structural")


# --- SFT record emission -----------------------------------------------------------


@dataclass(frozen=True)
class EmissionReport:
    records: tuple[dict, ...]
    emitted: int
    rejected: tuple[tuple[int, str, str], ...]  # (pair index, reason code, detail)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def emit_sft_records(
    pairs: list[tuple[str, str, WorkflowGraph]],
    registry: SchemaRegistry,
    instruction: str = DEFAULT_INSTRUCTION,
) -> EmissionReport:
    """Build one training record per (query, trace, target workflow) pair.

    A pair is rejected when the trace fails the format or consistency
    gates (InvalidTrace) or when its workflow block does not rebuild the
    target graph exactly (TraceTargetMismatch).
    """
    records = []
    rejected = []
    for idx, (query, trace_text, target) in enumerate(pairs):
        parsed = _parse_scored(trace_text, registry)
        if parsed is None:
            rejected.append((idx, "InvalidTrace", "format gate failed"))
            continue
        trace, graph = parsed
        if score_consistency(trace, registry) != 0:
            rejected.append((idx, "InvalidTrace", "consistency gate failed"))
            continue
        if not final_check(target, registry).accepted:
            rejected.append((idx, "TraceTargetMismatch", "target graph is not executable"))
            continue
        if graph != target:
            rejected.append((idx, "TraceTargetMismatch",
                             "workflow block does not rebuild the target"))
            continue
        records.append({
            "instruction": instruction,
            "query": query,
            "Reasoning": trace_text,
            "workflow": list(trace.workflow_lines),
        })
    return EmissionReport(records=tuple(records), emitted=len(records),
                          rejected=tuple(rejected))
