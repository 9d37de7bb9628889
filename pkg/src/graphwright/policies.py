"""Policy interface and the mock policies shipped with the engine.

A policy maps the episode state to a distribution over candidate action
lines. The engine samples from that distribution; policies never mutate
state. Three in-process policies cover scripted replay, uniform choice
over admissible edits, and softmax scoring toward a target graph; a
subprocess policy speaks line-delimited JSON over stdio.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from typing import Protocol

from .actions import ActionEnv, parse_action
from .errors import ActionParseError, PolicyProtocolError
from .graph import WorkflowGraph, final_check, graph_to_dict, digest
from .registry import SchemaRegistry, lookup
from .validator import History, transition

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PolicyDistribution:
    candidates: tuple[str, ...]
    probs: tuple[float, ...]


def validate_distribution(dist: PolicyDistribution) -> PolicyDistribution:
    if len(dist.candidates) != len(dist.probs) or not dist.candidates:
        raise PolicyProtocolError("candidates and probs must align and be non-empty")
    if len(set(dist.candidates)) != len(dist.candidates):
        raise PolicyProtocolError("candidates must be unique")
    if any(p < 0 for p in dist.probs):
        raise PolicyProtocolError("probabilities must be non-negative")
    if abs(math.fsum(dist.probs) - 1.0) > PROB_SUM_TOL:
        raise PolicyProtocolError(f"probabilities sum to {math.fsum(dist.probs)}, not 1")
    return dist


def uniform_distribution(candidates: list[str]) -> PolicyDistribution:
    n = len(candidates)
    return PolicyDistribution(tuple(candidates), tuple([1.0 / n] * n))


@dataclass(frozen=True)
class PolicyState:
    """What a policy sees: the MDP state plus episode bookkeeping."""

    query: str
    graph: WorkflowGraph
    graph_digest: str
    history: History
    env: ActionEnv
    step_index: int

    def to_wire(self) -> dict:
        return {
            "query": self.query,
            "step": self.step_index,
            "digest": self.graph_digest,
            "graph": graph_to_dict(self.graph),
            "bindings": {k: f"{v[0]}.{v[1]}" for k, v in sorted(self.env.bindings.items())},
            "history": [
                {
                    "action": r.action_text,
                    "accepted": r.accepted,
                    "diagnostics": [d.to_dict() for d in r.diagnostics],
                }
                for r in self.history.records
            ],
        }


class Policy(Protocol):
    def propose(self, state: PolicyState) -> PolicyDistribution: ...


# --- candidate enumeration ------------------------------------------------------


def _admissible(state: PolicyState, registry: SchemaRegistry, line: str) -> bool:
    try:
        parsed = parse_action(line, state.graph, state.env, registry)
    except ActionParseError:
        return False
    _, outcome = transition(state.graph, parsed.edits, registry)
    return outcome.accepted


def enumerate_admissible(state: PolicyState, registry: SchemaRegistry,
                         top_k: int) -> list[str]:
    """Deterministic candidate lines that the validator would accept now.

    Kinds are interleaved (stop, node, wired node, connect, disconnect,
    set) so a small top_k still sees variety.
    """
    graph, env = state.graph, state.env
    stop: list[str] = []
    if final_check(graph, registry).accepted:
        stop.append("STOP")

    bare_nodes: list[str] = []
    wired_nodes: list[str] = []
    # newest binding of each port type wins for auto-wiring
    by_type: dict[str, str] = {}
    for var, (nid, port) in env.bindings.items():
        inst = graph.nodes.get(nid)
        if inst is None:
            continue
        out = lookup(registry, inst.type_name).output(port)
        if out is not None:
            by_type[out.port_type] = var
    present = {inst.type_name for inst in graph.nodes.values()}
    for type_name in sorted(registry.node_types):
        if type_name in present:
            continue  # one instance per type keeps the walk from drowning in junk
        type_def = registry.node_types[type_name]
        node_id = graph.next_id(type_name)
        lhs = ", ".join(f"{node_id}_{o.name}" for o in type_def.outputs)
        prefix = f"{lhs} = " if lhs else ""
        bare = f"{prefix}{type_name}()"
        if _admissible(state, registry, bare):
            bare_nodes.append(bare)
        args = [
            f"{p.name}={by_type[p.port_type]}"
            for p in type_def.inputs
            if p.port_type in by_type
        ]
        if args:
            wired = f"{prefix}{type_name}({', '.join(args)})"
            if wired != bare and _admissible(state, registry, wired):
                wired_nodes.append(wired)

    connects: list[str] = []
    for nid in sorted(graph.nodes):
        type_def = lookup(registry, graph.nodes[nid].type_name)
        if type_def is None:
            continue
        for port in type_def.inputs:
            if graph.edge_into(nid, port.name) is not None:
                continue
            for var in sorted(env.bindings):
                line = f"connect({var}, {nid}.{port.name})"
                if _admissible(state, registry, line):
                    connects.append(line)
                    break  # one producer offer per free port keeps the set small

    pools = [stop, wired_nodes, connects, bare_nodes]
    out: list[str] = []
    i = 0
    while len(out) < top_k and any(pools):
        pool = pools[i % len(pools)]
        if pool:
            out.append(pool.pop(0))
        i += 1
        if i > 10 * top_k:
            break
    return out


# --- shipped policies --------------------------------------------------------------


class ScriptedPolicy:
    """Replays a fixed line sequence; emits STOP once the script ends."""

    def __init__(self, lines: list[str]):
        self.lines = list(lines)

    def propose(self, state: PolicyState) -> PolicyDistribution:
        if state.step_index < len(self.lines):
            line = self.lines[state.step_index]
        else:
            line = "STOP"
        return PolicyDistribution((line,), (1.0,))


class UniformAdmissiblePolicy:
    """Uniform over validator-admissible single edits, up to top_k."""

    def __init__(self, registry: SchemaRegistry, top_k: int = 8):
        self.registry = registry
        self.top_k = top_k

    def propose(self, state: PolicyState) -> PolicyDistribution:
        cands = enumerate_admissible(state, self.registry, self.top_k)
        if not cands:
            cands = ["STOP"]  # nothing admissible: ask to stop, engine records the rejection
        return uniform_distribution(cands)


class SoftmaxScoredPolicy:
    """Scores admissible edits by node-type recall gain toward a target."""

    def __init__(self, registry: SchemaRegistry, target: WorkflowGraph,
                 temperature: float = 0.3, top_k: int = 8):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.registry = registry
        self.target_types = {n.type_name for n in target.nodes.values()}
        self.temperature = temperature
        self.top_k = top_k

    def _gain(self, state: PolicyState, line: str) -> float:
        try:
            parsed = parse_action(line, state.graph, state.env, self.registry)
        except ActionParseError:
            return -1.0
        after, outcome = transition(state.graph, parsed.edits, self.registry)
        if not outcome.accepted:
            return -1.0
        have = {n.type_name for n in state.graph.nodes.values()} & self.target_types
        got = {n.type_name for n in after.nodes.values()} & self.target_types
        if not self.target_types:
            return 0.0
        return (len(got) - len(have)) / len(self.target_types)

    def propose(self, state: PolicyState) -> PolicyDistribution:
        cands = enumerate_admissible(state, self.registry, self.top_k)
        if not cands:
            cands = ["STOP"]
        scores = [self._gain(state, c) / self.temperature for c in cands]
        peak = max(scores)
        weights = [math.exp(s - peak) for s in scores]
        total = math.fsum(weights)
        return PolicyDistribution(tuple(cands), tuple(w / total for w in weights))


class StdioProcessPolicy:
    """Drives an external process over a line-delimited JSON protocol.

    Request: one JSON object per line with the wire form of the state.
    Response: one JSON object per line: {"candidates": [...], "probs": [...]}.
    """

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)

    def propose(self, state: PolicyState) -> PolicyDistribution:
        if self.proc.stdin is None or self.proc.stdout is None:
            raise PolicyProtocolError("policy process has no stdio pipes")
        self.proc.stdin.write(json.dumps(state.to_wire(), sort_keys=True) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise PolicyProtocolError("policy process closed its stdout")
        try:
            doc = json.loads(line)
            return PolicyDistribution(tuple(doc["candidates"]), tuple(doc["probs"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise PolicyProtocolError(f"bad policy response: {exc}") from exc

    def close(self):
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.terminate()
        self.proc.wait(timeout=5)


def state_for(query: str, graph: WorkflowGraph, history: History,
              env: ActionEnv, step_index: int) -> PolicyState:
    return PolicyState(
        query=query,
        graph=graph,
        graph_digest=digest(graph),
        history=history,
        env=env,
        step_index=step_index,
    )
