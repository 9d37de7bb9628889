"""Typed workflow graph values, atomic edits, and the whole-graph check.

Graphs have value semantics: every edit returns a new graph and never
mutates the input, so branches can share validated prefixes safely.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .errors import (
    DuplicateNodeId,
    MalformedWorkflow,
    UnknownNodeId,
    UnknownOperator,
    UnknownPort,
)
from .registry import NodeTypeDef, SchemaRegistry, lookup
from .validation_types import Diagnostic, ValidationOutcome

_ID_RE = re.compile(r"^(?P<prefix>[a-z0-9_]+?)_(?P<index>\d+)$")


# --- atomic edits ----------------------------------------------------------


@dataclass(frozen=True)
class AddNode:
    type_name: str
    param_values: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AddEdge:
    src: tuple[str, str]  # (node_id, output_port)
    dst: tuple[str, str]  # (node_id, input_port)


@dataclass(frozen=True)
class RemoveEdge:
    dst: tuple[str, str]


@dataclass(frozen=True)
class SetParam:
    node_id: str
    param_name: str
    value: Any


@dataclass(frozen=True)
class Stop:
    pass


GraphEdit = Union[AddNode, AddEdge, RemoveEdge, SetParam, Stop]


# --- graph values ------------------------------------------------------------


@dataclass(frozen=True)
class NodeInstance:
    node_id: str
    type_name: str
    param_values: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Edge:
    src: tuple[str, str]
    dst: tuple[str, str]


@dataclass(frozen=True)
class WorkflowGraph:
    nodes: dict[str, NodeInstance] = field(default_factory=dict)
    edges: frozenset[Edge] = frozenset()
    # per-type counters backing the canonical `<type>_<k>` naming rule
    counters: dict[str, int] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorkflowGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self) -> int:  # identity by structure, counters excluded
        return hash(digest(self))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_into(self, node_id: str, port: str) -> Optional[Edge]:
        for e in self.edges:
            if e.dst == (node_id, port):
                return e
        return None

    def next_id(self, type_name: str) -> str:
        return f"{type_name.lower()}_{self.counters.get(type_name.lower(), 0)}"


def empty_graph() -> WorkflowGraph:
    return WorkflowGraph()


# --- structural application ---------------------------------------------------


def _would_cycle(graph: WorkflowGraph, src_node: str, dst_node: str) -> bool:
    """True if adding src_node -> dst_node closes a directed cycle."""
    if src_node == dst_node:
        return True
    # is src_node reachable from dst_node?
    seen = {dst_node}
    stack = [dst_node]
    succ: dict[str, list[str]] = {}
    for e in graph.edges:
        succ.setdefault(e.src[0], []).append(e.dst[0])
    while stack:
        n = stack.pop()
        for m in succ.get(n, ()):
            if m == src_node:
                return True
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def apply_edit(graph: WorkflowGraph, edit: GraphEdit, registry: SchemaRegistry) -> WorkflowGraph:
    """Apply one structurally applicable edit, returning a new graph.

    This is pure structural application: referenced ids and ports must
    exist, but type compatibility, domains, and acyclicity are the
    validator's concern.
    """
    if isinstance(edit, Stop):
        return graph
    if isinstance(edit, AddNode):
        type_def = lookup(registry, edit.type_name)
        if type_def is None:
            raise UnknownOperator(edit.type_name)
        node_id = graph.next_id(edit.type_name)
        if node_id in graph.nodes:
            raise DuplicateNodeId(node_id)
        params = {p.name: p.domain.default for p in type_def.params if p.domain.has_default}
        params.update(edit.param_values)
        nodes = dict(graph.nodes)
        nodes[node_id] = NodeInstance(node_id, edit.type_name, params)
        counters = dict(graph.counters)
        key = edit.type_name.lower()
        counters[key] = counters.get(key, 0) + 1
        return WorkflowGraph(nodes, graph.edges, counters)
    if isinstance(edit, AddEdge):
        for node_id, port, kind in (
            (*edit.src, "output"),
            (*edit.dst, "input"),
        ):
            inst = graph.nodes.get(node_id)
            if inst is None:
                raise UnknownNodeId(node_id)
            type_def = lookup(registry, inst.type_name)
            if type_def is None:
                raise UnknownOperator(inst.type_name)
            found = type_def.output(port) if kind == "output" else type_def.input(port)
            if found is None:
                raise UnknownPort(f"{node_id}.{port}")
        return WorkflowGraph(
            dict(graph.nodes),
            graph.edges | {Edge(edit.src, edit.dst)},
            dict(graph.counters),
        )
    if isinstance(edit, RemoveEdge):
        if edit.dst[0] not in graph.nodes:
            raise UnknownNodeId(edit.dst[0])
        edge = graph.edge_into(*edit.dst)
        if edge is None:
            raise UnknownPort(f"no edge into {edit.dst[0]}.{edit.dst[1]}")
        return WorkflowGraph(dict(graph.nodes), graph.edges - {edge}, dict(graph.counters))
    if isinstance(edit, SetParam):
        inst = graph.nodes.get(edit.node_id)
        if inst is None:
            raise UnknownNodeId(edit.node_id)
        params = dict(inst.param_values)
        params[edit.param_name] = edit.value
        nodes = dict(graph.nodes)
        nodes[edit.node_id] = NodeInstance(inst.node_id, inst.type_name, params)
        return WorkflowGraph(nodes, graph.edges, dict(graph.counters))
    raise TypeError(f"not a graph edit: {edit!r}")


# --- whole-graph executability check ------------------------------------------


def topological_order(graph: WorkflowGraph) -> Optional[list[str]]:
    """Kahn's algorithm; ties broken by node_id ascending. None on cycle."""
    indeg = {nid: 0 for nid in graph.nodes}
    succ: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    for e in graph.edges:
        succ[e.src[0]].append(e.dst[0])
        indeg[e.dst[0]] += 1
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        changed = False
        for m in succ[nid]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(graph.nodes):
        return None
    return order


def final_check(graph: WorkflowGraph, registry: SchemaRegistry) -> ValidationOutcome:
    """Non-incremental executability check over the whole graph.

    Accepts iff required inputs are connected, params are set and in
    domain, the graph is acyclic, edges are type-compatible, at least one
    output node exists with every output node reachable from sources, and
    all declared branch constraints hold. Diagnostics enumerate every
    violation in canonical (node_id, port) order.
    """
    diags: list[Diagnostic] = []
    defs: dict[str, NodeTypeDef] = {}
    for nid, inst in graph.nodes.items():
        type_def = lookup(registry, inst.type_name)
        if type_def is None:
            diags.append(Diagnostic("UnknownOperator", node_id=nid,
                                    message=f"unknown operator {inst.type_name!r}"))
        else:
            defs[nid] = type_def

    incoming = {}
    for e in sorted(graph.edges, key=lambda e: (e.dst, e.src)):
        if e.dst in incoming:
            # unreachable through validated edits, but deserialized
            # documents may carry two producers for one input
            diags.append(Diagnostic("PortOccupied", node_id=e.dst[0], port=e.dst[1],
                                    message=f"input {e.dst[0]}.{e.dst[1]} has multiple producers"))
        else:
            incoming[e.dst] = e

    for nid, type_def in defs.items():
        inst = graph.nodes[nid]
        for port in type_def.inputs:
            if port.required and (nid, port.name) not in incoming:
                diags.append(Diagnostic("MissingRequiredInput", node_id=nid, port=port.name,
                                        message=f"required input {nid}.{port.name} is not connected"))
        for spec in type_def.params:
            if spec.name in inst.param_values:
                if not spec.domain.contains(inst.param_values[spec.name]):
                    diags.append(Diagnostic("ParamOutOfDomain", node_id=nid, param=spec.name,
                                            message=f"{nid}.{spec.name}={inst.param_values[spec.name]!r} outside domain"))
            elif spec.required:
                diags.append(Diagnostic("MissingRequiredField", node_id=nid, param=spec.name,
                                        message=f"required param {nid}.{spec.name} is not set"))
        for name in inst.param_values:
            if type_def.param(name) is None:
                diags.append(Diagnostic("SchemaViolation", node_id=nid, param=name,
                                        message=f"{inst.type_name} declares no param {name!r}"))

    for e in sorted(graph.edges, key=lambda e: (e.dst, e.src)):
        sdef = defs.get(e.src[0])
        ddef = defs.get(e.dst[0])
        if sdef is None or ddef is None:
            continue
        out_port = sdef.output(e.src[1])
        in_port = ddef.input(e.dst[1])
        if out_port is None or in_port is None:
            diags.append(Diagnostic("UnknownPort", node_id=e.dst[0], port=e.dst[1],
                                    message=f"edge references undeclared port"))
        elif out_port.port_type != in_port.port_type:
            adapter = registry.adapter_for(out_port.port_type, in_port.port_type)
            diags.append(Diagnostic(
                "TypeMismatch", node_id=e.dst[0], port=e.dst[1],
                message=f"{out_port.port_type} output cannot feed {in_port.port_type} input",
                hint={"adapter_via": adapter.via} if adapter else None))

    if topological_order(graph) is None:
        diags.append(Diagnostic("AcyclicityViolation", message="graph contains a cycle"))

    output_nodes = sorted(nid for nid, d in defs.items() if d.category == "output")
    if not output_nodes and len(defs) == len(graph.nodes):
        diags.append(Diagnostic("NoOutputNode", message="no output node in graph"))
    else:
        sources = {nid for nid, d in defs.items() if d.category == "source"}
        reachable = set(sources)
        frontier = list(sources)
        succ: dict[str, list[str]] = {}
        for e in graph.edges:
            succ.setdefault(e.src[0], []).append(e.dst[0])
        while frontier:
            n = frontier.pop()
            for m in succ.get(n, ()):
                if m not in reachable:
                    reachable.add(m)
                    frontier.append(m)
        for nid in output_nodes:
            if nid not in reachable:
                diags.append(Diagnostic("SchemaViolation", node_id=nid,
                                        message=f"output node {nid} not reachable from any source"))

    for c in registry.branch_constraints:
        a_name, b_name = c.distinct_source_inputs
        for nid in sorted(graph.nodes):
            if graph.nodes[nid].type_name != c.node_type:
                continue
            ea = incoming.get((nid, a_name))
            eb = incoming.get((nid, b_name))
            if ea is not None and eb is not None and ea.src[0] == eb.src[0]:
                diags.append(Diagnostic(
                    "BranchConstraintViolation", node_id=nid, port=b_name,
                    message=f"{nid}.{a_name} and {nid}.{b_name} are fed by the same node {ea.src[0]}"))

    diags.sort(key=lambda d: d.sort_key())
    return ValidationOutcome(accepted=not diags, diagnostics=tuple(diags))


# --- canonical serialization ---------------------------------------------------


def graph_to_dict(graph: WorkflowGraph, schema_id: Optional[str] = None) -> dict:
    doc: dict[str, Any] = {
        "nodes": [
            {
                "id": nid,
                "type": graph.nodes[nid].type_name,
                "params": dict(sorted(graph.nodes[nid].param_values.items())),
            }
            for nid in sorted(graph.nodes)
        ],
        "edges": [
            {"src": f"{e.src[0]}.{e.src[1]}", "dst": f"{e.dst[0]}.{e.dst[1]}"}
            for e in sorted(graph.edges, key=lambda e: (e.dst, e.src))
        ],
    }
    if schema_id is not None:
        doc["schema_id"] = schema_id
    return doc


def serialize(graph: WorkflowGraph, schema_id: Optional[str] = None) -> bytes:
    """Canonical JSON bytes: sorted node ids, sorted edges, sorted keys."""
    return json.dumps(graph_to_dict(graph, schema_id), sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def digest(graph: WorkflowGraph) -> str:
    """Stable 64-bit digest (hex) of the canonical structural bytes."""
    return hashlib.sha256(serialize(graph)).hexdigest()[:16]


def _split_endpoint(text: str) -> tuple[str, str]:
    node_id, sep, port = text.rpartition(".")
    if not sep or not node_id or not port:
        raise MalformedWorkflow(f"endpoint {text!r} must be 'node.port'")
    return node_id, port


def graph_from_dict(doc: dict, registry: SchemaRegistry) -> WorkflowGraph:
    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise MalformedWorkflow("workflow document must carry nodes and edges")
    nodes: dict[str, NodeInstance] = {}
    counters: dict[str, int] = {}
    for raw in doc["nodes"]:
        try:
            nid, type_name = raw["id"], raw["type"]
        except (TypeError, KeyError) as exc:
            raise MalformedWorkflow(f"bad node entry: {raw!r}") from exc
        if lookup(registry, type_name) is None:
            raise UnknownOperator(type_name)
        if nid in nodes:
            raise MalformedWorkflow(f"duplicate node id {nid!r}")
        m = _ID_RE.match(nid)
        if m is None or m.group("prefix") != type_name.lower():
            raise MalformedWorkflow(f"node id {nid!r} does not follow '<type>_<k>' naming")
        nodes[nid] = NodeInstance(nid, type_name, dict(raw.get("params", {})))
        key = type_name.lower()
        counters[key] = max(counters.get(key, 0), int(m.group("index")) + 1)
    edges = set()
    for raw in doc["edges"]:
        try:
            src = _split_endpoint(raw["src"])
            dst = _split_endpoint(raw["dst"])
        except (TypeError, KeyError) as exc:
            raise MalformedWorkflow(f"bad edge entry: {raw!r}") from exc
        for nid in (src[0], dst[0]):
            if nid not in nodes:
                raise MalformedWorkflow(f"edge references unknown node {nid!r}")
        edge = Edge(src, dst)
        if edge in edges:
            raise MalformedWorkflow(f"duplicate edge {raw!r}")
        edges.add(edge)
    return WorkflowGraph(nodes, frozenset(edges), counters)


def deserialize(data: bytes | str, registry: SchemaRegistry) -> WorkflowGraph:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedWorkflow(f"workflow is not valid JSON: {exc}") from exc
    return graph_from_dict(doc, registry)
