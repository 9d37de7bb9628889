"""State-aware validation of atomic edits.

Acceptance is the conjunction of two predicates: intrinsic validity of the
edit in isolation (operator existence, required fields, parameter domains)
and composability with the current graph (port typing, adapters, free
ports, acyclicity, branch constraints). A rejected edit leaves the graph
untouched; multi-part edit groups from one action line commit atomically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import ActionParseError, RepairBudgetExhausted
from .graph import (
    AddEdge,
    AddNode,
    GraphEdit,
    RemoveEdge,
    SetParam,
    Stop,
    WorkflowGraph,
    _would_cycle,
    apply_edit,
    final_check,
    topological_order,
)
from .registry import SchemaRegistry, lookup
from .validation_types import (
    Diagnostic,
    ValidationOutcome,
    outcome_ok,
    outcome_rejected,
)

DEFAULT_HISTORY_CAPACITY = 8
DEFAULT_MAX_REPAIR_ATTEMPTS = 3


def check_int(edit: GraphEdit, registry: SchemaRegistry) -> ValidationOutcome:
    """Intrinsic validity: graph-independent checks against the registry."""
    diags: list[Diagnostic] = []
    if isinstance(edit, AddNode):
        type_def = lookup(registry, edit.type_name)
        if type_def is None:
            return outcome_rejected([Diagnostic(
                "UnknownOperator", message=f"unknown operator {edit.type_name!r}")])
        for name, value in edit.param_values.items():
            spec = type_def.param(name)
            if spec is None:
                diags.append(Diagnostic(
                    "SchemaViolation", param=name,
                    message=f"{edit.type_name} declares no param {name!r}"))
            elif not spec.domain.contains(value):
                diags.append(Diagnostic(
                    "ParamOutOfDomain", param=name,
                    message=f"{edit.type_name}.{name}={value!r} outside domain"))
        for spec in type_def.params:
            if spec.required and not spec.domain.has_default and spec.name not in edit.param_values:
                diags.append(Diagnostic(
                    "MissingRequiredField", param=spec.name,
                    message=f"{edit.type_name} requires param {spec.name!r}"))
    # edge, param, and stop edits carry nothing intrinsically checkable
    return outcome_rejected(diags) if diags else outcome_ok()


def _check_edge(graph: WorkflowGraph, edge: AddEdge,
                registry: SchemaRegistry) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    src_node, src_port = edge.src
    dst_node, dst_port = edge.dst

    src_inst = graph.nodes.get(src_node)
    dst_inst = graph.nodes.get(dst_node)
    if src_inst is None:
        diags.append(Diagnostic("UnknownNodeId", node_id=src_node,
                                message=f"no node {src_node!r}"))
    if dst_inst is None:
        diags.append(Diagnostic("UnknownNodeId", node_id=dst_node,
                                message=f"no node {dst_node!r}"))
    if diags:
        return diags

    out_port = lookup(registry, src_inst.type_name).output(src_port)
    in_port = lookup(registry, dst_inst.type_name).input(dst_port)
    if out_port is None:
        diags.append(Diagnostic("UnknownPort", node_id=src_node, port=src_port,
                                message=f"{src_inst.type_name} has no output {src_port!r}"))
    if in_port is None:
        diags.append(Diagnostic("UnknownPort", node_id=dst_node, port=dst_port,
                                message=f"{dst_inst.type_name} has no input {dst_port!r}"))
    if diags:
        return diags

    if out_port.port_type != in_port.port_type:
        adapter = registry.adapter_for(out_port.port_type, in_port.port_type)
        diags.append(Diagnostic(
            "TypeMismatch", node_id=dst_node, port=dst_port,
            message=(f"{out_port.port_type} output {src_node}.{src_port} cannot feed "
                     f"{in_port.port_type} input {dst_node}.{dst_port}"),
            hint={"adapter_via": adapter.via} if adapter else None))
    if graph.edge_into(dst_node, dst_port) is not None:
        diags.append(Diagnostic("PortOccupied", node_id=dst_node, port=dst_port,
                                message=f"input {dst_node}.{dst_port} already has a producer"))
    if _would_cycle(graph, src_node, dst_node):
        diags.append(Diagnostic("AcyclicityViolation", node_id=dst_node, port=dst_port,
                                message=f"edge {src_node}->{dst_node} would close a cycle"))

    # branch constraints: adding this edge must not tie both constrained
    # inputs of the destination to one producer
    if dst_inst is not None:
        for c in registry.constraints_for(dst_inst.type_name):
            a_name, b_name = c.distinct_source_inputs
            if dst_port not in (a_name, b_name):
                continue
            other = b_name if dst_port == a_name else a_name
            other_edge = graph.edge_into(dst_node, other)
            if other_edge is not None and other_edge.src[0] == src_node:
                diags.append(Diagnostic(
                    "BranchConstraintViolation", node_id=dst_node, port=dst_port,
                    message=(f"{dst_node}.{a_name} and {dst_node}.{b_name} "
                             f"must come from distinct nodes")))
    return diags


def check_comp(graph: WorkflowGraph, edit: GraphEdit,
               registry: SchemaRegistry) -> ValidationOutcome:
    """Composability of one edit with the current graph.

    Callers compose acceptance as intrinsic AND composable; this check
    assumes check_int already passed.
    """
    if isinstance(edit, Stop):
        return final_check(graph, registry)
    if isinstance(edit, AddNode):
        return outcome_ok()
    if isinstance(edit, AddEdge):
        diags = _check_edge(graph, edit, registry)
        return outcome_rejected(diags) if diags else outcome_ok()
    if isinstance(edit, RemoveEdge):
        node_id, port = edit.dst
        if node_id not in graph.nodes:
            return outcome_rejected([Diagnostic(
                "UnknownNodeId", node_id=node_id, message=f"no node {node_id!r}")])
        if graph.edge_into(node_id, port) is None:
            return outcome_rejected([Diagnostic(
                "SchemaViolation", node_id=node_id, port=port,
                message=f"no edge into {node_id}.{port} to remove")])
        return outcome_ok()
    if isinstance(edit, SetParam):
        inst = graph.nodes.get(edit.node_id)
        if inst is None:
            return outcome_rejected([Diagnostic(
                "UnknownNodeId", node_id=edit.node_id,
                message=f"no node {edit.node_id!r}")])
        spec = lookup(registry, inst.type_name).param(edit.param_name)
        if spec is None:
            return outcome_rejected([Diagnostic(
                "SchemaViolation", node_id=edit.node_id, param=edit.param_name,
                message=f"{inst.type_name} declares no param {edit.param_name!r}")])
        if not spec.domain.contains(edit.value):
            return outcome_rejected([Diagnostic(
                "ParamOutOfDomain", node_id=edit.node_id, param=edit.param_name,
                message=f"{edit.node_id}.{edit.param_name}={edit.value!r} outside domain")])
        return outcome_ok()
    raise TypeError(f"not a graph edit: {edit!r}")


def transition(graph: WorkflowGraph, edits: GraphEdit | Sequence[GraphEdit],
               registry: SchemaRegistry) -> tuple[WorkflowGraph, ValidationOutcome]:
    """Validate-then-apply. On rejection the input graph is returned as is.

    A sequence of edits (one action line) commits atomically: intrinsic
    diagnostics are collected across all parts first; composability is
    checked part by part against the incrementally applied graph and the
    first failing part rejects the whole group.
    """
    group: tuple[GraphEdit, ...] = (edits,) if not isinstance(edits, Sequence) else tuple(edits)

    int_diags: list[Diagnostic] = []
    for edit in group:
        int_diags.extend(check_int(edit, registry).diagnostics)
    if int_diags:
        return graph, outcome_rejected(int_diags)

    working = graph
    for edit in group:
        outcome = check_comp(working, edit, registry)
        if not outcome.accepted:
            return graph, outcome
        if not isinstance(edit, Stop):
            working = apply_edit(working, edit, registry)
    # stripped under -O: the incremental cycle test must agree with a full sort
    assert topological_order(working) is not None, "accepted edit broke acyclicity"
    return working, outcome_ok()


# --- history ------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryRecord:
    action_text: str
    accepted: bool
    diagnostics: tuple[Diagnostic, ...] = ()


@dataclass(frozen=True)
class History:
    """Bounded FIFO of recent step records plus derived graph facts."""

    records: tuple[HistoryRecord, ...] = ()
    capacity: int = DEFAULT_HISTORY_CAPACITY
    accumulated_constraints: frozenset[str] = frozenset()


def derive_constraints(graph: WorkflowGraph) -> frozenset[str]:
    facts = {f"node:{nid}={inst.type_name}" for nid, inst in graph.nodes.items()}
    facts.update(f"occupied:{e.dst[0]}.{e.dst[1]}" for e in graph.edges)
    return frozenset(facts)


def update_history(h: History, action_text: str, outcome: ValidationOutcome,
                   graph: WorkflowGraph) -> History:
    """Append one record, evict beyond capacity, refresh derived facts."""
    record = HistoryRecord(action_text, outcome.accepted, outcome.diagnostics)
    records = (h.records + (record,))[-h.capacity:]
    return History(records=records, capacity=h.capacity,
                   accumulated_constraints=derive_constraints(graph))


# --- validate-repair loop --------------------------------------------------------

RepairCallback = Callable[[WorkflowGraph, History, tuple[Diagnostic, ...]], str]


def repair_loop(
    graph: WorkflowGraph,
    history: History,
    registry: SchemaRegistry,
    propose: RepairCallback,
    max_attempts: int = DEFAULT_MAX_REPAIR_ATTEMPTS,
    initial_outcome: Optional[ValidationOutcome] = None,
    parse=None,
) -> tuple[WorkflowGraph, History, ValidationOutcome, int]:
    """Iterate propose -> parse -> transition until acceptance or budget.

    ``propose`` maps (graph, history, diagnostics) to a repaired action
    line. Each rejected attempt is appended to history. Raises
    RepairBudgetExhausted after max_attempts rejections.
    """
    from .actions import ActionEnv, parse_action

    if initial_outcome is not None and initial_outcome.accepted:
        return graph, history, initial_outcome, 0

    outcome = initial_outcome or outcome_rejected(
        [Diagnostic("SchemaViolation", message="repair requested without an outcome")])
    parse = parse or (lambda text, g: parse_action(text, g, ActionEnv(), registry).edits)

    for attempt in range(1, max_attempts + 1):
        line = propose(graph, history, outcome.diagnostics)
        try:
            edits = parse(line, graph)
        except ActionParseError as exc:
            outcome = outcome_rejected([Diagnostic(exc.code, message=str(exc))])
            history = update_history(history, line, outcome, graph)
            continue
        graph_next, outcome = transition(graph, edits, registry)
        history = update_history(history, line, outcome, graph_next)
        if outcome.accepted:
            return graph_next, history, outcome, attempt
        graph = graph_next
    exhausted = RepairBudgetExhausted(max_attempts)
    exhausted.history = history
    exhausted.last_outcome = outcome
    raise exhausted
