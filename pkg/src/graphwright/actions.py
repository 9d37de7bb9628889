"""The single-line action language and the trace document format.

One line is one action. An assignment line binds a new node and names its
outputs; ``connect``/``disconnect``/``set`` edit wiring and parameters;
``STOP`` requests termination. Parsing is deterministic: identical
(text, graph, environment, registry) always yields the identical edits.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import (
    ActionSyntaxError,
    ArityMismatch,
    MalformedTrace,
    NotExecutable,
    UnknownVariable,
)
from .graph import AddEdge, AddNode, GraphEdit, RemoveEdge, SetParam, Stop, WorkflowGraph
from .graph import final_check, topological_order
from .registry import SchemaRegistry, lookup

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_IDENT_RE = re.compile(_IDENT)
_REF_RE = re.compile(rf"({_IDENT})\.({_IDENT})")
_STRING_RE = re.compile(r'"(?:[^"\\]|\\.)*"')
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")


@dataclass(frozen=True)
class ActionEnv:
    """Episode-scoped bindings from output variable names to ports."""

    bindings: dict[str, tuple[str, str]] = field(default_factory=dict)

    def bind_all(self, new: dict[str, tuple[str, str]]) -> "ActionEnv":
        merged = dict(self.bindings)
        merged.update(new)
        return ActionEnv(merged)

    def resolve(self, name: str) -> tuple[str, str]:
        try:
            return self.bindings[name]
        except KeyError:
            raise UnknownVariable(f"variable {name!r} is not bound") from None


@dataclass(frozen=True)
class ParsedAction:
    """Result of parsing one action line.

    ``edits`` apply atomically (all-or-nothing). ``binds`` maps output
    variable names to the ports they name once the edits are accepted.
    """

    edits: tuple[GraphEdit, ...]
    binds: tuple[tuple[str, tuple[str, str]], ...] = ()

    @property
    def is_stop(self) -> bool:
        return len(self.edits) == 1 and isinstance(self.edits[0], Stop)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def match(self, pattern: re.Pattern) -> Optional[re.Match]:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if m:
            self.pos = m.end()
        return m

    def take(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.take(literal):
            raise ActionSyntaxError(
                f"expected {literal!r} at column {self.pos} in {self.text!r}")

    def done(self) -> bool:
        self.skip_ws()
        return self.pos == len(self.text)


def _scan_value(s: _Scanner) -> tuple[str, Any]:
    """Returns ('literal', value) or ('var', name)."""
    m = s.match(_STRING_RE)
    if m:
        try:
            return "literal", json.loads(m.group(0))
        except json.JSONDecodeError as exc:
            raise ActionSyntaxError(f"bad string literal {m.group(0)!r}") from exc
    m = s.match(_NUMBER_RE)
    if m:
        text = m.group(0)
        return "literal", float(text) if any(c in text for c in ".eE") else int(text)
    m = s.match(_IDENT_RE)
    if m:
        word = m.group(0)
        if word == "true":
            return "literal", True
        if word == "false":
            return "literal", False
        if word == "null":
            return "literal", None
        return "var", word
    raise ActionSyntaxError(f"expected a value at column {s.pos} in {s.text!r}")


def _scan_ref(s: _Scanner) -> tuple[str, str]:
    m = s.match(_REF_RE)
    if m is None:
        raise ActionSyntaxError(f"expected 'node.port' at column {s.pos} in {s.text!r}")
    return m.group(1), m.group(2)


def _parse_call(s: _Scanner, lhs: list[str], graph: WorkflowGraph,
                env: ActionEnv, registry: SchemaRegistry) -> ParsedAction:
    m = s.match(_IDENT_RE)
    if m is None:
        raise ActionSyntaxError(f"expected a node type name in {s.text!r}")
    type_name = m.group(0)
    s.expect("(")
    args: list[tuple[str, str, Any]] = []
    if not s.take(")"):
        while True:
            key = s.match(_IDENT_RE)
            if key is None:
                raise ActionSyntaxError(f"expected argument name in {s.text!r}")
            s.expect("=")
            kind, value = _scan_value(s)
            args.append((key.group(0), kind, value))
            if s.take(")"):
                break
            s.expect(",")
    if not s.done():
        raise ActionSyntaxError(f"trailing text after call in {s.text!r}")

    # the whole line must scan before names are resolved
    params: dict[str, Any] = {}
    connections: list[tuple[str, tuple[str, str]]] = []
    for key, kind, value in args:
        if kind == "var":
            connections.append((key, env.resolve(value)))
        else:
            params[key] = value

    type_def = lookup(registry, type_name)
    if type_def is not None and len(lhs) != len(type_def.outputs):
        raise ArityMismatch(
            f"{type_name} declares {len(type_def.outputs)} outputs, "
            f"line names {len(lhs)}")

    node_id = graph.next_id(type_name)
    edits: list[GraphEdit] = [AddNode(type_name, params)]
    edits.extend(AddEdge(src=src, dst=(node_id, port)) for port, src in connections)
    binds = ()
    if type_def is not None:
        binds = tuple(
            (var, (node_id, out.name)) for var, out in zip(lhs, type_def.outputs))
    return ParsedAction(edits=tuple(edits), binds=binds)


def parse_action(text: str, graph: WorkflowGraph, env: ActionEnv,
                 registry: SchemaRegistry) -> ParsedAction:
    """Parse one action line into its atomic edit list.

    Raises ActionSyntaxError / UnknownVariable / ArityMismatch; never
    touches the graph or the environment.
    """
    line = text.strip()
    if not line or "\n" in line:
        raise ActionSyntaxError("an action is exactly one non-empty line")

    if line == "STOP":
        return ParsedAction(edits=(Stop(),))

    keyword = re.match(rf"({_IDENT})\s*\(", line)
    form = keyword.group(1) if keyword else None

    s = _Scanner(line)
    if form == "connect":
        s.take("connect")
        s.expect("(")
        m = s.match(_IDENT_RE)
        if m is None:
            raise ActionSyntaxError(f"connect() needs a source variable in {line!r}")
        s.expect(",")
        dst = _scan_ref(s)
        s.expect(")")
        if not s.done():
            raise ActionSyntaxError(f"trailing text in {line!r}")
        return ParsedAction(edits=(AddEdge(src=env.resolve(m.group(0)), dst=dst),))

    if form == "disconnect":
        s.take("disconnect")
        s.expect("(")
        dst = _scan_ref(s)
        s.expect(")")
        if not s.done():
            raise ActionSyntaxError(f"trailing text in {line!r}")
        return ParsedAction(edits=(RemoveEdge(dst=dst),))

    if form == "set":
        s.take("set")
        s.expect("(")
        node_id, param = _scan_ref(s)
        s.expect(",")
        kind, value = _scan_value(s)
        if kind == "var":
            raise ActionSyntaxError("set() takes a literal value, not a variable")
        s.expect(")")
        if not s.done():
            raise ActionSyntaxError(f"trailing text in {line!r}")
        return ParsedAction(edits=(SetParam(node_id, param, value),))

    # assignment form: `a, b = Type(...)` or bare `Type(...)`
    eq = _split_assignment(line)
    if eq is None:
        return _parse_call(_Scanner(line), [], graph, env, registry)
    lhs_text, rhs_text = eq
    lhs = [v.strip() for v in lhs_text.split(",")]
    if any(not _IDENT_RE.fullmatch(v) for v in lhs):
        raise ActionSyntaxError(f"bad output variable list in {line!r}")
    return _parse_call(_Scanner(rhs_text), lhs, graph, env, registry)


def _split_assignment(line: str) -> Optional[tuple[str, str]]:
    """Split at the top-level '=' of an assignment, ignoring '=' in args."""
    depth = 0
    in_string = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_string:
            if c == "\\":
                i += 1
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "=" and depth == 0:
            return line[:i], line[i + 1:]
        i += 1
    return None


# --- trace documents ----------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    node_line: str
    result: Optional[str] = None  # None = accepted without feedback


@dataclass(frozen=True)
class TraceDocument:
    steps: tuple[TraceStep, ...]
    workflow_lines: tuple[str, ...]


_DOC_RE = re.compile(
    r"\A<(thinking|trace)>(?P<thinking>.*?)</\1>\s*"
    r"<workflow>(?P<workflow>.*?)</workflow>\s*\Z",
    re.DOTALL,
)
_STEP_RE = re.compile(r"<node>(.*?)</node>(?:\s*<result>(.*?)</result>)?", re.DOTALL)
_ANY_TAG_RE = re.compile(r"</?(thinking|trace|node|result|workflow)>")


def parse_trace(doc: bytes | str) -> TraceDocument:
    """Parse a tagged trace document: reasoning block then workflow block."""
    if isinstance(doc, bytes):
        try:
            text = doc.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedTrace(f"trace is not valid UTF-8: {exc}") from exc
    else:
        text = doc
    m = _DOC_RE.match(text.strip())
    if m is None:
        raise MalformedTrace(
            "document must be a reasoning block followed by a workflow block")
    thinking, workflow = m.group("thinking"), m.group("workflow")

    for tag in _ANY_TAG_RE.finditer(workflow):
        raise MalformedTrace(f"workflow block may not contain {tag.group(0)}")

    steps = []
    matched_nodes = 0
    matched_results = 0
    for sm in _STEP_RE.finditer(thinking):
        matched_nodes += 1
        node_line = sm.group(1).strip()
        if not node_line or "\n" in node_line:
            raise MalformedTrace("each node block must hold one non-empty line")
        result = sm.group(2)
        if result is not None:
            matched_results += 1
        steps.append(TraceStep(node_line=node_line, result=result))
    if thinking.count("<node>") != matched_nodes or thinking.count("</node>") != matched_nodes:
        raise MalformedTrace("unbalanced node tags in reasoning block")
    if thinking.count("<result>") != matched_results or thinking.count("</result>") != matched_results:
        raise MalformedTrace("stray result block without a preceding node")
    if "<workflow>" in thinking:
        raise MalformedTrace("nested workflow block inside reasoning")

    lines = tuple(l.strip() for l in workflow.splitlines() if l.strip())
    return TraceDocument(steps=tuple(steps), workflow_lines=lines)


def render_trace(steps: list[TraceStep], workflow_lines: list[str],
                 preamble: str = "") -> str:
    """Inverse of parse_trace, emitting the ``<thinking>`` alias."""
    parts = ["<thinking>"]
    if preamble:
        parts.append(preamble)
    for step in steps:
        parts.append(f"<node>{step.node_line}</node>")
        if step.result is not None:
            parts.append(f"<result>{step.result}</result>")
    parts.append("</thinking>")
    parts.append("<workflow>")
    parts.extend(workflow_lines)
    parts.append("</workflow>")
    return "\n".join(parts)


# --- rendering a graph back to action lines -------------------------------------


def render_workflow_lines(graph: WorkflowGraph, registry: SchemaRegistry) -> list[str]:
    """Emit one assignment line per node in topological order.

    Ties are broken by node_id ascending; re-parsing the lines rebuilds a
    structurally equal graph.
    """
    outcome = final_check(graph, registry)
    if not outcome.accepted:
        raise NotExecutable(
            "; ".join(d.message for d in outcome.diagnostics) or "graph is not executable")
    order = topological_order(graph)
    assert order is not None
    incoming = {e.dst: e for e in graph.edges}
    lines = []
    for nid in order:
        inst = graph.nodes[nid]
        type_def = lookup(registry, inst.type_name)
        assert type_def is not None
        args = []
        for port in type_def.inputs:
            edge = incoming.get((nid, port.name))
            if edge is not None:
                args.append(f"{port.name}={edge.src[0]}_{edge.src[1]}")
        for spec in type_def.params:
            if spec.name in inst.param_values:
                args.append(f"{spec.name}={json.dumps(inst.param_values[spec.name])}")
        call = f"{inst.type_name}({', '.join(args)})"
        if type_def.outputs:
            lhs = ", ".join(f"{nid}_{out.name}" for out in type_def.outputs)
            lines.append(f"{lhs} = {call}")
        else:
            lines.append(call)
    return lines
