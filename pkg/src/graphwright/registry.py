"""Typed node library: node type definitions, parameter domains, adapters.

A registry is immutable after load and is the ground truth for intrinsic
validity checks. Port types are plain case-sensitive names.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .errors import DuplicateTypeName, InvariantViolation, MalformedRegistry

PARAM_KINDS = ("integer", "real", "string", "enum", "boolean")
CATEGORIES = ("source", "transform", "output")

SCHEMA_DIR_ENV = "GRAPHWRIGHT_SCHEMA_DIR"


@dataclass(frozen=True)
class ParamDomain:
    kind: str
    min: Optional[float] = None
    max: Optional[float] = None
    choices: tuple = ()
    default: Any = None
    has_default: bool = False

    def contains(self, value: Any) -> bool:
        """True iff value is a member of this domain."""
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "integer":
            if isinstance(value, bool) or not isinstance(value, int):
                return False
        elif self.kind == "real":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return False
        elif self.kind == "string":
            return isinstance(value, str)
        elif self.kind == "enum":
            return value in self.choices
        if self.min is not None and value < self.min:
            return False
        if self.max is not None and value > self.max:
            return False
        return True


@dataclass(frozen=True)
class InputPort:
    name: str
    port_type: str
    required: bool = True


@dataclass(frozen=True)
class OutputPort:
    name: str
    port_type: str


@dataclass(frozen=True)
class ParamSpec:
    name: str
    domain: ParamDomain
    required: bool = False


@dataclass(frozen=True)
class NodeTypeDef:
    type_name: str
    category: str
    inputs: tuple[InputPort, ...] = ()
    params: tuple[ParamSpec, ...] = ()
    outputs: tuple[OutputPort, ...] = ()

    def input(self, name: str) -> Optional[InputPort]:
        for p in self.inputs:
            if p.name == name:
                return p
        return None

    def output(self, name: str) -> Optional[OutputPort]:
        for p in self.outputs:
            if p.name == name:
                return p
        return None

    def param(self, name: str) -> Optional[ParamSpec]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class Adapter:
    from_type: str
    to_type: str
    via: str


@dataclass(frozen=True)
class BranchConstraint:
    """Pair of input ports that must be fed by distinct producer nodes."""

    node_type: str
    distinct_source_inputs: tuple[str, str]


@dataclass(frozen=True)
class SchemaRegistry:
    schema_id: str
    node_types: dict[str, NodeTypeDef] = field(default_factory=dict)
    adapters: tuple[Adapter, ...] = ()
    branch_constraints: tuple[BranchConstraint, ...] = ()

    def adapter_for(self, from_type: str, to_type: str) -> Optional[Adapter]:
        """Depth-1 adapter lookup; no transitive chains."""
        for a in self.adapters:
            if a.from_type == from_type and a.to_type == to_type:
                return a
        return None

    def constraints_for(self, type_name: str) -> tuple[BranchConstraint, ...]:
        return tuple(c for c in self.branch_constraints if c.node_type == type_name)


def lookup(registry: SchemaRegistry, type_name: str) -> Optional[NodeTypeDef]:
    """Exact case-sensitive lookup; absence is a normal result."""
    return registry.node_types.get(type_name)


def _parse_param(raw: dict, type_name: str) -> ParamSpec:
    kind = raw.get("kind")
    if kind not in PARAM_KINDS:
        raise MalformedRegistry(f"{type_name}: unknown param kind {kind!r}")
    choices = tuple(raw.get("choices", ()))
    has_default = "default" in raw
    domain = ParamDomain(
        kind=kind,
        min=raw.get("min"),
        max=raw.get("max"),
        choices=choices,
        default=raw.get("default"),
        has_default=has_default,
    )
    if domain.min is not None and domain.max is not None and domain.min > domain.max:
        raise InvariantViolation(f"{type_name}.{raw.get('name')}: min > max")
    if has_default and not domain.contains(domain.default):
        raise InvariantViolation(
            f"{type_name}.{raw.get('name')}: default outside its domain"
        )
    return ParamSpec(name=raw["name"], domain=domain, required=bool(raw.get("required", False)))


def _parse_node_type(raw: dict) -> NodeTypeDef:
    try:
        type_name = raw["type_name"]
        category = raw["category"]
    except KeyError as exc:
        raise MalformedRegistry(f"node type missing key {exc}") from exc
    if category not in CATEGORIES:
        raise MalformedRegistry(f"{type_name}: unknown category {category!r}")
    inputs = tuple(
        InputPort(i["name"], i["port_type"], bool(i.get("required", True)))
        for i in raw.get("inputs", ())
    )
    params = tuple(_parse_param(p, type_name) for p in raw.get("params", ()))
    outputs = tuple(OutputPort(o["name"], o["port_type"]) for o in raw.get("outputs", ()))

    # an input and an output may share a name (direction disambiguates);
    # params must not collide with any port name
    in_names = [p.name for p in inputs]
    out_names = [o.name for o in outputs]
    param_names = [p.name for p in params]
    for names in (in_names, out_names, param_names):
        if len(set(names)) != len(names):
            raise InvariantViolation(f"{type_name}: duplicate port or param name")
    if (set(in_names) | set(out_names)) & set(param_names):
        raise InvariantViolation(f"{type_name}: port and param names overlap")
    if category == "source" and inputs:
        raise InvariantViolation(f"{type_name}: source nodes cannot declare inputs")
    return NodeTypeDef(type_name, category, inputs, params, outputs)


def registry_from_dict(doc: dict) -> SchemaRegistry:
    """Build a registry from its JSON object form, checking all invariants."""
    if not isinstance(doc, dict) or "schema_id" not in doc:
        raise MalformedRegistry("registry document must be an object with schema_id")
    node_types: dict[str, NodeTypeDef] = {}
    for raw in doc.get("node_types", ()):
        nt = _parse_node_type(raw)
        if nt.type_name in node_types:
            raise DuplicateTypeName(nt.type_name)
        node_types[nt.type_name] = nt

    adapters = tuple(
        Adapter(a["from"], a["to"], a["via"]) for a in doc.get("adapters", ())
    )
    for a in adapters:
        via = node_types.get(a.via)
        if via is None:
            raise InvariantViolation(f"adapter via {a.via!r} is not a known node type")
        from_inputs = [i for i in via.inputs if i.required and i.port_type == a.from_type]
        to_outputs = [o for o in via.outputs if o.port_type == a.to_type]
        if len(from_inputs) != 1 or len(to_outputs) != 1:
            raise InvariantViolation(
                f"adapter via {a.via!r} must have exactly one required "
                f"{a.from_type} input and one {a.to_type} output"
            )

    constraints = []
    for c in doc.get("branch_constraints", ()):
        pair = tuple(c["distinct_source_inputs"])
        if len(pair) != 2:
            raise MalformedRegistry("distinct_source_inputs must name exactly two inputs")
        nt = node_types.get(c["node_type"])
        if nt is None:
            raise InvariantViolation(
                f"branch constraint references unknown node type {c['node_type']!r}"
            )
        for name in pair:
            if nt.input(name) is None:
                raise InvariantViolation(
                    f"branch constraint references unknown input {c['node_type']}.{name}"
                )
        constraints.append(BranchConstraint(c["node_type"], pair))

    return SchemaRegistry(
        schema_id=doc["schema_id"],
        node_types=node_types,
        adapters=adapters,
        branch_constraints=tuple(constraints),
    )


def registry_to_dict(registry: SchemaRegistry) -> dict:
    """Inverse of registry_from_dict (round-trips structurally)."""
    node_types = []
    for nt in registry.node_types.values():
        params = []
        for p in nt.params:
            raw: dict[str, Any] = {"name": p.name, "kind": p.domain.kind, "required": p.required}
            if p.domain.min is not None:
                raw["min"] = p.domain.min
            if p.domain.max is not None:
                raw["max"] = p.domain.max
            if p.domain.choices:
                raw["choices"] = list(p.domain.choices)
            if p.domain.has_default:
                raw["default"] = p.domain.default
            params.append(raw)
        node_types.append(
            {
                "type_name": nt.type_name,
                "category": nt.category,
                "inputs": [
                    {"name": i.name, "port_type": i.port_type, "required": i.required}
                    for i in nt.inputs
                ],
                "params": params,
                "outputs": [{"name": o.name, "port_type": o.port_type} for o in nt.outputs],
            }
        )
    return {
        "schema_id": registry.schema_id,
        "node_types": node_types,
        "adapters": [
            {"from": a.from_type, "to": a.to_type, "via": a.via} for a in registry.adapters
        ],
        "branch_constraints": [
            {"node_type": c.node_type, "distinct_source_inputs": list(c.distinct_source_inputs)}
            for c in registry.branch_constraints
        ],
    }


def load_registry(path: str | os.PathLike) -> SchemaRegistry:
    """Load a registry JSON file. Idempotent and order-independent."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedRegistry(f"cannot read registry file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRegistry(f"registry is not valid JSON: {exc}") from exc
    return registry_from_dict(doc)


def load_builtin(schema_id: str) -> SchemaRegistry:
    """Load a bundled registry by id, e.g. ``mini-sd`` or ``mini-edit``."""
    ref = resources.files("graphwright.schemas").joinpath(f"{schema_id}.json")
    try:
        doc = json.loads(ref.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MalformedRegistry(f"no bundled schema named {schema_id!r}") from exc
    return registry_from_dict(doc)


def resolve_registry(spec: str) -> SchemaRegistry:
    """Resolve a registry from a file path, schema dir, or bundled name.

    Lookup order: literal file path, then ``$GRAPHWRIGHT_SCHEMA_DIR/<spec>.json``,
    then the bundled schemas.
    """
    p = Path(spec)
    if p.suffix == ".json" or p.exists():
        return load_registry(p)
    schema_dir = os.environ.get(SCHEMA_DIR_ENV)
    if schema_dir:
        candidate = Path(schema_dir) / f"{spec}.json"
        if candidate.exists():
            return load_registry(candidate)
    return load_builtin(spec)
