"""Diagnostic records and validation outcomes.

Kept separate from the validator so the graph module's whole-graph check
can produce outcomes without a circular import.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

DIAGNOSTIC_CODES = frozenset({
    "UnknownOperator",
    "MissingRequiredField",
    "ParamOutOfDomain",
    "SchemaViolation",
    "TypeMismatch",
    "MissingAdapter",
    "PortOccupied",
    "AcyclicityViolation",
    "BranchConstraintViolation",
    "MissingRequiredInput",
    "NoOutputNode",
    "UnknownNodeId",
    "UnknownPort",
    "SyntaxError",
    "UnknownVariable",
    "ArityMismatch",
})

# intrinsic-validity codes sort before composability codes in outcomes
_INT_CODES = (
    "SyntaxError",
    "UnknownVariable",
    "ArityMismatch",
    "UnknownOperator",
    "MissingRequiredField",
    "ParamOutOfDomain",
    "SchemaViolation",
)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    node_id: Optional[str] = None
    port: Optional[str] = None
    param: Optional[str] = None
    message: str = ""
    hint: Optional[dict] = None

    def __post_init__(self):
        if self.code not in DIAGNOSTIC_CODES:
            raise ValueError(f"unknown diagnostic code {self.code!r}")

    def sort_key(self) -> tuple:
        phase = 0 if self.code in _INT_CODES else 1
        return (phase, self.node_id or "", self.port or self.param or "", self.code)

    def to_dict(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.node_id is not None:
            doc["node_id"] = self.node_id
        if self.port is not None:
            doc["port"] = self.port
        if self.param is not None:
            doc["param"] = self.param
        if self.hint is not None:
            doc["hint"] = self.hint
        return doc


@dataclass(frozen=True)
class ValidationOutcome:
    accepted: bool
    diagnostics: tuple[Diagnostic, ...] = ()

    def __post_init__(self):
        # accepted <=> no diagnostics, by construction everywhere
        assert self.accepted == (not self.diagnostics)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def outcome_ok() -> ValidationOutcome:
    return ValidationOutcome(accepted=True)


def outcome_rejected(diags: list[Diagnostic]) -> ValidationOutcome:
    ordered = tuple(sorted(diags, key=lambda d: d.sort_key()))
    return ValidationOutcome(accepted=False, diagnostics=ordered)
