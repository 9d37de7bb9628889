"""Exception hierarchy shared across the engine.

Rejections that are part of normal validation flow are *not* exceptions:
they travel as diagnostics inside a ``ValidationOutcome``. Exceptions are
reserved for misuse of the API, malformed inputs, and exhausted budgets.
"""

from __future__ import annotations


class GraphwrightError(Exception):
    """Base class for all engine errors."""


# --- registry loading ---------------------------------------------------


class MalformedRegistry(GraphwrightError):
    """Registry file is not syntactically valid or misses required keys."""


class DuplicateTypeName(MalformedRegistry):
    """Two node type definitions share the same type_name."""


class InvariantViolation(MalformedRegistry):
    """A structural invariant of the registry does not hold."""


# --- workflow serialization ----------------------------------------------


class MalformedWorkflow(GraphwrightError):
    """Workflow document is syntactically broken or self-inconsistent."""


class UnknownOperator(GraphwrightError):
    """A node type name does not resolve in the active registry."""


class UnknownNodeId(GraphwrightError):
    """An edit references a node id that is not in the graph."""


class UnknownPort(GraphwrightError):
    """An edit references a port name the node type does not declare."""


class DuplicateNodeId(GraphwrightError):
    """A node id is already taken."""


class NotExecutable(GraphwrightError):
    """Operation requires a graph that passes the whole-graph check."""


# --- action language ------------------------------------------------------


class ActionParseError(GraphwrightError):
    """Base for action-text parse failures; carries a diagnostic code."""

    code = "SyntaxError"


class ActionSyntaxError(ActionParseError):
    code = "SyntaxError"


class UnknownVariable(ActionParseError):
    code = "UnknownVariable"


class ArityMismatch(ActionParseError):
    code = "ArityMismatch"


class MalformedTrace(GraphwrightError):
    """Trace document does not follow the tag structure."""


# --- validation / rollout machinery ---------------------------------------


class RepairBudgetExhausted(GraphwrightError):
    """All repair attempts for one step were rejected."""

    def __init__(self, attempts: int, message: str = ""):
        super().__init__(message or f"no accepted repair after {attempts} attempts")
        self.attempts = attempts


class DegenerateDistribution(GraphwrightError):
    """Candidate distribution violates probability axioms."""


class PolicyProtocolError(GraphwrightError):
    """A policy returned a malformed distribution."""


# --- reward / GRPO ---------------------------------------------------------


class EmptyTarget(GraphwrightError):
    """Target graph has no nodes, so type recall is undefined."""


class GroupTooSmall(GraphwrightError):
    """Group-relative advantages need at least two trajectories."""


class MismatchedLengths(GraphwrightError):
    """Paired sequences in a group record differ in length."""


class InvalidDistribution(GraphwrightError):
    """A recorded step distribution violates probability axioms."""


# --- dataset pairing --------------------------------------------------------


class NoEligibleWorkflow(GraphwrightError):
    """No workflow succeeds for any query in the group."""


class TraceTargetMismatch(GraphwrightError):
    """Trace's workflow block does not rebuild the paired target graph."""


class InvalidTrace(GraphwrightError):
    """Trace fails the format gate and cannot be emitted."""
