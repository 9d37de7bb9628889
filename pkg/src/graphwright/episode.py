"""One construction episode: graph + variable bindings + history.

Episodes are immutable values; ``step`` returns a new episode, so sibling
branches can share any validated prefix without copying or locking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .actions import ActionEnv, parse_action
from .errors import ActionParseError
from .graph import WorkflowGraph, digest, empty_graph
from .registry import SchemaRegistry
from .validation_types import Diagnostic, ValidationOutcome, outcome_rejected
from .validator import (
    DEFAULT_HISTORY_CAPACITY,
    History,
    transition,
    update_history,
)


@dataclass(frozen=True)
class Episode:
    registry: SchemaRegistry
    graph: WorkflowGraph
    env: ActionEnv
    history: History
    step_count: int = 0
    terminated: bool = False

    @classmethod
    def start(cls, registry: SchemaRegistry,
              history_capacity: int = DEFAULT_HISTORY_CAPACITY) -> "Episode":
        return cls(
            registry=registry,
            graph=empty_graph(),
            env=ActionEnv(),
            history=History(capacity=history_capacity),
        )

    @property
    def graph_digest(self) -> str:
        return digest(self.graph)

    def step(self, line: str) -> tuple["Episode", ValidationOutcome]:
        """Parse and validate one action line; commit it only if accepted."""
        try:
            parsed = parse_action(line, self.graph, self.env, self.registry)
        except ActionParseError as exc:
            outcome = outcome_rejected([Diagnostic(exc.code, message=str(exc))])
            nxt = replace(
                self,
                history=update_history(self.history, line, outcome, self.graph),
                step_count=self.step_count + 1,
            )
            return nxt, outcome

        graph, outcome = transition(self.graph, parsed.edits, self.registry)
        env = self.env
        terminated = self.terminated
        if outcome.accepted:
            if parsed.binds:
                env = env.bind_all(dict(parsed.binds))
            if parsed.is_stop:
                terminated = True
        nxt = Episode(
            registry=self.registry,
            graph=graph,
            env=env,
            history=update_history(self.history, line, outcome, graph),
            step_count=self.step_count + 1,
            terminated=terminated,
        )
        return nxt, outcome


def replay(lines: list[str], registry: SchemaRegistry) -> tuple[Episode, list[ValidationOutcome]]:
    """Drive a fresh episode through the given lines, collecting outcomes."""
    episode = Episode.start(registry)
    outcomes = []
    for line in lines:
        episode, outcome = episode.step(line)
        outcomes.append(outcome)
    return episode, outcomes
