"""Episodic rollout driver with entropy-adaptive branching.

Each step of each active branch queries the policy, samples an action,
and may fork one child from the shared validated prefix when the
branching probability sigmoid(alpha + beta * dH) exceeds the threshold
and budget remains. Everything is deterministic given (seed, policy,
registry, query).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .episode import Episode
from .errors import DegenerateDistribution
from .graph import graph_to_dict
from .policies import (
    Policy,
    PolicyDistribution,
    PolicyState,
    state_for,
    validate_distribution,
)
from .registry import SchemaRegistry


@dataclass(frozen=True)
class BranchConfig:
    alpha: float = 0.5
    beta: float = 0.2
    tau_b: float = 0.5
    branch_budget: int = 4
    max_steps: int = 16
    top_k: int = 8
    seed: int = 0
    branch_decision: str = "threshold"  # or "bernoulli"
    max_repair_attempts: int = 3
    history_capacity: int = 8

    def __post_init__(self):
        if not 0.0 <= self.tau_b <= 1.0:
            raise ValueError("tau_b must lie in [0, 1]")
        if self.branch_budget < 0 or self.max_steps < 1 or self.top_k < 1:
            raise ValueError("bad budget configuration")
        if self.branch_decision not in ("threshold", "bernoulli"):
            raise ValueError("branch_decision must be 'threshold' or 'bernoulli'")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "tau_b": self.tau_b,
            "branch_budget": self.branch_budget,
            "max_steps": self.max_steps,
            "top_k": self.top_k,
            "seed": self.seed,
            "branch_decision": self.branch_decision,
            "max_repair_attempts": self.max_repair_attempts,
            "history_capacity": self.history_capacity,
        }


# --- uncertainty math ---------------------------------------------------------


def entropy(dist: PolicyDistribution) -> float:
    """Normalized Shannon entropy of the candidate distribution, in [0, 1].

    A single candidate (or none) carries zero uncertainty by definition.
    """
    probs = dist.probs
    if len(dist.candidates) != len(probs):
        raise DegenerateDistribution("candidates and probs must align")
    if any(p < 0 for p in probs):
        raise DegenerateDistribution("negative probability")
    if probs and abs(math.fsum(probs) - 1.0) > 1e-9:
        raise DegenerateDistribution(f"probabilities sum to {math.fsum(probs)}")
    n = len(probs)
    if n <= 1:
        return 0.0
    h = -math.fsum(p * math.log(p) for p in probs if p > 0.0) / math.log(n)
    return min(max(h, 0.0), 1.0)


def delta_entropy(h_t: float, h_prev: Optional[float] = None) -> float:
    """Entropy increase vs the previous step; the pre-episode value is 0."""
    return h_t - (h_prev if h_prev is not None else 0.0)


def branch_probability(dh: float, cfg: BranchConfig) -> float:
    x = cfg.alpha + cfg.beta * dh
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def decide_branch(p: float, cfg: BranchConfig, budget_remaining: int,
                  n_candidates: int, draw: Optional[float] = None) -> bool:
    """Threshold rule by default; no alternative to take means no fork."""
    if budget_remaining <= 0 or n_candidates < 2:
        return False
    if cfg.branch_decision == "bernoulli":
        if draw is None:
            raise ValueError("bernoulli decision needs a draw")
        return draw < p
    return p > cfg.tau_b


def splitmix64(x: int) -> int:
    """Documented 64-bit mixer used to derive child branch seeds."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def child_seed(parent_seed: int, t: int, child_index: int) -> int:
    """mix(parent_seed, t, child_index): one splitmix64 round per input."""
    return splitmix64(splitmix64(splitmix64(parent_seed) ^ (t + 1)) ^ (child_index + 1))


# --- rollout tree -----------------------------------------------------------------


@dataclass
class RolloutTree:
    header: dict
    events: list[dict] = field(default_factory=list)

    @property
    def steps(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "step"]

    @property
    def leaves(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "leaf"]

    def branch_count(self) -> int:
        return len({e["branch"] for e in self.events})

    def fork_count(self) -> int:
        return sum(1 for e in self.steps if e["branched"])

    def to_jsonl(self) -> bytes:
        lines = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        lines.extend(json.dumps(e, sort_keys=True) for e in self.events)
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_jsonl(cls, data: bytes | str) -> "RolloutTree":
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        records = [json.loads(line) for line in data.splitlines() if line.strip()]
        if not records or records[0].get("type") != "header":
            raise ValueError("rollout stream must begin with a header record")
        header = {k: v for k, v in records[0].items() if k != "type"}
        return cls(header=header, events=records[1:])


@dataclass
class _Branch:
    branch_id: int
    parent: Optional[int]
    episode: Episode
    rng: random.Random
    seed: int
    h_prev: Optional[float] = None
    children: int = 0


def _sample(rng: random.Random, probs: list[float]) -> int:
    r = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if r < acc:
            return i
    return len(probs) - 1


def _sample_alternative(rng: random.Random, probs: list[float], chosen: int) -> int:
    rest = [(i, p) for i, p in enumerate(probs) if i != chosen]
    total = math.fsum(p for _, p in rest)
    if total <= 0.0:
        weights = [1.0 / len(rest)] * len(rest)
    else:
        weights = [p / total for _, p in rest]
    return rest[_sample(rng, weights)][0]


def run_rollouts(query: str, registry: SchemaRegistry, policy: Policy,
                 cfg: BranchConfig) -> RolloutTree:
    """Drive one branching episode and record the full rollout tree."""
    tree = RolloutTree(header={
        "query": query,
        "schema_id": registry.schema_id,
        **cfg.to_dict(),
    })
    root = _Branch(
        branch_id=0,
        parent=None,
        episode=Episode.start(registry, history_capacity=cfg.history_capacity),
        rng=random.Random(cfg.seed),
        seed=cfg.seed,
    )
    active: list[_Branch] = [root]
    budget = cfg.branch_budget
    next_branch_id = 1

    def _state(branch: _Branch, t: int) -> PolicyState:
        ep = branch.episode
        return state_for(query, ep.graph, ep.history, ep.env, t)

    def _commit(branch: _Branch, t: int, line: str) -> dict:
        """Run one action with the validate-repair loop; return record fields."""
        episode, outcome = branch.episode.step(line)
        attempts = 0
        committed = line
        while not outcome.accepted and attempts < cfg.max_repair_attempts:
            attempts += 1
            branch.episode = episode  # expose rejection feedback to the policy
            dist = validate_distribution(policy.propose(_state(branch, t)))
            committed = dist.candidates[_sample(branch.rng, list(dist.probs))]
            episode, outcome = episode.step(committed)
        branch.episode = episode
        return {
            "action": committed,
            "initial_action": line if committed != line else None,
            "repair_attempts": attempts,
            "accepted": outcome.accepted,
            "diagnostics": [d.to_dict() for d in outcome.diagnostics],
            "digest": episode.graph_digest,
        }

    def _leaf(branch: _Branch, status: str):
        tree.events.append({
            "type": "leaf",
            "branch": branch.branch_id,
            "parent": branch.parent,
            "status": status,
            "digest": branch.episode.graph_digest,
            "graph": graph_to_dict(branch.episode.graph, registry.schema_id),
            "reward": None,
        })

    for t in range(cfg.max_steps):
        if not active:
            break
        spawned: list[_Branch] = []
        survivors: list[_Branch] = []
        for branch in active:
            dist = validate_distribution(policy.propose(_state(branch, t)))
            h = entropy(dist)
            dh = delta_entropy(h, branch.h_prev)
            p = branch_probability(dh, cfg)
            chosen = _sample(branch.rng, list(dist.probs))
            draw = branch.rng.random() if cfg.branch_decision == "bernoulli" else None
            fork = decide_branch(p, cfg, budget, len(dist.candidates), draw)

            child: Optional[_Branch] = None
            alt_line: Optional[str] = None
            if fork:
                budget -= 1
                alt = _sample_alternative(branch.rng, list(dist.probs), chosen)
                alt_line = dist.candidates[alt]
                seed = child_seed(branch.seed, t, branch.children)
                child = _Branch(
                    branch_id=next_branch_id,
                    parent=branch.branch_id,
                    episode=branch.episode,
                    rng=random.Random(seed),
                    seed=seed,
                    h_prev=h,
                )
                next_branch_id += 1
                branch.children += 1

            record = _commit(branch, t, dist.candidates[chosen])
            branch.h_prev = h
            tree.events.append({
                "type": "step",
                "branch": branch.branch_id,
                "parent": branch.parent,
                "t": t,
                "entropy": h,
                "delta_entropy": dh,
                "p_branch": p,
                "n_candidates": len(dist.candidates),
                "branched": fork,
                "forked": False,
                **record,
            })
            if branch.episode.terminated:
                _leaf(branch, "terminated-by-stop")
            else:
                survivors.append(branch)

            if child is not None:
                child_record = _commit(child, t, alt_line)
                tree.events.append({
                    "type": "step",
                    "branch": child.branch_id,
                    "parent": child.parent,
                    "t": t,
                    "entropy": h,
                    "delta_entropy": dh,
                    "p_branch": None,
                    "n_candidates": len(dist.candidates),
                    "branched": False,
                    "forked": True,
                    **child_record,
                })
                if child.episode.terminated:
                    _leaf(child, "terminated-by-stop")
                else:
                    spawned.append(child)
        active = survivors + spawned

    for branch in active:
        _leaf(branch, "step-budget-exhausted")
    return tree


def branch_lineage(tree: RolloutTree, branch_id: int) -> list[dict]:
    """Step records along the root-to-branch path, in execution order."""
    by_branch: dict[int, list[dict]] = {}
    for e in tree.steps:
        by_branch.setdefault(e["branch"], []).append(e)
    for records in by_branch.values():
        records.sort(key=lambda e: e["t"])
    parent_of = {e["branch"]: e["parent"] for e in tree.steps}

    path: list[dict] = []
    current = branch_id
    cutoff = math.inf
    while current is not None:
        own = [e for e in by_branch.get(current, []) if e["t"] < cutoff]
        path = own + path
        if own:
            cutoff = own[0]["t"]
        current = parent_of.get(current)
    return path
