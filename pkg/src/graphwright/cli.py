"""Operator CLI: validate, rollout, score, pair, advantages, serve.

Exit codes: 0 success/accepted, 1 domain rejection, 2 usage or IO error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import GraphwrightError, GroupTooSmall, NoEligibleWorkflow
from .graph import deserialize, final_check, graph_from_dict
from .pairing import load_groups, load_matrix_csv, pair_groups
from .policies import ScriptedPolicy, SoftmaxScoredPolicy, UniformAdmissiblePolicy
from .registry import resolve_registry
from .reward import final_reward, group_advantages
from .rollout import BranchConfig, run_rollouts


def _load_registry_or_die(spec: str):
    try:
        return resolve_registry(spec)
    except GraphwrightError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _read_or_die(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Typed workflow construction engine."""


@main.command()
@click.argument("workflow_path")
@click.argument("registry_spec")
def validate(workflow_path: str, registry_spec: str):
    """Whole-graph executability check for a workflow JSON file."""
    registry = _load_registry_or_die(registry_spec)
    text = _read_or_die(workflow_path)
    try:
        graph = deserialize(text, registry)
    except GraphwrightError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    outcome = final_check(graph, registry)
    click.echo(json.dumps(
        {"executable": outcome.accepted,
         "diagnostics": [d.to_dict() for d in outcome.diagnostics]},
        sort_keys=True))
    sys.exit(0 if outcome.accepted else 1)


@main.command()
@click.argument("query_path")
@click.argument("registry_spec")
@click.option("--policy", "policy_spec", default="uniform", show_default=True,
              help="scripted:<file> | uniform | softmax:<target.json>")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--alpha", default=0.5, show_default=True, type=float)
@click.option("--beta", default=0.2, show_default=True, type=float)
@click.option("--tau-b", default=0.5, show_default=True, type=float)
@click.option("--branch-budget", default=4, show_default=True, type=int)
@click.option("--max-steps", default=16, show_default=True, type=int)
@click.option("--top-k", default=8, show_default=True, type=int)
@click.option("--branch-decision", default="threshold", show_default=True,
              type=click.Choice(["threshold", "bernoulli"]))
@click.option("--out", "out_path", default=None, help="write JSONL here instead of stdout")
def rollout(query_path, registry_spec, policy_spec, seed, alpha, beta, tau_b,
            branch_budget, max_steps, top_k, branch_decision, out_path):
    """Run one branching rollout episode and emit the tree as JSONL."""
    registry = _load_registry_or_die(registry_spec)
    query = _read_or_die(query_path).strip()
    cfg = BranchConfig(alpha=alpha, beta=beta, tau_b=tau_b,
                       branch_budget=branch_budget, max_steps=max_steps,
                       top_k=top_k, seed=seed, branch_decision=branch_decision)
    kind, _, arg = policy_spec.partition(":")
    if kind == "scripted":
        lines = [l for l in _read_or_die(arg).splitlines() if l.strip()]
        policy = ScriptedPolicy(lines)
    elif kind == "uniform":
        policy = UniformAdmissiblePolicy(registry, top_k=top_k)
    elif kind == "softmax":
        try:
            target = graph_from_dict(json.loads(_read_or_die(arg)), registry)
        except (json.JSONDecodeError, GraphwrightError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        policy = SoftmaxScoredPolicy(registry, target, top_k=top_k)
    else:
        click.echo(f"error: unknown policy {policy_spec!r}", err=True)
        sys.exit(2)
    tree = run_rollouts(query, registry, policy, cfg)
    data = tree.to_jsonl()
    if out_path:
        Path(out_path).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)


@main.command()
@click.argument("trace_path")
@click.argument("target_path")
@click.argument("registry_spec")
def score(trace_path: str, target_path: str, registry_spec: str):
    """Hierarchical reward of a trace document against a target workflow."""
    registry = _load_registry_or_die(registry_spec)
    trace = _read_or_die(trace_path)
    try:
        target = deserialize(_read_or_die(target_path), registry)
        breakdown = final_reward(trace, target, registry)
    except GraphwrightError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(json.dumps(breakdown.to_dict(), sort_keys=True))
    sys.exit(0 if breakdown.final > -1.0 else 1)


@main.command()
@click.argument("matrix_csv")
@click.argument("groups_json")
@click.option("--emission", default="all", show_default=True,
              type=click.Choice(["all", "representative"]))
def pair(matrix_csv: str, groups_json: str, emission: str):
    """Select the canonical workflow per query group and emit pairs."""
    try:
        matrix = load_matrix_csv(_read_or_die(matrix_csv))
        groups = load_groups(_read_or_die(groups_json))
    except (ValueError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    try:
        for record in pair_groups(groups, matrix, emission=emission):
            click.echo(json.dumps(record, sort_keys=True))
    except NoEligibleWorkflow as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.argument("rewards_jsonl")
def advantages(rewards_jsonl: str):
    """Group-relative advantages for one group of trajectory rewards."""
    records = []
    for line in _read_or_die(rewards_jsonl).splitlines():
        if line.strip():
            records.append(json.loads(line))
    try:
        advs = group_advantages([float(r["reward"]) for r in records])
    except GroupTooSmall as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except (KeyError, TypeError, ValueError) as exc:
        click.echo(f"error: bad rewards record: {exc}", err=True)
        sys.exit(2)
    for record, adv in zip(records, advs):
        click.echo(json.dumps({**record, "advantage": adv}, sort_keys=True))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8640, show_default=True, type=int)
@click.option("--ttl", default=3600.0, show_default=True, type=float,
              help="idle session time-to-live in seconds")
def serve(host: str, port: int, ttl: float):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ttl_seconds=ttl), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
