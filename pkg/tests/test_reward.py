import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphwright import (
    GroupRollout,
    StepLogProb,
    Trajectory,
    apply_edit,
    AddNode,
    empty_graph,
    final_reward,
    graph_types,
    group_advantages,
    grpo_objective_value,
    load_group_jsonl,
    parse_trace,
    recall_term,
    replay,
    score_consistency,
    score_format,
    step_kl,
)
from graphwright.errors import (
    EmptyTarget,
    GroupTooSmall,
    InvalidDistribution,
    MismatchedLengths,
)
from graphwright.reward import mentioned_type
from conftest import PROGRAM_6, PROGRAM_7, PROGRAM_MIN, make_trace
from oracles import mp_grpo_objective


# --- format gate -----------------------------------------------------------


def test_valid_document_passes_format(mini_sd):
    assert score_format(make_trace(PROGRAM_6), mini_sd) == 0


def test_missing_closing_workflow_fails(mini_sd):
    doc = make_trace(PROGRAM_6).replace("</workflow>", "")
    assert score_format(doc, mini_sd) == -1


def test_syntax_error_line_fails(mini_sd):
    doc = make_trace(PROGRAM_6[:-1] + ["SaveImage(images="])
    assert score_format(doc, mini_sd) == -1


def test_rejected_line_fails_format(mini_sd):
    # parses, but the validator rejects the mistyped edge
    bad = PROGRAM_MIN[:-1] + ["SaveImage(images=emptylatent_0_latent)"]
    assert score_format(make_trace(bad), mini_sd) == -1


def test_incomplete_workflow_fails_format(mini_sd):
    assert score_format(make_trace(PROGRAM_6[:-1]), mini_sd) == -1


def test_traceless_reasoning_fails_format(mini_sd):
    doc = "<thinking>no steps here</thinking>\n<workflow>\n" + "\n".join(PROGRAM_6) + "\n</workflow>"
    assert score_format(doc, mini_sd) == -1


# --- consistency gate ----------------------------------------------------------


def test_consistency_ok_when_all_types_mentioned(mini_sd):
    trace = parse_trace(make_trace(PROGRAM_6))
    assert score_consistency(trace, mini_sd) == 0


def test_consistency_fails_on_unmentioned_type(mini_sd):
    # every step except the Decode line: Decode appears only in the workflow
    steps = [l for l in PROGRAM_6 if "Decode(" not in l]
    from graphwright import render_trace, TraceStep
    doc = render_trace([TraceStep(l) for l in steps], PROGRAM_6)
    trace = parse_trace(doc)
    assert score_consistency(trace, mini_sd) == -1


def test_mentioned_type_extraction():
    assert mentioned_type("a, b = CheckpointLoader()") == "CheckpointLoader"
    assert mentioned_type("SaveImage(images=x)") == "SaveImage"
    assert mentioned_type("connect(a, b.c)") is None
    assert mentioned_type("set(a.b, 1)") is None
    assert mentioned_type("STOP") is None


def test_consistency_is_exact_token_match(mini_sd):
    # prose mentions are not enough: the type must sit at the call position
    steps = [l for l in PROGRAM_6 if "Decode(" not in l]
    from graphwright import render_trace, TraceStep
    doc = render_trace(
        [TraceStep(l) for l in steps], PROGRAM_6,
        preamble="we will surely need a Decode node somewhere")
    assert score_consistency(parse_trace(doc), mini_sd) == -1


# --- recall ------------------------------------------------------------------


def _graph_of_types(registry, type_names):
    g = empty_graph()
    for t in type_names:
        g = apply_edit(g, AddNode(t), registry)
    return g


def test_recall_partial(mini_sd):
    g_t = _graph_of_types(mini_sd, ["CheckpointLoader", "EmptyLatent"])
    g_star = _graph_of_types(mini_sd, ["CheckpointLoader", "EmptyLatent", "Decode"])
    assert recall_term(g_t, g_star) == pytest.approx(2 / 3 - 1, abs=1e-15)


def test_recall_ignores_precision(mini_sd):
    g_t = _graph_of_types(mini_sd, ["CheckpointLoader", "EmptyLatent", "Decode", "Sampler"])
    g_star = _graph_of_types(mini_sd, ["CheckpointLoader", "EmptyLatent"])
    assert recall_term(g_t, g_star) == 0.0


def test_recall_disjoint(mini_sd):
    g_t = _graph_of_types(mini_sd, ["Sampler"])
    g_star = _graph_of_types(mini_sd, ["CheckpointLoader", "Decode"])
    assert recall_term(g_t, g_star) == -1.0


def test_recall_duplicates_collapse(mini_sd):
    g_t = _graph_of_types(mini_sd, ["TextEncode", "TextEncode", "TextEncode"])
    g_star = _graph_of_types(mini_sd, ["TextEncode", "Sampler"])
    assert graph_types(g_t) == {"TextEncode"}
    assert recall_term(g_t, g_star) == pytest.approx(0.5 - 1)


def test_recall_empty_target(mini_sd):
    with pytest.raises(EmptyTarget):
        recall_term(empty_graph(), empty_graph())


# --- final reward ---------------------------------------------------------------


def test_format_failure_dominates(mini_sd, complete_graph):
    breakdown = final_reward("not a trace at all", complete_graph, mini_sd)
    assert breakdown.r_f == -1 and breakdown.final == -1.0


def test_worked_two_thirds_case(mini_sd, complete_graph):
    # minimal pipeline covers 4 of the 6 target types: recall 2/3
    breakdown = final_reward(make_trace(PROGRAM_MIN), complete_graph, mini_sd)
    assert breakdown.r_f == 0 and breakdown.r_c == 0
    assert breakdown.recall_term == pytest.approx(-1 / 3, abs=1e-15)
    assert abs(breakdown.final - 8 / 9) <= 1e-12


def test_perfect_recall_scores_one(mini_sd, complete_graph):
    breakdown = final_reward(make_trace(PROGRAM_7), complete_graph, mini_sd)
    assert breakdown.final == 1.0


def test_consistency_failure_gates(mini_sd, complete_graph):
    steps = [l for l in PROGRAM_6 if "Decode(" not in l]
    from graphwright import render_trace, TraceStep
    doc = render_trace([TraceStep(l) for l in steps], PROGRAM_6)
    breakdown = final_reward(doc, complete_graph, mini_sd)
    assert breakdown.r_f == 0 and breakdown.r_c == -1 and breakdown.final == -1.0


def test_reward_monotone_in_covered_types(mini_sd, complete_graph):
    partial = final_reward(make_trace(PROGRAM_MIN), complete_graph, mini_sd).final
    fuller = final_reward(make_trace(PROGRAM_6), complete_graph, mini_sd).final
    full = final_reward(make_trace(PROGRAM_7), complete_graph, mini_sd).final
    assert partial <= fuller <= full == 1.0


# --- advantages --------------------------------------------------------------------


def test_advantages_basic():
    assert group_advantages([1.0, 0.5, 0.0]) == pytest.approx([0.5, 0.0, -0.5])


def test_advantages_all_equal():
    assert group_advantages([0.7, 0.7, 0.7]) == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    assert group_advantages([1, 1, 1, 1]) == [0.0, 0.0, 0.0, 0.0]


def test_advantages_shift_invariant():
    base = group_advantages([1.0, 0.2, -0.4])
    shifted = group_advantages([1.0 + 5.5, 0.2 + 5.5, -0.4 + 5.5])
    assert shifted == pytest.approx(base, abs=1e-12)


def test_advantages_need_two():
    with pytest.raises(GroupTooSmall):
        group_advantages([1.0])


@given(st.lists(st.floats(min_value=-1, max_value=1), min_size=2, max_size=16))
@settings(max_examples=200)
def test_advantages_zero_mean(rewards):
    assert abs(math.fsum(group_advantages(rewards))) <= 1e-12


# --- GRPO objective -----------------------------------------------------------------


def _step(logp, cur, ref):
    return StepLogProb(logprob_current=logp, logprob_reference=logp,
                       dist_current=tuple(cur), dist_reference=tuple(ref))


def test_kl_zero_for_identical():
    assert step_kl(_step(-1.0, (0.3, 0.7), (0.3, 0.7))) == 0.0


def test_kl_positive_for_different():
    assert step_kl(_step(-1.0, (0.9, 0.1), (0.5, 0.5))) > 0.0


def test_kl_rejects_zero_reference_mass():
    with pytest.raises(InvalidDistribution):
        step_kl(_step(-1.0, (0.5, 0.5), (1.0, 0.0)))


def test_kl_rejects_mismatched_lengths():
    with pytest.raises(MismatchedLengths):
        step_kl(_step(-1.0, (0.5, 0.5), (0.5, 0.3, 0.2)))


def test_identical_policies_reduce_to_weighted_logprob():
    group = GroupRollout((
        Trajectory(1.0, (_step(-0.5, (0.6, 0.4), (0.6, 0.4)),)),
        Trajectory(0.0, (_step(-0.9, (0.6, 0.4), (0.6, 0.4)),)),
    ))
    value = grpo_objective_value(group, lambda_kl=0.5)
    assert value == pytest.approx((0.5 * -0.5 + -0.5 * -0.9) / 2)


def test_zero_advantages_leave_only_kl_penalty():
    step = StepLogProb(-1.0, -1.2, (0.8, 0.2), (0.5, 0.5))
    group = GroupRollout((Trajectory(0.3, (step,)), Trajectory(0.3, (step,))))
    value = grpo_objective_value(group, lambda_kl=0.7)
    assert value == pytest.approx(-0.7 * step_kl(step))


def test_hand_built_group_matches_high_precision_oracle():
    rng = random.Random(42)

    def rand_dist(n):
        w = [rng.random() + 1e-3 for _ in range(n)]
        s = math.fsum(w)
        return tuple(x / s for x in w)

    trajectories = []
    raw = []
    for _ in range(2):
        reward = rng.uniform(-1, 1)
        steps, raw_steps = [], []
        for _ in range(2):
            cur, ref = rand_dist(3), rand_dist(3)
            logp = math.log(rng.uniform(0.05, 1.0))
            steps.append(StepLogProb(logp, logp - 0.1, cur, ref))
            raw_steps.append((logp, cur, ref))
        trajectories.append(Trajectory(reward, tuple(steps)))
        raw.append((reward, raw_steps))
    group = GroupRollout(tuple(trajectories))
    got = grpo_objective_value(group, lambda_kl=0.01)
    want = mp_grpo_objective([r for r, _ in raw], [s for _, s in raw], 0.01)
    assert abs(got - want) <= 1e-10


def test_group_jsonl_loader_sums_token_lists():
    data = (
        '{"reward": 1.0, "steps": [{"logprob_current": [-0.5, -0.25], '
        '"logprob_reference": -0.8, "dist_current": [0.5, 0.5], "dist_reference": [0.5, 0.5]}]}\n'
        '{"reward": 0.0, "steps": []}\n'
    )
    group = load_group_jsonl(data)
    assert group.trajectories[0].steps[0].logprob_current == pytest.approx(-0.75)
    assert len(group.trajectories) == 2
