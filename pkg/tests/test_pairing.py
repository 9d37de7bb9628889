import json
import random

import pytest

from graphwright import (
    CorrectnessMatrix,
    QueryGroup,
    canonical_workflow,
    eligible_workflows,
    emit_sft_records,
    final_reward,
    group_by_normalization,
    load_groups,
    load_matrix_csv,
    pair_groups,
    replay,
    synthesize_matrix,
)
from graphwright.errors import NoEligibleWorkflow
from conftest import PROGRAM_6, PROGRAM_7, PROGRAM_MIN, make_trace
from oracles import brute_force_canonical


def matrix_of(rows):
    return CorrectnessMatrix(entries=dict(rows), provenance="test")


TIE_MATRIX = matrix_of({
    ("w1", "q1"): 1, ("w1", "q2"): 1, ("w1", "q3"): 0,
    ("w2", "q1"): 0, ("w2", "q2"): 1, ("w2", "q3"): 1,
    ("w3", "q1"): 0, ("w3", "q2"): 0, ("w3", "q3"): 1,
})
GROUP3 = QueryGroup("g", ("q1", "q2", "q3"))


def test_eligible_requires_one_success():
    m = matrix_of({("w1", "q1"): 1, ("w1", "q2"): 0, ("w2", "q1"): 0, ("w2", "q2"): 0})
    assert eligible_workflows(QueryGroup("g", ("q1", "q2")), m) == {"w1"}


def test_eligible_empty_when_no_successes():
    m = matrix_of({("w1", "q1"): 0})
    assert eligible_workflows(QueryGroup("g", ("q1",)), m) == set()


def test_eligible_full_pool():
    m = matrix_of({("w1", "q1"): 1, ("w2", "q2"): 1})
    assert eligible_workflows(QueryGroup("g", ("q1", "q2")), m) == {"w1", "w2"}


def test_canonical_tie_breaks_to_smallest_id():
    # sums are 2, 2, 1: w1 and w2 tie, w1 wins
    assert canonical_workflow(GROUP3, TIE_MATRIX) == "w1"


def test_canonical_single_eligible():
    m = matrix_of({("wx", "q1"): 1})
    assert canonical_workflow(QueryGroup("g", ("q1",)), m) == "wx"


def test_canonical_raises_without_eligible():
    with pytest.raises(NoEligibleWorkflow):
        canonical_workflow(QueryGroup("g", ("q1",)), matrix_of({("w", "q1"): 0}))


def test_canonical_matches_brute_force_scan():
    rng = random.Random(7)
    for _ in range(50):
        n_w, n_q = rng.randint(1, 20), rng.randint(1, 20)
        workflows = [f"w{i:02d}" for i in range(n_w)]
        queries = [f"q{i:02d}" for i in range(n_q)]
        entries = {
            (w, q): rng.randint(0, 1) for w in workflows for q in queries
        }
        group = QueryGroup("g", tuple(queries))
        expected = brute_force_canonical(queries, entries)
        if expected is None:
            with pytest.raises(NoEligibleWorkflow):
                canonical_workflow(group, matrix_of(entries))
        else:
            assert canonical_workflow(group, matrix_of(entries)) == expected


def test_canonical_invariant_to_entry_order():
    items = list(TIE_MATRIX.entries.items())
    rng = random.Random(3)
    for _ in range(5):
        rng.shuffle(items)
        assert canonical_workflow(GROUP3, matrix_of(items)) == "w1"


def test_matrix_csv_round_trip():
    text = "workflow_id,query_id,score\nw1,q1,1\nw1,q2,0\n"
    m = load_matrix_csv(text)
    assert m.score("w1", "q1") == 1 and m.score("w1", "q2") == 0
    with pytest.raises(ValueError):
        load_matrix_csv("workflow_id,query_id,score\nw1,q1,2\n")


def test_groups_json_partition_enforced():
    ok = json.dumps({"groups": [
        {"group_id": "a", "query_ids": ["q1"]},
        {"group_id": "b", "query_ids": ["q2", "q3"]},
    ]})
    assert [g.group_id for g in load_groups(ok)] == ["a", "b"]
    bad = json.dumps({"groups": [
        {"group_id": "a", "query_ids": ["q1"]},
        {"group_id": "b", "query_ids": ["q1"]},
    ]})
    with pytest.raises(ValueError):
        load_groups(bad)


def test_pair_groups_emission_modes():
    pairs = pair_groups([GROUP3], TIE_MATRIX, emission="all")
    assert [(p["query_id"], p["workflow_id"]) for p in pairs] == [
        ("q1", "w1"), ("q2", "w1"), ("q3", "w1")]
    rep = pair_groups([GROUP3], TIE_MATRIX, emission="representative")
    assert [(p["query_id"], p["workflow_id"]) for p in rep] == [("q1", "w1")]


def test_group_by_normalization():
    groups = group_by_normalization({
        "q1": "A cat  on a mat",
        "q2": "a cat on a mat",
        "q3": "something else",
    })
    by_members = {g.query_ids for g in groups}
    assert ("q1", "q2") in by_members and ("q3",) in by_members


def test_synthesize_matrix_uses_executability_and_family(mini_sd, complete_graph):
    from graphwright import empty_graph
    m = synthesize_matrix(
        {"good": (complete_graph, "t2i"), "empty": (empty_graph(), "t2i")},
        {"q_t2i": "t2i", "q_v2v": "v2v"},
        mini_sd,
    )
    assert m.score("good", "q_t2i") == 1
    assert m.score("good", "q_v2v") == 0
    assert m.score("empty", "q_t2i") == 0


# --- SFT emission ------------------------------------------------------------------


def test_emit_valid_triple(mini_sd, complete_graph):
    report = emit_sft_records(
        [("a cat", make_trace(PROGRAM_7), complete_graph)], mini_sd)
    assert report.emitted == 1 and not report.rejected
    record = report.records[0]
    assert set(record) == {"instruction", "query", "Reasoning", "workflow"}
    assert record["workflow"] == PROGRAM_7
    assert record["query"] == "a cat"


def test_emit_rejects_workflow_target_mismatch(mini_sd, complete_graph):
    # PROGRAM_6 omits the negative-conditioning encoder present in the target
    report = emit_sft_records(
        [("q", make_trace(PROGRAM_6), complete_graph)], mini_sd)
    assert report.emitted == 0
    assert report.rejected[0][1] == "TraceTargetMismatch"


def test_emit_rejects_invalid_trace(mini_sd, complete_graph):
    report = emit_sft_records([("q", "garbage", complete_graph)], mini_sd)
    assert report.rejected[0][1] == "InvalidTrace"


def test_emit_empty_input(mini_sd):
    report = emit_sft_records([], mini_sd)
    assert report.emitted == 0 and report.records == () and report.rejected == ()


def test_emitted_records_are_self_consistent(mini_sd, complete_graph, minimal_graph):
    triples = [
        ("a", make_trace(PROGRAM_7), complete_graph),
        ("b", make_trace(PROGRAM_MIN), minimal_graph),
    ]
    report = emit_sft_records(triples, mini_sd)
    assert report.emitted == 2
    for record in report.records:
        episode, outcomes = replay(record["workflow"], mini_sd)
        assert all(o.accepted for o in outcomes)
        breakdown = final_reward(record["Reasoning"], episode.graph, mini_sd)
        assert breakdown.r_f == 0 and breakdown.r_c == 0
    lines = report.to_jsonl().strip().splitlines()
    assert len(lines) == 2 and all(json.loads(l) for l in lines)
