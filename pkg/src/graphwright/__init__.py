"""graphwright: execution-grounded construction of typed node-graph workflows."""

from .actions import (
    ActionEnv,
    ParsedAction,
    TraceDocument,
    TraceStep,
    parse_action,
    parse_trace,
    render_trace,
    render_workflow_lines,
)
from .episode import Episode, replay
from .graph import (
    AddEdge,
    AddNode,
    Edge,
    GraphEdit,
    NodeInstance,
    RemoveEdge,
    SetParam,
    Stop,
    WorkflowGraph,
    apply_edit,
    deserialize,
    digest,
    empty_graph,
    final_check,
    graph_from_dict,
    graph_to_dict,
    serialize,
    topological_order,
)
from .pairing import (
    CorrectnessMatrix,
    QueryGroup,
    canonical_workflow,
    eligible_workflows,
    emit_sft_records,
    group_by_normalization,
    load_groups,
    load_matrix_csv,
    pair_groups,
    synthesize_matrix,
)
from .policies import (
    PolicyDistribution,
    PolicyState,
    ScriptedPolicy,
    SoftmaxScoredPolicy,
    StdioProcessPolicy,
    UniformAdmissiblePolicy,
    enumerate_admissible,
)
from .registry import (
    NodeTypeDef,
    ParamDomain,
    SchemaRegistry,
    load_builtin,
    load_registry,
    lookup,
    registry_from_dict,
    registry_to_dict,
    resolve_registry,
)
from .reward import (
    GroupRollout,
    RewardBreakdown,
    StepLogProb,
    Trajectory,
    final_reward,
    graph_types,
    group_advantages,
    grpo_objective_value,
    load_group_jsonl,
    recall_term,
    score_consistency,
    score_format,
    step_kl,
)
from .rollout import (
    BranchConfig,
    RolloutTree,
    branch_lineage,
    branch_probability,
    child_seed,
    decide_branch,
    delta_entropy,
    entropy,
    run_rollouts,
    splitmix64,
)
from .validation_types import Diagnostic, ValidationOutcome
from .validator import (
    History,
    HistoryRecord,
    check_comp,
    check_int,
    repair_loop,
    transition,
    update_history,
)

__version__ = "0.1.0"
