"""Exact solvers for transition-independent multi-agent MDPs.

Builds per-agent conditional return graphs over a reward partition, derives
admissible return bounds from them and runs a decoupling branch-and-bound
policy search, verified against a plain dynamic-programming oracle. Ships
benchmark generators, stable file formats and a batch CLI.
"""

from .baselines import (
    DpResult,
    StateSpaceBudgetExceeded,
    best_open_loop_value,
    dp_solve,
    evaluate_policy,
)
from .crg import (
    ConditionalReturnGraph,
    CrgError,
    InstanceIndex,
    RewardPartition,
    SizeAudit,
    annotate_bounds,
    build_crg,
    build_crgs,
    cri_pair_exhaustive,
    dependent_actions,
    influence_set,
    interaction_reachable,
    local_cri,
    lookup_transition_reward,
    partition_rewards,
    size_audit,
)
from .domains import (
    GeneratorParams,
    MaintenanceTask,
    MppInstance,
    compile_mpp,
    example_two_agent,
    gen_coordint,
    gen_pyra,
    gen_random_mpp,
)
from .formats import (
    FormatError,
    ResultRow,
    export_dot,
    read_instance,
    write_instance,
    write_results,
)
from .model import (
    ExecutionSequence,
    LocalAction,
    LocalMdp,
    LocalState,
    RewardFunction,
    TiMmdpInstance,
    Violation,
    enumerate_successors,
    joint_transition_probability,
    sequence_return,
    total_reward,
    validate_instance,
)
from .search import (
    Policy,
    SearchConfig,
    SolveReport,
    TimeBudgetExceeded,
    core_solve,
    crg_ps_solve,
    extract_policy,
    independent_components,
    joint_action_bounds,
)

__version__ = "0.1.0"
