"""Topology-aware dispatch for expert-parallel Mixture-of-Experts training.

Modules: ``topology`` (network descriptions, link profiles), ``commcost``
(alpha-beta all-to-all cost), ``optimizer`` (target dispatch patterns),
``gate`` (top-k routing and auxiliary losses), ``trainer`` (desk-scale MoE
experiments) and ``cli``.
"""
from .commcost import (
    BYTES_PER_MB,
    CostReport,
    DispatchConfig,
    DispatchMatrix,
    even_pattern,
    fit_profile,
    pair_cost,
    t_comm_lower,
)
from .gate import (
    CapacityMode,
    CapacityPolicy,
    GateState,
    Normalization,
    RoutingResult,
    gate_forward,
    loss_balance,
    loss_topo,
    penalty_weights,
    topk_route,
)
from .kernels import BACKEND
from .optimizer import (
    InfeasibleError,
    TargetPattern,
    check_constraints,
    lp_oracle,
    solve,
    target_closed_form,
    target_homogeneous,
)
from .topology import (
    HierarchicalProfile,
    LinkProfile,
    Topology,
    TopologyError,
    TopologyKind,
    group_of,
    merge_asymmetric,
    parse_topology,
    ring_effective_profile,
    smooth_profile,
)
from .trainer import SyntheticTask, TrainConfig, TrainReport, compare_runs, emit_report, gen_synthetic, train

__version__ = "0.1.0"
