"""Target dispatch patterns that equalize per-link communication cost."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .commcost import DispatchConfig, DispatchMatrix, t_comm_lower
from .topology import (
    HierarchicalProfile,
    LinkProfile,
    Topology,
    TopologyKind,
    merge_asymmetric,
    ring_effective_profile,
    smooth_profile,
)

LP_MAX_VARIABLES = 256


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Feasibility:
    row_residual: float
    col_residual: float

    def ok(self, tol: float = 1e-9) -> bool:
        return self.row_residual < tol and self.col_residual < tol


@dataclass(frozen=True)
class TargetPattern:
    c_hat: np.ndarray
    source: str
    feasibility: Feasibility
    config: DispatchConfig
    objective_us: float | None = None
    notes: tuple[str, ...] = field(default=())

    def as_dispatch(self) -> DispatchMatrix:
        return DispatchMatrix(self.c_hat, self.config)

    def normalized(self) -> np.ndarray:
        """Rows scaled to sum to one (destination shares per process)."""
        return self.c_hat / self.c_hat.sum(axis=1, keepdims=True)


def check_constraints(c, config: DispatchConfig) -> Feasibility:
    """Worst relative deviation from the send-size and expert-balance constraints."""
    c = c.c_hat if isinstance(c, TargetPattern) else c
    c = c.c if isinstance(c, DispatchMatrix) else np.asarray(c, dtype=np.float64)
    sent = config.sent_per_process
    per_expert = config.per_expert
    row = np.abs(c.sum(axis=1) - sent).max() / sent
    col = np.abs(c.sum(axis=0) - per_expert).max() / per_expert
    return Feasibility(float(row), float(col))


def _pattern(c_hat, source, config, profile=None, objective=None, notes=()):
    if objective is None and profile is not None:
        objective = t_comm_lower(profile, DispatchMatrix(c_hat, config)).bottleneck_us
    c_hat = np.array(c_hat, dtype=np.float64)
    c_hat.setflags(write=False)
    return TargetPattern(
        c_hat=c_hat,
        source=source,
        feasibility=check_constraints(c_hat, config),
        config=config,
        objective_us=objective,
        notes=tuple(notes),
    )


def target_homogeneous(config: DispatchConfig, profile: LinkProfile | None = None) -> TargetPattern:
    """Even split k*S/N, optimal when every link is alike."""
    if profile is not None and not profile.is_homogeneous():
        raise ValueError("profile is not homogeneous")
    c_hat = np.full((config.P, config.N), config.k * config.S / config.N)
    return _pattern(c_hat, "closed_form", config, profile)


def _rows_are_permutations(beta: np.ndarray) -> bool:
    ref = np.sort(beta[0])
    return all(np.array_equal(np.sort(row), ref) for row in beta[1:])


def target_closed_form(profile: LinkProfile, config: DispatchConfig) -> TargetPattern:
    """Bandwidth-proportional pattern with latency neglected.

    Process ``i`` sends device ``j`` a share proportional to ``1/beta_ij``,
    split evenly over the ``E`` experts hosted there, so every link from ``i``
    finishes at the same time.
    """
    if profile.size != config.P:
        raise ValueError(f"profile covers {profile.size} devices, config has {config.P}")
    beta = profile.beta
    if np.any(beta <= 0):
        raise ValueError("closed form needs strictly positive beta, including the diagonal")
    if not (
        isinstance(profile, HierarchicalProfile)
        or profile.origin == "ring"
        or profile.is_homogeneous()
        or _rows_are_permutations(beta)
    ):
        raise ValueError(
            "raw profile is not hierarchical; merge and smooth the topology first"
        )
    if np.all(beta == beta[0, 0]):
        return target_homogeneous(config, profile)

    inv = 1.0 / beta
    device_share = config.k * config.S / (config.E * inv.sum(axis=1, keepdims=True) * beta)
    c_hat = np.repeat(device_share, config.E, axis=1)
    return _pattern(c_hat, "closed_form", config, profile)


def lp_oracle(
    profile: LinkProfile, config: DispatchConfig, include_alpha: bool = True
) -> TargetPattern:
    """Solve the min-max exchange problem exactly as a linear program.

    Variables are the P*N entries of ``c`` plus the epigraph bound ``t``;
    every pair cost must stay below ``t`` while rows and columns meet the
    send-size and expert-balance constraints.
    """
    P, N, E = config.P, config.N, config.E
    if profile.size != P:
        raise ValueError(f"profile covers {profile.size} devices, config has {P}")
    if P * N > LP_MAX_VARIABLES:
        raise ValueError(f"LP oracle limited to P*N <= {LP_MAX_VARIABLES}, got {P * N}")
    n_var = P * N + 1
    tmb = config.token_mb
    alpha = profile.alpha if include_alpha else np.zeros_like(profile.alpha)

    A_ub = np.zeros((P * P, n_var))
    b_ub = np.empty(P * P)
    for i in range(P):
        for j in range(P):
            row = i * P + j
            A_ub[row, i * N + j * E:i * N + (j + 1) * E] = profile.beta[i, j] * tmb
            A_ub[row, -1] = -1.0
            b_ub[row] = -alpha[i, j]

    A_eq = np.zeros((P + N, n_var))
    b_eq = np.empty(P + N)
    for i in range(P):
        A_eq[i, i * N:(i + 1) * N] = 1.0
        b_eq[i] = config.sent_per_process
    for e in range(N):
        A_eq[P + e, e:P * N:N] = 1.0
        b_eq[P + e] = config.per_expert

    cost = np.zeros(n_var)
    cost[-1] = 1.0
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(0, None)] * (P * N) + [(None, None)],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        raise InfeasibleError(res.message)
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    c = np.clip(res.x[:-1].reshape(P, N), 0.0, None)
    return _pattern(c, "lp_oracle", config, objective=float(res.fun))


@dataclass(frozen=True)
class SolveResult:
    pattern: TargetPattern
    profile: LinkProfile
    topology: Topology
    oracle: TargetPattern | None = None

    @property
    def oracle_gap(self) -> float | None:
        """Relative excess of the closed-form bottleneck over the LP optimum."""
        if self.oracle is None or self.pattern.source == "lp_oracle":
            return None
        achieved = t_comm_lower(self.profile, self.pattern.as_dispatch()).bottleneck_us
        return achieved / self.oracle.objective_us - 1.0


def solve(
    topo: Topology,
    raw: LinkProfile | None,
    config: DispatchConfig,
    exact: bool = False,
    with_oracle: bool = False,
) -> SolveResult:
    """Full pipeline: merge asymmetric trees, smooth, then solve.

    ``exact`` returns the LP optimum (latency included) as the pattern;
    ``with_oracle`` solves the LP alongside the closed form to report the gap.
    """
    notes = []
    if topo.kind is TopologyKind.ASYMMETRIC_TREE:
        merged = merge_asymmetric(topo)
        notes.append(
            f"merged asymmetric tree {topo.structure_as_list()} into {merged.structure_as_list()}"
        )
        topo = merged
    if topo.kind is TopologyKind.RING:
        if raw is None:
            profile = ring_effective_profile(topo)
        else:
            profile = LinkProfile(raw.alpha, raw.beta, raw.self_beta_floor, origin="ring")
    else:
        if raw is None:
            raise ValueError(f"{topo.kind.value} topology needs a measured profile")
        profile = smooth_profile(topo, raw)

    if exact:
        pattern = lp_oracle(profile, config)
        oracle = pattern
    else:
        if profile.is_homogeneous():
            pattern = target_homogeneous(config, profile)
        else:
            pattern = target_closed_form(profile, config)
        oracle = lp_oracle(profile, config) if with_oracle else None
    if notes:
        pattern = TargetPattern(
            pattern.c_hat, pattern.source, pattern.feasibility, pattern.config,
            pattern.objective_us, tuple(notes) + pattern.notes,
        )
    return SolveResult(pattern, profile, topo, oracle)
