"""Top-k gate, capacity enforcement and the auxiliary routing losses.

Arrays carry a leading process axis: probabilities are ``(P, S, N)``,
counts and mean probabilities ``(P, N)``. A 2-D ``(S, N)`` input is read as
a single process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels


class CapacityMode(str, Enum):
    NONE = "none"
    GLOBAL = "global"
    LOCAL = "local"
    LOCAL_PROPORTIONAL = "local_proportional"


class Normalization(str, Enum):
    SUM = "sum_norm"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class GateState:
    W: np.ndarray
    k: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.W.ndim != 2:
            raise ValueError("gate weights must be a d x N matrix")
        if not 1 <= self.k <= self.W.shape[1]:
            raise ValueError(f"k={self.k} outside 1..{self.W.shape[1]}")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("gate weights must be finite")

    @classmethod
    def init(cls, d: int, N: int, k: int = 1, seed: int = 0, scale: float = 0.1) -> "GateState":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, size=(d, N)), k, seed)


@dataclass(frozen=True)
class CapacityPolicy:
    mode: CapacityMode = CapacityMode.NONE
    capacity_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", CapacityMode(self.mode))
        if self.capacity_factor < 1.0:
            raise ValueError("capacity_factor must be at least 1")

    def expert_capacity(self, k: int, S: int, P: int, N: int) -> int:
        """Tokens one expert may take per step, summed over processes."""
        return int(math.ceil(self.capacity_factor * k * S * P / N - 1e-9))


@dataclass(frozen=True)
class RoutingResult:
    experts: np.ndarray  # (P, S, k) selected experts, best first
    scores: np.ndarray  # (P, S, k) softmax probability of each selection
    kept: np.ndarray  # (P, S, k) bool, False where capacity dropped the slot
    counts: np.ndarray  # (P, N) kept tokens per expert
    mean_probs: np.ndarray  # (P, N)
    dropped: np.ndarray  # (P, N)

    @property
    def P(self) -> int:
        return self.counts.shape[0]

    @property
    def S(self) -> int:
        return self.experts.shape[1]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def gate_forward(x: np.ndarray, state: GateState) -> np.ndarray:
    """Row-wise softmax of ``x @ W``."""
    with np.errstate(over="ignore", invalid="ignore"):
        logits = x @ state.W
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("gate logits are not finite")
    return softmax(logits)


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integers proportional to ``weights`` summing to ``total``.

    Leftover units go to the largest fractional parts, lower index first on ties.
    """
    weights = np.asarray(weights, dtype=np.float64)
    share = total * weights / weights.sum()
    base = np.floor(share).astype(np.int64)
    rest = int(total - base.sum())
    if rest > 0:
        frac = share - base
        order = np.lexsort((np.arange(frac.size), -frac))
        base[order[:rest]] += 1
    return base


def local_capacities(policy: CapacityPolicy, C: int, P: int, N: int, c_hat=None) -> np.ndarray:
    """(P, N) per-process capacities that sum to ``C`` for every expert."""
    if policy.mode is CapacityMode.LOCAL:
        col = largest_remainder(np.ones(P), C)
        return np.repeat(col[:, None], N, axis=1)
    if c_hat is None:
        raise ValueError("local_proportional capacity needs a target pattern")
    c_hat = getattr(c_hat, "c_hat", c_hat)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if c_hat.shape != (P, N):
        raise ValueError(f"target pattern has shape {c_hat.shape}, expected {(P, N)}")
    out = np.empty((P, N), dtype=np.int64)
    for e in range(N):
        out[:, e] = largest_remainder(c_hat[:, e], C)
    return out


def topk_route(
    probs: np.ndarray,
    k: int,
    policy: CapacityPolicy | None = None,
    c_hat=None,
) -> RoutingResult:
    """Send every token to its ``k`` most probable experts, then apply capacity.

    Overflowing tokens are dropped lowest score first; equal scores drop the
    later token. ``global`` caps each expert across all processes, ``local``
    caps every (process, expert) pair at ``C/P`` and ``local_proportional``
    splits ``C`` over processes in proportion to the target pattern column.
    """
    policy = policy or CapacityPolicy()
    if probs.ndim == 2:
        probs = probs[None]
    P, S, N = probs.shape
    if not 1 <= k <= N:
        raise ValueError(f"k={k} outside 1..{N}")
    if policy.mode is CapacityMode.LOCAL_PROPORTIONAL and c_hat is None:
        raise ValueError("local_proportional capacity needs a target pattern")

    flat_idx, flat_val = kernels.topk_select(probs.reshape(P * S, N), k)
    experts = flat_idx.reshape(P, S, k)
    scores = flat_val.reshape(P, S, k)
    proc = np.repeat(np.arange(P), S * k)
    ex = flat_idx.ravel()

    if policy.mode is CapacityMode.NONE:
        kept = np.ones(P * S * k, dtype=bool)
    else:
        C = policy.expert_capacity(k, S, P, N)
        if policy.mode is CapacityMode.GLOBAL:
            bucket, cap = ex, np.full(N, C, dtype=np.int64)
        else:
            bucket = proc * N + ex
            cap = local_capacities(policy, C, P, N, c_hat).ravel()
        kept = kernels.capacity_keep(bucket, flat_val.ravel(), cap).astype(bool)

    total = np.bincount(proc * N + ex, minlength=P * N).reshape(P, N)
    counts = np.bincount(proc[kept] * N + ex[kept], minlength=P * N).reshape(P, N)
    return RoutingResult(
        experts=experts,
        scores=scores,
        kept=kept.reshape(P, S, k),
        counts=counts,
        mean_probs=probs.mean(axis=1),
        dropped=total - counts,
    )


def gate_values(result: RoutingResult) -> np.ndarray:
    """Combine weights per selected slot: raw probability for top-1, renormalized otherwise."""
    if result.scores.shape[-1] == 1:
        return result.scores.copy()
    return result.scores / result.scores.sum(axis=-1, keepdims=True)


def loss_balance(result: RoutingResult, S: int | None = None) -> np.ndarray:
    """Per-process load-balance loss ``sum_e m_e * c_e / S``."""
    S = result.S if S is None else S
    return (result.mean_probs * result.counts / S).sum(axis=1)


@dataclass(frozen=True)
class PenaltyWeights:
    p: np.ndarray
    normalization: Normalization = Normalization.SUM
    temperature: float | None = None


def penalty_weights(
    c_hat_row,
    normalization: Normalization | str = Normalization.SUM,
    temperature: float | None = None,
) -> PenaltyWeights:
    """Normalized reciprocal of the target volumes; slow destinations weigh more.

    Accepts one row (N,) or a whole pattern (P, N), normalized row by row.
    ``softmax`` uses temperature ``T`` (default: mean of the reciprocals).
    """
    normalization = Normalization(normalization)
    c = np.asarray(getattr(c_hat_row, "c_hat", c_hat_row), dtype=np.float64)
    if np.any(c <= 0):
        raise ValueError("penalty weights need strictly positive target volumes")
    inv = 1.0 / c
    if normalization is Normalization.SUM:
        p = inv / inv.sum(axis=-1, keepdims=True)
        return PenaltyWeights(p, normalization)
    T = inv.mean(axis=-1, keepdims=True) if temperature is None else float(temperature)
    if np.any(np.asarray(T) <= 0):
        raise ValueError("softmax temperature must be positive")
    return PenaltyWeights(softmax(inv / T), normalization, temperature)


def loss_topo(result: RoutingResult, p, N: int | None = None, P: int | None = None,
              S: int | None = None) -> np.ndarray:
    """Per-process topology loss ``N * P * sum_e p_e * m_e * c_e / S``."""
    p = getattr(p, "p", p)
    N = result.counts.shape[1] if N is None else N
    P = result.P if P is None else P
    S = result.S if S is None else S
    return N * P * (p * result.mean_probs * result.counts / S).sum(axis=1)


def aux_coefficients(result: RoutingResult, kind: str, p=None) -> np.ndarray:
    """(P, N) derivative of each process's aux loss w.r.t. its mean probabilities."""
    P, N = result.counts.shape
    frac = result.counts / result.S
    if kind == "balance":
        return frac
    if kind == "topo":
        return N * P * np.broadcast_to(getattr(p, "p", p), (P, N)) * frac
    raise ValueError(f"unknown aux loss kind {kind!r}")


def grad_aux_logits(probs: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Gradient of ``mean_i sum_e coef_ie * m_ie`` w.r.t. the gate logits.

    Counts are held fixed; only the mean probabilities carry gradient.
    """
    if probs.ndim == 2:
        probs = probs[None]
    P, S, _ = probs.shape
    g = coef[:, None, :] / (S * P)
    return probs * (g - (g * probs).sum(axis=-1, keepdims=True))


def grad_loss_topo(x: np.ndarray, state: GateState, result: RoutingResult, p,
                   probs: np.ndarray | None = None) -> np.ndarray:
    """d x N gradient of the process-averaged topology loss w.r.t. ``W``."""
    if x.ndim == 2:
        x = x[None]
    if probs is None:
        probs = gate_forward(x, state)
    dlogits = grad_aux_logits(probs, aux_coefficients(result, "topo", p))
    return np.einsum("psd,psn->dn", x, dlogits)


def grad_loss_balance(x: np.ndarray, state: GateState, result: RoutingResult,
                      probs: np.ndarray | None = None) -> np.ndarray:
    if x.ndim == 2:
        x = x[None]
    if probs is None:
        probs = gate_forward(x, state)
    dlogits = grad_aux_logits(probs, aux_coefficients(result, "balance"))
    return np.einsum("psd,psn->dn", x, dlogits)
