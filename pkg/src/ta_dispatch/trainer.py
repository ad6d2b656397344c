"""Desk-scale expert-parallel MoE training on a synthetic mixture regression.

P processes are emulated in one program. Each holds a fixed batch of S
tokens; the gate is shared (data parallel) and sees the token features plus
a one-hot of the process rank, so routing may legitimately differ per
process. Experts are linear maps. Training is full-batch gradient descent.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .commcost import BYTES_PER_MB, bottleneck
from .gate import (
    CapacityMode,
    CapacityPolicy,
    Normalization,
    RoutingResult,
    aux_coefficients,
    gate_values,
    grad_aux_logits,
    loss_balance,
    loss_topo,
    penalty_weights,
    softmax,
    topk_route,
)
from .topology import LinkProfile

log = logging.getLogger(__name__)

LOSS_KINDS = ("balance", "topo", "compulsory")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class SyntheticTask:
    cluster_count: int
    cluster_means: np.ndarray  # (C, d)
    true_maps: np.ndarray  # (C, d, d_out)
    noise_std: float
    S: int
    P: int
    input_std: float
    x: np.ndarray  # (P, S, d)
    y: np.ndarray  # (P, S, d_out)
    clusters: np.ndarray  # (P, S)

    @property
    def d(self) -> int:
        return self.x.shape[-1]

    @property
    def d_out(self) -> int:
        return self.y.shape[-1]

    def gate_inputs(self, x: np.ndarray | None = None, rank_scale: float = 1.0) -> np.ndarray:
        """Token features with the (scaled) one-hot process rank appended."""
        x = self.x if x is None else x
        P, S, _ = x.shape
        rank = np.broadcast_to(rank_scale * np.eye(P)[:, None, :], (P, S, P))
        return np.concatenate([x, rank], axis=-1)

    def sample(self, rng: np.random.Generator, S: int | None = None):
        """Draw a fresh (x, y, cluster) batch from the same mixture."""
        S = self.S if S is None else S
        clusters = rng.integers(0, self.cluster_count, size=(self.P, S))
        x = self.cluster_means[clusters] + self.input_std * rng.standard_normal(
            (self.P, S, self.d)
        )
        y = np.einsum("psd,psdo->pso", x, self.true_maps[clusters])
        y = y + self.noise_std * rng.standard_normal(y.shape)
        return x, y, clusters


def gen_synthetic(
    seed: int,
    d: int = 8,
    d_out: int = 4,
    cluster_count: int = 2,
    S: int = 128,
    P: int = 4,
    separation: float = 4.0,
    input_std: float = 1.0,
    noise_std: float = 0.1,
    map_scale: float = 1.0,
) -> SyntheticTask:
    """Mixture regression: ``y = x @ T_c + noise`` for the cluster ``c`` of ``x``."""
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((cluster_count, d))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    maps = map_scale * rng.standard_normal((cluster_count, d, d_out)) / math.sqrt(d)
    empty = np.zeros((P, 0, d))
    task = SyntheticTask(
        cluster_count, means, maps, noise_std, S, P, input_std,
        empty, np.zeros((P, 0, d_out)), np.zeros((P, 0), dtype=np.int64),
    )
    x, y, clusters = task.sample(rng)
    return SyntheticTask(
        cluster_count, means, maps, noise_std, S, P, input_std, x, y, clusters
    )


@dataclass
class MoEParams:
    W: np.ndarray  # (d + P, N) gate
    A: np.ndarray  # (N, d, d_out) experts

    @classmethod
    def init(cls, seed: int, d_gate: int, d: int, d_out: int, N: int,
             gate_scale: float = 0.1) -> "MoEParams":
        rng = np.random.default_rng(seed)
        W = rng.normal(0.0, gate_scale, size=(d_gate, N))
        A = rng.normal(0.0, 1.0 / math.sqrt(d), size=(N, d, d_out))
        return cls(W, A)

    def copy(self) -> "MoEParams":
        return MoEParams(self.W.copy(), self.A.copy())


@dataclass(frozen=True)
class AuxSpec:
    """Which auxiliary loss to add and how to weigh it."""

    kind: str = "balance"
    weight: float = 1.0
    penalty: np.ndarray | None = None  # (P, N) topology penalty weights

    def __post_init__(self):
        if self.kind not in ("balance", "topo"):
            raise ValueError(f"unknown aux loss kind {self.kind!r}")
        if self.kind == "topo" and self.penalty is None:
            raise ValueError("topology loss needs penalty weights")


@dataclass
class StepResult:
    loss: float
    task_loss: float
    aux_loss: float
    routing: RoutingResult
    grad_W: np.ndarray | None = None
    grad_A: np.ndarray | None = None


def refresh_routing(frozen: RoutingResult, probs: np.ndarray) -> RoutingResult:
    """Keep the discrete routing of ``frozen`` but re-read probabilities from ``probs``."""
    return RoutingResult(
        experts=frozen.experts,
        scores=np.take_along_axis(probs, frozen.experts, axis=-1),
        kept=frozen.kept,
        counts=frozen.counts,
        mean_probs=probs.mean(axis=1),
        dropped=frozen.dropped,
    )


def forward_backward(
    params: MoEParams,
    z: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    k: int,
    aux: AuxSpec,
    policy: CapacityPolicy | None = None,
    c_hat=None,
    frozen: RoutingResult | None = None,
    need_grad: bool = True,
) -> StepResult:
    """Loss ``mse + weight * mean_i aux_i`` and its gradients.

    ``frozen`` pins the discrete choices (selected experts, drops, counts) so
    the loss is smooth in the parameters; that is the function the analytic
    gradient differentiates.
    """
    logits = z @ params.W
    if not np.all(np.isfinite(logits)):
        raise TrainingDiverged("gate logits became non-finite")
    probs = softmax(logits)
    if frozen is None:
        routing = topk_route(probs, k, policy, c_hat)
    else:
        routing = refresh_routing(frozen, probs)

    P, S, _ = x.shape
    N = params.A.shape[0]
    gates = gate_values(routing)
    kept = routing.kept
    out_all = np.einsum("psd,ndo->psno", x, params.A)
    sel_out = np.take_along_axis(out_all, routing.experts[..., None], axis=2)  # (P,S,k,d_out)
    weight = np.where(kept, gates, 0.0)
    y_hat = (weight[..., None] * sel_out).sum(axis=2)
    resid = y_hat - y
    with np.errstate(over="ignore", invalid="ignore"):
        task_loss = float(np.mean(resid**2))

    if aux.kind == "balance":
        per_proc = loss_balance(routing, S)
    else:
        per_proc = loss_topo(routing, aux.penalty, N, P, S)
    aux_loss = float(per_proc.mean())
    total = task_loss + aux.weight * aux_loss
    if not math.isfinite(total):
        raise TrainingDiverged(f"loss became non-finite (task={task_loss}, aux={aux_loss})")
    if not need_grad:
        return StepResult(total, task_loss, aux_loss, routing)

    dy = 2.0 * resid / resid.size
    # experts: each token reaches expert e through at most one slot
    slot_w = np.zeros((P, S, N))
    np.put_along_axis(slot_w, routing.experts, weight, axis=-1)
    grad_A = np.einsum("psd,pso,psn->ndo", x, dy, slot_w)

    dgate = np.where(kept, np.einsum("pso,psko->psk", dy, sel_out), 0.0)
    if gates.shape[-1] == 1:
        dscore = dgate
    else:
        total_score = routing.scores.sum(axis=-1, keepdims=True)
        dscore = (dgate - (dgate * gates).sum(axis=-1, keepdims=True)) / total_score
    dprobs = np.zeros_like(probs)
    np.put_along_axis(dprobs, routing.experts, dscore, axis=-1)
    dlogits = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    if aux.weight != 0.0:
        coef = aux_coefficients(routing, aux.kind, aux.penalty)
        dlogits = dlogits + aux.weight * grad_aux_logits(probs, coef)
    grad_W = np.einsum("psd,psn->dn", z, dlogits)
    return StepResult(total, task_loss, aux_loss, routing, grad_W, grad_A)


# --- training loop ------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    N: int = 4
    k: int = 1
    steps: int = 2000
    lr: float = 0.05
    aux_weight: float = 1.0
    normalization: str = "sum_norm"
    temperature: float | None = None
    capacity: str = "none"
    capacity_factor: float = 1.0
    window: int = 100
    switch_step: int | None = None
    gate_scale: float = 0.1
    rank_scale: float = 1.0  # magnitude of the process-rank gate features
    token_bytes: float | None = None  # defaults to d * 2 (FP16 activations)
    size_exchange: bool | None = None  # extra latency-only round; default by capacity mode


@dataclass
class TrainReport:
    loss_kind: str
    seed: int
    task_loss: list = field(default_factory=list)
    aux_loss: list = field(default_factory=list)
    t_comm_us: list = field(default_factory=list)
    dropped_rate: list = field(default_factory=list)
    tv_to_target: list = field(default_factory=list)
    intra_share: list = field(default_factory=list)
    final_dispatch: np.ndarray | None = None
    target_share: np.ndarray | None = None
    tv_rows_initial: np.ndarray | None = None
    tv_rows_final: np.ndarray | None = None
    column_balance_dev: float = float("nan")
    min_expert_load: float = float("nan")
    starved_experts: int = 0
    k: int = 1
    S: int = 0
    config: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.task_loss)

    @property
    def final_task_loss(self) -> float:
        return self.task_loss[-1] if self.task_loss else float("nan")

    def window_mean(self, series: str, window: int) -> float:
        values = getattr(self, series)[-window:]
        return float(np.mean(values)) if values else float("nan")

    def summary(self) -> dict:
        window = self.config.get("window", 100)
        return {
            "loss_kind": self.loss_kind,
            "seed": self.seed,
            "steps": self.steps,
            "k": self.k,
            "S": self.S,
            "final_task_loss": self.final_task_loss,
            "final_aux_loss": self.aux_loss[-1] if self.aux_loss else None,
            "mean_t_comm_us": self.window_mean("t_comm_us", window),
            "mean_intra_share": self.window_mean("intra_share", window),
            "mean_dropped_rate": self.window_mean("dropped_rate", window),
            "column_balance_dev": self.column_balance_dev,
            "min_expert_load": self.min_expert_load,
            "starved_experts": self.starved_experts,
            "tv_initial": _tolist(self.tv_rows_initial),
            "tv_final": _tolist(self.tv_rows_final),
            "final_dispatch": _tolist(self.final_dispatch),
            "target_share": _tolist(self.target_share),
            "config": self.config,
        }


def _tolist(a):
    return None if a is None else np.asarray(a).tolist()


def tv_rows(counts: np.ndarray, share: np.ndarray) -> np.ndarray:
    """Total-variation distance per row between normalized counts and target shares."""
    totals = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, totals, out=np.zeros_like(counts, dtype=float), where=totals > 0)
    return 0.5 * np.abs(norm - share).sum(axis=1)


def intra_share(counts: np.ndarray, own_group: np.ndarray, E: int) -> float:
    """Mean fraction of each process's tokens kept inside its own leaf group."""
    P = counts.shape[0]
    dev = counts.reshape(P, P, E).sum(axis=2)
    totals = dev.sum(axis=1)
    inside = (dev * own_group).sum(axis=1)
    shares = np.divide(inside, totals, out=np.zeros(P), where=totals > 0)
    return float(shares.mean())


def train(
    config: TrainConfig,
    task: SyntheticTask,
    loss_kind: str,
    c_hat=None,
    profile: LinkProfile | None = None,
    own_group: np.ndarray | None = None,
    seed: int = 0,
) -> TrainReport:
    """Train gate and experts jointly; record losses, dispatch and estimated T_comm.

    ``loss_kind`` is ``balance``, ``topo`` or ``compulsory`` (balance loss
    plus a hard count clamp to the target proportions).
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    P, S, d = task.x.shape
    N, k = config.N, config.k
    if N % P:
        raise ValueError(f"N={N} experts do not divide over P={P} processes")
    E = N // P
    c_hat_arr = None if c_hat is None else np.asarray(getattr(c_hat, "c_hat", c_hat), float)
    if loss_kind != "balance" and c_hat_arr is None:
        raise ValueError(f"{loss_kind} training needs a target pattern")

    if loss_kind == "compulsory":
        policy = CapacityPolicy(CapacityMode.LOCAL_PROPORTIONAL, config.capacity_factor)
    else:
        policy = CapacityPolicy(CapacityMode(config.capacity), config.capacity_factor)
    if policy.mode is CapacityMode.LOCAL_PROPORTIONAL and c_hat_arr is None:
        raise ValueError("proportional capacity needs a target pattern")

    balance = AuxSpec("balance", config.aux_weight)
    if loss_kind == "topo":
        pw = penalty_weights(c_hat_arr, Normalization(config.normalization), config.temperature)
        topo = AuxSpec("topo", config.aux_weight, pw.p)
    else:
        topo = None

    token_bytes = config.token_bytes if config.token_bytes is not None else d * 2
    token_mb = token_bytes / BYTES_PER_MB
    size_exchange = config.size_exchange
    if size_exchange is None:
        size_exchange = policy.mode in (CapacityMode.GLOBAL, CapacityMode.LOCAL_PROPORTIONAL)
    extra_latency = float(profile.alpha.max()) if (profile is not None and size_exchange) else 0.0
    if own_group is None:
        own_group = np.eye(P)
    share = None if c_hat_arr is None else c_hat_arr / c_hat_arr.sum(axis=1, keepdims=True)

    params = MoEParams.init(seed, d + P, d, task.d_out, N, config.gate_scale)
    z = task.gate_inputs(rank_scale=config.rank_scale)
    report = TrainReport(loss_kind, seed, k=k, S=S, config=_config_dict(config))
    report.target_share = share
    history = []

    for step in range(config.steps):
        aux = topo if (topo is not None and (config.switch_step is None or step < config.switch_step)) else balance
        res = forward_backward(params, z, task.x, task.y, k, aux, policy, c_hat_arr)
        counts = res.routing.counts
        report.task_loss.append(res.task_loss)
        report.aux_loss.append(res.aux_loss)
        report.dropped_rate.append(float(res.routing.dropped.sum()) / (P * S * k))
        report.intra_share.append(intra_share(counts, own_group, E))
        if profile is not None:
            report.t_comm_us.append(bottleneck(profile, counts, token_mb, E) + extra_latency)
        else:
            report.t_comm_us.append(float("nan"))
        if share is not None:
            tv = tv_rows(counts, share)
            report.tv_to_target.append(float(tv.mean()))
            if step == 0:
                report.tv_rows_initial = tv
        else:
            report.tv_to_target.append(float("nan"))
        history.append(counts)
        if len(history) > config.window:
            history.pop(0)

        params.W -= config.lr * res.grad_W
        params.A -= config.lr * res.grad_A
        if not (np.all(np.isfinite(params.W)) and np.all(np.isfinite(params.A))):
            raise TrainingDiverged(f"parameters became non-finite at step {step}")
        if step % 500 == 0:
            log.debug("%s seed=%d step=%d task=%.5f aux=%.5f", loss_kind, seed, step,
                      res.task_loss, res.aux_loss)

    if history:
        final = np.mean(history, axis=0)
        report.final_dispatch = final
        load = final.sum(axis=0)
        target = k * S * P / N
        report.column_balance_dev = float(np.abs(load - target).max() / target)
        report.min_expert_load = float(load.min())
        report.starved_experts = int((load <= 0).sum())
        if share is not None:
            report.tv_rows_final = tv_rows(final, share)
    return report


def _config_dict(config: TrainConfig) -> dict:
    return asdict(config)


def compare_runs(a: TrainReport, b: TrainReport) -> dict:
    """How run ``b`` differs from run ``a`` (ratios are b over a)."""
    if a.steps != b.steps:
        raise ValueError(f"runs have different lengths: {a.steps} vs {b.steps}")
    window = a.config.get("window", 100)
    if a.final_dispatch is None or b.final_dispatch is None:
        dispatch_tv = float("nan")
    else:
        share_b = b.final_dispatch / b.final_dispatch.sum(axis=1, keepdims=True)
        dispatch_tv = float(tv_rows(a.final_dispatch, share_b).mean())
    return {
        "a": a.loss_kind,
        "b": b.loss_kind,
        "task_loss_ratio": _ratio(b.final_task_loss, a.final_task_loss),
        "dispatch_tv": dispatch_tv,
        "comm_ratio": _ratio(b.window_mean("t_comm_us", window), a.window_mean("t_comm_us", window)),
        "intra_share_a": a.window_mean("intra_share", window),
        "intra_share_b": b.window_mean("intra_share", window),
        "balance_dev_a": a.column_balance_dev,
        "balance_dev_b": b.column_balance_dev,
    }


def _ratio(num: float, den: float) -> float:
    if num == den:
        return 1.0
    return num / den if den != 0 else float("inf")


# --- report files -------------------------------------------------------------

SERIES_FIELDS = ("step", "task_loss", "aux_loss", "t_comm_us", "dropped_rate",
                 "tv_to_target", "intra_share")


def _fmt(v) -> str:
    return repr(float(v))


def series_csv(report: TrainReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SERIES_FIELDS)
    for step in range(report.steps):
        writer.writerow([step] + [_fmt(getattr(report, name)[step]) for name in SERIES_FIELDS[1:]])
    return out.getvalue()


def heatmap_csv(report: TrainReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if report.final_dispatch is not None:
        N = report.final_dispatch.shape[1]
        writer.writerow(["process"] + [f"expert_{e}" for e in range(N)])
        for i, row in enumerate(report.final_dispatch):
            writer.writerow([i] + [_fmt(v) for v in row])
    return out.getvalue()


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def emit_report(report: TrainReport, out_dir, prefix: str | None = None) -> dict:
    """Write series CSV, heatmap CSV and JSON summary; return the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = prefix or f"{report.loss_kind}_seed{report.seed}"
    paths = {
        "series": out_dir / f"{prefix}_series.csv",
        "heatmap": out_dir / f"{prefix}_heatmap.csv",
        "summary": out_dir / f"{prefix}_summary.json",
    }
    paths["series"].write_text(series_csv(report))
    paths["heatmap"].write_text(heatmap_csv(report))
    paths["summary"].write_text(dumps_json(report.summary()))
    return paths


def load_report(out_dir, prefix: str) -> TrainReport:
    """Rebuild a report from the files ``emit_report`` wrote."""
    out_dir = Path(out_dir)
    summary = json.loads((out_dir / f"{prefix}_summary.json").read_text())
    report = TrainReport(
        summary["loss_kind"], summary["seed"], k=summary["k"], S=summary["S"],
        config=summary["config"],
    )
    with open(out_dir / f"{prefix}_series.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SERIES_FIELDS:
            raise ValueError(f"{prefix}_series.csv has an unexpected header")
        for row in reader:
            for name in SERIES_FIELDS[1:]:
                getattr(report, name).append(float(row[name]))
    for name, key in (("final_dispatch", "final_dispatch"), ("target_share", "target_share"),
                      ("tv_rows_initial", "tv_initial"), ("tv_rows_final", "tv_final")):
        if summary.get(key) is not None:
            setattr(report, name, np.asarray(summary[key], dtype=float))
    report.column_balance_dev = summary["column_balance_dev"]
    report.min_expert_load = summary["min_expert_load"]
    report.starved_experts = summary["starved_experts"]
    return report
