"""Alpha-beta cost of one expert-parallel all-to-all exchange."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .topology import LinkProfile, Topology, complete_profile

BYTES_PER_MB = 1_000_000


@dataclass(frozen=True)
class DispatchConfig:
    """Shape of one MoE layer under expert parallelism.

    ``S`` tokens per process, each routed to ``k`` of ``N`` experts spread
    over ``P`` devices; a token is ``d`` elements of ``b`` bytes.
    """

    k: int
    S: float
    N: int
    P: int
    d: int = 1
    b: int = 2

    def __post_init__(self):
        if self.k < 1 or self.N < 1 or self.P < 1:
            raise ValueError("k, N and P must be positive")
        if self.N % self.P:
            raise ValueError(f"N={self.N} experts do not divide evenly over P={self.P} devices")
        if self.S <= 0:
            raise ValueError("S must be positive")

    @property
    def E(self) -> int:
        return self.N // self.P

    @property
    def sent_per_process(self) -> float:
        return self.k * self.S

    @property
    def per_expert(self) -> float:
        return self.k * self.S / self.E

    @property
    def token_mb(self) -> float:
        return self.d * self.b / BYTES_PER_MB


@dataclass(frozen=True)
class DispatchMatrix:
    """Tokens ``c[i, e]`` sent from process ``i`` to expert ``e``."""

    c: np.ndarray
    config: DispatchConfig

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64, copy=True)
        if c.shape != (self.config.P, self.config.N):
            raise ValueError(
                f"dispatch matrix has shape {c.shape}, expected {(self.config.P, self.config.N)}"
            )
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("dispatch entries must be finite and non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def device_totals(self) -> np.ndarray:
        """P x P tokens from process i to all experts hosted on device j."""
        P, E = self.config.P, self.config.E
        return self.c.reshape(P, P, E).sum(axis=2)


@dataclass(frozen=True)
class CostReport:
    pair_cost: np.ndarray
    bottleneck_us: float
    per_device_send_us: np.ndarray
    per_device_recv_us: np.ndarray
    total_bytes: float

    def to_dict(self) -> dict:
        P = self.pair_cost.shape[0]
        return {
            "P": P,
            "pair_cost_us": [float(v) for v in self.pair_cost.ravel()],
            "bottleneck_us": float(self.bottleneck_us),
            "per_device_send_us": [float(v) for v in self.per_device_send_us],
            "per_device_recv_us": [float(v) for v in self.per_device_recv_us],
            "total_bytes": float(self.total_bytes),
        }


def _check_profile(profile: LinkProfile, dm: DispatchMatrix):
    if profile.size != dm.config.P:
        raise ValueError(f"profile covers {profile.size} devices, dispatch has {dm.config.P}")


def pair_cost(profile: LinkProfile, dm: DispatchMatrix, i: int, j: int) -> float:
    """Time in us for process ``i`` to deliver its tokens for device ``j``."""
    _check_profile(profile, dm)
    P, E = dm.config.P, dm.config.E
    if not (0 <= i < P and 0 <= j < P):
        raise IndexError(f"device pair ({i}, {j}) outside 0..{P - 1}")
    tokens = math.fsum(dm.c[i, j * E:(j + 1) * E])
    size_mb = tokens * dm.config.token_mb
    cost = profile.alpha[i, j] + profile.beta[i, j] * size_mb
    if not math.isfinite(cost):
        raise OverflowError(f"message of {tokens} tokens overflows the cost model")
    return float(cost)


def t_comm_lower(profile: LinkProfile, dm: DispatchMatrix) -> CostReport:
    """All P*P pair costs and the slowest one, the exchange's lower bound."""
    _check_profile(profile, dm)
    with np.errstate(over="ignore", invalid="ignore"):
        size_mb = dm.device_totals() * dm.config.token_mb
        cost = profile.alpha + profile.beta * size_mb
    if not np.all(np.isfinite(cost)):
        raise OverflowError("message sizes overflow the cost model")
    return CostReport(
        pair_cost=cost,
        bottleneck_us=float(cost.max()),
        per_device_send_us=cost.sum(axis=1),
        per_device_recv_us=cost.sum(axis=0),
        total_bytes=float(dm.c.sum() * dm.config.d * dm.config.b),
    )


def bottleneck(profile: LinkProfile, c: np.ndarray, token_mb: float, E: int) -> float:
    """Slowest pair cost for a raw P x N array; the hot path used during training."""
    P = profile.size
    size_mb = c.reshape(P, P, E).sum(axis=2) * token_mb
    return float((profile.alpha + profile.beta * size_mb).max())


def even_pattern(config: DispatchConfig) -> DispatchMatrix:
    """Load-balanced dispatch: every process sends k*S/N tokens to every expert."""
    value = config.k * config.S / config.N
    return DispatchMatrix(np.full((config.P, config.N), value), config)


# --- profile fitting ----------------------------------------------------------


def _fit_pair(sizes: np.ndarray, times: np.ndarray) -> tuple[float, float]:
    if np.any(sizes <= 0):
        raise ValueError("message sizes must be positive")
    if np.unique(sizes).size < 2:
        return 0.0, float(times.mean() / sizes[0])
    A = np.column_stack([np.ones_like(sizes), sizes])
    (alpha, beta), *_ = np.linalg.lstsq(A, times, rcond=None)
    if alpha < 0:
        # refit through the origin
        alpha = 0.0
        beta = float(sizes @ times / (sizes @ sizes))
    if beta <= 0:
        raise ValueError(f"fitted inverse bandwidth {beta} is not positive")
    return float(alpha), float(beta)


def fit_profile(samples, topo: Topology | None = None, P: int | None = None) -> LinkProfile:
    """Least-squares fit of ``time = alpha + beta * size`` per ordered device pair.

    ``samples`` yields ``(src, dst, message_mb, time_us)``. Pairs without
    samples are filled from the mirrored pair, then from the topology level.
    """
    grouped = defaultdict(list)
    for src, dst, size, t in samples:
        grouped[int(src), int(dst)].append((float(size), float(t)))
    if not grouped:
        raise ValueError("no samples to fit")
    if P is None:
        P = topo.device_count if topo is not None else 1 + max(max(k) for k in grouped)
    alpha = np.full((P, P), np.nan)
    beta = np.full((P, P), np.nan)
    for (src, dst), rows in sorted(grouped.items()):
        arr = np.asarray(rows)
        alpha[src, dst], beta[src, dst] = _fit_pair(arr[:, 0], arr[:, 1])
    return complete_profile(alpha, beta, topo)


def read_samples_csv(text: str):
    reader = csv.DictReader(io.StringIO(text))
    needed = {"src", "dst", "message_mb", "time_us"}
    if not needed <= set(reader.fieldnames or ()):
        raise ValueError(f"samples CSV needs columns {sorted(needed)}")
    return [
        (int(r["src"]), int(r["dst"]), float(r["message_mb"]), float(r["time_us"]))
        for r in reader
    ]


# --- dispatch matrix files ----------------------------------------------------


def dispatch_to_csv(c: np.ndarray) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for row in np.asarray(c):
        writer.writerow([repr(float(v)) for v in row])
    return out.getvalue()


def dispatch_from_csv(text: str) -> np.ndarray:
    rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(text)) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("dispatch CSV must be a non-empty rectangular grid")
    return np.asarray(rows)


def dispatch_to_json(dm: DispatchMatrix, **extra) -> str:
    cfg = dm.config
    doc = {
        "k": cfg.k,
        "S": cfg.S,
        "N": cfg.N,
        "P": cfg.P,
        "d": cfg.d,
        "b": cfg.b,
        "c": [[float(v) for v in row] for row in dm.c],
    }
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dispatch_from_json(text: str) -> DispatchMatrix:
    doc = json.loads(text)
    c = np.asarray(doc["c"], dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("dispatch matrix must be two-dimensional")
    P, N = c.shape
    config = DispatchConfig(
        k=int(doc.get("k", 1)),
        S=doc.get("S", float(c.sum(axis=1).max()) / int(doc.get("k", 1))),
        N=int(doc.get("N", N)),
        P=int(doc.get("P", P)),
        d=doc.get("d", 1),
        b=doc.get("b", 2),
    )
    return DispatchMatrix(c, config)
