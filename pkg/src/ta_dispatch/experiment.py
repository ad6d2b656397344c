"""Experiment configs: load, run over seeds and loss kinds, aggregate."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .commcost import DispatchConfig
from .optimizer import SolveResult, solve
from .topology import (
    LinkProfile,
    Topology,
    TopologyKind,
    level_matrix,
    load_profile,
    parse_topology,
    read_profile_csv,
)
from .trainer import (
    LOSS_KINDS,
    TrainConfig,
    TrainReport,
    compare_runs,
    dumps_json,
    emit_report,
    gen_synthetic,
    load_report,
    train,
)

log = logging.getLogger(__name__)

DEFAULTS = {
    "model": {"d": 8, "d_out": 4, "N": 4, "P": 4, "k": 1, "S": 128, "b": 2},
    "task": {"cluster_count": 2, "separation": 4.0, "input_std": 1.0,
             "noise_std": 0.1, "map_scale": 1.0},
    "loss": {"kinds": ["balance", "topo"], "normalization": "sum_norm", "temperature": None,
             "weight": 1.0, "capacity": "none", "capacity_factor": 1.0, "switch_step": None},
    "optimizer": {"lr": 0.05, "steps": 2000, "window": 100, "gate_scale": 0.1,
                  "rank_scale": 1.0},
    "seeds": [0],
    "output_dir": "out",
}
_SECTIONS = ("model", "task", "loss", "optimizer")
_TOP_LEVEL = set(DEFAULTS) | {"topology", "profile"}


class ConfigError(ValueError):
    pass


def merge_config(doc: dict) -> dict:
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            extra = set(value) - set(DEFAULTS[key])
            if extra:
                raise ConfigError(f"unknown {key} fields: {sorted(extra)}")
            cfg[key].update(value)
        else:
            cfg[key] = value
    if "topology" not in cfg:
        raise ConfigError("experiment config needs a topology")
    kinds = cfg["loss"]["kinds"]
    if isinstance(kinds, str):
        cfg["loss"]["kinds"] = kinds = [kinds]
    bad = [k for k in kinds if k not in LOSS_KINDS]
    if bad or not kinds:
        raise ConfigError(f"loss kinds must be drawn from {LOSS_KINDS}, got {kinds}")
    if not cfg["seeds"]:
        raise ConfigError("seed list is empty")
    w = cfg["loss"]["weight"]
    if isinstance(w, dict):
        extra = set(w) - set(LOSS_KINDS)
        if extra:
            raise ConfigError(f"loss weights given for unknown kinds: {sorted(extra)}")
    elif not isinstance(w, (int, float)) or isinstance(w, bool):
        raise ConfigError("loss weight must be a number or a {kind: weight} object")
    return cfg


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")
    return merge_config(doc), path.parent


def _resolve_topology(value, base: Path) -> Topology:
    if isinstance(value, str):
        return parse_topology((base / value).read_text())
    return parse_topology(json.dumps(value))


def _resolve_profile(value, base: Path, topo: Topology) -> LinkProfile | None:
    if value is None:
        return None
    if isinstance(value, str):
        return load_profile(base / value, topo)
    if isinstance(value, dict) and "csv" in value:
        return read_profile_csv(value["csv"], topo)
    raise ConfigError("profile must be a CSV path")


@dataclass
class ExperimentResult:
    config: dict
    solved: SolveResult
    reports: dict = field(default_factory=dict)  # (loss_kind, seed) -> TrainReport

    def by_kind(self, kind: str) -> list[TrainReport]:
        return [r for (k, _), r in sorted(self.reports.items()) if k == kind]


def dispatch_config(cfg: dict) -> DispatchConfig:
    m = cfg["model"]
    return DispatchConfig(k=m["k"], S=m["S"], N=m["N"], P=m["P"], d=m["d"], b=m["b"])


def loss_weight(cfg: dict, kind: str) -> float:
    # either one weight for every kind or a {kind: weight} map
    w = cfg["loss"]["weight"]
    if isinstance(w, dict):
        return float(w.get(kind, DEFAULTS["loss"]["weight"]))
    return float(w)


def train_config(cfg: dict, kind: str = "balance") -> TrainConfig:
    m, lo, opt = cfg["model"], cfg["loss"], cfg["optimizer"]
    return TrainConfig(
        N=m["N"], k=m["k"], steps=opt["steps"], lr=opt["lr"],
        aux_weight=loss_weight(cfg, kind), normalization=lo["normalization"],
        temperature=lo["temperature"], capacity=lo["capacity"],
        capacity_factor=lo["capacity_factor"], window=opt["window"],
        switch_step=lo["switch_step"], gate_scale=opt["gate_scale"],
        rank_scale=opt["rank_scale"],
        token_bytes=m["d"] * m["b"],
    )


def run_experiment(cfg: dict, base: Path = Path(".")) -> ExperimentResult:
    topo = _resolve_topology(cfg["topology"], base)
    if topo.device_count != cfg["model"]["P"]:
        raise ConfigError(
            f"topology has {topo.device_count} devices, model.P is {cfg['model']['P']}"
        )
    raw = _resolve_profile(cfg.get("profile"), base, topo)
    solved = solve(topo, raw, dispatch_config(cfg))
    if solved.topology.kind in (TopologyKind.RING,):
        own = np.eye(topo.device_count)
    else:
        own = (level_matrix(solved.topology) == 0).astype(float)

    task_kw = dict(cfg["task"])
    m = cfg["model"]
    result = ExperimentResult(cfg, solved)
    for seed in cfg["seeds"]:
        task = gen_synthetic(int(seed), d=m["d"], d_out=m["d_out"], S=m["S"], P=m["P"], **task_kw)
        for kind in cfg["loss"]["kinds"]:
            log.info("training %s seed=%s", kind, seed)
            result.reports[kind, int(seed)] = train(
                train_config(cfg, kind), task, kind, solved.pattern, solved.profile, own, seed=int(seed)
            )
    return result


def _kinds_in(reports: dict) -> list[str]:
    present = {kind for kind, _ in reports}
    return [k for k in LOSS_KINDS if k in present]


def aggregate(reports: dict, window: int = 100) -> dict:
    """Per-kind metrics plus per-seed comparisons against the balance run.

    ``reports`` maps ``(loss_kind, seed)`` to a TrainReport.
    """
    kinds = _kinds_in(reports)
    agg = {"kinds": {}, "comparisons": {}}
    for kind in kinds:
        runs = [r for (k, _), r in sorted(reports.items()) if k == kind]
        agg["kinds"][kind] = {
            "seeds": [r.seed for r in runs],
            "final_task_loss": [r.final_task_loss for r in runs],
            "mean_final_task_loss": float(np.mean([r.final_task_loss for r in runs])),
            "mean_t_comm_us": [r.window_mean("t_comm_us", window) for r in runs],
            "intra_share": [r.window_mean("intra_share", window) for r in runs],
            "column_balance_dev": [r.column_balance_dev for r in runs],
            "starved_experts": [r.starved_experts for r in runs],
            "tv_initial": [_mean_or_nan(r.tv_rows_initial) for r in runs],
            "tv_final": [_mean_or_nan(r.tv_rows_final) for r in runs],
        }
    if "balance" in kinds:
        seeds = agg["kinds"]["balance"]["seeds"]
        for kind in kinds:
            if kind == "balance":
                continue
            missing = [s for s in seeds if (kind, s) not in reports]
            if missing:
                raise ValueError(f"{kind} runs missing for seeds {missing}")
            per_seed = [compare_runs(reports["balance", s], reports[kind, s]) for s in seeds]
            mean_b = agg["kinds"]["balance"]["mean_final_task_loss"]
            mean_k = float(np.mean([reports[kind, s].final_task_loss for s in seeds]))
            agg["comparisons"][f"balance_vs_{kind}"] = {
                "seeds": seeds,
                "per_seed": per_seed,
                "mean_task_loss_ratio": mean_k / mean_b,
            }
    return agg


def _mean_or_nan(a) -> float:
    return float("nan") if a is None else float(np.mean(a))


def load_reports(run_dir) -> dict:
    """Collect every ``<kind>_seed<n>`` report found in ``run_dir``."""
    run_dir = Path(run_dir)
    reports = {}
    for path in sorted(run_dir.glob("*_seed*_summary.json")):
        prefix = path.name[: -len("_summary.json")]
        kind, _, seed = prefix.rpartition("_seed")
        if kind not in LOSS_KINDS or not seed.isdigit():
            continue
        reports[kind, int(seed)] = load_report(run_dir, prefix)
    if not reports:
        raise ValueError(f"no training reports found in {run_dir}")
    return reports


PARITY_TOL = 0.05
BALANCE_TOL = 0.25


def _yes(flag: bool) -> str:
    return "yes" if flag else "NO"


def summary_text(agg: dict) -> str:
    lines = ["Experiment summary", "=================="]
    for kind, info in agg["kinds"].items():
        lines.append(f"[{kind}]")
        lines.append(f"  seeds               {info['seeds']}")
        lines.append(f"  mean final task MSE {info['mean_final_task_loss']:.6g}")
        lines.append("  final task MSE      " + ", ".join(f"{v:.6g}" for v in info["final_task_loss"]))
        lines.append("  mean T_comm (us)    " + ", ".join(f"{v:.6g}" for v in info["mean_t_comm_us"]))
        lines.append("  intra-group share   " + ", ".join(f"{v:.4f}" for v in info["intra_share"]))
        lines.append("  column balance dev  " + ", ".join(f"{v:.4f}" for v in info["column_balance_dev"]))
        lines.append("  TV to target        " + ", ".join(
            f"{a:.3f}->{b:.3f}" for a, b in zip(info["tv_initial"], info["tv_final"])))
        balanced = all(v < BALANCE_TOL for v in info["column_balance_dev"])
        fed = all(n == 0 for n in info["starved_experts"])
        lines.append(f"  balance dev < {BALANCE_TOL:g}   {_yes(balanced)}")
        lines.append(f"  no starved experts  {_yes(fed)}")
    for name, comp in agg["comparisons"].items():
        ratio = comp["mean_task_loss_ratio"]
        per_seed = comp["per_seed"]
        lines.append(f"[{name}]")
        lines.append(f"  mean task MSE ratio {ratio:.4f}")
        for seed, c in zip(comp["seeds"], per_seed):
            lines.append(
                f"  seed {seed}: MSE ratio {c['task_loss_ratio']:.4f}  comm ratio {c['comm_ratio']:.4f}  "
                f"intra {c['intra_share_a']:.4f} -> {c['intra_share_b']:.4f}  "
                f"dispatch TV {c['dispatch_tv']:.4f}"
            )
        lines.append(f"  MSE within {PARITY_TOL:.0%}       {_yes(abs(ratio - 1.0) <= PARITY_TOL)}")
        lines.append("  intra share higher  " + _yes(all(
            c["intra_share_b"] > c["intra_share_a"] for c in per_seed)))
        # the comm check is on the seed-mean T_comm, the intra check is per seed
        base, kind = name.split("_vs_")
        t_base = float(np.mean(agg["kinds"][base]["mean_t_comm_us"]))
        t_kind = float(np.mean(agg["kinds"][kind]["mean_t_comm_us"]))
        lines.append(f"  mean T_comm (us)    {t_base:.6g} -> {t_kind:.6g}")
        lines.append("  T_comm not higher   " + _yes(t_kind <= t_base))
    return "\n".join(lines) + "\n"


def write_summary(agg: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "aggregate.json").write_text(dumps_json(agg))
    (out_dir / "summary.txt").write_text(summary_text(agg))


def write_outputs(result: ExperimentResult, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (kind, seed), report in sorted(result.reports.items()):
        emit_report(report, out_dir, f"{kind}_seed{seed}")
    agg = aggregate(result.reports, result.config["optimizer"]["window"])
    write_summary(agg, out_dir)
    pattern = result.solved.pattern
    (out_dir / "target_pattern.json").write_text(dumps_json({
        "c_hat": pattern.c_hat.tolist(),
        "source": pattern.source,
        "notes": list(pattern.notes),
    }))
    return agg
