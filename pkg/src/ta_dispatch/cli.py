"""ta-dispatch command line: solve, cost, fit, train, compare, report.

Exit codes: 0 success, 1 internal error, 2 invalid input or infeasible
problem, 3 unreadable/unwritable files, 4 numerical failure (LP solver or
training divergence).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiment
from .commcost import (
    DispatchConfig,
    DispatchMatrix,
    dispatch_from_csv,
    dispatch_from_json,
    dispatch_to_csv,
    dispatch_to_json,
    fit_profile,
    read_samples_csv,
    t_comm_lower,
)
from .optimizer import InfeasibleError, solve
from .topology import load_profile, load_topology, profile_to_csv
from .trainer import TrainingDiverged, dumps_json

log = logging.getLogger("ta_dispatch")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

FEASIBILITY_TOL = 1e-6
NORMS = {"sum": "sum_norm", "softmax": "softmax"}
CAPACITIES = {"none": "none", "global": "global", "local": "local",
              "proportional": "local_proportional"}


class UsageError(ValueError):
    pass


def _setup_logging():
    level = os.environ.get("TA_DISPATCH_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.command} needs {', '.join(missing)}")


def _model_block(path) -> dict:
    """Dispatch shape from either a bare ``{k, S, N, d, b}`` doc or an experiment config."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc.get("model", doc)


def _dispatch_config(block: dict, P: int) -> DispatchConfig:
    if "S" not in block:
        raise UsageError("config needs S (tokens per process)")
    if "P" in block and int(block["P"]) != P:
        raise UsageError(f"config says P={block['P']} but the topology has {P} devices")
    return DispatchConfig(
        k=int(block.get("k", 1)),
        S=block["S"],
        N=int(block.get("N", P)),
        P=P,
        d=block.get("d", 1),
        b=block.get("b", 2),
    )


# --- subcommands --------------------------------------------------------------


def cmd_solve(args) -> int:
    _require(args, "topology", "config", "out")
    topo = load_topology(args.topology)
    raw = load_profile(args.profile, topo) if args.profile else None
    config = _dispatch_config(_model_block(args.config), topo.device_count)
    result = solve(topo, raw, config, exact=args.exact, with_oracle=args.oracle)
    pattern = result.pattern
    feas = pattern.feasibility
    doc = {
        "source": pattern.source,
        "objective_us": pattern.objective_us,
        "row_residual": feas.row_residual,
        "col_residual": feas.col_residual,
        "feasible": feas.ok(FEASIBILITY_TOL),
        "notes": list(pattern.notes),
        "topology": result.topology.to_dict(),
    }
    if result.oracle is not None:
        doc["oracle_objective_us"] = result.oracle.objective_us
        doc["oracle_gap"] = result.oracle_gap
    out = Path(args.out)
    _write(out / "pattern.csv", dispatch_to_csv(pattern.c_hat))
    _write(out / "pattern.json", dispatch_to_json(pattern.as_dispatch(), **doc))
    _write(out / "profile_effective.csv", profile_to_csv(result.profile))
    for note in pattern.notes:
        print(f"note: {note}")
    print(f"source {pattern.source}  bottleneck {pattern.objective_us:.6g} us  "
          f"residuals row {feas.row_residual:.3g} col {feas.col_residual:.3g}")
    if not doc["feasible"]:
        hint = "" if args.exact else "; try --exact"
        print(f"pattern violates the send/balance constraints{hint}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _load_pattern(path, config_path, P_hint=None) -> DispatchMatrix:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        return dispatch_from_json(text)
    c = dispatch_from_csv(text)
    P, N = c.shape
    block = _model_block(config_path) if config_path else {}
    k = int(block.get("k", 1))
    S = block.get("S")
    if S is None:
        S = float(c.sum(axis=1).max()) / k or 1.0
    P = int(block.get("P", P_hint or P))
    config = DispatchConfig(k=k, S=S, N=int(block.get("N", N)), P=P,
                            d=block.get("d", 1), b=block.get("b", 2))
    return DispatchMatrix(c, config)


def cmd_cost(args) -> int:
    _require(args, "pattern", "profile")
    topo = load_topology(args.topology) if args.topology else None
    profile = load_profile(args.profile, topo)
    dm = _load_pattern(args.pattern, args.config, profile.size)
    report = t_comm_lower(profile, dm)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(Path(args.out) / "cost.json", text)
    print(f"bottleneck {report.bottleneck_us:.6g} us")
    return EXIT_OK


def cmd_fit(args) -> int:
    _require(args, "samples", "out")
    topo = load_topology(args.topology) if args.topology else None
    samples = read_samples_csv(Path(args.samples).read_text())
    profile = fit_profile(samples, topo)
    _write(Path(args.out) / "profile.csv", profile_to_csv(profile))
    print(f"fitted {profile.size}x{profile.size} profile from {len(samples)} samples")
    return EXIT_OK


def _experiment_config(args, default_kinds=None) -> tuple[dict, Path]:
    _require(args, "config")
    cfg, base = experiment.load_config(args.config)
    loss = cfg["loss"]
    if args.loss:
        loss["kinds"] = list(dict.fromkeys(args.loss))
    elif default_kinds:
        loss["kinds"] = list(default_kinds)
    if args.norm:
        loss["normalization"] = NORMS[args.norm]
    if args.temp is not None:
        loss["temperature"] = args.temp
    if args.capacity:
        loss["capacity"] = CAPACITIES[args.capacity]
    if args.capacity_factor is not None:
        loss["capacity_factor"] = args.capacity_factor
    if args.seeds:
        cfg["seeds"] = args.seeds
    cfg = experiment.merge_config(cfg)
    return cfg, base


def _run(cfg, base, out) -> int:
    result = experiment.run_experiment(cfg, base)
    out_dir = Path(out) if out else Path(cfg["output_dir"])
    agg = experiment.write_outputs(result, out_dir)
    sys.stdout.write(experiment.summary_text(agg))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, base = _experiment_config(args)
    return _run(cfg, base, args.out)


def cmd_compare(args) -> int:
    kinds = ["balance", "topo"] + (["compulsory"] if args.ablation else [])
    cfg, base = _experiment_config(args, default_kinds=kinds)
    if "balance" not in cfg["loss"]["kinds"] or len(cfg["loss"]["kinds"]) < 2:
        raise UsageError("compare needs the balance loss and at least one other loss kind")
    return _run(cfg, base, args.out)


def cmd_report(args) -> int:
    _require(args, "input")
    reports = experiment.load_reports(args.input)
    window = next(iter(reports.values())).config.get("window", 100)
    agg = experiment.aggregate(reports, window)
    experiment.write_summary(agg, Path(args.out) if args.out else Path(args.input))
    sys.stdout.write(experiment.summary_text(agg))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "cost": cmd_cost,
    "fit": cmd_fit,
    "train": cmd_train,
    "compare": cmd_compare,
    "report": cmd_report,
}


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ta-dispatch",
        description="Topology-aware dispatch patterns, all-to-all cost estimates and MoE gate experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        for name in names:
            if name == "topology":
                p.add_argument("--topology", metavar="PATH", help="topology JSON")
            elif name == "profile":
                p.add_argument("--profile", metavar="PATH", help="link profile CSV")
            elif name == "config":
                p.add_argument("--config", metavar="PATH", help="JSON config")
            elif name == "out":
                p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("solve", help="compute the target dispatch pattern")
    common(p, "topology", "profile", "config", "out")
    p.add_argument("--exact", action="store_true", help="solve the min-max LP instead of the closed form")
    p.add_argument("--oracle", action="store_true", help="also solve the LP and report the gap")

    p = sub.add_parser("cost", help="estimate the all-to-all cost of a dispatch pattern")
    p.add_argument("--pattern", metavar="PATH", help="dispatch matrix (.csv or .json)")
    common(p, "profile", "topology", "config", "out")

    p = sub.add_parser("fit", help="fit alpha/beta from timing samples")
    p.add_argument("--samples", metavar="PATH", help="CSV with src,dst,message_mb,time_us")
    common(p, "topology", "out")

    for name, helptext in (("train", "run training experiments"),
                           ("compare", "run balance and topo losses side by side")):
        p = sub.add_parser(name, help=helptext)
        common(p, "config", "out")
        p.add_argument("--seeds", type=_seed_list, metavar="a,b,c")
        p.add_argument("--loss", action="append", choices=("balance", "topo", "compulsory"))
        p.add_argument("--norm", choices=tuple(NORMS))
        p.add_argument("--temp", type=float, metavar="T")
        p.add_argument("--capacity", choices=tuple(CAPACITIES))
        p.add_argument("--capacity-factor", type=float, metavar="F")
        if name == "compare":
            p.add_argument("--ablation", action="store_true",
                           help="add the compulsory count-clamp run")

    p = sub.add_parser("report", help="rebuild aggregate and summary from a run directory")
    p.add_argument("--input", metavar="DIR", help="directory with *_summary.json files")
    common(p, "out")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InfeasibleError, TrainingDiverged) as exc:
        code = EXIT_INVALID if isinstance(exc, InfeasibleError) else EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, OverflowError) as exc:
        # json.JSONDecodeError and TopologyError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
