"""Command-line entry point: ``d2dvideo {placement,simulate,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 placement solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .config import POLICIES, RunConfig, config_from_dict, load_config
from .engine import Simulator, prepare_placement
from .experiments import placement_sweep, simulation_sweep
from .model import ConfigError
from .placement import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

PLACEMENT_AXES = ("storage", "device_intensity", "snr_db")
SIMULATION_AXES = ("device_intensity", "coverage_radius", "quality_weight", "snr_db")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _provenance(config: RunConfig, **extra) -> dict:
    return {"config_hash": config.config_hash, "version": __version__, **extra}


def cmd_placement(config: RunConfig, out: Path) -> None:
    solution, layout = prepare_placement(config)
    F, Q = solution.shape
    _write_csv(out / "placement_p.csv", ["file"] + [f"q{q + 1}" for q in range(Q)],
               [[i + 1] + [f"{v:.6f}" for v in row] for i, row in enumerate(solution.p)])
    report = solution.to_report()
    report.update(_provenance(config))
    report["objective"] = solution.objective()
    report["packing_residual_max"] = float(layout.residual.max(initial=0.0))
    _write_json(out / "placement_report.json", report)
    for axis in PLACEMENT_AXES:
        if getattr(config.sweep, axis):
            rows = [(x, i, q, f"{p:.6f}") for x, i, q, p in placement_sweep(config, axis)]
            _write_csv(out / f"placement_sweep_{axis}.csv", ["x", "file", "quality", "p"], rows)


def cmd_simulate(config: RunConfig, out: Path, seed: int, policies) -> None:
    placement = prepare_placement(config)
    summary = _provenance(config, seed=seed, slots=config.simulation.slots, runs={})
    for policy in policies:
        report = Simulator(config, seed, policy, placement=placement).run()
        _write_csv(out / f"trace_{policy}.csv",
                   ["slot", "user", "Q_n", "quality_dB", "mode", "delayed"],
                   report.trace_rows())
        summary["runs"][policy] = report.summary()
    _write_json(out / "summary.json", summary)


def cmd_sweep(config: RunConfig, out: Path, jobs: int) -> None:
    axes = [a for a in SIMULATION_AXES if getattr(config.sweep, a)]
    if not axes:
        raise ConfigError("sweep needs at least one non-empty axis")
    index = {}
    for axis in axes:
        rows = simulation_sweep(config, axis, jobs=jobs)
        name = f"sweep_{axis}.csv"
        _write_csv(out / name, ["x", "policy", "V", "metric", "mean", "stderr"],
                   [(x, p, v, m, repr(mean), repr(se)) for x, p, v, m, mean, se in rows])
        index[axis] = name
    _write_json(out / "sweep_index.json",
                _provenance(config, seeds=list(config.simulation.seeds),
                            slots=config.simulation.slots, files=index))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2dvideo", description="D2D video caching placement and streaming simulation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    common(sub.add_parser("placement", help="solve and pack the caching probabilities"))
    sim = sub.add_parser("simulate", help="run the streaming simulation for one seed")
    common(sim)
    sim.add_argument("--seed", type=int, help="scenario seed (default: first config seed)")
    sim.add_argument("--policy", choices=POLICIES + ("all",), default="all")
    sim.add_argument("--trace-stride", type=int, help="keep every K-th slot in traces")
    sim.add_argument("--slots", type=int, help="override simulation.slots")
    swp = sub.add_parser("sweep", help="multi-seed parameter sweeps")
    common(swp)
    swp.add_argument("--policy", choices=POLICIES + ("all",), default="all")
    swp.add_argument("--slots", type=int, help="override simulation.slots")
    swp.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    raw = json.loads(json.dumps(config.raw))
    if getattr(args, "trace_stride", None) is not None:
        raw["simulation"]["trace_stride"] = args.trace_stride
    if getattr(args, "slots", None) is not None:
        raw["simulation"]["slots"] = args.slots
    if args.command == "sweep" and args.policy != "all":
        raw["sweep"]["policies"] = [args.policy]
    return config_from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "placement":
            cmd_placement(config, args.out)
        elif args.command == "simulate":
            seed = config.simulation.seeds[0] if args.seed is None else args.seed
            policies = POLICIES if args.policy == "all" else (args.policy,)
            cmd_simulate(config, args.out, seed, policies)
        else:
            cmd_sweep(config, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        lo, hi = exc.bracket
        print(f"placement solver failed: {exc}\n"
              f"  multiplier bracket: [{lo!r}, {hi!r}]\n"
              f"  storage gap: {exc.storage_gap!r}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"config error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
