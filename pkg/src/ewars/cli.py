"""
Command-line front end.

    ewars simulate   write a synthetic measurement CSV
    ewars estimate   run EWARS on a CSV file or on stdin ("-"), row by row
    ewars replay     re-run estimation offline on a recorded CSV
    ewars bench      fBFS vs EWARS cost and noise comparison
    ewars repro      plot-ready data for the constant, variable and comparison figures

Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .chamber_sim import SimulationResult, scenario_constant, scenario_steps, simulate
from .config import ConfigError, RunConfig, load_config, load_scenario, write_scenario
from .estimator import EstimateRecord, MeasurementSample, bench_compare, iter_ewars, run_ewars
from .gas_dynamics import DomainError
from .search import MM2
from .streams import (DataError, bounded_pipeline, ingest_measurements, summarize,
                      write_estimates, write_measurements)

log = logging.getLogger("ewars")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


def _open_out(path: str | None):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="\n")


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stderr.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def _summary_path(args, out: str | None) -> str | None:
    if args.summary:
        return args.summary
    if out in (None, "-"):
        return None
    return str(Path(out).with_suffix(".summary.json"))


def _truth(cfg: RunConfig):
    if cfg.truth_file is None:
        return None
    return load_scenario(cfg.truth_file, duration=1.0)


def _simulate(cfg: RunConfig) -> SimulationResult:
    return simulate(cfg.scenario(), cfg.sensor(), cfg.chamber(), cfg.dt_s)


def _samples(sim: SimulationResult):
    return [MeasurementSample(float(t), float(p)) for t, p in zip(sim.times, sim.pressures)]


def cmd_simulate(cfg: RunConfig, args) -> int:
    sim = _simulate(cfg)
    with _open_out(cfg.out) as fh:
        write_measurements(fh, sim.times, sim.pressures, cfg.pressure_unit)
    if args.truth_out:
        write_scenario(sim.scenario, args.truth_out)
    return EXIT_OK


def _emit(cfg: RunConfig, args, records) -> list[EstimateRecord]:
    truth = _truth(cfg)
    with _open_out(cfg.out) as fh:
        kept = write_estimates(fh, records, truth)
    _write_json(summarize(kept, truth), _summary_path(args, cfg.out))
    return kept


def cmd_estimate(cfg: RunConfig, args) -> int:
    source = cfg.input or "-"
    stream = sys.stdin if source == "-" else source
    samples = bounded_pipeline(ingest_measurements(stream, cfg.strict))
    _emit(cfg, args, iter_ewars(samples, cfg.ewars_config(), cfg.chamber()))
    return EXIT_OK


def cmd_replay(cfg: RunConfig, args) -> int:
    if cfg.input in (None, "-"):
        raise ConfigError("replay needs a recorded measurement file")
    samples = list(ingest_measurements(cfg.input, cfg.strict))
    _emit(cfg, args, run_ewars(samples, cfg.ewars_config(), cfg.chamber()))
    return EXIT_OK


def _bench(cfg: RunConfig, samples, truth, out_dir: Path, stem: str) -> dict:
    report = bench_compare(samples, cfg.ewars_config(), cfg.chamber(), cfg.n0_fbfs or None)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = min(report.times.size, report.fbfs_estimates.size)
    with open(out_dir / f"{stem}_series.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_s,area_mm2_fbfs,area_mm2_ewars,area_mm2_true\n")
        for i in range(n):
            t = report.times[i]
            true_area = "" if truth is None else f"{truth.area_at(t) / MM2:.6g}"
            fh.write(f"{t:.6f},{report.fbfs_estimates[i] / MM2:.6g},"
                     f"{report.ewars_estimates[i] / MM2:.6g},{true_area}\n")
    summary = report.summary()
    settled = report.times[:n] >= min(60.0, report.times[-1] / 2) if n else np.zeros(0, bool)
    if settled.any():
        summary["std_fbfs_mm2"] = float(np.std(report.fbfs_estimates[:n][settled]) / MM2)
        summary["std_ewars_mm2"] = float(np.std(report.ewars_estimates[:n][settled]) / MM2)
        summary["std_window_start_s"] = float(report.times[:n][settled][0])
    (out_dir / f"{stem}_report.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def cmd_bench(cfg: RunConfig, args) -> int:
    if cfg.input not in (None, "-"):
        samples = list(ingest_measurements(cfg.input, cfg.strict))
        truth = _truth(cfg)
    else:
        sim = _simulate(cfg)
        samples, truth = _samples(sim), sim.scenario
    summary = _bench(cfg, samples, truth, Path(cfg.out or "bench"), "bench")
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _run_case(cfg: RunConfig, scenario, path: Path) -> dict:
    sim = simulate(scenario, cfg.sensor(), cfg.chamber(), cfg.dt_s)
    records = run_ewars(_samples(sim), cfg.ewars_config(), cfg.chamber())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_estimates(fh, records, scenario)
    return summarize(records, scenario)


def cmd_repro(cfg: RunConfig, args) -> int:
    out_dir = Path(cfg.out or "repro")
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = {}
    if args.figure == "fig5":
        cfg = cfg.replace(n_grid=150, alpha=0.125)
        for area in (0.16, 0.22, 0.28):
            name = f"fig5_{area:.2f}mm2"
            summaries[name] = _run_case(cfg, scenario_constant(area * MM2, 300.0),
                                        out_dir / f"{name}.csv")
    elif args.figure == "fig6":
        cfg = cfg.replace(n_grid=250, alpha=0.01)
        for name, areas in (("increasing", (0.08, 0.12, 0.16)), ("decreasing", (0.16, 0.12, 0.08))):
            scenario = scenario_steps([a * MM2 for a in areas], 180.0)
            summaries[f"fig6_{name}"] = _run_case(cfg, scenario, out_dir / f"fig6_{name}.csv")
    else:
        cfg = cfg.replace(n_grid=150, alpha=0.125)
        scenario = scenario_constant(0.25 * MM2, 300.0)
        sim = simulate(scenario, cfg.sensor(), cfg.chamber(), cfg.dt_s)
        summaries["fig7"] = _bench(cfg, _samples(sim), scenario, out_dir, "fig7")
    (out_dir / f"{args.figure}_summary.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (default: $EWARS_CONFIG)")
    common.add_argument("--alpha", type=float, help="smoothing factor in [0, 1]")
    common.add_argument("--n-grid", type=int, help="grid intervals per refinement level")
    common.add_argument("--epsilon-mm2", type=float, help="search resolution in mm^2")
    common.add_argument("--anchor", choices=["previous", "initial"], help="model anchor")
    common.add_argument("--seed", type=int, help="sensor noise seed")
    common.add_argument("--out", help="output file or directory ('-' for stdout)")
    common.add_argument("--strict", action="store_true", default=None,
                        help="fail with exit 3 on malformed input rows")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="ewars", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic measurement CSV")
    p.add_argument("--truth-out", help="also write the leak schedule (start_s,area_mm2)")
    p.add_argument("--pressure-unit", choices=["pa", "atm"])

    for name, text in (("estimate", "estimate from a CSV file or stdin ('-')"),
                       ("replay", "re-run estimation offline on a recorded CSV")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("input", nargs="?", help="measurement CSV ('-' for stdin)")
        p.add_argument("--truth", help="leak schedule file for the area_mm2_true column")
        p.add_argument("--summary", help="summary JSON path (default: next to --out, or stderr)")

    p = sub.add_parser("bench", parents=[common], help="fBFS vs EWARS comparison")
    p.add_argument("input", nargs="?", help="measurement CSV (default: simulate from config)")
    p.add_argument("--truth", help="leak schedule file")
    p.add_argument("--n0-fbfs", type=int, help="fBFS grid intervals (default: matched to epsilon)")

    p = sub.add_parser("repro", parents=[common], help="plot-ready figure data")
    p.add_argument("figure", choices=["fig5", "fig6", "fig7"])
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {
        "alpha": args.alpha, "n_grid": args.n_grid, "epsilon_mm2": args.epsilon_mm2,
        "anchor": args.anchor, "seed": args.seed, "out": args.out, "strict": args.strict,
        "input": getattr(args, "input", None), "truth_file": getattr(args, "truth", None),
        "pressure_unit": getattr(args, "pressure_unit", None),
        "n0_fbfs": getattr(args, "n0_fbfs", None),
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return cfg.replace(**overrides)
    except ConfigError as exc:
        raise ConfigError(f"command line: {exc}") from None


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "replay": cmd_replay,
            "bench": cmd_bench, "repro": cmd_repro}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="ewars: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        print(f"ewars: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"ewars: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"ewars: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
