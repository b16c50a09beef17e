"""Command-line entry point.

Three subcommands cover the full workflow:

  validate  compile a storage plan against a device and report timing
            violations;
  run       simulate a counting run (signal, noise floor, or cross-talk
            scan) and write a counts CSV plus a reproducibility manifest;
  analyze   turn counts CSVs into per-mode statistics, cumulative series,
            network projections, or the cross-talk matrix.

Exit codes: 0 success, 1 domain violation (infeasible plan, timing
violations, mismatched mode sets), 2 usage or configuration-file error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (
    SNR_DEFINITIONS,
    crosstalk_matrix,
    cumulative_counts,
    per_mode_stats,
    project_cells,
)
from .defaults import (
    NOISE_MODELS,
    PLANS,
    default_device_path,
    default_noise_path,
    default_plan_path,
)
from .errors import CompilationError, ConfigError, ModeSetMismatch
from .io import (
    file_sha256,
    load_device,
    load_noise,
    load_plan,
    read_counts_csv,
    write_counts_csv,
    write_crosstalk_csvs,
    write_cumulative_csv,
    write_manifest,
    write_mode_stats_csv,
    write_projections_csv,
    write_timeline_csv,
)
from .sequence import compile_plan, trial_duration, validate_timeline
from .simulate import RunKind, run_crosstalk_scan, run_trials


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _resolve_plan(value: str) -> Path:
    return default_plan_path(value) if value in PLANS else Path(value)


def _resolve_noise(value: str) -> Path:
    return default_noise_path(value) if value in NOISE_MODELS else Path(value)


def _resolve_device(value: str) -> Path:
    return default_device_path() if value == "10cell" else Path(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memarray",
        description="Multiplexed quantum-memory array: timing validation, "
                    "counting simulation, and statistics.")
    parser.add_argument("--version", action="version",
                        version=f"memarray {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--plan", required=True, type=_resolve_plan,
                        help=f"plan file, or one of {'/'.join(PLANS)}")
    common.add_argument("--device", default="10cell", type=_resolve_device,
                        help="device file (default: the shipped ten-cell array)")

    p_val = sub.add_parser("validate", parents=[common],
                           help="compile a plan and check every timing rule")
    p_val.add_argument("--timeline", type=Path, default=None,
                       help="also write the compiled timeline CSV here")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", parents=[common],
                           help="simulate a counting run and write counts + manifest")
    p_run.add_argument("--noise", required=True, type=_resolve_noise,
                       help=f"noise file, or one of {'/'.join(NOISE_MODELS)}")
    p_run.add_argument("--trials", required=True, type=_positive_int,
                       help="number of storage trials")
    p_run.add_argument("--seed", default=0, type=_nonnegative_int,
                       help="random seed (default 0)")
    p_run.add_argument("--mode", default="signal",
                       choices=["signal", "noise", "crosstalk"],
                       help="run kind (default signal)")
    p_run.add_argument("--out-dir", default=Path("."), type=Path,
                       help="output directory (default .)")
    p_run.add_argument("--workers", default=1, type=_positive_int,
                       help="parallel workers; never changes the counts")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze",
                          help="derive statistics CSVs from counts CSVs")
    p_an.add_argument("--signal", required=True, type=Path,
                      help="counts CSV of the signal run or cross-talk scan")
    p_an.add_argument("--noise", required=True, type=Path,
                      help="counts CSV of the matching no-input run")
    p_an.add_argument("--plan", type=_resolve_plan, default=None,
                      help="plan file (required unless the input is a scan)")
    p_an.add_argument("--device", type=_resolve_device, default=None,
                      help="device file (required unless the input is a scan)")
    p_an.add_argument("--snr-definition", default="ratio",
                      choices=list(SNR_DEFINITIONS),
                      help="ratio: counts over noise; excess: subtract one")
    p_an.add_argument("--out-dir", default=Path("."), type=Path,
                      help="output directory (default .)")
    p_an.set_defaults(func=cmd_analyze)
    return parser


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    plan = load_plan(args.plan)
    device = load_device(args.device)
    missing = [c for c in plan.cell_order if c not in device.cell_ids]
    if missing:
        raise ConfigError(f"plan names cells {missing} that the device "
                          f"does not have", path=args.plan)
    timeline = compile_plan(plan)
    violations = validate_timeline(timeline)
    if args.timeline is not None:
        write_timeline_csv(args.timeline, timeline)
        print(f"timeline written to {args.timeline}")
    if violations:
        for v in violations:
            print(f"{v.rule}: {v.message}")
        print(f"{len(violations)} violation(s)")
        return 1
    print(f"plan OK: {len(timeline.events)} events, "
          f"{trial_duration(timeline):.3f} us per trial, 0 violations")
    return 0


def cmd_run(args) -> int:
    started = time.monotonic()
    plan = load_plan(args.plan)
    device = load_device(args.device)
    noise, leak = load_noise(args.noise,
                             default_dark_rate=device.dark_count_rate)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    if args.mode == "crosstalk":
        if leak is None:
            raise ConfigError("cross-talk runs need a [leakage] matrix in "
                              "the noise file", path=args.noise)
        result = run_crosstalk_scan(device, leak, noise, plan.storage,
                                    n_trials=args.trials, seed=args.seed,
                                    workers=args.workers)
        n_rows = len(result)
    else:
        result = run_trials(plan, device, noise, n_trials=args.trials,
                            seed=args.seed,
                            with_input=(args.mode == "signal"),
                            workers=args.workers)
        n_rows = len(result.counts)

    counts_path = write_counts_csv(args.out_dir / f"counts_{args.mode}.csv",
                                   result)
    manifest_path = args.out_dir / f"manifest_{args.mode}.json"
    write_manifest(manifest_path, {
        "tool": "memarray",
        "version": __version__,
        "command": "run",
        "mode": args.mode,
        "seed": args.seed,
        "trials": args.trials,
        "workers": args.workers,
        "inputs": {
            "plan": {"path": args.plan, "sha256": file_sha256(args.plan)},
            "device": {"path": args.device,
                       "sha256": file_sha256(args.device)},
            "noise": {"path": args.noise, "sha256": file_sha256(args.noise)},
        },
        "resolved": {"plan": plan, "device": device, "noise": noise,
                     "leakage": leak},
        "outputs": {counts_path.name: file_sha256(counts_path)},
        "duration_seconds": round(time.monotonic() - started, 3),
    })
    print(f"wrote {counts_path} ({n_rows} rows) and {manifest_path}")
    return 0


def _analyze_scan(args) -> int:
    scan = read_counts_csv(args.signal).to_scan()
    noise_file = read_counts_csv(args.noise)
    if noise_file.kind is not RunKind.NOISE:
        raise ConfigError("the --noise file of a scan analysis must be a "
                          "no-input run over the same cells",
                          path=args.noise)
    matrix = crosstalk_matrix(scan, noise_file.to_trial_counts())
    paths = write_crosstalk_csvs(args.out_dir / "crosstalk_matrix.csv",
                                 args.out_dir / "crosstalk_matrix_err.csv",
                                 args.out_dir / "crosstalk_summary.csv",
                                 matrix)
    print(f"mean off-diagonal cross talk: {matrix.mean_offdiagonal:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_analyze(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    if read_counts_csv(args.signal).kind is RunKind.CROSSTALK:
        return _analyze_scan(args)

    if args.plan is None or args.device is None:
        raise ConfigError("signal/noise analysis needs --plan and --device "
                          "for mode ordering and network projections")
    plan = load_plan(args.plan)
    device = load_device(args.device)
    signal = read_counts_csv(args.signal).to_trial_counts()
    noise = read_counts_csv(args.noise).to_trial_counts()

    stats = per_mode_stats(signal, noise, args.snr_definition)
    modes = [(cell, k) for cell in plan.cell_order
             for k in range(1, plan.storage.n_temporal + 1)]
    missing = [m for m in modes if m not in stats]
    if missing:
        raise ConfigError(f"counts do not cover the plan's modes "
                          f"(first missing: {missing[0]})", path=args.signal)

    cum_s = cumulative_counts([stats[m].c_signal for m in modes])
    cum_b = cumulative_counts([stats[m].c_noise for m in modes])
    # Poisson errors add in quadrature along the running sum.
    cum_s_err = [e ** 0.5 for e in
                 cumulative_counts([stats[m].err_signal ** 2 for m in modes])]
    cum_b_err = [e ** 0.5 for e in
                 cumulative_counts([stats[m].err_noise ** 2 for m in modes])]
    projections = project_cells(signal, noise, device, plan)

    paths = [
        write_mode_stats_csv(args.out_dir / "mode_stats.csv", stats),
        write_cumulative_csv(args.out_dir / "cumulative.csv", modes,
                             cum_s, cum_s_err, cum_b, cum_b_err),
        write_projections_csv(args.out_dir / "projections.csv", projections),
    ]
    finite = [s.snr for s in stats.values() if not s.snr_is_infinite]
    mean_snr = sum(finite) / len(finite) if finite else float("inf")
    print(f"{len(modes)} modes: cumulative signal {cum_s[-1]:.4g}, "
          f"cumulative noise {cum_b[-1]:.4g}, mean SNR {mean_snr:.3g}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CompilationError as exc:
        for violation in exc.violations:
            print(f"violation: {violation}", file=sys.stderr)
        return 1
    except (ModeSetMismatch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
