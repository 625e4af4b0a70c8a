"""``loopsim`` command-line interface.

Exit status: 0 on success, 1 if any sweep cell failed, 2 on usage, input or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .dls import TECHNIQUES
from .experiment import ConfigError, ExperimentConfig, atomic_write, grid_config, run_sweep
from .platform import PRESETS, calibrate_core_speed, estimate_perturbation
from .workload import (
    DEFAULT_FLOP_PER_ITER,
    DEFAULT_MAX_ITER,
    DEFAULT_WINDOW,
    fit_ecdf,
    generate_low_variability,
    generate_mandelbrot,
    load_trace,
    save_ecdf,
    save_trace,
)

log = logging.getLogger("loopsim")


class CliError(Exception):
    pass


def _cmd_generate(args) -> int:
    if args.kind == "mandelbrot":
        trace = generate_mandelbrot(args.width, args.height, tuple(args.window), args.max_iter, args.flop_per_iter)
    else:
        trace = generate_low_variability(args.n, args.mean, args.cov, args.seed)
    save_trace(trace, args.out)
    print(f"wrote {trace.n} tasks to {args.out} (total {trace.total:.6g} FLOP)")
    return 0


def _cmd_fit_ecdf(args) -> int:
    trace = load_trace(args.trace)
    model = fit_ecdf(trace)
    save_ecdf(model, args.out)
    print(f"min {float(model.values[0])!r} max {float(model.values[-1])!r} segments {model.n_segments}")
    if model.is_degenerate:
        print("warning: all tasks have the same cost; the fitted distribution is degenerate", file=sys.stderr)
    return 0


def _read_times(path: str) -> list[float]:
    times = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                times.append(float(line))
            except ValueError:
                raise CliError(f"{path}: line {lineno}: not a number: {line!r}") from None
    return times


def _cmd_estimate_perturbation(args) -> int:
    times = _read_times(args.times)
    if len(times) < 2:
        raise CliError(f"{args.times}: need at least 2 execution times, got {len(times)}")
    model = estimate_perturbation(times)
    mean = sum(times) / len(times)
    print(f"mean_s {mean!r}")
    print(f"pl_min {model.pl_min!r}")
    print(f"pl_max {model.pl_max!r}")
    return 0


def _cmd_calibrate_speed(args) -> int:
    flops = args.flops
    if args.trace:
        flops = load_trace(args.trace).total
    if flops is None:
        raise CliError("give --flops or --trace")
    print(f"core_speed_flops {calibrate_core_speed(flops, args.seconds)!r}")
    return 0


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = grid_config()
    if args.preset in PRESETS:
        cfg.platform = args.preset
    elif args.preset == "paper" and args.config:
        grid = grid_config()
        cfg.techniques, cfg.pe_counts, cfg.replications = grid.techniques, grid.pe_counts, grid.replications
    if args.set:
        cfg = cfg.with_overrides(args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.replications = args.reps
    if args.out is not None:
        cfg.out = args.out
    if args.chunk_log:
        cfg.chunk_log = True
    if getattr(args, "technique", None):
        cfg.techniques = [args.technique]
    if getattr(args, "pes", None):
        cfg.pe_counts = [args.pes]
    return cfg


def _sweep(cfg: ExperimentConfig, jobs: int) -> int:
    outcome = run_sweep(cfg, jobs=jobs, out=cfg.out)
    print(metrics.summary_table(outcome.aggregates))
    print(f"{len(outcome.rows)} result records written to {cfg.out}")
    for err in outcome.errors:
        print(f"error: {err['technique']} P={err['P']}: {err['error']}", file=sys.stderr)
    return 0 if outcome.ok else 1


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    if len(cfg.techniques) != 1 or len(cfg.pe_counts) != 1:
        raise CliError("run needs exactly one technique and one P (use --technique/--pes or sweep)")
    return _sweep(cfg, 1)


def _cmd_sweep(args) -> int:
    return _sweep(_load_config(args), args.jobs)


def _cmd_report(args) -> int:
    out = Path(args.results)
    path = out / "metrics.csv"
    if not path.exists():
        raise CliError(f"no metrics.csv in {out}")
    rows = metrics.read_metrics_csv(path.read_text(encoding="utf-8"))
    aggs = metrics.aggregate_rows(rows)
    atomic_write(out / "aggregate.csv", metrics.aggregate_csv(aggs))
    print(metrics.summary_table(aggs))
    errors = out / "errors.json"
    if errors.exists():
        for err in json.loads(errors.read_text(encoding="utf-8")):
            print(f"failed cell: {err['technique']} P={err['P']}: {err['error']}")
        return 1
    return 0


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--preset", choices=["paper", *PRESETS], help="full 9 x 5 x 20 grid, or a platform preset")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--reps", type=int, help="replications per cell")
    p.add_argument("--out", help="output directory")
    p.add_argument("--chunk-log", action="store_true", help="also write per-run chunk CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsim", description="Simulate dynamic loop self-scheduling on a master-worker cluster.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic trace file")
    g.add_argument("kind", choices=["mandelbrot", "low_variability"])
    g.add_argument("--out", required=True)
    g.add_argument("--width", type=int, default=512)
    g.add_argument("--height", type=int, default=512)
    g.add_argument("--window", type=float, nargs=4, default=list(DEFAULT_WINDOW),
                   metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"))
    g.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    g.add_argument("--flop-per-iter", type=float, default=DEFAULT_FLOP_PER_ITER)
    g.add_argument("--n", type=int, default=400000)
    g.add_argument("--mean", type=float, default=1e6)
    g.add_argument("--cov", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_generate)

    f = sub.add_parser("fit-ecdf", help="fit the piecewise eCDF of a trace")
    f.add_argument("trace")
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fit_ecdf)

    e = sub.add_parser("estimate-perturbation", help="perturbation bounds from execution times")
    e.add_argument("times", help="one execution time in seconds per line")
    e.set_defaults(func=_cmd_estimate_perturbation)

    c = sub.add_parser("calibrate-speed", help="core speed from a sequential run")
    c.add_argument("--flops", type=float)
    c.add_argument("--trace")
    c.add_argument("--seconds", type=float, required=True)
    c.set_defaults(func=_cmd_calibrate_speed)

    r = sub.add_parser("run", help="run one (technique, P) cell")
    _add_experiment_flags(r)
    r.add_argument("--technique", choices=TECHNIQUES)
    r.add_argument("--pes", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run the technique x P x replication grid")
    _add_experiment_flags(s)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    rep = sub.add_parser("report", help="aggregate and summarize a results directory")
    rep.add_argument("results")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"loopsim: error: no such file: {exc.filename}", file=sys.stderr)
    except (CliError, ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"loopsim: error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
