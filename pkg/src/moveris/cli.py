"""Command line entry point: ``moveris run | sweep | convergence``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import bench
from .ao import InfeasibleTrialError, run
from .config import ALL_SCHEMES, ConfigError, SchemeFlags, load_config, trial_rng


def _parse_values(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok:
            out.append(float(tok))
    return out


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    """``"pmax_dbm=0,4,8"`` -> ``("pmax_dbm", [0, 4, 8])``."""
    name, sep, values = spec.partition("=")
    if not sep or not values.strip():
        raise argparse.ArgumentTypeError(f"sweep spec must look like NAME=v1,v2,...; got {spec!r}")
    name = name.strip()
    if name not in bench.SWEEP_KEYS:
        raise argparse.ArgumentTypeError(
            f"unknown sweep variable {name!r}; choose from {sorted(bench.SWEEP_KEYS)}")
    try:
        return name, _parse_values(values)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _schemes(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    return [SchemeFlags.from_name(s).name for s in names]


def _template(args) -> tuple:
    overrides = {}
    if getattr(args, "rate_threshold", None) is not None:
        overrides["rate_threshold_bpshz"] = args.rate_threshold
    if getattr(args, "pmax_dbm", None) is not None:
        overrides["pmax_dbm"] = args.pmax_dbm
    cfg = load_config(args.config, **overrides)
    trials = None
    if args.profile:
        cfg, trials = bench.profile_config(args.profile, cfg)
    return cfg, trials


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moveris", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, required=True)
    common.add_argument("--profile", choices=sorted(bench.PROFILES),
                        help="desk or full scale (sets N, M, K and the default trial count)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--rate-threshold", type=float, help="override R_th (bps/Hz)")
    common.add_argument("--pmax-dbm", type=float, help="override the per-user power budget")

    p_run = sub.add_parser("run", parents=[common], help="single trial with its full trace")
    p_run.add_argument("--trial", type=int, default=0)
    p_run.add_argument("--scheme", default="MA-ME")
    p_run.add_argument("--dump-channels", action="store_true",
                       help="also save the final channels as channels.npz")

    for name, helptext in (("sweep", "Monte Carlo grid over schemes and one parameter"),
                           ("convergence", "MA-ME EE traces for several RIS sizes")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            p.add_argument("--schemes", type=_schemes, default=list(ALL_SCHEMES))
            p.add_argument("--sweep", type=parse_sweep,
                           help="NAME=v1,v2,... with NAME in " + ", ".join(bench.SWEEP_KEYS))
        else:
            p.add_argument("--sizes", type=lambda s: [int(v) for v in _parse_values(s)],
                           default=[16, 36, 49], help="comma-separated N values")
    return parser


def _cmd_run(args) -> int:
    cfg, _ = _template(args)
    cfg = cfg.replace(scheme=SchemeFlags.from_name(args.scheme))
    t0 = time.perf_counter()
    try:
        state, report = run(cfg, trial_rng(args.seed, args.trial))
    except InfeasibleTrialError as exc:
        print(f"outage: {exc}", file=sys.stderr)
        return 2
    paths = bench.write_trial_outputs(args.out, state, report)
    if args.dump_channels:
        paths.append(bench.dump_channels(args.out / "channels.npz", state))
    paths.append(bench.write_manifest(args.out, cfg, args.seed, command="run", trial=args.trial))
    for i, ee in enumerate(report.ee_per_iteration):
        print(f"iter {i:3d}  EE {ee:.6f}")
    print(f"{report.termination} after {report.iterations_used} iterations "
          f"({time.perf_counter() - t0:.1f} s); worst residual {report.final_audit.worst():.2e}")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg, profile_trials = _template(args)
    trials = args.trials or profile_trials or 20
    variable, values = args.sweep if args.sweep else (None, None)
    table = bench.run_sweep(cfg, variable, values, args.schemes, trials, args.seed, args.workers)
    stem = f"sweep_{variable}" if variable else "schemes"
    paths = [bench.emit_plot_data(table, "sweep", args.out, stem),
             bench.emit_plot_data(table, "trials", args.out, f"{stem}_trials"),
             bench.write_manifest(args.out, cfg, args.seed, command="sweep", variable=variable,
                                  values=values, schemes=args.schemes, trials=trials)]
    for cell in table.cells():
        print(json.dumps({k: cell[k] for k in bench.SWEEP_COLUMNS}))
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_convergence(args) -> int:
    cfg, profile_trials = _template(args)
    trials = args.trials or profile_trials or 1
    table = bench.run_convergence(cfg, args.sizes, trials, args.seed, args.workers)
    paths = [bench.emit_plot_data(table, "convergence", args.out),
             bench.write_manifest(args.out, cfg, args.seed, command="convergence",
                                  sizes=args.sizes, trials=trials)]
    for rec in table.sorted_records():
        print(f"N={int(rec.sweep_value)} trial={rec.trial} iterations={rec.iterations} "
              f"EE={rec.ee:.6f}")
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": _cmd_run, "sweep": _cmd_sweep, "convergence": _cmd_convergence}[
            args.command](args)
    except (ConfigError, bench.EmptyTableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
