"""Shared argument handling for the experiment scripts."""
import argparse
import json
from pathlib import Path

from moveris import bench
from moveris.config import load_config


def parser(description, default_out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--profile", choices=sorted(bench.PROFILES), default="desk")
    p.add_argument("--config", help="YAML file applied before the profile sizes")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--trials", type=int, help="defaults to the profile's trial count")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results") / default_out)
    return p


def template(args, **overrides):
    cfg, trials = bench.profile_config(args.profile, load_config(args.config, **overrides))
    return cfg, args.trials or trials


def sweep(args, variable, values, schemes, stem, **overrides):
    cfg, trials = template(args, **overrides)
    table = bench.run_sweep(cfg, variable, values, schemes, trials, args.seed, args.workers)
    bench.emit_plot_data(table, "sweep", args.out, stem)
    bench.emit_plot_data(table, "trials", args.out, f"{stem}_trials")
    bench.write_manifest(args.out, cfg, args.seed, variable=variable, values=values,
                         schemes=list(schemes), trials=trials)
    for cell in table.cells():
        print(json.dumps({k: cell[k] for k in bench.SWEEP_COLUMNS}))
    return table
