"""Monte Carlo harness: scheme comparisons, parameter sweeps, convergence traces.

Every (scheme, sweep value, trial) cell runs one AO trial seeded by
``trial_rng(seed, trial)``, so all schemes and sweep values of a given trial
see the same channel draws. Tables are sorted by key before anything is
written, which makes the CSV output independent of worker scheduling.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .ao import InfeasibleTrialError, run
from .config import ALL_SCHEMES, SchemeFlags, SystemConfig, load_config, trial_rng

log = logging.getLogger(__name__)

# short names accepted on the command line
SWEEP_KEYS = {
    "N": "num_ris_elements",
    "M": "num_bs_antennas",
    "K": "num_users",
    "L": "num_paths",
    "pmax_dbm": "pmax_dbm",
    "rate_threshold": "rate_threshold_bpshz",
}

PROFILES = {
    "desk": ({"num_ris_elements": 16, "num_bs_antennas": 4, "num_users": 3}, 20),
    "full": ({"num_ris_elements": 49, "num_bs_antennas": 8, "num_users": 4}, 100),
}

SWEEP_COLUMNS = ("sweep_value", "scheme", "mean_ee", "stderr", "outages")
CONVERGENCE_COLUMNS = ("iteration", "EE", "trial", "N")
TRIAL_COLUMNS = ("sweep_value", "scheme", "trial", "ee", "sum_rate", "iterations",
                 "termination", "outage")


class EmptyTableError(ValueError):
    pass


def profile_config(name: str, base: SystemConfig | None = None) -> tuple[SystemConfig, int]:
    """Config and default trial count for a named profile."""
    try:
        sizes, trials = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    base = SystemConfig() if base is None else base
    return base.replace(**sizes), trials


def with_value(template: SystemConfig, variable: str | None, value) -> SystemConfig:
    if variable is None:
        return template
    key = SWEEP_KEYS.get(variable, variable)
    if key in ("num_ris_elements", "num_bs_antennas", "num_users", "num_paths"):
        value = int(value)
    return load_config(template.to_dict(), **{key: value})


@dataclass
class TrialRecord:
    scheme: str
    sweep_value: float | None
    trial: int
    ee: float = math.nan
    sum_rate: float = math.nan
    iterations: int = 0
    termination: str = ""
    outage: bool = False
    ee_trace: list = field(default_factory=list)

    @property
    def key(self):
        value = -math.inf if self.sweep_value is None else self.sweep_value
        return (value, ALL_SCHEMES.index(self.scheme) if self.scheme in ALL_SCHEMES else 99,
                self.scheme, self.trial)


@dataclass
class ResultTable:
    variable: str | None
    records: list = field(default_factory=list)
    seed: int = 0
    config_digest: str = ""
    num_ris_elements: int | None = None

    def __len__(self):
        return len(self.records)

    def sorted_records(self) -> list:
        return sorted(self.records, key=lambda r: r.key)

    def cells(self) -> list[dict]:
        """Mean and standard error of final EE per (sweep value, scheme)."""
        groups: dict = {}
        for rec in self.sorted_records():
            groups.setdefault((rec.key[0], rec.key[1], rec.scheme, rec.sweep_value), []).append(rec)
        out = []
        for (_, _, scheme, value), recs in sorted(groups.items(), key=lambda kv: kv[0][:3]):
            ee = np.array([r.ee for r in recs if not r.outage])
            mean = float(ee.mean()) if len(ee) else math.nan
            stderr = float(ee.std(ddof=1) / math.sqrt(len(ee))) if len(ee) > 1 else 0.0
            out.append({"sweep_value": value, "scheme": scheme, "mean_ee": mean,
                        "stderr": stderr, "outages": sum(r.outage for r in recs),
                        "trials": len(recs)})
        return out

    def mean_ee(self, scheme: str, sweep_value=None) -> float:
        for cell in self.cells():
            if cell["scheme"] == scheme and cell["sweep_value"] == sweep_value:
                return cell["mean_ee"]
        raise KeyError((scheme, sweep_value))


def run_trial(config: SystemConfig, seed: int, trial: int, sweep_value=None) -> TrialRecord:
    rec = TrialRecord(config.scheme.name, sweep_value, trial)
    try:
        state, report = run(config, trial_rng(seed, trial))
    except InfeasibleTrialError as exc:
        log.info("trial %d (%s, %s) outage: %s", trial, rec.scheme, sweep_value, exc)
        rec.outage = True
        rec.termination = "outage"
        return rec
    rec.ee = float(report.final_ee)
    rec.sum_rate = float(report.sum_rate_per_iteration[-1])
    rec.iterations = report.iterations_used
    rec.termination = report.termination
    rec.ee_trace = [float(x) for x in report.ee_per_iteration]
    return rec


def _run_job(job):
    config, seed, trial, value = job
    return run_trial(config, seed, trial, value)


def _execute(jobs: list, workers: int) -> list[TrialRecord]:
    if workers <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=1))


def run_sweep(template: SystemConfig, variable: str | None, values: Sequence | None,
              schemes: Iterable[str] = ALL_SCHEMES, trials: int = 20, seed: int = 0,
              workers: int = 1) -> ResultTable:
    """One AO run per (scheme, value, trial) with trial seeds shared across cells.

    ``variable=None`` runs the template as is (a scheme comparison).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    values = [None] if variable is None else list(values)
    jobs = []
    for value in values:
        cfg = with_value(template, variable, value)
        for scheme in schemes:
            scheme_cfg = cfg.replace(scheme=SchemeFlags.from_name(scheme))
            jobs.extend((scheme_cfg, seed, t, value) for t in range(trials))
    table = ResultTable(variable, _execute(jobs, workers), seed, template.digest(),
                        template.num_ris_elements)
    table.records = table.sorted_records()
    return table


def run_convergence(template: SystemConfig, ris_sizes: Sequence[int], trials: int = 1,
                    seed: int = 0, workers: int = 1) -> ResultTable:
    """MA-ME traces for each RIS size (the ``N`` column of the convergence file)."""
    return run_sweep(template.replace(scheme=SchemeFlags(True, True)), "N", ris_sizes,
                     ["MA-ME"], trials, seed, workers)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# generated: {stamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_plot_data(table: ResultTable, kind: str, out_dir: str | Path,
                   stem: str | None = None) -> Path:
    """Write one plot-ready CSV; the first line is a ``# generated:`` stamp.

    sweep:       sweep_value, scheme, mean_ee, stderr, outages
    convergence: iteration, EE, trial, N
    trials:      one row per trial (final EE, iterations, outage flag)
    """
    if not len(table):
        raise EmptyTableError("result table is empty; nothing written")
    out_dir = Path(out_dir)
    stem = stem or kind
    if kind == "sweep":
        rows = ([c[k] for k in SWEEP_COLUMNS] for c in table.cells())
        return _write_csv(out_dir / f"{stem}.csv", SWEEP_COLUMNS, rows)
    if kind == "convergence":
        rows = []
        for rec in table.sorted_records():
            n = rec.sweep_value if table.variable == "N" else table.num_ris_elements
            rows.extend((i, ee, rec.trial, n) for i, ee in enumerate(rec.ee_trace))
        return _write_csv(out_dir / f"{stem}.csv", CONVERGENCE_COLUMNS, rows)
    if kind == "trials":
        rows = ([r.sweep_value, r.scheme, r.trial, r.ee, r.sum_rate, r.iterations,
                 r.termination, r.outage] for r in table.sorted_records())
        return _write_csv(out_dir / f"{stem}.csv", TRIAL_COLUMNS, rows)
    raise ValueError(f"unknown plot-data kind {kind!r}")


def read_plot_data(path: str | Path) -> list[dict]:
    """Parse a file written by :func:`emit_plot_data` (skips the stamp line)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_manifest(out_dir: str | Path, template: SystemConfig, seed: int, **extra) -> Path:
    """JSON record of what produced the CSVs in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_digest": template.digest(),
        "config": template.to_dict(),
        "seed": seed,
        "versions": {"moveris": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "pyyaml": yaml.__version__,
                     "python": platform.python_version()},
        **extra,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_trial_outputs(out_dir: str | Path, state, report) -> list[Path]:
    """Per-iteration trace, Dinkelbach trace and the final audit for one trial."""
    out_dir = Path(out_dir)
    trace = _write_csv(out_dir / "trace.csv", ("iteration", "EE", "sum_rate"),
                       ((i, ee, r) for i, (ee, r) in enumerate(
                           zip(report.ee_per_iteration, report.sum_rate_per_iteration))))
    rows = []
    for call, entry in enumerate(report.dinkelbach):
        rows.extend((call, step, lam, F) for step, (lam, F) in
                    enumerate(zip(entry["lambda"], entry["F"])))
    dink = _write_csv(out_dir / "dinkelbach.csv", ("invocation", "step", "lambda", "F"), rows)
    summary = out_dir / "report.json"
    data = report.to_dict()
    data["final_state"] = {"p": state.p.tolist(), "theta": state.theta.tolist(),
                           "U": state.U.coords.tolist(), "T": state.T.coords.tolist(),
                           "rates": state.rates.tolist()}
    summary.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")
    return [trace, dink, summary]


def dump_channels(path: str | Path, state) -> Path:
    ch = state.channels
    np.savez(path, H=ch.H, h=ch.h, g=ch.g, U=ch.U, T=ch.T, theta=state.theta)
    return Path(path)


def paired_fraction(table: ResultTable, better: str, worse: str, slack: float = 0.0) -> float:
    """Share of non-outage trials where ``better`` reaches at least ``worse``'s EE."""
    by_key = {(r.sweep_value, r.scheme, r.trial): r for r in table.records}
    wins = total = 0
    for (value, scheme, trial), rec in by_key.items():
        if scheme != better or rec.outage:
            continue
        other = by_key.get((value, worse, trial))
        if other is None or other.outage:
            continue
        total += 1
        wins += rec.ee >= other.ee * (1.0 - slack)
    return wins / total if total else math.nan


def table_to_dict(table: ResultTable) -> dict:
    return {"variable": table.variable, "seed": table.seed,
            "config_digest": table.config_digest,
            "records": [asdict(r) for r in table.sorted_records()]}
