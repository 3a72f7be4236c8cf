"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

The Monte Carlo runs are shared through module-scoped fixtures. Run with
``pytest tests/test_acceptance.py -v`` (about 20 minutes on one core).
"""
import numpy as np
import pytest
import scipy.linalg as sla

from conftest import random_state, unit_rows
from moveris import bench
from moveris.ao import InfeasibleTrialError, run
from moveris.config import ALL_SCHEMES, SchemeFlags, SystemConfig, ToleranceSet, trial_rng
from moveris.phase import rate_gradient_phases
from moveris.position import rate_gradient_positions
from moveris.postcoder import mmse_direction
from moveris.power import GainTable, PowerParams, energy_efficiency, optimize_powers

pytestmark = pytest.mark.slow

SEED = 2024
DESK, DESK_TRIALS = bench.profile_config("desk")
ORDER_TRIALS = 50
TREND_TRIALS = 10
PMAX_TRIALS = 20


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def scheme_runs():
    """Paired desk-scale trials for every scheme: {scheme: [(state, report) or None]}."""
    out = {}
    for name in ALL_SCHEMES:
        cfg = DESK.replace(scheme=SchemeFlags.from_name(name))
        runs = []
        for t in range(ORDER_TRIALS):
            try:
                runs.append(run(cfg, trial_rng(SEED, t)))
            except InfeasibleTrialError:
                runs.append(None)
        out[name] = runs
    return out


@pytest.fixture(scope="module")
def desk_reports(scheme_runs):
    return [r[1] for r in scheme_runs["MA-ME"][:DESK_TRIALS] if r is not None]


def _fd(f, x, step):
    out = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_criterion_1_gradients(capsys):
    cfg = SystemConfig(num_ris_elements=8, num_bs_antennas=4, num_users=3, num_paths=2)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        s = random_state(cfg, rng)
        fd = _fd(lambda th: s.replace(theta=th).sum_rate, s.theta, 1e-6)
        worst = max(worst, _rel(rate_gradient_phases(s)[1], fd))
        for which in "UT":
            ps = getattr(s, which)
            f = lambda x: s.replace(**{which: ps.with_coords(x.reshape(-1, 2))}).sum_rate  # noqa: E731
            fd = _fd(f, ps.coords.ravel(), 1e-6 * cfg.wavelength_m)
            worst = max(worst, _rel(rate_gradient_positions(s, which)[1], fd))
    verdict(capsys, 1, worst <= 1e-5, f"worst relative gradient error {worst:.2e} (limit 1e-5)")


def test_criterion_2_postcoder(capsys):
    rng = np.random.default_rng(SEED)
    K, M, noise = 3, 4, 1e-2
    worst_vec, worst_gap = 0.0, -np.inf
    for _ in range(100):
        a = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
        p = rng.uniform(0.05, 1.0, K)
        k = int(rng.integers(K))
        B = sum(p[j] * np.outer(a[j], a[j].conj()) for j in range(K) if j != k) + noise * np.eye(M)
        w, vecs = sla.eigh(p[k] * np.outer(a[k], a[k].conj()), B)
        ref = vecs[:, -1] / np.linalg.norm(vecs[:, -1])
        v = mmse_direction(a, p, noise, k)
        v = v * np.exp(-1j * np.angle(np.vdot(ref, v)))
        worst_vec = max(worst_vec, np.max(np.abs(v - ref)))
        cand = unit_rows(rng, 1000, M)
        num = p[k] * np.abs(cand.conj() @ a[k]) ** 2
        den = (np.abs(cand.conj() @ a.T) ** 2) @ p - num + noise
        best_v = p[k] * abs(np.vdot(v, a[k])) ** 2 / (
            (np.abs(a.conj() @ v) ** 2) @ p - p[k] * abs(np.vdot(v, a[k])) ** 2 + noise)
        worst_gap = max(worst_gap, np.max(num / den) - best_v)
    ok = worst_vec <= 1e-8 and worst_gap <= 0
    verdict(capsys, 2, ok, f"max eigenvector deviation {worst_vec:.1e}; "
                           f"best random SINR minus ours {worst_gap:.2e}")


def test_criterion_3_power_oracles(capsys):
    rng = np.random.default_rng(SEED)
    tol = ToleranceSet()
    worst1 = 0.0
    for _ in range(50):
        a = 10 ** rng.uniform(1, 6)
        rth = rng.uniform(0.0, np.log2(1 + a * 0.1) * 0.9)
        prm = PowerParams(np.array([0.1]), 0.3, 0.1, 2**rth - 1)
        gains = GainTable([[a]], 1.0)
        res = optimize_powers(gains, [0.1], prm, tol)
        pmin = prm.gamma_th / a
        grid = np.linspace(pmin, 0.1, 1_000_000)
        best = np.max(np.log2(1 + a * grid) / (grid / 0.3 + 0.1))
        worst1 = max(worst1, (best - energy_efficiency(gains, res.p, prm)) / best)
    a = np.array([150.0, 900.0])
    prm = PowerParams(np.full(2, 0.1), 0.3, 0.1, 0.0)
    gains = GainTable(np.diag(a), 1.0)
    res = optimize_powers(gains, [0.1, 0.1], prm, tol)
    g = np.linspace(0, 0.1, 1000)
    P1, P2 = np.meshgrid(g, g, indexing="ij")
    best = np.max((np.log2(1 + a[0] * P1) + np.log2(1 + a[1] * P2)) / ((P1 + P2) / 0.3 + 0.1))
    gap2 = (best - energy_efficiency(gains, res.p, prm)) / best
    ok = worst1 <= 1e-4 and gap2 <= 1e-3
    verdict(capsys, 3, ok, f"K=1 worst relative EE gap {worst1:.1e} (limit 1e-4); "
                           f"K=2 gap {gap2:.1e} (limit 1e-3)")


def test_criterion_4_dinkelbach(capsys, desk_reports):
    calls = [d for rep in desk_reports for d in rep.dinkelbach]
    worst_drop = max(max(-np.diff(d["lambda"]), default=0.0) for d in calls)
    worst_F = max(abs(d["F"][-1]) for d in calls)
    ok = worst_drop <= 1e-6 and worst_F <= 1e-6 and len(desk_reports) == DESK_TRIALS
    verdict(capsys, 4, ok, f"{len(calls)} invocations over {len(desk_reports)} trials; "
                           f"largest lambda decrease {worst_drop:.1e}, largest |F| {worst_F:.1e}")


def test_criterion_5_ao_convergence(capsys, desk_reports):
    monotone = sum(bool(np.all(np.diff(r.ee_per_iteration) >= -1e-6)) for r in desk_reports)
    its = [r.iterations_used for r in desk_reports]
    median = float(np.median(its))
    tails = [r.ee_per_iteration[-1] - r.ee_per_iteration[-2] for r in desk_reports]
    ok = monotone == DESK_TRIALS and median <= 30
    verdict(capsys, 5, ok, f"monotone {monotone}/{DESK_TRIALS}; median iterations {median:g} "
                           f"(limit 30); median last EE step {np.median(tails):.1e}")


def test_criterion_6_audit(capsys, scheme_runs):
    audits = [r[1].final_audit for runs in scheme_runs.values() for r in runs if r is not None]
    worst = max(a.worst() for a in audits)
    c4 = max(a.C4 for a in audits)
    ok = worst <= 1e-7 and c4 == 0.0
    verdict(capsys, 6, ok, f"{len(audits)} final states; worst residual {worst:.1e}, C4 {c4:g}")


def test_criterion_7_scheme_ordering(capsys, scheme_runs):
    # trials where every scheme started (the draws are shared, so outages coincide)
    keep = [t for t in range(ORDER_TRIALS) if all(scheme_runs[s][t] for s in ALL_SCHEMES)]
    mean = {s: np.mean([scheme_runs[s][t][1].final_ee for t in keep]) for s in ALL_SCHEMES}
    ok = (mean["MA-ME"] >= mean["FA-ME"] >= mean["FA-FE"]
          and mean["MA-ME"] >= mean["MA-FE"] >= mean["FA-FE"]
          and mean["MA-ME"] >= 1.15 * mean["FA-FE"])
    text = ", ".join(f"{s} {mean[s]:.2f}" for s in ALL_SCHEMES)
    verdict(capsys, 7, ok, f"{len(keep)} paired trials: {text}; "
                           f"MA-ME/FA-FE = {mean['MA-ME'] / mean['FA-FE']:.3f} (need >= 1.15)")


def _paired_means(table):
    """Cell means over the trials that are outage-free in every cell."""
    bad = {r.trial for r in table.records if r.outage}
    cells = {}
    for r in table.records:
        if r.trial not in bad:
            cells.setdefault(r.sweep_value, []).append(r.ee)
    return {k: float(np.mean(v)) for k, v in sorted(cells.items())}, len(bad)


def test_criterion_8_trends(capsys):
    ma = DESK.replace(scheme=SchemeFlags(True, True))
    n_means, _ = _paired_means(bench.run_sweep(ma, "N", [16, 36, 49], ["MA-ME"], TREND_TRIALS, SEED))
    m_means, _ = _paired_means(bench.run_sweep(ma, "M", [4, 6, 8], ["MA-ME"], TREND_TRIALS, SEED))
    p_table = bench.run_sweep(ma.replace(rate_threshold_bpshz=0.5), "pmax_dbm",
                              [0, 4, 8, 12, 16, 20], ["MA-ME"], PMAX_TRIALS, SEED)
    p_means, dropped = _paired_means(p_table)
    n_vals, m_vals = list(n_means.values()), list(m_means.values())
    low = p_means[4] - p_means[0]
    high = p_means[20] - p_means[16]
    ok = (all(np.diff(n_vals) >= 0) and all(np.diff(m_vals) >= 0) and high <= low)
    fmt = lambda d: ", ".join(f"{k:g}: {v:.2f}" for k, v in d.items())  # noqa: E731
    verdict(capsys, 8, ok, f"EE vs N {{{fmt(n_means)}}}; EE vs M {{{fmt(m_means)}}}; "
                           f"EE vs P_max {{{fmt(p_means)}}} over {PMAX_TRIALS - dropped} paired "
                           f"trials; gain 0->4 dBm {low:.3f}, 16->20 dBm {high:.3f}")


def test_criterion_9_determinism(capsys, tmp_path):
    cfg = DESK.replace(tolerances=ToleranceSet(n_max_ao=10))
    bodies = []
    for attempt in ("a", "b"):
        table = bench.run_sweep(cfg, "K", [2, 3], ["MA-ME", "FA-FE"], trials=2, seed=SEED)
        files = [bench.emit_plot_data(table, kind, tmp_path / attempt) for kind in ("sweep", "trials")]
        files.append(bench.emit_plot_data(bench.run_convergence(cfg, [9], 1, SEED), "convergence",
                                          tmp_path / attempt))
        bodies.append([f.read_bytes().split(b"\n", 1)[1] for f in files])
    ok = bodies[0] == bodies[1]
    verdict(capsys, 9, ok, "sweep, trials and convergence CSVs identical below the timestamp line"
            if ok else "CSV bodies differ between runs")
