import numpy as np
import pytest

from moveris import ao
from moveris.ao import InfeasibleTrialError, STEPS, initialize, run
from moveris.config import SchemeFlags, SystemConfig, ToleranceSet, trial_rng
from moveris.metrics import energy_efficiency

SMALL = SystemConfig(num_bs_antennas=3, num_ris_elements=8, num_users=2, num_paths=2,
                     rate_threshold_bpshz=0.5, tolerances=ToleranceSet(n_max_ao=4))


def test_zero_iterations_returns_initialisation():
    cfg = SMALL.replace(tolerances=ToleranceSet(n_max_ao=0))
    init = initialize(cfg, trial_rng(3, 0))
    state, report = run(cfg, trial_rng(3, 0))
    np.testing.assert_array_equal(state.theta, init.theta)
    np.testing.assert_array_equal(state.p, init.p)
    assert report.ee_per_iteration == [pytest.approx(energy_efficiency(init, cfg))]
    assert report.iterations_used == 0 and report.termination == "n_max"


def test_initialisation_is_reproducible():
    a = initialize(SMALL, trial_rng(11, 2))
    b = initialize(SMALL, trial_rng(11, 2))
    for name in ("v", "p", "theta"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    np.testing.assert_array_equal(a.U.coords, b.U.coords)


def test_zero_threshold_starts_at_zero_power():
    cfg = SMALL.replace(rate_threshold_bpshz=0.0)
    s = initialize(cfg, trial_rng(1, 0))
    assert np.all(s.p == 0)
    assert np.allclose(np.linalg.norm(s.v, axis=1), 1.0)


def test_initialisation_is_feasible_for_default_config():
    cfg = SystemConfig(init_retries=0)
    ok = 0
    for seed in range(100):
        try:
            initialize(cfg, trial_rng(seed, 0))
            ok += 1
        except InfeasibleTrialError:
            pass
    assert ok >= 90


def test_unreachable_threshold_raises():
    cfg = SMALL.replace(rate_threshold_bpshz=40.0, init_retries=2)
    with pytest.raises(InfeasibleTrialError):
        initialize(cfg, trial_rng(0, 0))


@pytest.mark.parametrize("seed", range(3))
def test_trace_monotone_and_audit_passes(seed):
    state, report = run(SMALL, trial_rng(seed, 0))
    ee = np.array(report.ee_per_iteration)
    assert np.all(np.diff(ee) >= -1e-9)
    assert report.final_audit.passes(SMALL.tolerances.kkt_eps)
    assert report.iterations_used <= SMALL.tolerances.n_max_ao
    assert ee[-1] == pytest.approx(energy_efficiency(state, SMALL), rel=1e-12)
    assert len(report.dinkelbach) == report.iterations_used


def test_fixed_scheme_leaves_positions():
    cfg = SMALL.replace(scheme=SchemeFlags.from_name("FA-FE"))
    init = initialize(cfg, trial_rng(5, 0))
    state, report = run(cfg, trial_rng(5, 0))
    np.testing.assert_array_equal(state.U.coords, init.U.coords)
    np.testing.assert_array_equal(state.T.coords, init.T.coords)
    assert report.inner_iterations["U"] == report.inner_iterations["T"] == 0
    assert np.all(np.diff(report.ee_per_iteration) >= -1e-9)


def test_runs_are_deterministic():
    _, a = run(SMALL, trial_rng(8, 1))
    _, b = run(SMALL, trial_rng(8, 1))
    assert a.ee_per_iteration == b.ee_per_iteration


def test_given_state_skips_initialisation():
    init = initialize(SMALL, trial_rng(2, 0))
    _, a = run(SMALL, state=init)
    _, b = run(SMALL, trial_rng(2, 0))
    assert a.ee_per_iteration == b.ee_per_iteration


def test_worse_block_output_is_rolled_back(monkeypatch):
    real = ao._step

    def sabotage(name, state, config, report, trust=None):
        cand = real(name, state, config, report, trust)
        if name == "phase":
            return cand.replace(theta=np.full_like(cand.theta, np.pi))
        return cand

    monkeypatch.setattr(ao, "_step", sabotage)
    cfg = SMALL.replace(tolerances=ToleranceSet(n_max_ao=2))
    state, report = run(cfg, trial_rng(4, 0))
    assert report.rollbacks["phase"] == report.iterations_used
    assert not np.all(state.theta == np.pi)
    assert np.all(np.diff(report.ee_per_iteration) >= -1e-9)


def test_relative_stopping_rule():
    cfg = SMALL.replace(tolerances=ToleranceSet(n_max_ao=50, ao_eps=0.5, ao_relative=True))
    _, report = run(cfg, trial_rng(0, 0))
    ee = np.array(report.ee_per_iteration)
    rel = np.diff(ee) / ee[:-1]
    assert report.termination == "converged"
    assert rel[-1] <= 0.5 and np.all(rel[:-1] > 0.5)


def test_report_serialises():
    _, report = run(SMALL.replace(tolerances=ToleranceSet(n_max_ao=1)), trial_rng(0, 0))
    d = report.to_dict()
    assert set(d["rollbacks"]) == set(STEPS)
    assert set(d["final_audit"]) == {f"C{i}" for i in range(1, 9)}
