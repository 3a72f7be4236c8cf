import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_state
from moveris.config import SystemConfig, ToleranceSet
from moveris.postcoder import optimal_postcoders
from moveris.power import (GainTable, InfeasiblePowerError, PowerParams, energy_efficiency,
                           feasibility_presolve, optimize_powers, qos_satisfied, rates,
                           sca_power_step)

TOL = ToleranceSet()


def params(K, gamma=0.0, pmax=0.1, eta=0.3, circuit=0.1):
    return PowerParams(np.full(K, pmax), eta, circuit, gamma)


def ee_single(a, p, prm):
    return np.log2(1 + a * p) / (p / prm.eta + prm.circuit)


def test_presolve_without_qos_is_zero():
    assert np.all(feasibility_presolve(GainTable(np.eye(3), 1.0), params(3)) == 0)


def test_presolve_single_user_closed_form():
    gamma = 2**1.5 - 1
    p = feasibility_presolve(GainTable([[200.0]], 1.0), params(1, gamma))
    assert p[0] == pytest.approx(gamma / 200.0, rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_presolve_meets_targets_with_equality(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 2.0, (3, 3)) + np.diag(rng.uniform(100, 300, 3))
    noise = rng.uniform(0.5, 2.0, 3)
    gains, prm = GainTable(A, noise), params(3, 1.5)
    p = feasibility_presolve(gains, prm)
    # independent oracle: fixed-point iteration of the standard interference function
    q = np.zeros(3)
    for _ in range(500):
        q = 1.5 * (A @ q - np.diag(A) * q + noise) / np.diag(A)
    np.testing.assert_allclose(p, q, rtol=1e-8)
    assert qos_satisfied(gains, p, 1.5)


def test_presolve_detects_unreachable_targets():
    A = np.array([[1.0, 1.0], [1.0, 1.0]]) * 100
    with pytest.raises(InfeasiblePowerError):
        feasibility_presolve(GainTable(A, 1.0), params(2, 2.0))
    with pytest.raises(InfeasiblePowerError):  # reachable only above P_max
        feasibility_presolve(GainTable([[1.0]], 1.0), params(1, 3.0))


@given(a=st.floats(10.0, 1e4), lam=st.floats(0.5, 200.0))
def test_single_user_step_closed_form(a, lam):
    prm = params(1)
    p, status = sca_power_step(GainTable([[a]], 1.0), [0.05], lam, prm)
    expect = np.clip(prm.eta / (lam * np.log(2)) - 1.0 / a, 0.0, 0.1)
    assert status == "optimal"
    assert p[0] == pytest.approx(expect, abs=1e-7)


def test_zero_price_uses_full_power_without_interference():
    gains = GainTable(np.diag([50.0, 80.0]), 1.0)
    p, _ = sca_power_step(gains, [0.01, 0.02], 0.0, params(2))
    np.testing.assert_allclose(p, [0.1, 0.1], atol=1e-8)


@pytest.mark.parametrize("a", [30.0, 300.0, 5000.0, 2e5])
def test_single_user_matches_fine_grid(a):
    prm = params(1)
    res = optimize_powers(GainTable([[a]], 1.0), [0.1], prm, TOL)
    grid = np.linspace(0, 0.1, 1_000_001)
    best = ee_single(a, grid, prm).max()
    got = energy_efficiency(GainTable([[a]], 1.0), res.p, prm)
    assert got >= best - 1e-4 * best
    assert res.converged


@pytest.mark.parametrize("seed", range(5))
def test_two_users_without_interference_match_grid(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(20, 2000, 2)
    gains, prm = GainTable(np.diag(a), 1.0), params(2)
    res = optimize_powers(gains, [0.1, 0.1], prm, TOL)
    g = np.linspace(0, 0.1, 1001)
    P1, P2 = np.meshgrid(g, g, indexing="ij")
    ee = (np.log2(1 + a[0] * P1) + np.log2(1 + a[1] * P2)) / ((P1 + P2) / 0.3 + 0.1)
    best = ee.max()
    got = energy_efficiency(gains, res.p, prm)
    assert got >= best * (1 - 1e-3)


def test_qos_forces_full_power():
    # the rate target needs exactly P_max
    a, gamma = 40.0, 4.0
    prm = params(1, gamma)
    res = optimize_powers(GainTable([[a]], 1.0), [0.1], prm, TOL)
    assert res.p[0] == pytest.approx(0.1, rel=1e-9)
    assert res.p[0] >= gamma / a * (1 - 1e-9)


def test_qos_floor_binds_above_unconstrained_optimum():
    a = 1e4
    free = optimize_powers(GainTable([[a]], 1.0), [0.1], params(1), TOL).p[0]
    gamma = 1.5 * free * a
    bound = optimize_powers(GainTable([[a]], 1.0), [0.1], params(1, gamma), TOL).p[0]
    assert bound == pytest.approx(gamma / a, rel=1e-6)


def _state_gains(seed):
    cfg = SystemConfig(num_bs_antennas=4, num_ris_elements=8, num_users=3, num_paths=2,
                       rate_threshold_bpshz=0.5)
    s = random_state(cfg, np.random.default_rng(seed))
    s = s.replace(v=optimal_postcoders(s.effective, s.p, s.noise))
    return cfg, GainTable.from_state(s)


@pytest.mark.parametrize("seed", range(8))
def test_dinkelbach_trace_is_well_behaved(seed):
    cfg, gains = _state_gains(seed)
    try:
        p0 = feasibility_presolve(gains, cfg)
    except InfeasiblePowerError:
        pytest.skip("QoS unreachable for this draw")
    res = optimize_powers(gains, p0, cfg)
    lam = np.array(res.trace.lambdas)
    assert np.all(np.diff(lam) >= -1e-12 * lam[1:])
    assert res.converged and abs(res.trace.F[-1]) <= cfg.tolerances.dinkelbach_eps
    prm = PowerParams.from_config(cfg)
    assert energy_efficiency(gains, res.p, prm) >= energy_efficiency(gains, p0, prm) - 1e-12
    assert qos_satisfied(gains, res.p, cfg.gamma_th)
    assert np.all(res.p >= 0) and np.all(res.p <= cfg.pmax_watt * (1 + 1e-12))


def test_rates_are_log_sinr():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    r = rates(GainTable(A, 0.5), [0.2, 0.4])
    assert r[0] == pytest.approx(np.log2(1 + 0.8 / (0.4 + 0.5)))
    assert r[1] == pytest.approx(np.log2(1 + 1.2 / (0.4 + 0.5)))


def test_infeasible_start_rejected():
    with pytest.raises(InfeasiblePowerError):
        optimize_powers(GainTable([[10.0]], 1.0), [0.01], params(1, 5.0), TOL)
    with pytest.raises(InfeasiblePowerError):
        optimize_powers(GainTable([[10.0]], 1.0), [0.2], params(1), TOL)


def test_bad_gain_table():
    with pytest.raises(ValueError):
        GainTable(np.ones((2, 3)), 1.0)
    with pytest.raises(ValueError):
        GainTable([[-1.0]], 1.0)
