"""Alternating optimisation driver: postcoders, powers, phases, U, then T."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import random_positions, sample_trial_geometry
from .config import SystemConfig
from .metrics import (ConstraintAudit, SolutionState, audit, effective_channels,
                      energy_efficiency, gain_matrix, wrap_phase)
from .phase import optimize_phases
from .position import optimize_positions
from .postcoder import optimal_postcoders, update_all_postcoders
from .power import (GainTable, InfeasiblePowerError, PowerParams, feasibility_presolve,
                    optimize_powers, qos_satisfied)

log = logging.getLogger(__name__)

STEPS = ("postcoder", "power", "phase", "U", "T")
QOS_SLACK = 1e-9


class InfeasibleTrialError(RuntimeError):
    """No QoS-feasible initial point was found for any channel draw."""


@dataclass
class TrialReport:
    ee_per_iteration: list = field(default_factory=list)
    sum_rate_per_iteration: list = field(default_factory=list)
    iterations_used: int = 0
    inner_iterations: dict = field(default_factory=lambda: {s: 0 for s in STEPS})
    wall_time_s: dict = field(default_factory=lambda: {s: 0.0 for s in STEPS})
    rollbacks: dict = field(default_factory=lambda: {s: 0 for s in STEPS})
    dinkelbach: list = field(default_factory=list)
    final_audit: ConstraintAudit | None = None
    termination: str = ""
    init_attempts: int = 1

    @property
    def final_ee(self) -> float:
        return self.ee_per_iteration[-1]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["final_audit"] = self.final_audit.as_dict() if self.final_audit else None
        return out


def _initial_powers_and_postcoders(a, noise, config: SystemConfig, rounds: int = 3):
    """Alternate MMSE postcoders with the minimum-power QoS solution."""
    params = PowerParams.from_config(config)
    p = params.pmax.copy()
    v = optimal_postcoders(a, p, noise)
    for _ in range(rounds):
        p = feasibility_presolve(GainTable(gain_matrix(v, a), noise), params)
        v = optimal_postcoders(a, p, noise)
    return v, np.clip(p, 0.0, params.pmax)


def initialize(config: SystemConfig, rng: np.random.Generator) -> SolutionState:
    """Random feasible starting point; redraws the channels up to ``init_retries`` times."""
    return _initialize(config, rng)[0]


def _initialize(config: SystemConfig, rng: np.random.Generator) -> tuple[SolutionState, int]:
    M, N = config.num_bs_antennas, config.num_ris_elements
    A, d0 = config.region_side_m, config.min_spacing_m
    for attempt in range(config.init_retries + 1):
        paths = sample_trial_geometry(config, rng)
        U = random_positions(M, A, d0, rng)
        T = random_positions(N, A, d0, rng)
        theta = wrap_phase(rng.uniform(0.0, 2.0 * np.pi, N))
        state = SolutionState.build(np.zeros((config.num_users, M)), np.zeros(config.num_users),
                                    theta, U, T, paths, config.noise_watt)
        a = effective_channels(state.channels, theta)
        try:
            v, p = _initial_powers_and_postcoders(a, config.noise_watt, config)
        except InfeasiblePowerError as exc:
            log.debug("initial draw %d infeasible: %s", attempt, exc)
            continue
        state = state.replace(v=v, p=p)
        if audit(state, config).passes(config.tolerances.kkt_eps):
            return state, attempt + 1
    raise InfeasibleTrialError(f"no feasible initial point after {config.init_retries + 1} draws")


def _qos_ok(state: SolutionState, config: SystemConfig) -> bool:
    return bool(np.all(state.rates >= config.rate_threshold_bpshz - QOS_SLACK))


def _step(name, state, config, report, trust=None):
    """Run one block update and return the candidate state.

    ``trust`` maps block names to the trust region left by the previous AO
    round; it is updated in place so radii carry across rounds.
    """
    trust = {} if trust is None else trust
    tol = config.tolerances
    if name == "postcoder":
        v, _ = update_all_postcoders(state, config.rate_threshold_bpshz, QOS_SLACK)
        report.inner_iterations[name] += 1
        return state.replace(v=v)
    if name == "power":
        params = PowerParams.from_config(config)
        gains = GainTable.from_state(state)
        p0 = state.p
        if not qos_satisfied(gains, p0, params.gamma_th):
            p0 = feasibility_presolve(gains, params)
        res = optimize_powers(gains, p0, params, tol)
        report.inner_iterations[name] += res.iterations
        report.dinkelbach.append({"lambda": list(res.trace.lambdas), "F": list(res.trace.F)})
        return state.replace(p=res.p)
    if name == "phase":
        theta, res = optimize_phases(state, config, trust.get(name))
        trust[name] = res.trust
        report.inner_iterations[name] += res.iterations
        return state.replace(theta=theta)
    positions, res = optimize_positions(state, name, config, trust=trust.get(name))
    if res is None:
        return state
    trust[name] = res.trust
    report.inner_iterations[name] += res.iterations
    return state.replace(**{name: positions})


def run(config: SystemConfig, rng: np.random.Generator | None = None,
        state: SolutionState | None = None) -> tuple[SolutionState, TrialReport]:
    """Algorithm driver. Pass ``state`` to skip the random initialisation."""
    tol = config.tolerances
    report = TrialReport()
    if state is None:
        state, report.init_attempts = _initialize(config, rng)
    ee = energy_efficiency(state, config)
    report.ee_per_iteration.append(ee)
    report.sum_rate_per_iteration.append(state.sum_rate)
    report.termination = "n_max"
    trust = {}
    for n in range(1, tol.n_max_ao + 1):
        for name in STEPS:
            t0 = time.perf_counter()
            try:
                cand = _step(name, state, config, report, trust)
            except InfeasiblePowerError as exc:
                log.warning("power step skipped: %s", exc)
                cand = state
            report.wall_time_s[name] += time.perf_counter() - t0
            cand_ee = energy_efficiency(cand, config)
            if cand_ee >= ee and _qos_ok(cand, config):
                state, ee = cand, cand_ee
            else:
                report.rollbacks[name] += 1
        report.ee_per_iteration.append(ee)
        report.sum_rate_per_iteration.append(state.sum_rate)
        report.iterations_used = n
        delta = report.ee_per_iteration[-1] - report.ee_per_iteration[-2]
        if tol.ao_relative:
            delta /= max(abs(report.ee_per_iteration[-2]), 1e-300)
        if delta <= tol.ao_eps:
            report.termination = "converged"
            break
    if tol.n_max_ao == 0:
        report.termination = "n_max"
    report.final_audit = audit(state, config)
    return state, report
