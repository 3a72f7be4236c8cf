"""RIS phase optimisation by trust-region SCA.

With a_j = h_j + sum_n H[:, n] e^{j theta_n} g_j[n], the derivative of
S[k, j] = v_k^H a_j with respect to theta_n is

    j (v_k^H H)[n] e^{j theta_n} g_j[n]

which is chained through the SINR quotient and log2 in ``metrics.sinr_jacobian``.
"""
from __future__ import annotations

import numpy as np

from .config import SystemConfig
from .metrics import (SolutionState, effective_channels, rate_jacobian, sinr_from_gains,
                      sinr_jacobian, wrap_phase)
from .trust_region import Linearization, SCAModel, SCAResult, TrustRegionState, run_sca, sca_step

TWO_PI = 2.0 * np.pi


def _phase_sinr_jacobian(state: SolutionState, theta):
    ch = state.channels
    a = effective_channels(ch, theta)
    vc = np.conj(state.v)
    S = vc @ a.T
    W = vc @ ch.H                             # (K, N): v_k^H H
    e = np.exp(1j * np.asarray(theta))
    dS = 1j * W[:, None, :] * (e * ch.g)[None, :, :]   # (K, K, N)
    noise = state.noise * np.sum(np.abs(state.v) ** 2, axis=1)
    return sinr_jacobian(S, dS, state.p, noise)


def rate_gradient_phases(state: SolutionState, theta=None):
    """Per-user rate gradients (K, N) and their sum (N,)."""
    theta = state.theta if theta is None else theta
    sinrs, jac = _phase_sinr_jacobian(state, theta)
    per_user = rate_jacobian(sinrs, jac)
    return per_user, per_user.sum(axis=0)


class PhaseModel(SCAModel):
    def __init__(self, state: SolutionState, config: SystemConfig):
        self.state = state
        N = len(state.theta)
        self.lower = np.zeros(N)
        self.upper = np.full(N, TWO_PI)
        self.gamma_th = config.gamma_th
        self.rate_threshold = config.rate_threshold_bpshz
        self.noise = state.noise * np.sum(np.abs(state.v) ** 2, axis=1)

    def true_rates(self, theta) -> np.ndarray:
        a = effective_channels(self.state.channels, theta)
        gains = np.abs(np.conj(self.state.v) @ a.T) ** 2
        return np.log2(1.0 + sinr_from_gains(gains, self.state.p, self.noise))

    def linearize(self, theta) -> Linearization:
        sinrs, jac = _phase_sinr_jacobian(self.state, theta)
        rates = np.log2(1.0 + sinrs)
        grad = rate_jacobian(sinrs, jac).sum(axis=0)
        return Linearization(float(rates.sum()), rates, grad, sinrs, jac)

    def normalize(self, theta):
        # keep the closed box while preferring the (0, 2pi] representative
        return np.where(theta <= 0.0, TWO_PI, theta)

    def orient(self, theta, grad):
        # a phase pinned at an endpoint whose gradient points outward is moved to
        # the other endpoint (same point by periodicity) so the box does not block it
        theta = np.where((theta >= TWO_PI) & (grad > 0), 0.0, theta)
        return np.where((theta <= 0.0) & (grad < 0), TWO_PI, theta)


def initial_trust(config: SystemConfig) -> TrustRegionState:
    return TrustRegionState(config.tolerances.trust_radius_phase, min_radius=1e-6, max_radius=np.pi)


def phase_sca_step(state: SolutionState, trust: TrustRegionState, config: SystemConfig):
    """One trust-region step; returns ``(theta, trust, StepResult)``."""
    model = PhaseModel(state, config)
    theta = np.asarray(state.theta, dtype=float)
    step = sca_step(model, theta, model.linearize(theta), trust, config.tolerances)
    return step.x, step.trust, step


def optimize_phases(state: SolutionState, config: SystemConfig,
                    trust: TrustRegionState | None = None) -> tuple[np.ndarray, SCAResult]:
    """``trust`` carries the radius over from a previous call (AO warm start)."""
    model = PhaseModel(state, config)
    res = run_sca(model, np.asarray(state.theta, dtype=float),
                  initial_trust(config) if trust is None else trust, config.tolerances)
    return wrap_phase(res.x), res
