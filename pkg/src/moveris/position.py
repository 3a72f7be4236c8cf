"""Antenna (U) and RIS element (T) position optimisation by trust-region SCA.

Both blocks share one model, parameterised by ``which``. The non-convex
spacing constraint ||x_i - x_j|| >= d0 is replaced by its first-order inner
approximation around the current iterate,

    (x_i^t - x_j^t)^T (x_i - x_j) / ||x_i^t - x_j^t|| >= d0,

which implies the true constraint because the norm is convex. Solver
variables are in wavelengths.
"""
from __future__ import annotations

import numpy as np

from .channel import PositionSet, channel_derivatives
from .config import SystemConfig
from .metrics import SolutionState, effective_channels, rate_jacobian, sinr_from_gains, sinr_jacobian
from .trust_region import Linearization, SCAModel, SCAResult, TrustRegionState, run_sca, sca_step


def _position_sinr_jacobian(state: SolutionState, which: str):
    ch = state.channels
    a = effective_channels(ch, state.theta)
    vc = np.conj(state.v)
    S = vc @ a.T
    e = np.exp(1j * state.theta)
    K = len(state.p)
    dH, dlink = channel_derivatives(state.paths, state.U, state.T, which)
    if which == "U":
        # d a_j[m] / d u_m
        da = dlink + np.einsum("mnd,jn->jmd", dH, ch.g * e)
        dS = vc[:, None, :, None] * da[None, :, :, :]
    else:
        W = vc @ ch.H
        WdH = np.einsum("km,mnd->knd", vc, dH)
        dS = e[None, None, :, None] * (WdH[:, None, :, :] * ch.g[None, :, :, None]
                                       + W[:, None, :, None] * dlink[None, :, :, :])
    dS = dS.reshape(K, K, -1)
    noise = state.noise * np.sum(np.abs(state.v) ** 2, axis=1)
    return sinr_jacobian(S, dS, state.p, noise)


def rate_gradient_positions(state: SolutionState, which: str):
    """Per-user rate gradients (K, 2n) and their sum, in ``coords.ravel()`` order."""
    sinrs, jac = _position_sinr_jacobian(state, which)
    per_user = rate_jacobian(sinrs, jac)
    return per_user, per_user.sum(axis=0)


def spacing_rows(coords: np.ndarray, min_spacing: float, reach: float):
    """Linearised spacing half-spaces ``G x <= h`` for pairs within ``d0 + reach``."""
    n = len(coords)
    iu, ju = np.triu_indices(n, 1)
    diff = coords[iu] - coords[ju]
    dist = np.linalg.norm(diff, axis=1)
    near = dist < min_spacing + reach
    iu, ju, diff, dist = iu[near], ju[near], diff[near], dist[near]
    if np.any(dist <= 0):
        raise AssertionError("coincident positions cannot come from a feasible iterate")
    u = diff / dist[:, None]
    G = np.zeros((len(iu), 2 * n))
    rows = np.arange(len(iu))
    G[rows, 2 * iu] = -u[:, 0]
    G[rows, 2 * iu + 1] = -u[:, 1]
    G[rows, 2 * ju] = u[:, 0]
    G[rows, 2 * ju + 1] = u[:, 1]
    return G, np.full(len(iu), -min_spacing)


class PositionModel(SCAModel):
    def __init__(self, state: SolutionState, which: str, config: SystemConfig):
        if which not in ("U", "T"):
            raise ValueError(f"which must be 'U' or 'T', got {which!r}")
        self.state = state
        self.which = which
        self.positions: PositionSet = getattr(state, which)
        D = 2 * len(self.positions)
        self.lower = np.zeros(D)
        self.upper = np.full(D, self.positions.side)
        self.scale = config.wavelength_m
        self.gamma_th = config.gamma_th
        self.rate_threshold = config.rate_threshold_bpshz
        self.noise = state.noise * np.sum(np.abs(state.v) ** 2, axis=1)
        self._cache = {}

    def _state_at(self, x) -> SolutionState:
        key = x.tobytes()
        if key not in self._cache:
            self._cache = {key: self.state.replace(
                **{self.which: self.positions.with_coords(x.reshape(-1, 2))})}
        return self._cache[key]

    def true_rates(self, x) -> np.ndarray:
        return self._state_at(x).rates

    def linearize(self, x) -> Linearization:
        st = self._state_at(x)
        sinrs, jac = _position_sinr_jacobian(st, self.which)
        rates = np.log2(1.0 + sinrs)
        grad = rate_jacobian(sinrs, jac).sum(axis=0)
        return Linearization(float(rates.sum()), rates, grad, sinrs, jac)

    def extra_constraints(self, x, radius):
        if len(self.positions) < 2:
            return None, None
        return spacing_rows(x.reshape(-1, 2), self.positions.min_spacing, 2.0 * radius)

    def feasible(self, x) -> bool:
        ps = self.positions.with_coords(x.reshape(-1, 2))
        return ps.region_residual() <= 0.0 and ps.spacing_residual() <= 1e-12 * ps.min_spacing


def initial_trust(config: SystemConfig) -> TrustRegionState:
    lam = config.wavelength_m
    return TrustRegionState(config.tolerances.trust_radius_position * lam,
                            min_radius=1e-6 * lam, max_radius=config.region_side_m)


def is_movable(which: str, config: SystemConfig) -> bool:
    return config.scheme.bs_movable if which == "U" else config.scheme.ris_movable


def position_sca_step(state: SolutionState, which: str, trust: TrustRegionState,
                      config: SystemConfig):
    """One trust-region step; returns ``(PositionSet, trust, StepResult)``."""
    model = PositionModel(state, which, config)
    x = model.positions.coords.ravel().copy()
    step = sca_step(model, x, model.linearize(x), trust, config.tolerances)
    return model.positions.with_coords(step.x.reshape(-1, 2)), step.trust, step


def optimize_positions(state: SolutionState, which: str, config: SystemConfig,
                       record_trajectory: bool = False,
                       trust: TrustRegionState | None = None) -> tuple[PositionSet, SCAResult | None]:
    """Returns the new positions; identity when the block is fixed by the scheme.

    ``trust`` carries the radius over from a previous call (AO warm start).
    """
    current: PositionSet = getattr(state, which)
    if not is_movable(which, config):
        return current, None
    model = PositionModel(state, which, config)
    res = run_sca(model, current.coords.ravel().copy(),
                  initial_trust(config) if trust is None else trust,
                  config.tolerances, record_trajectory=record_trajectory)
    return current.with_coords(res.x.reshape(-1, 2)), res
