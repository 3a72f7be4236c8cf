"""Effective channels, SINR, rates, power, EE and the constraint audit.

Array conventions used across the package:
    v      (K, M) complex, row k is the postcoder of user k
    a      (K, M) complex, row k is the effective channel a_k = h_k + H Phi g_k
    S      (K, K) complex, S[k, j] = v_k^H a_j
    gains  (K, K) real,    gains[k, j] = |v_k^H a_j|^2
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import ChannelSet, PositionSet, TrialGeometry, assemble_channels
from .config import SystemConfig

LN2 = np.log(2.0)


class StaleChannelError(RuntimeError):
    pass


def wrap_phase(theta) -> np.ndarray:
    """Map phases into (0, 2 pi]."""
    theta = np.asarray(theta, dtype=float)
    inside = (theta > 0.0) & (theta <= 2.0 * np.pi)
    return np.where(inside, theta, 2.0 * np.pi - np.mod(-theta, 2.0 * np.pi))


@dataclass(frozen=True)
class SolutionState:
    """The variable set {v, p, theta, U, T} plus channels built from U and T."""

    v: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    U: PositionSet
    T: PositionSet
    paths: TrialGeometry
    channels: ChannelSet
    noise: float

    @classmethod
    def build(cls, v, p, theta, U: PositionSet, T: PositionSet, paths: TrialGeometry,
              noise: float) -> "SolutionState":
        return cls(np.asarray(v, dtype=complex), np.asarray(p, dtype=float),
                   np.asarray(theta, dtype=float), U, T, paths,
                   assemble_channels(paths, U, T), float(noise))

    def replace(self, **changes) -> "SolutionState":
        """Copy with new variables; channels are rebuilt when U or T change."""
        if ("U" in changes or "T" in changes) and "channels" not in changes:
            U = changes.get("U", self.U)
            T = changes.get("T", self.T)
            changes["channels"] = assemble_channels(self.paths, U, T)
        for key in ("p", "theta"):
            if key in changes:
                changes[key] = np.asarray(changes[key], dtype=float)
        if "v" in changes:
            changes["v"] = np.asarray(changes["v"], dtype=complex)
        return dataclasses.replace(self, **changes)

    @property
    def num_users(self) -> int:
        return len(self.p)

    def check_fresh(self):
        ch = self.channels
        if not (np.array_equal(ch.U, self.U.coords) and np.array_equal(ch.T, self.T.coords)):
            raise StaleChannelError("channels were built from different positions")

    @cached_property
    def effective(self) -> np.ndarray:
        self.check_fresh()
        return effective_channels(self.channels, self.theta)

    @cached_property
    def gains(self) -> np.ndarray:
        return gain_matrix(self.v, self.effective)

    @cached_property
    def sinrs(self) -> np.ndarray:
        return sinr_from_gains(self.gains, self.p, self.noise * np.sum(np.abs(self.v) ** 2, axis=1))

    @cached_property
    def rates(self) -> np.ndarray:
        return np.log2(1.0 + self.sinrs)

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


def effective_channels(channels: ChannelSet, theta) -> np.ndarray:
    phase = np.exp(1j * np.asarray(theta))
    return channels.h + (channels.g * phase) @ channels.H.T


def effective_channel(state: SolutionState, k: int) -> np.ndarray:
    return state.effective[k]


def gain_matrix(v, a) -> np.ndarray:
    return np.abs(np.conj(v) @ a.T) ** 2


def sinr_from_gains(gains, p, noise) -> np.ndarray:
    """SINR per user; ``noise`` may be per-user (sigma^2 ||v_k||^2)."""
    gains = np.asarray(gains)
    p = np.asarray(p, dtype=float)
    received = gains @ p
    signal = np.diag(gains) * p
    interference = received - signal
    return signal / (interference + noise)


def sinr(state: SolutionState, k: int) -> float:
    return float(state.sinrs[k])


def sum_rate(state: SolutionState) -> float:
    return state.sum_rate


def total_power(p, config: SystemConfig) -> float:
    return float(np.sum(p) / config.amp_efficiency + config.circuit_power_watt)


def energy_efficiency(state: SolutionState, config: SystemConfig) -> float:
    """Sum rate (bps/Hz) over consumed power (W)."""
    return state.sum_rate / total_power(state.p, config)


@dataclass(frozen=True)
class ConstraintAudit:
    """Worst residual per constraint; ``required - achieved``, <= 0 is satisfied."""

    C1: float  # rate QoS
    C2: float  # power box
    C3: float  # unit-norm postcoders (equality, |deviation|)
    C4: float  # unit-modulus reflection (exact from the phase parameterisation)
    C5: float  # BS antenna region
    C6: float  # RIS element region
    C7: float  # BS antenna spacing
    C8: float  # RIS element spacing

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def worst(self) -> float:
        return max(self.as_dict().values())

    def passes(self, tol: float) -> bool:
        return self.worst() <= tol


def audit(state: SolutionState, config: SystemConfig) -> ConstraintAudit:
    pmax = config.pmax_vector
    c1 = float(np.max(config.rate_threshold_bpshz - state.rates))
    c2 = float(np.max(np.maximum(state.p - pmax, -state.p)))
    c3 = float(np.max(np.abs(np.linalg.norm(state.v, axis=1) - 1.0)))
    c4 = 0.0 if np.all(np.isfinite(state.theta)) else np.inf
    return ConstraintAudit(
        C1=c1, C2=c2, C3=c3, C4=c4,
        C5=state.U.region_residual(), C6=state.T.region_residual(),
        C7=state.U.spacing_residual(), C8=state.T.spacing_residual(),
    )


def sinr_jacobian(S: np.ndarray, dS: np.ndarray, p, noise):
    """SINRs and their derivatives given ``S[k, j] = v_k^H a_j`` and ``dS = dS/dx``.

    ``dS`` has shape (K, K, D); returns ``(sinr (K,), jac (K, D))``.
    """
    p = np.asarray(p, dtype=float)
    K = len(p)
    G = np.abs(S) ** 2
    dG = 2.0 * np.real(np.conj(S)[..., None] * dS)
    idx = np.arange(K)
    num = p * G[idx, idx]
    den = G @ p - num + noise
    dnum = p[:, None] * dG[idx, idx]
    dden = np.einsum("kjd,j->kd", dG, p) - dnum
    jac = (dnum * den[:, None] - num[:, None] * dden) / den[:, None] ** 2
    return num / den, jac


def rate_jacobian(sinrs, sinr_jac) -> np.ndarray:
    return sinr_jac / ((1.0 + np.asarray(sinrs))[:, None] * LN2)
