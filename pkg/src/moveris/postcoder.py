"""Closed-form receive postcoders (MMSE direction) with the QoS rollback guard."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .metrics import SolutionState, gain_matrix, sinr_from_gains


class SingularSystemError(np.linalg.LinAlgError):
    pass


def mmse_direction(a: np.ndarray, p: np.ndarray, noise: float, k: int) -> np.ndarray:
    """Unit vector proportional to (B_k + noise I)^-1 a_k, B_k = sum_{j!=k} p_j a_j a_j^H."""
    K, M = a.shape
    others = np.arange(K) != k
    weighted = a[others] * np.sqrt(p[others])[:, None]
    B = weighted.T @ weighted.conj() + noise * np.eye(M)
    try:
        c, lower = sla.cho_factor(B, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("interference-plus-noise matrix is not positive definite; "
                                  "is the noise power zero?") from exc
    w = sla.cho_solve((c, lower), a[k])
    norm = np.linalg.norm(w)
    if not np.isfinite(norm) or norm == 0.0:
        raise SingularSystemError("postcoder direction vanished")
    return w / norm


def optimal_postcoder(state: SolutionState, k: int) -> np.ndarray:
    if not state.noise > 0:
        raise SingularSystemError("noise power must be positive")
    return mmse_direction(state.effective, state.p, state.noise, k)


def optimal_postcoders(a: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    return np.stack([mmse_direction(a, p, noise, k) for k in range(len(a))])


def update_all_postcoders(state: SolutionState, rate_threshold: float,
                          slack: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """New postcoders and a per-user accepted mask.

    A user's candidate is kept only if its rate meets the threshold; otherwise
    the previous vector stays. Users are independent, so order is irrelevant.
    """
    a = state.effective
    cand = optimal_postcoders(a, state.p, state.noise)
    gains = gain_matrix(cand, a)
    rates = np.log2(1.0 + sinr_from_gains(gains, state.p, state.noise))
    accepted = rates >= rate_threshold - slack
    v = np.where(accepted[:, None], cand, state.v)
    return v, accepted
