"""EE-maximising power allocation: Dinkelbach outer loop, DC-programming SCA inner loop.

For fixed postcoders the rate of user k is

    R_k(p) = log2(noise_k + sum_j p_j A[k, j]) - log2(noise_k + sum_{j != k} p_j A[k, j])

and the subtractive problem ``max R_sum(p) - lam * P_tot(p)`` is solved by
linearising the second (concave) term at the current point. The QoS
constraint stays in its exact linear SINR form in every inner iteration.
Internally powers are scaled by P_max and gains by the noise power.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import cvxcore
from .config import SystemConfig
from .metrics import LN2, SolutionState

log = logging.getLogger(__name__)


class InfeasiblePowerError(RuntimeError):
    """No power vector inside the box meets every QoS constraint."""


@dataclass(frozen=True)
class GainTable:
    A: np.ndarray  # A[k, j] = |v_k^H a_j|^2
    noise: np.ndarray | float  # sigma^2 ||v_k||^2 per user

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"gain table must be K x K, got {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(A >= 0)):
            raise ValueError("gains must be finite and nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "noise", np.broadcast_to(
            np.asarray(self.noise, dtype=float), (len(A),)).copy())

    @classmethod
    def from_state(cls, state: SolutionState) -> "GainTable":
        return cls(state.gains, state.noise * np.sum(np.abs(state.v) ** 2, axis=1))

    @property
    def K(self) -> int:
        return len(self.A)


@dataclass
class DinkelbachTrace:
    lambdas: list = field(default_factory=list)
    F: list = field(default_factory=list)
    ee: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)


@dataclass
class PowerResult:
    p: np.ndarray
    trace: DinkelbachTrace
    converged: bool
    warnings: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return int(sum(self.trace.inner_iterations))


@dataclass(frozen=True)
class PowerParams:
    pmax: np.ndarray
    eta: float
    circuit: float
    gamma_th: float

    @classmethod
    def from_config(cls, config: SystemConfig) -> "PowerParams":
        return cls(config.pmax_vector, config.amp_efficiency, config.circuit_power_watt,
                   config.gamma_th)


def _params(config) -> PowerParams:
    return config if isinstance(config, PowerParams) else PowerParams.from_config(config)


def rates(gains: GainTable, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    received = gains.A @ p + gains.noise
    signal = np.diag(gains.A) * p
    return np.log2(received) - np.log2(received - signal)


def total_power(p, params: PowerParams) -> float:
    return float(np.sum(p) / params.eta + params.circuit)


def energy_efficiency(gains: GainTable, p, params: PowerParams) -> float:
    return float(np.sum(rates(gains, p)) / total_power(p, params))


def qos_satisfied(gains: GainTable, p, gamma_th: float, rtol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    signal = np.diag(gains.A) * p
    interference = gains.A @ p - signal + gains.noise
    return bool(np.all(signal >= gamma_th * interference * (1.0 - rtol)))


def feasibility_presolve(gains: GainTable, config) -> np.ndarray:
    """Componentwise-minimal powers meeting every SINR target with equality.

    The QoS system ``p_k A_kk = gamma (noise_k + sum_{j!=k} p_j A_kj)`` has a
    nonnegative solution iff the normalised cross-gain matrix has spectral
    radius below one; that solution is then the minimum-sum-power point.
    """
    params = _params(config)
    gamma = params.gamma_th
    K = gains.K
    if gamma == 0.0:
        return np.zeros(K)
    diag = np.diag(gains.A)
    if np.any(diag <= 0):
        raise InfeasiblePowerError("a user has zero effective gain")
    cross = gains.A / diag[:, None]
    np.fill_diagonal(cross, 0.0)
    rho = np.max(np.abs(np.linalg.eigvals(gamma * cross))) if K > 1 else 0.0
    if rho >= 1.0:
        raise InfeasiblePowerError(f"SINR targets unreachable at any power (spectral radius {rho:.3g})")
    p = np.linalg.solve(np.eye(K) - gamma * cross, gamma * gains.noise / diag)
    if np.any(p < 0):
        raise InfeasiblePowerError("negative minimum powers")
    if np.any(p > params.pmax * (1.0 + 1e-12)):
        raise InfeasiblePowerError("minimum powers exceed P_max")
    return np.minimum(p, params.pmax)


def _scaled(gains: GainTable, params: PowerParams):
    """Gains normalised by noise and with powers in units of P_max."""
    return gains.A * params.pmax[None, :] / gains.noise[:, None]


def _surrogate(At: np.ndarray, q_t: np.ndarray, lam: float, params: PowerParams):
    """Concave minorant of R_sum - lam * P_tot around ``q_t`` (constants dropped)."""
    K = len(q_t)
    off = At.copy()
    np.fill_diagonal(off, 0.0)
    interf_t = 1.0 + off @ q_t
    lin = (off / (interf_t[:, None] * LN2)).sum(axis=0)
    cost = lam * params.pmax / params.eta

    def fn(q):
        total = 1.0 + At @ q
        val = np.sum(np.log2(total)) - lin @ q - cost @ q
        w = 1.0 / (total * LN2)
        grad = At.T @ w - lin - cost
        hess = -(At.T * (w / total)) @ At
        return val, grad, hess

    return fn


def _qos_rows(At: np.ndarray, gamma: float):
    K = len(At)
    G = gamma * At.copy()
    np.fill_diagonal(G, -np.diag(At))
    return G, np.full(K, -gamma)


def subtractive_objective(gains: GainTable, p, lam: float, params: PowerParams) -> float:
    return float(np.sum(rates(gains, p)) - lam * total_power(p, params))


def sca_power_step(gains: GainTable, p_current, lam: float, config, tol: float = 1e-11):
    """One convex-surrogate maximisation; returns ``(p_new, solver_status)``."""
    params = _params(config)
    p_current = np.asarray(p_current, dtype=float)
    At = _scaled(gains, params)
    q_t = p_current / params.pmax
    G, h = (None, None)
    if params.gamma_th > 0:
        G, h = _qos_rows(At, params.gamma_th)
    prob = cvxcore.ConvexSubproblem(_surrogate(At, q_t, lam, params), G=G, h=h,
                                    lower=np.zeros(len(q_t)), upper=np.ones(len(q_t)),
                                    dim=len(q_t))
    res = cvxcore.solve(prob, tol=tol, x0=q_t)
    q = np.clip(res.x, 0.0, 1.0)
    return q * params.pmax, res.status


def _inner_sca(gains, p, lam, params, n_max, tol):
    obj = subtractive_objective(gains, p, lam, params)
    flags = []
    for it in range(1, n_max + 1):
        p_new, status = sca_power_step(gains, p, lam, params)
        if status != "optimal":
            flags.append(status)
        obj_new = subtractive_objective(gains, p_new, lam, params)
        if obj_new < obj or not qos_satisfied(gains, p_new, params.gamma_th):
            return p, it, flags
        gain = obj_new - obj
        p, obj = p_new, obj_new
        if gain <= tol:
            return p, it, flags
    flags.append("inner_max_iter")
    return p, n_max, flags


def optimize_powers(gains: GainTable, p_init, config, tolerances=None) -> PowerResult:
    """Dinkelbach iterations with an SCA inner solver, warm-started at ``p_init``."""
    params = _params(config)
    tol = tolerances if tolerances is not None else config.tolerances
    eps = tol.dinkelbach_eps
    p = np.asarray(p_init, dtype=float).copy()
    if not qos_satisfied(gains, p, params.gamma_th) or np.any(p > params.pmax * (1 + 1e-12)):
        raise InfeasiblePowerError("initial powers violate QoS or the power box")
    trace = DinkelbachTrace()
    warnings = []
    lam = energy_efficiency(gains, p, params)
    converged = False
    for _ in range(tol.n_max_inner):
        p, inner, flags = _inner_sca(gains, p, lam, params, tol.n_max_inner, 0.1 * eps)
        warnings.extend(flags)
        F = subtractive_objective(gains, p, lam, params)
        trace.lambdas.append(lam)
        trace.F.append(F)
        trace.inner_iterations.append(inner)
        new_lam = energy_efficiency(gains, p, params)
        trace.ee.append(new_lam)
        if abs(F) <= eps:
            converged = True
            break
        lam = new_lam
    if not converged:
        log.warning("Dinkelbach stopped at the iteration cap with |F|=%.3g", abs(trace.F[-1]))
        warnings.append("dinkelbach_max_iter")
    return PowerResult(p, trace, converged, warnings)
