"""Trust-region SCA shared by the phase and position subproblems.

Each step maximises the linearised sum rate over linearised SINR half-spaces,
a box, optional extra half-spaces (e.g. spacing) and a Euclidean trust ball.
A step is accepted only when the true sum rate does not decrease and the true
constraints hold; the radius grows after a good model fit and shrinks after
a rejection or a poor fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import cvxcore


@dataclass(frozen=True)
class TrustRegionState:
    radius: float
    ratio: float = float("nan")
    min_radius: float = 1e-6
    max_radius: float = np.pi

    def __post_init__(self):
        clipped = float(np.clip(self.radius, self.min_radius, self.max_radius))
        object.__setattr__(self, "radius", clipped)

    def update(self, accepted: bool, ratio: float, tol) -> "TrustRegionState":
        if accepted and ratio > tol.trust_accept_ratio:
            radius = self.radius * tol.trust_grow
        elif accepted and np.isfinite(ratio):
            radius = self.radius
        else:
            radius = self.radius * tol.trust_shrink
        return replace(self, radius=radius, ratio=ratio)

    @property
    def at_floor(self) -> bool:
        return self.radius <= self.min_radius * (1 + 1e-12)


@dataclass
class Linearization:
    sum_rate: float
    rates: np.ndarray
    grad: np.ndarray        # d R_sum / dx
    sinrs: np.ndarray
    sinr_jac: np.ndarray    # (K, D)


class SCAModel:
    """What a block (phases, U or T) must provide to the trust-region loop.

    Subclasses set ``lower``, ``upper``, ``scale`` (solver variable is
    ``x / scale``), ``gamma_th`` and ``rate_threshold``.
    """

    lower: np.ndarray
    upper: np.ndarray
    scale: float = 1.0
    gamma_th: float = 0.0
    rate_threshold: float = 0.0
    qos_slack: float = 1e-9

    def linearize(self, x) -> Linearization:
        raise NotImplementedError

    def true_rates(self, x) -> np.ndarray:
        raise NotImplementedError

    def extra_constraints(self, x, radius):
        """Additional half-spaces ``G x <= h`` in unscaled variables."""
        return None, None

    def feasible(self, x) -> bool:
        return True

    def normalize(self, x) -> np.ndarray:
        return x

    def orient(self, x, grad) -> np.ndarray:
        """Pick an equivalent representative of ``x`` before building the surrogate."""
        return x


@dataclass
class StepResult:
    x: np.ndarray
    accepted: bool
    trust: TrustRegionState
    actual: float
    predicted: float
    status: str
    lin: Linearization | None = None


def sca_step(model: SCAModel, x_t: np.ndarray, lin: Linearization, trust: TrustRegionState,
             tol, solver_tol: float = 1e-10) -> StepResult:
    s = model.scale
    x_t = model.orient(x_t, lin.grad)
    z_t = x_t / s
    grad_z = lin.grad * s
    rows, rhs = [], []
    if model.gamma_th > 0:
        J = lin.sinr_jac * s
        rows.append(-J)
        # an iterate accepted within qos_slack of the threshold stays feasible
        rhs.append(np.maximum(lin.sinrs - model.gamma_th, 0.0) - J @ z_t)
    G_extra, h_extra = model.extra_constraints(x_t, trust.radius)
    if G_extra is not None and len(G_extra):
        rows.append(G_extra * s)
        rhs.append(h_extra)
    G = np.vstack(rows) if rows else None
    h = np.concatenate(rhs) if rhs else None
    if not np.any(grad_z):
        return StepResult(x_t, False, trust, 0.0, 0.0, "stationary", lin)
    prob = cvxcore.ConvexSubproblem(grad_z, G=G, h=h, lower=model.lower / s,
                                    upper=model.upper / s, center=z_t,
                                    radius=trust.radius / s)
    res = cvxcore.solve(prob, tol=solver_tol * max(1.0, np.abs(grad_z).sum() * trust.radius / s),
                        x0=z_t)
    if res.status == "infeasible":
        return StepResult(x_t, False, trust.update(False, np.nan, tol), 0.0, 0.0,
                          "surrogate_infeasible", lin)
    x = model.normalize(np.clip(res.x * s, model.lower, model.upper))
    predicted = float(grad_z @ (res.x - z_t))
    if predicted <= 1e-13 * max(1.0, abs(lin.sum_rate)):
        return StepResult(x_t, False, trust, 0.0, predicted, "stationary", lin)
    rates = model.true_rates(x)
    actual = float(np.sum(rates) - lin.sum_rate)
    ratio = actual / predicted
    ok = (actual >= 0.0 and np.all(rates >= model.rate_threshold - model.qos_slack)
          and model.feasible(x))
    return StepResult(x if ok else x_t, bool(ok), trust.update(bool(ok), ratio, tol), actual,
                      predicted, "accepted" if ok else "rejected", None if ok else lin)


@dataclass
class SCAResult:
    x: np.ndarray
    sum_rates: list = field(default_factory=list)
    iterations: int = 0
    accepted: int = 0
    trust: TrustRegionState | None = None
    reason: str = ""
    trajectory: list = field(default_factory=list)


def run_sca(model: SCAModel, x0: np.ndarray, trust: TrustRegionState, tol,
            record_trajectory: bool = False) -> SCAResult:
    """Iterate trust-region steps until the accepted gain drops below ``sca_eps``."""
    x = np.asarray(x0, dtype=float).copy()
    lin = model.linearize(x)
    out = SCAResult(x, [lin.sum_rate], trust=trust)
    if record_trajectory:
        out.trajectory.append(x.copy())
    for it in range(1, tol.n_max_inner + 1):
        step = sca_step(model, x, lin, trust, tol)
        out.iterations = it
        trust = step.trust
        if step.status == "stationary":
            out.reason = "stationary"
            break
        if step.accepted:
            x = step.x
            lin = model.linearize(x)
            out.accepted += 1
            out.sum_rates.append(lin.sum_rate)
            if record_trajectory:
                out.trajectory.append(x.copy())
            if step.actual < tol.sca_eps:
                out.reason = "converged"
                break
        elif trust.at_floor:
            out.reason = "radius_floor"
            break
    else:
        out.reason = "max_iter"
    out.x = x
    out.trust = trust
    return out
