"""Small dense convex solver for the SCA subproblems.

Handles maximisation of a linear or smooth concave objective over

    {x : G x <= h} ∩ {lower <= x <= upper} ∩ {||x - center|| <= radius}

with a log-barrier interior-point method (Newton centering, phase I when the
start is not strictly feasible). A linear objective with a ball whose centre
is feasible is handled first by an exact primal active-set method, falling
back to the barrier if that does not terminate. Deterministic: no
randomisation anywhere. Linear rows are normalised to unit norm internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

ConcaveFn = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]


class InfeasibleError(RuntimeError):
    pass


@dataclass
class ConvexSubproblem:
    """``objective`` is a coefficient vector (maximise ``c @ x``) or a callable
    returning ``(value, gradient, hessian)`` of a concave function."""

    objective: np.ndarray | ConcaveFn
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.dim is None:
            for arr in (self.objective if not callable(self.objective) else None,
                        self.lower, self.upper, self.center):
                if arr is not None:
                    self.dim = len(np.atleast_1d(arr))
                    break
            else:
                if self.G is not None:
                    self.dim = np.asarray(self.G).shape[1]
        if self.dim is None:
            raise ValueError("cannot infer problem dimension")
        n = self.dim
        if self.G is None or len(self.G) == 0:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        norms = np.linalg.norm(self.G, axis=1)
        keep = norms > 0
        if np.any(~keep & (self.h < 0)):
            raise InfeasibleError("zero row with negative offset")
        self.G = self.G[keep] / norms[keep, None]
        self.h = self.h[keep] / norms[keep]
        self.lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
            self.radius = float(self.radius)

    @property
    def has_ball(self) -> bool:
        return self.center is not None

    def evaluate(self, x) -> float:
        if callable(self.objective):
            return float(self.objective(x)[0])
        return float(np.dot(self.objective, x))

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        viol = [np.max(self.lower - x, initial=-np.inf), np.max(x - self.upper, initial=-np.inf)]
        if len(self.G):
            viol.append(np.max(self.G @ x - self.h))
        if self.has_ball:
            viol.append(np.linalg.norm(x - self.center) - self.radius)
        return float(max(viol))


@dataclass
class SolveResult:
    x: np.ndarray
    status: str  # "optimal", "max_iter", "infeasible"
    objective: float
    gap: float = 0.0
    newton_steps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class _Barrier:
    """Value, gradient and Hessian of the log barrier for one problem."""

    def __init__(self, G, h, lower, upper, center=None, radius=None):
        self.G, self.h = G, h
        self.lo_mask = np.isfinite(lower)
        self.hi_mask = np.isfinite(upper)
        self.lower, self.upper = lower, upper
        self.center, self.radius = center, radius
        self.m = (len(G) + int(self.lo_mask.sum()) + int(self.hi_mask.sum())
                  + (center is not None))

    def slacks(self, x):
        s_lin = self.h - self.G @ x
        s_lo = (x - self.lower)[self.lo_mask]
        s_hi = (self.upper - x)[self.hi_mask]
        s_ball = None
        if self.center is not None:
            d = x - self.center
            s_ball = self.radius**2 - d @ d
        return s_lin, s_lo, s_hi, s_ball

    def strictly_feasible(self, x) -> bool:
        s_lin, s_lo, s_hi, s_ball = self.slacks(x)
        ok = np.all(s_lin > 0) and np.all(s_lo > 0) and np.all(s_hi > 0)
        return bool(ok and (s_ball is None or s_ball > 0))

    def value_grad_hess(self, x):
        n = len(x)
        s_lin, s_lo, s_hi, s_ball = self.slacks(x)
        val = -np.sum(np.log(s_lin)) - np.sum(np.log(s_lo)) - np.sum(np.log(s_hi))
        inv = 1.0 / s_lin
        grad = self.G.T @ inv
        hess = (self.G.T * inv**2) @ self.G
        diag = np.zeros(n)
        g_lo = np.zeros(n)
        g_lo[self.lo_mask] = -1.0 / s_lo
        diag[self.lo_mask] += 1.0 / s_lo**2
        g_hi = np.zeros(n)
        g_hi[self.hi_mask] = 1.0 / s_hi
        diag[self.hi_mask] += 1.0 / s_hi**2
        grad = grad + g_lo + g_hi
        hess[np.diag_indices(n)] += diag
        if s_ball is not None:
            d = x - self.center
            val -= np.log(s_ball)
            grad = grad + 2.0 * d / s_ball
            hess = hess + (2.0 / s_ball) * np.eye(n) + (4.0 / s_ball**2) * np.outer(d, d)
        return val, grad, hess

    def max_step(self, x, dx) -> float:
        """Largest step keeping every slack positive."""
        t = np.inf
        Gd = self.G @ dx
        pos = Gd > 0
        if np.any(pos):
            t = min(t, np.min((self.h - self.G @ x)[pos] / Gd[pos]))
        neg = (dx < 0) & self.lo_mask
        if np.any(neg):
            t = min(t, np.min((self.lower - x)[neg] / dx[neg]))
        pos = (dx > 0) & self.hi_mask
        if np.any(pos):
            t = min(t, np.min((self.upper - x)[pos] / dx[pos]))
        if self.center is not None:
            d = x - self.center
            a = dx @ dx
            b = 2.0 * d @ dx
            c = d @ d - self.radius**2
            if a > 0:
                disc = b * b - 4 * a * c
                t = min(t, (-b + np.sqrt(max(disc, 0.0))) / (2 * a))
        return t


def _objective_terms(objective, x):
    """Value, gradient, Hessian of the function being *maximised*."""
    if callable(objective):
        val, grad, hess = objective(x)
        return float(val), np.asarray(grad, dtype=float), np.asarray(hess, dtype=float)
    c = np.asarray(objective, dtype=float)
    return float(c @ x), c, None


def _barrier_method(objective, barrier: _Barrier, x, tol, max_newton, t0=1.0, mu=50.0):
    """Maximise ``objective`` from a strictly feasible ``x``. Returns (x, gap, steps, status)."""
    n = len(x)
    m = max(barrier.m, 1)
    t = t0
    steps = 0
    while True:
        # centering
        for _ in range(200):
            f, fg, fh = _objective_terms(objective, x)
            b, bg, bh = barrier.value_grad_hess(x)
            grad = -t * fg + bg
            hess = bh if fh is None else bh - t * fh
            try:
                L = np.linalg.cholesky(hess)
                dx = -np.linalg.solve(L.T, np.linalg.solve(L, grad))
            except np.linalg.LinAlgError:
                reg = 1e-12 * (1.0 + np.abs(np.diag(hess)).max())
                dx = -np.linalg.lstsq(hess + reg * np.eye(n), grad, rcond=None)[0]
            dec2 = -grad @ dx
            if not np.isfinite(dec2):
                return x, m / t, steps, "numerical"
            if dec2 / 2.0 <= 1e-8:
                break
            smax = barrier.max_step(x, dx)
            s = min(1.0, 0.99 * smax)
            phi0 = -t * f + b
            while s > 1e-10:
                xn = x + s * dx
                if barrier.strictly_feasible(xn):
                    fn = _objective_terms(objective, xn)[0]
                    phin = -t * fn + barrier.value_grad_hess(xn)[0]
                    if phin <= phi0 - 0.01 * s * dec2:
                        break
                s *= 0.5
            else:
                break
            x = xn
            steps += 1
            if phi0 - phin <= 1e-13 * max(1.0, abs(phi0)):
                # roundoff floor: further centering cannot make progress
                break
            if steps >= max_newton:
                return x, m / t, steps, "max_iter"
        if m / t <= tol:
            return x, m / t, steps, "optimal"
        t *= mu


def _phase_one(prob: ConvexSubproblem, x_start, max_newton):
    """Find a strictly feasible point by minimising the common slack ``s``."""
    n = prob.dim
    G, h, lo, hi = prob.G, prob.h, prob.lower, prob.upper
    rows = [np.hstack([G, -np.ones((len(G), 1))])]
    rhs = [h]
    lo_idx = np.flatnonzero(np.isfinite(lo))
    hi_idx = np.flatnonzero(np.isfinite(hi))
    if len(lo_idx):
        block = np.zeros((len(lo_idx), n + 1))
        block[np.arange(len(lo_idx)), lo_idx] = -1.0
        block[:, -1] = -1.0
        rows.append(block)
        rhs.append(-lo[lo_idx])
    if len(hi_idx):
        block = np.zeros((len(hi_idx), n + 1))
        block[np.arange(len(hi_idx)), hi_idx] = 1.0
        block[:, -1] = -1.0
        rows.append(block)
        rhs.append(hi[hi_idx])
    G1 = np.vstack(rows)
    h1 = np.concatenate(rhs)
    lower1 = np.full(n + 1, -np.inf)
    upper1 = np.full(n + 1, np.inf)
    lower1[-1] = -1.0
    if prob.has_ball:
        # the ball stays a hard barrier on x alone; its centre is strictly inside
        x_start = prob.center.copy()
    viol = np.max(G1[:, :n] @ x_start - h1, initial=-1.0)
    y0 = np.append(x_start, max(viol, 0.0) + 1.0)
    barrier = _Barrier(G1, h1, lower1, upper1)
    if prob.has_ball:
        barrier = _CylinderBarrier(barrier, prob.center, prob.radius, n)
    objective = np.zeros(n + 1)
    objective[-1] = -1.0
    # a well-centred start keeps the main barrier pass short, so no early exit
    y, _, steps, _ = _barrier_method(objective, barrier, y0, tol=1e-6, max_newton=max_newton)
    return y[:n], y[-1], steps


class _CylinderBarrier(_Barrier):
    """Barrier on (x, s) where the ball only constrains the first ``n`` coordinates."""

    def __init__(self, base: _Barrier, center, radius, n):
        self.__dict__.update(base.__dict__)
        self.bcenter, self.bradius, self.n = center, radius, n
        self.m = base.m + 1

    def _ball_slack(self, y):
        d = y[: self.n] - self.bcenter
        return self.bradius**2 - d @ d

    def strictly_feasible(self, y) -> bool:
        return super().strictly_feasible(y) and self._ball_slack(y) > 0

    def value_grad_hess(self, y):
        val, grad, hess = super().value_grad_hess(y)
        q = self._ball_slack(y)
        d = np.zeros_like(y)
        d[: self.n] = y[: self.n] - self.bcenter
        P = np.zeros((len(y), len(y)))
        P[np.arange(self.n), np.arange(self.n)] = 1.0
        return (val - np.log(q), grad + 2.0 * d / q,
                hess + (2.0 / q) * P + (4.0 / q**2) * np.outer(d, d))

    def max_step(self, y, dy):
        t = super().max_step(y, dy)
        d = y[: self.n] - self.bcenter
        dx = dy[: self.n]
        a = dx @ dx
        if a > 0:
            b = 2.0 * d @ dx
            c = d @ d - self.bradius**2
            t = min(t, (-b + np.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a))
        return t


def _all_rows(prob: ConvexSubproblem):
    """Half-spaces and finite box bounds stacked as ``A x <= b``."""
    n = prob.dim
    eye = np.eye(n)
    lo = np.isfinite(prob.lower)
    hi = np.isfinite(prob.upper)
    A = np.vstack([prob.G, -eye[lo], eye[hi]])
    b = np.concatenate([prob.h, -prob.lower[lo], prob.upper[hi]])
    return A, b


def _gram_solve(Aw, rhs):
    """Solve ``(Aw Aw^T) X = rhs`` for linearly independent rows ``Aw``."""
    try:
        return cho_solve(cho_factor(Aw @ Aw.T), rhs)
    except np.linalg.LinAlgError:
        Q, R = np.linalg.qr(Aw.T)
        return np.linalg.solve(R, np.linalg.solve(R.T, rhs))


def _ball_active_set(prob: ConvexSubproblem, tol, max_iter=None):
    """Maximise ``c @ x`` over half-spaces, box and ball, starting at the centre.

    Working-set iterations: with rows ``W`` held at equality, the maximiser
    over the ball is the min-norm point of the affine set plus the projected
    objective scaled to reach the sphere. Moving towards it, the first row to
    block joins ``W``; at the working-set optimum the row with the most
    negative multiplier leaves. Rows that the centre violates by less than
    ``tol`` are treated as active there (relaxed to zero slack). Returns
    ``None`` when the centre is not feasible or the iteration limit is hit.
    """
    c = np.asarray(prob.objective, dtype=float)
    A, b = _all_rows(prob)
    z0, r = prob.center, prob.radius
    slack = b - A @ z0
    if np.any(slack < -tol):
        return None
    slack = np.maximum(slack, 0.0)
    n = prob.dim
    y = np.zeros(n)
    work: list[int] = []
    scale = max(np.linalg.norm(c), 1e-300)
    max_iter = 4 * (len(A) + n) + 10 if max_iter is None else max_iter
    for _ in range(max_iter):
        if work:
            Aw = A[work]
            # u = (Aw Aw^T)^-1 Aw c, w = (Aw Aw^T)^-1 b_W
            u, w = _gram_solve(Aw, np.column_stack([Aw @ c, slack[work]])).T
            y_p = Aw.T @ w
            Pc = c - Aw.T @ u
        else:
            y_p = np.zeros(n)
            Pc = c
        npc = np.linalg.norm(Pc)
        rem = r * r - y_p @ y_p
        if npc > 1e-12 * scale and rem > 0:
            t = np.sqrt(rem) / npc
            target = y_p + t * Pc
            mu = u - w / t if work else np.zeros(0)
        elif npc > 1e-12 * scale:
            # affine set touches the sphere in a single point
            target = y_p
            coef = np.linalg.lstsq(np.column_stack([A[work].T, y_p]), c, rcond=None)[0]
            mu = coef[:-1] if coef[-1] >= 0 else np.full(len(work), -1.0)
        else:
            target = y
            mu = u if work else np.zeros(0)
        d = target - y
        Ad = A @ d
        alpha, block = 1.0, -1
        cand = Ad > 1e-14 * max(np.linalg.norm(d), 1e-300)
        cand[work] = False
        if np.any(cand):
            idx = np.flatnonzero(cand)
            steps = np.maximum(slack[idx] - A[idx] @ y, 0.0) / Ad[idx]
            j = int(np.argmin(steps))
            if steps[j] < 1.0:
                alpha, block = float(steps[j]), int(idx[j])
        y = y + alpha * d
        if block >= 0:
            work.append(block)
            continue
        if len(mu) == 0 or mu.min() >= -1e-12 * scale:
            return z0 + y
        work.pop(int(np.argmin(mu)))
    return None


def _ball_fast_path(prob: ConvexSubproblem, tol):
    """Linear objective: the ball maximiser is optimal if it satisfies everything else."""
    c = np.asarray(prob.objective, dtype=float)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        return prob.center.copy()
    x = prob.center + prob.radius * c / norm
    if np.any(x < prob.lower) or np.any(x > prob.upper):
        return None
    if len(prob.G) and np.any(prob.G @ x > prob.h):
        return None
    return x


def solve(prob: ConvexSubproblem, tol: float = 1e-9, x0=None, max_newton: int = 500) -> SolveResult:
    """Maximise the objective of ``prob``.

    ``x0`` is an optional feasible reference point: if the solver cannot find a
    strictly feasible interior it is returned (status ``"infeasible"`` is only
    reported when ``x0`` is missing or itself infeasible).
    """
    linear = not callable(prob.objective)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
    if linear and prob.has_ball:
        x = _ball_fast_path(prob, tol)
        if x is not None:
            return SolveResult(x, "optimal", prob.evaluate(x), info={"fast_path": True})
        if prob.radius > 0:
            try:
                x = _ball_active_set(prob, tol)
            except np.linalg.LinAlgError:
                x = None
            if x is not None:
                return SolveResult(x, "optimal", prob.evaluate(x), info={"active_set": True})
    if prob.has_ball and prob.radius <= 0:
        x = prob.center.copy()
        status = "optimal" if prob.max_violation(x) <= tol else "infeasible"
        return SolveResult(x, status, prob.evaluate(x))
    if linear and np.linalg.norm(prob.objective) == 0.0 and x0 is not None \
            and prob.max_violation(x0) <= tol:
        return SolveResult(x0.copy(), "optimal", prob.evaluate(x0))

    barrier = _Barrier(prob.G, prob.h, prob.lower, prob.upper, prob.center, prob.radius)
    start = x0
    if start is None:
        lo = np.where(np.isfinite(prob.lower), prob.lower, np.nan)
        hi = np.where(np.isfinite(prob.upper), prob.upper, np.nan)
        start = np.nan_to_num(0.5 * (lo + hi), nan=0.0)
        start = np.where(np.isnan(lo) & ~np.isnan(hi), hi - 1.0, start)
        start = np.where(~np.isnan(lo) & np.isnan(hi), lo + 1.0, start)
        if prob.has_ball:
            start = prob.center.copy()
    phase_one_steps = 0
    if not barrier.strictly_feasible(start):
        start, s, phase_one_steps = _phase_one(prob, start, max_newton)
        if not (s < 0 and barrier.strictly_feasible(start)):
            if x0 is not None and prob.max_violation(x0) <= tol:
                return SolveResult(x0.copy(), "optimal", prob.evaluate(x0),
                                   newton_steps=phase_one_steps, info={"no_interior": True})
            return SolveResult(start, "infeasible", prob.evaluate(start),
                               newton_steps=phase_one_steps,
                               info={"certificate": float(s)})
    x, gap, steps, status = _barrier_method(prob.objective, barrier, start, tol, max_newton)
    if status == "numerical":
        status = "max_iter"
    value = prob.evaluate(x)
    if x0 is not None and prob.max_violation(x0) <= tol:
        ref = prob.evaluate(x0)
        if value < ref:
            x, value = x0.copy(), ref
    return SolveResult(x, status, value, gap, steps + phase_one_steps)
