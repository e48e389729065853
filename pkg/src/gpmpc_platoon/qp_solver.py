"""Dense operator-splitting (ADMM) solver for small convex QPs.

Solves  min 0.5 x'Px + q'x  s.t.  l <= Ax <= u  with the splitting used by
OSQP, adaptive step size, infeasibility certificates and an active-set
polishing step that returns residuals at machine precision once the active
set is identified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

INF = 1e20


@dataclass
class QuadraticProgram:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.l = np.maximum(np.asarray(self.l, dtype=float).ravel(), -INF)
        self.u = np.minimum(np.asarray(self.u, dtype=float).ravel(), INF)
        if self.P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n}, got {self.P.shape}")
        if self.l.shape != (self.A.shape[0],) or self.u.shape != (self.A.shape[0],):
            raise ValueError("bounds must match the number of constraint rows")
        if np.any(self.l > self.u):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpResult:
    x: np.ndarray
    y: np.ndarray
    status: str  # "optimal" | "max-iter" | "primal-infeasible"
    iterations: int
    prim_res: float
    dual_res: float
    polished: bool = False


def residuals(qp: QuadraticProgram, x, y) -> tuple[float, float]:
    """Primal (bound violation) and dual (stationarity) residuals, inf-norm."""
    ax = qp.A @ x
    prim = np.max(np.maximum(qp.l - ax, 0.0) + np.maximum(ax - qp.u, 0.0), initial=0.0)
    dual = np.max(np.abs(qp.P @ x + qp.q + qp.A.T @ y), initial=0.0)
    return float(prim), float(dual)


def _kkt_solve(qp: QuadraticProgram, lower, upper):
    act = np.flatnonzero(lower | upper)
    n = qp.n
    a_act = qp.A[act]
    b_act = np.where(lower[act], qp.l[act], qp.u[act])
    kkt = np.zeros((n + act.size, n + act.size))
    kkt[:n, :n] = qp.P
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    rhs = np.concatenate([-qp.q, b_act])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    y = np.zeros(qp.A.shape[0])
    y[act] = sol[n:]
    return sol[:n], y


def _polish(qp: QuadraticProgram, z, y, tol, passes: int = 8):
    """Equality-constrained re-solve on the guessed active set.

    A few primal-dual active-set corrections are applied when the guess is
    slightly off: violated rows are added, wrong-signed multipliers dropped.
    """
    lower = (z - qp.l < -y) & (qp.l > -INF)
    upper = (qp.u - z < y) & (qp.u < INF) & ~lower
    for _ in range(passes):
        x, y_full = _kkt_solve(qp, lower, upper)
        ax = qp.A @ x
        scale = 1.0 + np.abs(ax)
        drop_l = lower & (y_full > tol)
        drop_u = upper & (y_full < -tol)
        add_l = ~lower & ~upper & (ax < qp.l - tol * scale)
        add_u = ~lower & ~upper & (ax > qp.u + tol * scale)
        if not (drop_l.any() or drop_u.any() or add_l.any() or add_u.any()):
            prim, dual = residuals(qp, x, y_full)
            if prim > tol or dual > tol:
                return None
            return x, y_full, prim, dual
        lower = (lower & ~drop_l) | add_l
        upper = (upper & ~drop_u) | add_u
    return None


def _equilibrate(P, q, A, iters: int = 15):
    """Modified Ruiz scaling of the KKT matrix; returns (D, E, c)."""
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col = np.maximum(np.max(np.abs(Ps), axis=0), np.max(np.abs(As), axis=0, initial=0.0))
        row = np.max(np.abs(As), axis=1, initial=0.0)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Ps = d[:, None] * Ps * d[None, :]
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
    qs = D * q
    mean_col = np.mean(np.max(np.abs(Ps), axis=0))
    c = 1.0 / np.clip(max(mean_col, np.max(np.abs(qs), initial=0.0)), 1e-4, 1e4)
    return D, E, c


def solve_qp(
    qp: QuadraticProgram,
    tol: float = 1e-8,
    max_iter: int = 20000,
    rho: float = 0.1,
    sigma: float = 1e-6,
    alpha: float = 1.6,
    check_every: int = 10,
    polish: bool = True,
    x0=None,
    y0=None,
) -> QpResult:
    n, m = qp.n, qp.A.shape[0]
    D, E, c = _equilibrate(qp.P, qp.q, qp.A)
    P = c * (D[:, None] * qp.P * D[None, :])
    q = c * D * qp.q
    A = E[:, None] * qp.A * D[None, :]
    l = np.where(qp.l > -INF, E * qp.l, -INF)
    u = np.where(qp.u < INF, E * qp.u, INF)
    # equality rows get a stiffer penalty
    eq = np.abs(u - l) < 1e-12
    scale = np.where(eq, 1e3, 1.0)
    rho = min(max(rho, 1e-6), 1e6)

    def factor(r):
        rv = r * scale
        return rv, cho_factor(P + sigma * np.eye(n) + A.T @ (rv[:, None] * A))

    def unscale(xs, ys):
        return D * xs, E * ys / c

    rho_vec, fac = factor(rho)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / D
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float) * c / E
    z = np.clip(A @ x, l, u)

    it = 0
    while it < max_iter:
        it += 1
        x_t = cho_solve(fac, sigma * x - q + A.T @ (rho_vec * z - y))
        z_t = A @ x_t
        x = alpha * x_t + (1.0 - alpha) * x
        z_relax = alpha * z_t + (1.0 - alpha) * z
        z_new = np.clip(z_relax + y / rho_vec, l, u)
        dy = rho_vec * (z_relax - z_new)
        y = y + dy
        z = z_new

        if it % check_every and it != max_iter:
            continue
        x_u, y_u = unscale(x, y)
        prim, dual = residuals(qp, x_u, y_u)
        if prim <= tol and dual <= tol:
            return QpResult(x_u, y_u, "optimal", it, prim, dual)
        if _infeasible(A, l, u, dy, tol):
            return QpResult(x_u, y_u, "primal-infeasible", it, prim, dual)
        if polish:
            res = _polish(qp, np.clip(qp.A @ x_u, qp.l, qp.u), y_u, tol)
            if res is not None:
                return QpResult(res[0], res[1], "optimal", it, res[2], res[3], polished=True)
        # rebalance step size on the scaled residuals
        ax = A @ x
        px = P @ x
        aty = A.T @ y
        p_norm = np.max(np.abs(ax - z)) / max(np.max(np.abs(ax)), np.max(np.abs(z)), 1e-12)
        d_norm = np.max(np.abs(px + q + aty)) / max(
            np.max(np.abs(px)), np.max(np.abs(aty)), np.max(np.abs(q)), 1e-12
        )
        ratio = np.sqrt(p_norm / max(d_norm, 1e-30))
        if ratio > 5.0 or ratio < 0.2:
            rho = min(max(rho * ratio, 1e-6), 1e6)
            rho_vec, fac = factor(rho)

    x_u, y_u = unscale(x, y)
    prim, dual = residuals(qp, x_u, y_u)
    return QpResult(x_u, y_u, "max-iter", it, prim, dual)


def _infeasible(A, l, u, dy, tol) -> bool:
    norm = np.max(np.abs(dy), initial=0.0)
    if norm < 1e-12:
        return False
    eps = 1e-6 * norm
    if np.max(np.abs(A.T @ dy)) > eps:
        return False
    pos = np.maximum(dy, 0.0)
    neg = np.minimum(dy, 0.0)
    if np.any((pos > eps) & (u >= INF)) or np.any((neg < -eps) & (l <= -INF)):
        return False
    support = np.sum(np.where(u < INF, u, 0.0) * pos) + np.sum(np.where(l > -INF, l, 0.0) * neg)
    return bool(support < -eps)
