"""Centralized platoon MPC with an ARX(+GP) model of the trailing HV.

Decision vector: accelerations a[n, i] (AV n, horizon step i = 0..N-1),
flattened row-major, followed by one shared nonnegative slack on the
distance constraints. Velocities and positions are affine in it; the HV
position mean is affine once the GP mean is linearized around a trajectory,
so every outer iteration is a convex QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chance_constraints import DistancePolicy
from .hv_model import ArxCoefficients
from .platoon_dynamics import PlatoonState
from .qp_solver import QuadraticProgram, solve_qp

SLACK_WEIGHT = 1e6  # per squared metre
SLACK_LINEAR_WEIGHT = 1e6  # per metre; makes the penalty exact
SLACK_TOL = 1e-6


class MpcInputError(ValueError):
    pass


class MpcInfeasibleError(RuntimeError):
    def __init__(self, message: str, constraints: list[str]):
        super().__init__(f"{message}: {', '.join(constraints) or 'unknown rows'}")
        self.constraints = constraints


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    dt: float = 0.1
    q1: float = 5.0
    q2: float = 5.0
    r: float = 10.0
    v_min: float = -35.0
    v_max: float = 35.0
    a_min: float = -5.0
    a_max: float = 5.0
    policy: DistancePolicy = field(default_factory=DistancePolicy)
    variant: str = "gp"
    sqp_tol: float = 1e-4
    sqp_max_iter: int = 10
    qp_tol: float = 1e-8
    qp_max_iter: int = 20000

    def __post_init__(self):
        if self.horizon < 1:
            raise MpcInputError("horizon must be >= 1")
        if not self.dt > 0:
            raise MpcInputError("dt must be positive")
        if min(self.q1, self.q2, self.r) <= 0:
            raise MpcInputError("weights must be positive")
        if not self.v_min < self.v_max or not self.a_min < self.a_max:
            raise MpcInputError("bounds must satisfy min < max")
        if self.variant not in ("nominal", "gp"):
            raise MpcInputError(f"variant must be 'nominal' or 'gp', got {self.variant!r}")


@dataclass
class Linearization:
    """GP quantities evaluated along a horizon trajectory (steps i = 0..N-1)."""

    gp_mean: np.ndarray
    gp_var: np.ndarray
    jacobian: np.ndarray  # (N, 2) d gp_mean / d (v_hv, v_av)
    args: np.ndarray  # (N, 2) evaluation points (v_hv[i-1], v_av[i-1])


@dataclass
class QpSubproblem:
    qp: QuadraticProgram
    labels: list[str]
    cost_const: float
    maps: dict
    lin: Linearization
    bounds: np.ndarray  # HV distance bound for i = 0..N
    hv_var: np.ndarray  # HV position variance for i = 0..N

    def count(self, prefix: str) -> int:
        return sum(1 for lab in self.labels if lab.startswith(prefix))


@dataclass
class MpcSolution:
    accelerations: np.ndarray  # (N_a, N)
    predicted: dict
    cost: float
    iterations: int
    status: str
    slack: float = 0.0
    qp_iterations: int = 0
    converged: bool = True
    trajectory_change: float = 0.0
    prim_res: float = 0.0
    dual_res: float = 0.0

    @property
    def first(self) -> np.ndarray:
        return self.accelerations[:, 0].copy()


# -- affine maps ------------------------------------------------------------


def _affine_maps(config: MpcConfig, state: PlatoonState, coeffs: ArxCoefficients):
    """Affine maps (coef, const) from the decision vector to predicted quantities.

    Returns a dict with av velocity/position maps (per AV, steps 0..N) and the
    HV velocity map for steps -4..N (index offset 4).
    """
    N, T, na = config.horizon, config.dt, state.n_av
    nx = na * N + 1
    cums = np.tril(np.ones((N + 1, N)), -1)  # row i sums a_j for j < i
    steps = np.arange(N + 1)
    v_coef, v_const, p_coef, p_const = [], [], [], []
    for n, av in enumerate(state.avs):
        vc = np.zeros((N + 1, nx))
        vc[:, n * N : (n + 1) * N] = T * cums
        pc = np.zeros((N + 1, nx))
        pc[:, n * N : (n + 1) * N] = T * T * (cums @ cums[:N])
        v_coef.append(vc)
        v_const.append(np.full(N + 1, av.velocity))
        p_coef.append(pc)
        p_const.append(av.position + T * steps * av.velocity)

    # HV velocity by the ARX recursion; lags before step 0 are measured
    hv_c = np.zeros((N + 5, nx))
    hv_k = np.zeros(N + 5)
    last_c = np.zeros((N + 5, nx))
    last_k = np.zeros(N + 5)
    hv_k[4] = state.hv_velocity
    last_k[4] = state.avs[-1].velocity
    for l in range(1, 5):
        hv_k[4 - l] = state.history.hv[l - 1]
        last_k[4 - l] = state.history.av[l - 1]
    last_c[4:] = v_coef[-1]
    last_k[4:] = v_const[-1]
    for i in range(1, N + 1):
        row = 4 + i
        for l in range(1, 5):
            hv_c[row] += -coeffs.c[l - 1] * hv_c[row - l] + coeffs.b[l - 1] * last_c[row - l]
            hv_k[row] += -coeffs.c[l - 1] * hv_k[row - l] + coeffs.b[l - 1] * last_k[row - l]
    return {
        "nx": nx,
        "v": (v_coef, v_const),
        "p": (p_coef, p_const),
        "hv": (hv_c, hv_k),
        "last": (last_c, last_k),
    }


def _linearize(maps, x_lin: np.ndarray, gp, N: int) -> Linearization:
    hv_c, hv_k = maps["hv"]
    last_c, last_k = maps["last"]
    # arguments for step i are the velocities at i-1, rows 3..N+2
    vh = hv_c[3 : 3 + N] @ x_lin + hv_k[3 : 3 + N]
    va = last_c[3 : 3 + N] @ x_lin + last_k[3 : 3 + N]
    args = np.column_stack([vh, va])
    if gp is None:
        zeros = np.zeros(N)
        return Linearization(zeros, zeros.copy(), np.zeros((N, 2)), args)
    mean, var = gp.predict_many(args)
    jac = gp.mean_jacobian(args)
    return Linearization(mean, var, jac, args)


def build_qp_subproblem(
    x_lin: np.ndarray,
    config: MpcConfig,
    state: PlatoonState,
    v_ref: float,
    coeffs: ArxCoefficients,
    gp=None,
    maps=None,
) -> QpSubproblem:
    """Convex QP around the trajectory produced by decision vector ``x_lin``.

    The GP mean enters the HV position recursion through its first-order
    expansion; the GP variance is frozen at the linearization point.
    """
    N, T, na = config.horizon, config.dt, state.n_av
    if maps is None:
        maps = _affine_maps(config, state, coeffs)
    nx = maps["nx"]
    x_lin = np.asarray(x_lin, dtype=float)
    if x_lin.shape != (nx,):
        raise MpcInputError(f"linearization vector must have length {nx}, got {x_lin.shape}")
    use_gp = config.variant == "gp"
    lin = _linearize(maps, x_lin, gp if use_gp else None, N)

    v_coef, v_const = maps["v"]
    p_coef, p_const = maps["p"]
    hv_c, hv_k = maps["hv"]
    last_c, last_k = maps["last"]

    # HV position mean and variance, steps 0..N
    mu_c = np.zeros((N + 1, nx))
    mu_k = np.zeros(N + 1)
    mu_k[0] = state.hv_position
    var = np.zeros(N + 1)
    for i in range(N):
        arg_c = np.vstack([hv_c[3 + i], last_c[3 + i]])
        arg_k = np.array([hv_k[3 + i], last_k[3 + i]])
        if i == 0:
            # the measured v_hv at step 0 already contains the discrepancy
            d_c, d_k = np.zeros(nx), 0.0
        else:
            d_c = lin.jacobian[i] @ arg_c
            d_k = lin.gp_mean[i] + lin.jacobian[i] @ (arg_k - lin.args[i])
        mu_c[i + 1] = mu_c[i] + T * hv_c[4 + i] + T * d_c
        mu_k[i + 1] = mu_k[i] + T * hv_k[4 + i] + T * d_k
        var[i + 1] = var[i] + T * T * lin.gp_var[i]
    z = config.policy.quantile
    delta = config.policy.delta
    bounds = delta + (z * np.sqrt(var) if use_gp else np.zeros(N + 1))

    # cost as weighted least squares: sum w * (C x + d)^2
    res_c, res_d, res_w = [], [], []
    res_c.append(v_coef[0])
    res_d.append(v_const[0] - v_ref)
    res_w.append(np.full(N + 1, config.q1))
    for n in range(1, na):
        res_c.append(v_coef[n] - v_coef[n - 1])
        res_d.append(v_const[n] - v_const[n - 1])
        res_w.append(np.full(N + 1, config.q2))
    eye = np.eye(nx)
    res_c.append(eye[: na * N])
    res_d.append(np.zeros(na * N))
    res_w.append(np.full(na * N, config.r))
    res_c.append(eye[na * N :])
    res_d.append(np.zeros(1))
    res_w.append(np.array([SLACK_WEIGHT]))
    C = np.vstack(res_c)
    d = np.concatenate(res_d)
    w = np.concatenate(res_w)
    P = 2.0 * C.T @ (w[:, None] * C)
    q = 2.0 * C.T @ (w * d)
    q[-1] += SLACK_LINEAR_WEIGHT
    cost_const = float(d @ (w * d))

    rows, lo, hi, labels = [], [], [], []
    s_col = np.zeros(nx)
    s_col[-1] = 1.0
    for n in range(1, na):
        for i in range(1, N + 1):
            rows.append(p_coef[n - 1][i] - p_coef[n][i] + s_col)
            lo.append(delta - (p_const[n - 1][i] - p_const[n][i]))
            hi.append(math.inf)
            labels.append(f"gap_av[{n},{n + 1}]@{i}")
    for i in range(1, N + 1):
        rows.append(p_coef[-1][i] - mu_c[i] + s_col)
        lo.append(bounds[i] - (p_const[-1][i] - mu_k[i]))
        hi.append(math.inf)
        labels.append(f"gap_hv@{i}")
    for n in range(na):
        for i in range(1, N + 1):
            rows.append(v_coef[n][i])
            lo.append(config.v_min - v_const[n][i])
            hi.append(config.v_max - v_const[n][i])
            labels.append(f"v[{n + 1}]@{i}")
    for j in range(na * N):
        rows.append(eye[j])
        lo.append(config.a_min)
        hi.append(config.a_max)
        labels.append(f"a[{j // N + 1}]@{j % N}")
    rows.append(s_col)
    lo.append(0.0)
    hi.append(math.inf)
    labels.append("slack")

    qp = QuadraticProgram(P, q, np.array(rows), np.array(lo), np.array(hi))
    maps = dict(maps, mu=(mu_c, mu_k))
    return QpSubproblem(qp, labels, cost_const, maps, lin, bounds, var)


def _check_state(state: PlatoonState, v_ref: float):
    values = [v_ref, state.hv_position, state.hv_velocity]
    values += [x for av in state.avs for x in (av.position, av.velocity)]
    values += list(state.history.hv + state.history.av)
    if not all(math.isfinite(v) for v in values):
        raise MpcInputError("non-finite platoon state or reference")


class MpcController:
    """Receding-horizon solver; keeps the previous solution for warm starts."""

    def __init__(self, config: MpcConfig, coeffs: ArxCoefficients, gp=None):
        if config.variant == "gp" and gp is None:
            raise MpcInputError("variant 'gp' requires a GP model")
        if config.variant == "nominal" and gp is not None:
            raise MpcInputError("variant 'nominal' takes no GP model")
        self.config = config
        self.coeffs = coeffs
        self.gp = gp
        self._previous: np.ndarray | None = None

    def reset(self):
        self._previous = None

    def solve(self, state: PlatoonState, v_ref: float) -> MpcSolution:
        _check_state(state, v_ref)
        cfg = self.config
        N, na = cfg.horizon, state.n_av
        # the belief is re-seeded from the measurement on every call
        state = state.with_measurement()
        maps = _affine_maps(cfg, state, self.coeffs)
        nx = maps["nx"]
        x_lin = np.zeros(nx)
        if self._previous is not None and self._previous.shape == (na, N):
            shifted = np.hstack([self._previous[:, 1:], self._previous[:, -1:]])
            x_lin[: na * N] = shifted.ravel()

        qp_iters = 0
        change = math.inf
        converged = False
        n_outer = 1 if cfg.variant == "nominal" else cfg.sqp_max_iter
        for outer in range(1, n_outer + 1):
            sub = build_qp_subproblem(x_lin, cfg, state, v_ref, self.coeffs, self.gp, maps)
            res = solve_qp(sub.qp, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)
            qp_iters += res.iterations
            if res.status == "primal-infeasible":
                hit = [lab for lab, yv in zip(sub.labels, res.y) if abs(yv) > 1e-9]
                raise MpcInfeasibleError("hard constraints infeasible", hit)
            x_new = res.x
            change = float(np.max(np.abs(x_new[: na * N] - x_lin[: na * N])))
            x_lin = x_new
            if cfg.variant == "nominal" or change < cfg.sqp_tol:
                converged = True
                break

        accel = np.clip(x_lin[: na * N].reshape(na, N), cfg.a_min, cfg.a_max)
        self._previous = accel.copy()
        slack = max(float(x_lin[-1]), 0.0)
        status = "optimal" if res.status == "optimal" else "max-iter"
        if slack > SLACK_TOL:
            status = "infeasible-relaxed"
        predicted = _predict(sub, x_lin, na, N)
        cost = float(sub.qp.objective(x_lin) + sub.cost_const)
        return MpcSolution(
            accelerations=accel,
            predicted=predicted,
            cost=cost,
            iterations=outer,
            status=status,
            slack=slack,
            qp_iterations=qp_iters,
            converged=converged,
            trajectory_change=change,
            prim_res=res.prim_res,
            dual_res=res.dual_res,
        )


def _predict(sub: QpSubproblem, x: np.ndarray, na: int, N: int) -> dict:
    maps = sub.maps
    v_coef, v_const = maps["v"]
    p_coef, p_const = maps["p"]
    hv_c, hv_k = maps["hv"]
    mu_c, mu_k = maps["mu"]
    return {
        "av_velocity": np.array([v_coef[n] @ x + v_const[n] for n in range(na)]),
        "av_position": np.array([p_coef[n] @ x + p_const[n] for n in range(na)]),
        "hv_velocity": hv_c[4:] @ x + hv_k[4:],
        "hv_mean": mu_c @ x + mu_k,
        "hv_variance": sub.hv_var.copy(),
        "hv_bound": sub.bounds.copy(),
        "gp_variance": sub.lin.gp_var.copy(),
        "gp_mean": sub.lin.gp_mean.copy(),
    }


def solve(
    config: MpcConfig,
    platoon: PlatoonState,
    v_ref: float,
    coeffs: ArxCoefficients,
    gp=None,
) -> MpcSolution:
    """One-shot solve from a constant-velocity (zero acceleration) initial guess."""
    return MpcController(config, coeffs, gp).solve(platoon, v_ref)
