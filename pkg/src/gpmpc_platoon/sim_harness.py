"""Closed-loop simulation of the mixed platoon, metrics and CSV/JSON output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .hv_model import ArxCoefficients, arx_step, corrected_step
from .mpc_controller import MpcConfig, MpcController, MpcInfeasibleError
from .platoon_dynamics import PlatoonState, av_step, initial_platoon


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float = 30.0
    reference_schedule: tuple[tuple[float, float], ...] = ((0.0, 20.0),)
    initial_gap: float = 20.0
    n_av: int = 2
    seed: int = 0

    def __post_init__(self):
        sched = tuple((float(t), float(v)) for t, v in self.reference_schedule)
        object.__setattr__(self, "reference_schedule", sched)
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.n_av < 2:
            raise ValueError("n_av must be >= 2")
        if not sched or any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise ValueError("reference schedule must be non-empty and ordered by start time")

    def v_ref(self, t: float) -> float:
        value = self.reference_schedule[0][1]
        for start, v in self.reference_schedule:
            if t + 1e-9 >= start:
                value = v
        return value

    def n_steps(self, dt: float) -> int:
        return max(1, int(round(self.duration / dt)))


def constant_scenario(**kw) -> Scenario:
    return Scenario(name="constant", **kw)


def braking_scenario(**kw) -> Scenario:
    kw.setdefault("reference_schedule", ((0.0, 20.0), (15.0, 10.0)))
    return Scenario(name="braking", **kw)


SCENARIOS = {"constant": constant_scenario, "braking": braking_scenario}


def sim_columns(n_av: int) -> list[str]:
    cols = ["time_s", "v_ref_mps"]
    for n in range(1, n_av + 1):
        cols += [f"av{n}_pos_m", f"av{n}_vel_mps", f"av{n}_acc_mps2"]
    cols += [
        "hv_pos_m",
        "hv_vel_mps",
        "hv_mean_next_m",
        "hv_var_next_m2",
        "hv_var_end_m2",
        "bound_next_m",
        "bound_end_m",
        "gp_var_mps2",
    ]
    cols += [f"gap_av{n}_av{n + 1}_m" for n in range(1, n_av)]
    cols += [f"gap_av{n_av}_hv_m", "status", "sqp_iter", "qp_iter", "slack_m", "sqp_converged", "traj_change"]
    return cols


@dataclass
class SimLog:
    scenario: str
    variant: str
    n_av: int
    dt: float
    rows: list[list] = field(default_factory=list)
    failure: str | None = None

    @property
    def columns(self) -> list[str]:
        return sim_columns(self.n_av)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        values = [row[idx] for row in self.rows]
        if name == "status":
            return np.array(values, dtype=object)
        return np.array(values, dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([v if isinstance(v, str) else format(float(v), ".17g") for v in row])
            if self.failure:
                w.writerow([f"# failure: {self.failure}"])

    @classmethod
    def from_csv(cls, path, scenario: str = "", variant: str = "", dt: float = 0.1) -> "SimLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n_av = sum(1 for c in header if c.endswith("_acc_mps2"))
            if header != sim_columns(n_av):
                raise ValueError(f"{path}: unexpected SimLog header")
            log = cls(scenario, variant, n_av, dt)
            status_idx = header.index("status")
            for row in reader:
                if not row:
                    continue
                if row[0].startswith("# failure: "):
                    log.failure = row[0][len("# failure: "):]
                    continue
                log.rows.append([v if i == status_idx else float(v) for i, v in enumerate(row)])
        return log


def run(
    scenario: Scenario,
    config: MpcConfig,
    coeffs: ArxCoefficients,
    gp_controller=None,
    gp_truth=None,
    sample_truth: bool = False,
) -> SimLog:
    """Simulate the closed loop; the truth HV is ARX plus the GP posterior mean
    of ``gp_truth`` (plain ARX when it is None)."""
    dt = config.dt
    controller = MpcController(config, coeffs, gp_controller if config.variant == "gp" else None)
    rng = np.random.default_rng(scenario.seed)
    state = initial_platoon(scenario.n_av, scenario.initial_gap)
    log = SimLog(scenario.name, config.variant, scenario.n_av, dt)
    for k in range(scenario.n_steps(dt)):
        t = k * dt
        v_ref = scenario.v_ref(t)
        try:
            sol = controller.solve(state, v_ref)
        except MpcInfeasibleError as exc:
            log.failure = f"t={t:.1f}s {exc}"
            break
        accel = sol.first
        pred = sol.predicted
        row = [t, v_ref]
        for av, a in zip(state.avs, accel):
            row += [av.position, av.velocity, float(a)]
        row += [
            state.hv_position,
            state.hv_velocity,
            float(pred["hv_mean"][1]),
            float(pred["hv_variance"][1]),
            float(pred["hv_variance"][-1]),
            float(pred["hv_bound"][1]),
            float(pred["hv_bound"][-1]),
            float(pred["gp_variance"][0]),
        ]
        row += state.gaps()
        row += [
            sol.status,
            sol.iterations,
            sol.qp_iterations,
            sol.slack,
            1.0 if sol.converged else 0.0,
            sol.trajectory_change if math.isfinite(sol.trajectory_change) else -1.0,
        ]
        log.rows.append(row)

        avs = tuple(av_step(av, float(a), dt) for av, a in zip(state.avs, accel))
        hist = state.history.push(state.hv_velocity, state.avs[-1].velocity)
        if gp_truth is None:
            v_next = arx_step(coeffs, hist)
        else:
            mean, var = corrected_step(coeffs, gp_truth, hist)
            v_next = mean + (math.sqrt(var) * rng.standard_normal() if sample_truth else 0.0)
        state = PlatoonState(avs, state.hv_position + dt * state.hv_velocity, v_next, hist)
    return log


# -- metrics ----------------------------------------------------------------


@dataclass
class Metrics:
    total_cost: float
    min_av_av_gap: float
    min_av_hv_gap: float
    tracking_rmse: float
    constraint_violations: int
    mean_gp_variance: float = 0.0
    max_slack: float = 0.0
    steps: int = 0

    @property
    def min_distance(self) -> float:
        return min(self.min_av_av_gap, self.min_av_hv_gap)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else format(float(v), ".17g")


def compute_metrics(log: SimLog, config: MpcConfig, gap_tol: float = 1e-6) -> Metrics:
    """Closed-loop cost summed over logged steps (inputs over all but the last)."""
    na = log.n_av
    if len(log) == 0:
        return Metrics(0.0, math.inf, math.inf, 0.0, 0)
    v = np.array([log.column(f"av{n}_vel_mps") for n in range(1, na + 1)])
    a = np.array([log.column(f"av{n}_acc_mps2") for n in range(1, na + 1)])
    v_ref = log.column("v_ref_mps")
    state_cost = config.q1 * (v[0] - v_ref) ** 2
    for n in range(1, na):
        state_cost = state_cost + config.q2 * (v[n] - v[n - 1]) ** 2
    input_cost = config.r * np.sum(a[:, :-1] ** 2)
    total = float(np.sum(state_cost) + input_cost)

    av_gaps = np.array([log.column(f"gap_av{n}_av{n + 1}_m") for n in range(1, na)])
    hv_gap = log.column(f"gap_av{na}_hv_m")
    delta = config.policy.delta
    violations = int(np.sum(av_gaps < delta - gap_tol) + np.sum(hv_gap < delta - gap_tol))
    return Metrics(
        total_cost=total,
        min_av_av_gap=float(av_gaps.min()),
        min_av_hv_gap=float(hv_gap.min()),
        tracking_rmse=float(math.sqrt(np.mean((v[0] - v_ref) ** 2))),
        constraint_violations=violations,
        mean_gp_variance=float(np.mean(log.column("gp_var_mps2"))),
        max_slack=float(np.max(log.column("slack_m"))),
        steps=len(log),
    )


@dataclass
class Comparison:
    scenario: str
    nominal: Metrics
    gp: Metrics
    nominal_log: SimLog
    gp_log: SimLog

    def deltas(self) -> dict:
        return {
            "cost_change": self.gp.total_cost - self.nominal.total_cost,
            "cost_change_pct": 100.0 * (self.gp.total_cost - self.nominal.total_cost) / self.nominal.total_cost
            if self.nominal.total_cost else 0.0,
            "min_av_hv_gap_change": self.gp.min_av_hv_gap - self.nominal.min_av_hv_gap,
            "min_distance_change": self.gp.min_distance - self.nominal.min_distance,
        }


def compare(
    scenario: Scenario,
    config: MpcConfig,
    coeffs: ArxCoefficients,
    gp_truth=None,
    gp_controller=None,
) -> Comparison:
    """Run nominal and GP-MPC on the same truth HV and seeds."""
    if gp_controller is None:
        gp_controller = gp_truth
    nom_cfg = replace(config, variant="nominal")
    gp_cfg = replace(config, variant="gp")
    nom_log = run(scenario, nom_cfg, coeffs, None, gp_truth)
    gp_log = run(scenario, gp_cfg, coeffs, gp_controller, gp_truth)
    return Comparison(
        scenario.name,
        compute_metrics(nom_log, nom_cfg),
        compute_metrics(gp_log, gp_cfg),
        nom_log,
        gp_log,
    )


def table_text(comparisons: list[Comparison]) -> str:
    """Cost / min-distance table, one column pair per scenario."""
    head = "controller"
    for c in comparisons:
        head += f" | {c.scenario} cost | {c.scenario} min distance (m)"
    lines = [head]
    for label, attr in (("nominal MPC", "nominal"), ("GP-MPC", "gp")):
        line = label
        for c in comparisons:
            m = getattr(c, attr)
            line += f" | {m.total_cost:.2f} | {m.min_distance:.4f}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def comparison_json(comparisons: list[Comparison]) -> str:
    out = {
        c.scenario: {"nominal": asdict(c.nominal), "gp": asdict(c.gp), "deltas": c.deltas()}
        for c in comparisons
    }
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
