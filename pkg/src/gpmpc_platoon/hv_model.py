"""Human-driven vehicle velocity model: ARX nominal part plus GP correction.

Sign convention: v_k = -sum(c_i v^H_{k-i}) + sum(b_i v^A_{k-i}), i = 1..4,
where v^A is the velocity of the last AV (the vehicle the HV follows).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .gp_regression import Dataset


class HvInputError(ValueError):
    pass


@dataclass(frozen=True)
class ArxCoefficients:
    c: tuple[float, float, float, float]
    b: tuple[float, float, float, float]
    sample_time: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.c) != 4 or len(self.b) != 4:
            raise HvInputError("ARX model needs exactly four c and four b coefficients")
        if abs(1.0 + sum(self.c)) < 1e-15:
            raise HvInputError("1 + sum(c) is zero; DC gain undefined")

    @property
    def dc_gain(self) -> float:
        return sum(self.b) / (1.0 + sum(self.c))


DEFAULT_ARX = ArxCoefficients(
    c=(-3.0227, 3.3543, -1.6329, 0.3014),
    b=(0.0063, -0.0303, 0.0495, -0.0254),
    sample_time=0.1,
)

# continuous driver model the ARX coefficients were discretized from:
# K (1 + Tz s) / (1 + 2 gamma Tw s + Tw^2 s^2) * exp(-Td s)
DEFAULT_TRANSFER_FUNCTION = {"gain": 1.0, "t_zero": 6.96, "gamma": 0.65, "t_w": 4.76, "t_delay": 0.512}


def discretize_transfer_function(
    gain: float, t_zero: float, gamma: float, t_w: float, t_delay: float, sample_time: float = 0.1
) -> ArxCoefficients:
    """ZOH discretization with a second-order Pade approximation of the delay."""
    from scipy.signal import cont2discrete

    pade_num = [t_delay**2 / 12.0, -t_delay / 2.0, 1.0]
    pade_den = [t_delay**2 / 12.0, t_delay / 2.0, 1.0]
    num = gain * np.polymul([t_zero, 1.0], pade_num)
    den = np.polymul([t_w**2, 2.0 * gamma * t_w, 1.0], pade_den)
    num_d, den_d, _ = cont2discrete((num, den), sample_time, method="zoh")
    num_d = np.ravel(num_d) / den_d[0]
    den_d = np.asarray(den_d) / den_d[0]
    return ArxCoefficients(c=tuple(den_d[1:5]), b=tuple(num_d[1:5]), sample_time=sample_time)


@dataclass(frozen=True)
class VelocityHistory:
    """Last four HV and lead-AV velocities, newest first."""

    hv: tuple[float, float, float, float]
    av: tuple[float, float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "hv", tuple(float(v) for v in self.hv))
        object.__setattr__(self, "av", tuple(float(v) for v in self.av))
        if len(self.hv) != 4 or len(self.av) != 4:
            raise HvInputError("velocity history buffers must hold exactly 4 entries")
        if not all(math.isfinite(v) for v in self.hv + self.av):
            raise HvInputError("velocity history contains non-finite entries")

    def push(self, v_hv: float, v_av: float) -> "VelocityHistory":
        return VelocityHistory((v_hv,) + self.hv[:3], (v_av,) + self.av[:3])

    @classmethod
    def constant(cls, v_hv: float, v_av: float | None = None) -> "VelocityHistory":
        return cls((v_hv,) * 4, ((v_hv if v_av is None else v_av),) * 4)


def arx_step(coeffs: ArxCoefficients, hist: VelocityHistory) -> float:
    out = 0.0
    for ci, bi, vh, va in zip(coeffs.c, coeffs.b, hist.hv, hist.av):
        out += -ci * vh + bi * va
    return out


def corrected_step(coeffs: ArxCoefficients, gp, hist: VelocityHistory) -> tuple[float, float]:
    """ARX prediction corrected by the GP evaluated at the newest lags."""
    if gp.dim != 2:
        raise HvInputError(f"GP must take 2 inputs, got {gp.dim}")
    mean, var = gp.predict_many(np.array([[hist.hv[0], hist.av[0]]]))
    return arx_step(coeffs, hist) + float(mean[0]), float(var[0])


def _lags(series: np.ndarray, j: int) -> tuple[float, float, float, float]:
    return tuple(float(series[j - i]) for i in range(1, 5))


def build_discrepancy_dataset(truth_log, coeffs: ArxCoefficients, stride: int = 1) -> Dataset:
    """Pairs (v^H_{j-1}, v^A_{j-1}) -> measured v^H_j minus the ARX prediction.

    ``truth_log`` is a sequence of (v_hv, v_av) measurements. Transitions
    j = 5 .. len-1 are used, and every ``stride``-th of them is kept.
    """
    log = np.asarray(truth_log, dtype=float)
    if log.ndim != 2 or log.shape[1] != 2:
        raise HvInputError("truth log must be a sequence of (v_hv, v_av) pairs")
    if log.shape[0] < 6:
        raise HvInputError(f"truth log needs at least 6 entries, got {log.shape[0]}")
    if stride < 1:
        raise HvInputError("stride must be >= 1")
    v_hv, v_av = log[:, 0], log[:, 1]
    inputs, targets = [], []
    for j in range(5, log.shape[0], stride):
        hist = VelocityHistory(_lags(v_hv, j), _lags(v_av, j))
        inputs.append((v_hv[j - 1], v_av[j - 1]))
        targets.append(v_hv[j] - arx_step(coeffs, hist))
    return Dataset(np.array(inputs), np.array(targets))


def merge_datasets(datasets, max_points: int | None = None) -> Dataset:
    """Concatenate datasets, then thin evenly to at most ``max_points`` rows."""
    inputs = np.vstack([d.inputs for d in datasets])
    targets = np.concatenate([d.targets for d in datasets])
    if max_points is not None and targets.shape[0] > max_points:
        idx = np.unique(np.linspace(0, targets.shape[0] - 1, max_points).round().astype(int))
        inputs, targets = inputs[idx], targets[idx]
    return Dataset(inputs, targets)


# -- rollouts ---------------------------------------------------------------


def _rollout(coeffs, av_trace, v0, correction=None):
    av = np.asarray(av_trace, dtype=float)
    out = np.empty(av.shape[0])
    hist = VelocityHistory.constant(v0, float(av[0]) if av.shape[0] else v0)
    v = float(v0)
    for k in range(av.shape[0]):
        if k > 0:
            nxt = arx_step(coeffs, hist)
            if correction is not None:
                nxt += correction(hist)
            v = nxt
        out[k] = v
        hist = hist.push(v, float(av[k]))
    return out


def arx_rollout(coeffs: ArxCoefficients, av_trace, v0: float | None = None) -> np.ndarray:
    """Free-run ARX simulation driven by ``av_trace``; pre-history held at rest values."""
    av = np.asarray(av_trace, dtype=float)
    return _rollout(coeffs, av, float(av[0]) if v0 is None else v0)


def arx_gp_rollout(coeffs: ArxCoefficients, gp, av_trace, v0: float | None = None) -> np.ndarray:
    """Free-run ARX+GP simulation using the GP posterior mean correction."""
    av = np.asarray(av_trace, dtype=float)

    def correction(hist):
        mean, _ = gp.predict_many(np.array([[hist.hv[0], hist.av[0]]]))
        return float(mean[0])

    return _rollout(coeffs, av, float(av[0]) if v0 is None else v0, correction)


def one_step_predictions(coeffs: ArxCoefficients, truth_log, gp=None) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead predictions from measured lags, j = 5 .. len-1.

    Returns (predictions, measured values at the same steps).
    """
    log = np.asarray(truth_log, dtype=float)
    v_hv, v_av = log[:, 0], log[:, 1]
    preds = []
    for j in range(5, log.shape[0]):
        hist = VelocityHistory(_lags(v_hv, j), _lags(v_av, j))
        preds.append(arx_step(coeffs, hist) if gp is None else corrected_step(coeffs, gp, hist)[0])
    return np.array(preds), v_hv[5:].copy()


@dataclass(frozen=True)
class TruthHvSpec:
    """Synthetic ground-truth HV.

    Each step adds a saturated catch-up reaction
    ``clip(reaction_gain * (v_av - v_hv), -saturation[0], saturation[1])`` to
    the ARX recursion (lag-1 velocities), then Gaussian measurement noise is
    added to the output. The reaction vanishes when the HV matches the lead
    velocity, so the ARX steady state is preserved.
    """

    base: ArxCoefficients = DEFAULT_ARX
    reaction_gain: float = 0.003
    saturation: tuple[float, float] = (0.02, 0.02)
    speed_deficit: float = 0.001
    noise_std: float = 0.0005
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "saturation", tuple(float(v) for v in self.saturation))
        if self.noise_std < 0:
            raise HvInputError("noise_std must be nonnegative")
        if self.reaction_gain < 0:
            raise HvInputError("reaction_gain must be nonnegative")
        if len(self.saturation) != 2 or any(not s > 0 for s in self.saturation):
            raise HvInputError(f"saturation limits must be positive, got {self.saturation}")

    def reaction(self, v_hv: float, v_av: float) -> float:
        r = self.reaction_gain * (v_av - v_hv)
        return min(max(r, -self.saturation[0]), self.saturation[1]) - self.speed_deficit


def simulate_truth_hv(spec: TruthHvSpec, av_velocity_trace, v0: float | None = None) -> np.ndarray:
    """Perturbed ARX rollout plus measurement noise; deterministic given the seed."""
    av = np.asarray(av_velocity_trace, dtype=float)
    if av.shape[0] < 1:
        raise HvInputError("av velocity trace must not be empty")

    def correction(hist):
        return spec.reaction(hist.hv[0], hist.av[0])

    clean = _rollout(spec.base, av, float(av[0]) if v0 is None else v0, correction)
    rng = np.random.default_rng(spec.seed)
    return clean + spec.noise_std * rng.standard_normal(av.shape[0])


def synthetic_av_trace(
    duration: float,
    dt: float,
    seed: int,
    levels=(10.0, 15.0, 20.0),
    hold=(8.0, 25.0),
    accel_limit: float = 2.5,
    decel_limit: float = 5.0,
    time_constant: float = 1.0,
) -> np.ndarray:
    """Lead-AV velocity trace: random piecewise-constant targets tracked with
    a first-order lag under acceleration limits, starting from rest."""
    rng = np.random.default_rng(seed)
    n = int(round(duration / dt))
    out = np.empty(n)
    v, target, t_next = 0.0, float(rng.choice(levels)), 0.0
    for k in range(n):
        t = k * dt
        if t >= t_next:
            target = float(rng.choice(levels))
            t_next = t + rng.uniform(*hold)
        a = min(max((target - v) / time_constant, -decel_limit), accel_limit)
        out[k] = v
        v += dt * a
    return out


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if p.shape != a.shape:
        raise HvInputError(f"length mismatch: {p.shape[0]} vs {a.shape[0]}")
    if p.shape[0] < 1:
        raise HvInputError("rmse needs at least one element")
    return float(math.sqrt(np.mean((p - a) ** 2)))


# -- CSV --------------------------------------------------------------------

TRUTH_COLUMNS = ("time_s", "v_hv_mps", "v_av_mps")


def write_truth_log(path, times, v_hv, v_av) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for row in zip(times, v_hv, v_av):
            w.writerow([format(float(v), ".17g") for v in row])


def read_truth_log(path) -> np.ndarray:
    """Rows of (time_s, v_hv_mps, v_av_mps)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRUTH_COLUMNS:
            raise HvInputError(f"{path}: expected header {','.join(TRUTH_COLUMNS)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows).reshape(-1, 3)
