"""AV kinematics and HV position belief propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .hv_model import VelocityHistory


@dataclass(frozen=True)
class VehicleState:
    position: float
    velocity: float

    def __post_init__(self):
        if not (math.isfinite(self.position) and math.isfinite(self.velocity)):
            raise ValueError(f"non-finite vehicle state {self}")


def av_step(state: VehicleState, accel: float, dt: float) -> VehicleState:
    # position advances with the pre-update velocity
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return VehicleState(state.position + dt * state.velocity, state.velocity + dt * accel)


def propagate_hv_mean(mean: float, hv_velocity: float, gp_mean: float, dt: float) -> float:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return mean + dt * hv_velocity + dt * gp_mean


def propagate_hv_variance(variance: float, gp_variance: float, dt: float) -> float:
    """Position variance update; the position/velocity covariance is neglected on purpose."""
    if variance < 0 or gp_variance < 0:
        raise ValueError("variances must be nonnegative")
    return variance + dt * dt * gp_variance


@dataclass(frozen=True)
class PlatoonState:
    """Measured platoon state at one time step.

    ``history`` holds the lagged (k-1 .. k-4) velocities of the HV and of the
    last AV; current velocities live in ``avs[-1]`` and ``hv_velocity``.
    """

    avs: tuple[VehicleState, ...]
    hv_position: float
    hv_velocity: float
    history: VelocityHistory
    hv_position_mean: float | None = None
    hv_position_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "avs", tuple(self.avs))
        if len(self.avs) < 1:
            raise ValueError("platoon needs at least one AV")
        if self.hv_position_mean is None:
            object.__setattr__(self, "hv_position_mean", self.hv_position)
        if self.hv_position_variance < 0:
            raise ValueError("hv_position_variance must be nonnegative")
        values = [self.hv_position, self.hv_velocity, self.hv_position_mean]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("non-finite HV state")

    @property
    def n_av(self) -> int:
        return len(self.avs)

    def gaps(self) -> list[float]:
        """Front-minus-rear gaps: AV pairs first, then last AV to HV."""
        out = [self.avs[i - 1].position - self.avs[i].position for i in range(1, self.n_av)]
        out.append(self.avs[-1].position - self.hv_position)
        return out

    def with_measurement(self) -> "PlatoonState":
        """Belief reset to the measured HV position with zero variance."""
        return replace(self, hv_position_mean=self.hv_position, hv_position_variance=0.0)


def initial_platoon(n_av: int, gap: float, velocity: float = 0.0) -> PlatoonState:
    """Leader at 0, each following vehicle ``gap`` metres behind, all at ``velocity``."""
    if n_av < 1:
        raise ValueError("n_av must be >= 1")
    avs = tuple(VehicleState(-i * gap, velocity) for i in range(n_av))
    hist = VelocityHistory((velocity,) * 4, (velocity,) * 4)
    return PlatoonState(avs, -n_av * gap, velocity, hist)
