"""Variance-adaptive safe distance between the last AV and the trailing HV."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ProbabilityError(ValueError):
    pass


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def inverse_normal_cdf_bisect(p: float, tol: float = 1e-12) -> float:
    """Quantile by bisection on erfc; slow reference used to validate the fast path."""
    if not 0.0 < p < 1.0:
        raise ProbabilityError(f"probability must lie in (0, 1), got {p}")
    if p > 0.5:
        # survival side keeps precision as p approaches 1
        return -inverse_normal_cdf_bisect(1.0 - p, tol)
    lo, hi = -40.0, 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Acklam's rational approximation, relative error ~1e-9 before refinement
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile: rational approximation plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise ProbabilityError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -inverse_normal_cdf(1.0 - p)
    x = _acklam(p)
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@dataclass(frozen=True)
class DistancePolicy:
    delta: float = 20.0
    p_def: float = 0.95
    quantile: float = field(init=False)

    def __post_init__(self):
        if not 0.5 < self.p_def < 1.0:
            raise ProbabilityError(f"p_def must lie in (0.5, 1), got {self.p_def}")
        object.__setattr__(self, "quantile", inverse_normal_cdf(self.p_def))


def tightened_min_distance(policy: DistancePolicy, hv_position_variance: float) -> float:
    if hv_position_variance < 0:
        raise ValueError(f"variance must be nonnegative, got {hv_position_variance}")
    return policy.delta + policy.quantile * math.sqrt(hv_position_variance)


def halfspace_form(policy: DistancePolicy, variance: float) -> tuple[tuple[float, float], float]:
    """Half-space ``h @ (p_av, p_hv) <= b`` with the tightened right-hand side.

    The position covariance is diag(0, variance): the AV position is exact.
    """
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    h = (-1.0, 1.0)
    sigma = ((0.0, 0.0), (0.0, variance))
    hsh = sum(h[i] * sigma[i][j] * h[j] for i in range(2) for j in range(2))
    return h, -policy.delta - policy.quantile * math.sqrt(hsh)
