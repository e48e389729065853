"""Exact single-output GP regression with a squared-exponential kernel.

Hyperparameters are fitted by maximizing the log marginal likelihood over
log-parameters (signal variance, one length scale per input, noise variance)
with analytic gradients and seeded multi-start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

FORMAT_VERSION = 1
NOISE_FLOOR = 1e-8
JITTER_START = 1e-10
JITTER_MAX = 1e-4
_LOG_BOUNDS = (math.log(1e-6), math.log(1e6))


class GpInputError(ValueError):
    pass


class GpFitError(RuntimeError):
    pass


class GpNumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Kernel:
    signal_variance: float
    length_scales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(v) for v in self.length_scales))
        if not self.signal_variance > 0:
            raise GpInputError(f"signal_variance must be positive, got {self.signal_variance}")
        if not self.length_scales or any(not ls > 0 for ls in self.length_scales):
            raise GpInputError(f"length_scales must be positive, got {self.length_scales}")

    @property
    def dim(self) -> int:
        return len(self.length_scales)

    def matrix(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Covariance matrix between the rows of ``x`` (n, d) and ``y`` (m, d)."""
        ls = np.asarray(self.length_scales)
        xs = np.atleast_2d(x) / ls
        ys = np.atleast_2d(y) / ls
        sq = (
            np.sum(xs**2, axis=1)[:, None]
            + np.sum(ys**2, axis=1)[None, :]
            - 2.0 * xs @ ys.T
        )
        np.maximum(sq, 0.0, out=sq)
        return self.signal_variance * np.exp(-0.5 * sq)


def kernel_eval(kernel: Kernel, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != (kernel.dim,) or y.shape != (kernel.dim,):
        raise GpInputError(
            f"expected points of dimension {kernel.dim}, got {x.shape[0]} and {y.shape[0]}"
        )
    r = (x - y) / np.asarray(kernel.length_scales)
    return float(kernel.signal_variance * math.exp(-0.5 * float(r @ r)))


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.asarray(self.targets, dtype=float).ravel()
        if inputs.shape[0] != targets.shape[0]:
            raise GpInputError(
                f"inputs have {inputs.shape[0]} rows but targets have {targets.shape[0]}"
            )
        if targets.shape[0] < 1:
            raise GpInputError("dataset must contain at least one point")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise GpInputError("dataset contains non-finite entries")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _factorize(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky with escalating diagonal jitter; returns (lower factor, jitter)."""
    jitter = JITTER_START
    eye = np.eye(cov.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(cov + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GpNumericalError(
        f"covariance not positive definite even with jitter {JITTER_MAX:g}"
    )


@dataclass(frozen=True)
class GpModel:
    kernel: Kernel
    noise_variance: float
    dataset: Dataset
    factor: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = JITTER_START

    @classmethod
    def build(cls, kernel: Kernel, noise_variance: float, dataset: Dataset) -> "GpModel":
        if noise_variance < 0:
            raise GpInputError(f"noise_variance must be nonnegative, got {noise_variance}")
        if dataset.dim != kernel.dim:
            raise GpInputError(
                f"dataset inputs have dimension {dataset.dim}, kernel expects {kernel.dim}"
            )
        x = dataset.inputs
        cov = kernel.matrix(x, x) + noise_variance * np.eye(len(dataset))
        factor, jitter = _factorize(cov)
        alpha = cho_solve((factor, True), dataset.targets)
        factor.setflags(write=False)
        alpha.setflags(write=False)
        return cls(kernel, float(noise_variance), dataset, factor, alpha, jitter)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def _check_queries(self, queries) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.dim:
            raise GpInputError(f"query dimension {q.shape[1]} != model dimension {self.dim}")
        if not np.all(np.isfinite(q)):
            raise GpInputError("query contains non-finite entries")
        return q

    def predict_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance at each row of ``queries``."""
        q = self._check_queries(queries)
        k_qa = self.kernel.matrix(q, self.dataset.inputs)
        mean = k_qa @ self.alpha
        v = solve_triangular(self.factor, k_qa.T, lower=True)
        var = self.kernel.signal_variance - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def mean_jacobian(self, queries) -> np.ndarray:
        """Gradient of the posterior mean w.r.t. the query, one row per query."""
        q = self._check_queries(queries)
        x = self.dataset.inputs
        ls2 = np.asarray(self.kernel.length_scales) ** 2
        k_qa = self.kernel.matrix(q, x)
        diff = (q[:, None, :] - x[None, :, :]) / ls2
        return -np.einsum("ij,ijd,j->id", k_qa, diff, self.alpha)


def predict(model: GpModel, query) -> tuple[float, float]:
    mean, var = model.predict_many(np.asarray(query, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


class ZeroProcess:
    """Stand-in GP whose posterior mean and variance are identically zero."""

    def __init__(self, dim: int = 2):
        self.dim = dim

    def predict_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.dim:
            raise GpInputError(f"query dimension {q.shape[1]} != model dimension {self.dim}")
        return np.zeros(q.shape[0]), np.zeros(q.shape[0])

    def mean_jacobian(self, queries) -> np.ndarray:
        return np.zeros_like(np.atleast_2d(np.asarray(queries, dtype=float)))


# -- marginal likelihood ----------------------------------------------------


def _unpack(theta: np.ndarray, dim: int, noise: float | None):
    sf2 = math.exp(theta[0])
    ls = np.exp(theta[1 : 1 + dim])
    sn2 = math.exp(theta[1 + dim]) if noise is None else noise
    return sf2, ls, sn2


def _lml_and_grad(theta, dataset: Dataset, fixed_noise: float | None):
    """Log marginal likelihood and its gradient in log-parameter space."""
    dim = dataset.dim
    sf2, ls, sn2 = _unpack(theta, dim, fixed_noise)
    x, y = dataset.inputs, dataset.targets
    m = len(dataset)
    diff2 = (x[:, None, :] - x[None, :, :]) ** 2 / ls**2
    kf = sf2 * np.exp(-0.5 * diff2.sum(axis=2))
    factor, jitter = _factorize(kf + sn2 * np.eye(m))
    alpha = cho_solve((factor, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(factor))) - 0.5 * m * math.log(2 * math.pi)
    inner = np.outer(alpha, alpha) - cho_solve((factor, True), np.eye(m))
    grad = np.empty(theta.shape[0])
    grad[0] = 0.5 * np.sum(inner * kf)
    for j in range(dim):
        grad[1 + j] = 0.5 * np.sum(inner * kf * diff2[:, :, j])
    if fixed_noise is None:
        grad[1 + dim] = 0.5 * sn2 * np.trace(inner)
    return float(lml), grad


def log_marginal_likelihood(model: GpModel) -> float:
    y = model.dataset.targets
    m = len(model.dataset)
    return float(
        -0.5 * y @ model.alpha
        - np.sum(np.log(np.diag(model.factor)))
        - 0.5 * m * math.log(2 * math.pi)
    )


def log_marginal_likelihood_grad(model: GpModel) -> np.ndarray:
    """Analytic gradient w.r.t. (log sf2, log l_1..l_d, log noise)."""
    theta = np.r_[
        math.log(model.kernel.signal_variance),
        np.log(model.kernel.length_scales),
        math.log(max(model.noise_variance, NOISE_FLOOR)),
    ]
    _, grad = _lml_and_grad(theta, model.dataset, None)
    return grad


# -- fitting ----------------------------------------------------------------


def fit(
    dataset: Dataset,
    restarts: int = 5,
    seed: int = 0,
    noise_variance: float | None = None,
    maxiter: int = 500,
) -> GpModel:
    """Fit hyperparameters by multi-start maximization of the marginal likelihood.

    Parameters
    ----------
    dataset : Dataset
        Training inputs/targets, at least two points.
    restarts : int
        Number of starting points drawn log-uniformly from [1e-2, 1e2].
    seed : int
        Seed for the starting points; the result is deterministic given it.
    noise_variance : float, optional
        Hold the noise variance fixed at this value instead of optimizing it.
    """
    if len(dataset) < 2:
        raise GpInputError("fit needs at least two data points")
    if restarts < 1:
        raise GpInputError("restarts must be >= 1")
    x = dataset.inputs
    if noise_variance is not None and noise_variance <= 0 and np.all(x == x[0]):
        raise GpFitError(
            "degenerate dataset: all inputs are identical and the noise variance is fixed at 0"
        )

    dim = dataset.dim
    n_par = 1 + dim + (1 if noise_variance is None else 0)
    rng = np.random.default_rng(seed)
    starts = rng.uniform(math.log(1e-2), math.log(1e2), size=(restarts, n_par))
    bounds = [_LOG_BOUNDS] * n_par
    if noise_variance is None:
        bounds[-1] = (math.log(NOISE_FLOOR), _LOG_BOUNDS[1])

    def objective(theta):
        try:
            lml, grad = _lml_and_grad(theta, dataset, noise_variance)
        except GpNumericalError:
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    best = None
    for idx, start in enumerate(starts):
        res = minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": maxiter},
        )
        if not np.isfinite(res.fun) or res.fun >= 1e25:
            continue
        # ties resolve to the earliest restart
        if best is None or res.fun < best[0]:
            best = (float(res.fun), idx, res.x)
    if best is None:
        raise GpFitError("every restart failed to produce a finite likelihood")

    sf2, ls, sn2 = _unpack(best[2], dim, noise_variance)
    return GpModel.build(Kernel(sf2, tuple(ls)), sn2, dataset)


# -- serialization ----------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps(model: GpModel) -> str:
    lines = [
        f"# gp-model format {FORMAT_VERSION}",
        "kernel squared_exponential",
        f"dim {model.dim}",
        f"signal_variance {_fmt(model.kernel.signal_variance)}",
        "length_scales " + " ".join(_fmt(v) for v in model.kernel.length_scales),
        f"noise_variance {_fmt(model.noise_variance)}",
        f"points {len(model.dataset)}",
    ]
    for row, target in zip(model.dataset.inputs, model.dataset.targets):
        lines.append(" ".join(_fmt(v) for v in row) + " " + _fmt(target))
    return "\n".join(lines) + "\n"


def loads(text: str) -> GpModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# gp-model format "):
        raise GpInputError("missing gp-model header")
    version = int(lines[0].rsplit(" ", 1)[1])
    if version != FORMAT_VERSION:
        raise GpInputError(f"unsupported gp-model format version {version}")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("points"):
        key, _, value = lines[pos].partition(" ")
        header[key] = value
        pos += 1
    if pos == len(lines):
        raise GpInputError("gp-model file has no 'points' section")
    if header.get("kernel") != "squared_exponential":
        raise GpInputError(f"unsupported kernel {header.get('kernel')!r}")
    n = int(lines[pos].split()[1])
    dim = int(header["dim"])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1 : pos + 1 + n]])
    if rows.shape != (n, dim + 1):
        raise GpInputError(f"expected {n} rows of {dim + 1} values, got {rows.shape}")
    kernel = Kernel(
        float(header["signal_variance"]),
        tuple(float(v) for v in header["length_scales"].split()),
    )
    return GpModel.build(kernel, float(header["noise_variance"]), Dataset(rows[:, :dim], rows[:, dim]))


def save(model: GpModel, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps(model))


def load(path) -> GpModel:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())
