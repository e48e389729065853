import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpmpc_platoon.qp_solver import INF, QuadraticProgram, residuals, solve_qp


def brute_force(qp):
    """Enumerate active sets; the best feasible stationary point is the optimum."""
    n, m = qp.n, qp.A.shape[0]
    best, best_obj = None, np.inf
    for pattern in itertools.product((0, -1, 1), repeat=m):
        rows = [i for i, s in enumerate(pattern) if s]
        if len(rows) > n:
            continue
        a = qp.A[rows]
        b = np.array([qp.l[i] if pattern[i] < 0 else qp.u[i] for i in rows])
        if np.any(np.abs(b) >= INF):
            continue
        k = len(rows)
        kkt = np.block([[qp.P, a.T], [a, np.zeros((k, k))]])
        try:
            x = np.linalg.solve(kkt, np.concatenate([-qp.q, b]))[:n]
        except np.linalg.LinAlgError:
            continue
        ax = qp.A @ x
        if np.all(ax >= qp.l - 1e-9) and np.all(ax <= qp.u + 1e-9):
            obj = qp.objective(x)
            if obj < best_obj:
                best, best_obj = x, obj
    return best


def random_qp(rng, n=3, m=4):
    g = rng.normal(size=(n, n))
    P = g @ g.T + 0.1 * np.eye(n)
    A = rng.normal(size=(m, n))
    centre = A @ rng.normal(size=n)
    width = rng.uniform(0.1, 2.0, size=m)
    return QuadraticProgram(P, rng.normal(size=n) * 3, A, centre - width, centre + width)


def test_scalar_example():
    res = solve_qp(QuadraticProgram([[2.0]], [-4.0], [[1.0]], [-INF], [1.0]))
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(1.0, abs=1e-8)
    assert res.y[0] == pytest.approx(2.0, abs=1e-6)


def test_unconstrained_matches_linear_solve(rng):
    g = rng.normal(size=(4, 4))
    P = g @ g.T + np.eye(4)
    q = rng.normal(size=4)
    res = solve_qp(QuadraticProgram(P, q, np.zeros((0, 4)), [], []))
    np.testing.assert_allclose(res.x, np.linalg.solve(P, -q), atol=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_matches_active_set_enumeration(seed):
    qp = random_qp(np.random.default_rng(seed))
    res = solve_qp(qp)
    assert res.status == "optimal"
    x_ref = brute_force(qp)
    np.testing.assert_allclose(res.x, x_ref, atol=1e-6)
    assert max(residuals(qp, res.x, res.y)) <= 1e-8


def test_equality_rows():
    qp = QuadraticProgram(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0])
    res = solve_qp(qp)
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-8)


def test_primal_infeasible():
    qp = QuadraticProgram(np.eye(1), [0.0], [[1.0], [1.0]], [1.0, -INF], [INF, 0.0])
    assert solve_qp(qp).status == "primal-infeasible"


def test_iteration_cap_reported():
    qp = random_qp(np.random.default_rng(3))
    res = solve_qp(qp, max_iter=2, polish=False)
    assert res.status == "max-iter" and res.iterations == 2


def test_warm_start_consistent(rng):
    qp = random_qp(rng)
    cold = solve_qp(qp)
    warm = solve_qp(qp, x0=cold.x, y0=cold.y)
    np.testing.assert_allclose(warm.x, cold.x, atol=1e-7)
    assert warm.iterations <= cold.iterations


def test_shape_validation():
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(2), [0.0], np.zeros((0, 1)), [], [])
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(1), [0.0], [[1.0]], [1.0], [0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_solution_is_feasible(seed):
    qp = random_qp(np.random.default_rng(seed), n=4, m=6)
    res = solve_qp(qp)
    assert res.status == "optimal"
    ax = qp.A @ res.x
    assert np.all(ax >= qp.l - 1e-7) and np.all(ax <= qp.u + 1e-7)
