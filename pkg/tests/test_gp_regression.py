import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpmpc_platoon import gp_regression as gpr
from gpmpc_platoon.gp_regression import Dataset, GpModel, Kernel, kernel_eval, predict


def random_model(rng, m=10, noise=None):
    x = rng.uniform(-3, 3, size=(m, 2))
    y = np.sin(x[:, 0]) + 0.3 * x[:, 1] + 0.1 * rng.standard_normal(m)
    kern = Kernel(float(rng.uniform(0.5, 2.0)), tuple(rng.uniform(0.5, 2.0, size=2)))
    sn2 = float(rng.uniform(1e-3, 1e-1)) if noise is None else noise
    return GpModel.build(kern, sn2, Dataset(x, y))


def dense_oracle(model, queries):
    """Posterior by a fresh dense solve, no cached factor."""
    x, y = model.dataset.inputs, model.dataset.targets
    k = model.kernel
    cov = np.array([[kernel_eval(k, a, b) for b in x] for a in x]) + (model.noise_variance + model.jitter) * np.eye(len(y))
    kq = np.array([[kernel_eval(k, q, b) for b in x] for q in queries])
    mean = kq @ np.linalg.solve(cov, y)
    var = k.signal_variance - np.einsum("ij,ji->i", kq, np.linalg.solve(cov, kq.T))
    return mean, np.maximum(var, 0.0)


class TestKernel:
    def test_identical_inputs_give_signal_variance(self):
        assert kernel_eval(Kernel(1.0, (1.0, 1.0)), (0, 0), (0, 0)) == 1.0

    def test_unit_offset(self):
        assert kernel_eval(Kernel(2.0, (1.0, 1.0)), (0, 0), (1, 0)) == pytest.approx(2 * math.exp(-0.5), rel=1e-15)
        assert kernel_eval(Kernel(2.0, (1.0, 1.0)), (0, 0), (1, 0)) == pytest.approx(1.2131, abs=1e-4)

    def test_symmetry(self, rng):
        k = Kernel(1.7, (0.4, 2.5))
        for _ in range(100):
            x, y = rng.normal(size=2), rng.normal(size=2)
            assert kernel_eval(k, x, y) == kernel_eval(k, y, x)

    def test_dimension_mismatch(self):
        with pytest.raises(gpr.GpInputError):
            kernel_eval(Kernel(1.0, (1.0, 1.0)), (0, 0, 0), (0, 0))

    def test_matrix_matches_scalar(self, rng):
        k = Kernel(0.8, (0.7, 1.3))
        x, y = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
        ref = np.array([[kernel_eval(k, a, b) for b in y] for a in x])
        np.testing.assert_allclose(k.matrix(x, y), ref, rtol=1e-13)

    @pytest.mark.parametrize("sf2,ls", [(0.0, (1.0, 1.0)), (1.0, (1.0, -1.0)), (1.0, ())])
    def test_invalid(self, sf2, ls):
        with pytest.raises(gpr.GpInputError):
            Kernel(sf2, ls)


class TestDataset:
    def test_length_mismatch(self):
        with pytest.raises(gpr.GpInputError):
            Dataset(np.zeros((3, 2)), np.zeros(2))

    def test_non_finite(self):
        with pytest.raises(gpr.GpInputError):
            Dataset(np.array([[0.0, np.nan]]), np.zeros(1))

    def test_empty(self):
        with pytest.raises(gpr.GpInputError):
            Dataset(np.zeros((0, 2)), np.zeros(0))

    def test_read_only(self):
        d = Dataset(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            d.targets[0] = 1.0


class TestPredict:
    def test_interpolates_without_noise(self, rng):
        x = rng.uniform(-2, 2, size=(8, 2))
        y = rng.normal(size=8)
        model = GpModel.build(Kernel(1.0, (1.0, 1.0)), 0.0, Dataset(x, y))
        for xi, yi in zip(x, y):
            mean, var = predict(model, xi)
            assert mean == pytest.approx(yi, abs=1e-8)
            assert var <= 1e-8

    def test_reverts_to_prior_far_away(self, rng):
        model = random_model(rng)
        far = np.array([100.0, -100.0])
        mean, var = predict(model, far)
        assert abs(mean) < 1e-6
        assert var == pytest.approx(model.kernel.signal_variance, abs=1e-6)

    def test_dense_oracle(self, rng):
        for _ in range(5):
            model = random_model(rng)
            q = rng.uniform(-4, 4, size=(20, 2))
            mean, var = model.predict_many(q)
            om, ov = dense_oracle(model, q)
            np.testing.assert_allclose(mean, om, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(var, ov, rtol=1e-8, atol=1e-12)

    def test_query_validation(self, rng):
        model = random_model(rng)
        with pytest.raises(gpr.GpInputError):
            predict(model, [0.0, 1.0, 2.0])
        with pytest.raises(gpr.GpInputError):
            predict(model, [0.0, np.inf])

    def test_pure(self, rng):
        model = random_model(rng)
        q = rng.normal(size=(7, 2))
        a = model.predict_many(q)
        b = model.predict_many(q)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_variance_bounded_by_prior(self, rng):
        model = random_model(rng)
        _, var = model.predict_many(rng.uniform(-10, 10, size=(200, 2)))
        assert np.all(var >= 0)
        assert np.all(var <= model.kernel.signal_variance + 1e-9)

    def test_more_data_never_increases_variance(self, rng):
        for _ in range(10):
            x = rng.uniform(-3, 3, size=(9, 2))
            y = rng.normal(size=9)
            k = Kernel(1.0, (0.8, 1.2))
            small = GpModel.build(k, 0.05, Dataset(x[:8], y[:8]))
            big = GpModel.build(k, 0.05, Dataset(x, y))
            q = rng.uniform(-4, 4, size=(30, 2))
            assert np.all(big.predict_many(q)[1] <= small.predict_many(q)[1] + 1e-12)

    def test_zero_process(self):
        zp = gpr.ZeroProcess()
        mean, var = zp.predict_many(np.ones((3, 2)))
        assert not mean.any() and not var.any()
        assert not zp.mean_jacobian(np.ones((3, 2))).any()


class TestJacobian:
    def test_matches_finite_differences(self, rng):
        model = random_model(rng, m=15)
        q = rng.uniform(-3, 3, size=(20, 2))
        jac = model.mean_jacobian(q)
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (model.predict_many(q + e)[0] - model.predict_many(q - e)[0]) / (2 * h)
            np.testing.assert_allclose(jac[:, j], fd, rtol=1e-5, atol=1e-9)


class TestLikelihood:
    def test_scalar_case(self):
        model = GpModel.build(Kernel(1.0, (1.0,)), 1.0, Dataset(np.zeros((1, 1)), np.zeros(1)))
        expected = -0.5 * math.log(2.0) - 0.5 * math.log(2 * math.pi)
        assert gpr.log_marginal_likelihood(model) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(-1.2655, abs=1e-4)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(5):
            model = random_model(rng)
            grad = gpr.log_marginal_likelihood_grad(model)
            theta = np.r_[math.log(model.kernel.signal_variance), np.log(model.kernel.length_scales),
                          math.log(model.noise_variance)]
            h = 1e-5
            for i in range(theta.size):
                tp, tm = theta.copy(), theta.copy()
                tp[i] += h
                tm[i] -= h
                fd = (gpr._lml_and_grad(tp, model.dataset, None)[0] - gpr._lml_and_grad(tm, model.dataset, None)[0]) / (2 * h)
                assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_permutation_invariant(self, rng):
        model = random_model(rng)
        perm = rng.permutation(len(model.dataset))
        shuffled = GpModel.build(model.kernel, model.noise_variance,
                                 Dataset(model.dataset.inputs[perm], model.dataset.targets[perm]))
        assert gpr.log_marginal_likelihood(shuffled) == pytest.approx(gpr.log_marginal_likelihood(model), rel=1e-12)


class TestFit:
    def test_recovers_generating_hyperparameters(self):
        rng = np.random.default_rng(7)
        truth_k = Kernel(1.0, (0.5, 0.5))
        x = rng.uniform(-1.5, 1.5, size=(80, 2))
        cov = truth_k.matrix(x, x) + 0.01 * np.eye(80)
        y = np.linalg.cholesky(cov) @ rng.standard_normal(80)
        train, test = slice(0, 50), slice(50, 80)
        model = gpr.fit(Dataset(x[train], y[train]), restarts=5, seed=0)
        assert 0.5 <= model.kernel.signal_variance <= 2.0
        for ls in model.kernel.length_scales:
            assert 0.25 <= ls <= 1.0
        assert 0.005 <= model.noise_variance <= 0.02

        def heldout(kern, sn2):
            m = GpModel.build(kern, sn2, Dataset(x[train], y[train]))
            mean, var = m.predict_many(x[test])
            var = var + sn2
            return float(np.sum(-0.5 * np.log(2 * np.pi * var) - 0.5 * (y[test] - mean) ** 2 / var))

        ref = heldout(truth_k, 0.01)
        got = heldout(model.kernel, model.noise_variance)
        assert abs(got - ref) <= 0.05 * abs(ref)

    def test_two_identical_targets_far_apart(self):
        ds = Dataset(np.array([[0.0, 0.0], [50.0, 50.0]]), np.array([1.0, 1.0]))
        model = gpr.fit(ds, restarts=3, seed=1)
        for xi in ds.inputs:
            mean, var = predict(model, xi)
            assert abs(mean - 1.0) <= 3 * math.sqrt(var + model.noise_variance)

    def test_deterministic(self, rng):
        model = random_model(rng, m=30)
        a = gpr.fit(model.dataset, restarts=3, seed=4)
        b = gpr.fit(model.dataset, restarts=3, seed=4)
        assert a.kernel == b.kernel and a.noise_variance == b.noise_variance

    def test_best_restart_wins(self, rng):
        model = random_model(rng, m=25)
        best = gpr.fit(model.dataset, restarts=4, seed=2)
        for s in range(4):
            single = gpr.fit(model.dataset, restarts=1, seed=100 + s)
            assert gpr.log_marginal_likelihood(best) >= gpr.log_marginal_likelihood(single) - 1e-3

    def test_degenerate(self):
        ds = Dataset(np.ones((4, 2)), np.arange(4.0))
        with pytest.raises(gpr.GpFitError, match="identical"):
            gpr.fit(ds, noise_variance=0.0)

    @pytest.mark.parametrize("kw", [dict(restarts=0), dict()])
    def test_bad_arguments(self, kw):
        ds = Dataset(np.zeros((1, 2)), np.zeros(1)) if not kw else Dataset(np.eye(2), np.zeros(2))
        with pytest.raises(gpr.GpInputError):
            gpr.fit(ds, **kw)

    def test_noise_floor(self, rng):
        x = rng.uniform(-2, 2, size=(20, 2))
        model = gpr.fit(Dataset(x, np.sin(x[:, 0])), restarts=3, seed=0)
        assert model.noise_variance >= gpr.NOISE_FLOOR * (1 - 1e-9)


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        model = random_model(rng, m=12)
        path = tmp_path / "m.txt"
        gpr.save(model, path)
        back = gpr.load(path)
        assert back.kernel == model.kernel
        assert back.noise_variance == model.noise_variance
        assert np.array_equal(back.dataset.inputs, model.dataset.inputs)
        q = rng.uniform(-5, 5, size=(100, 2))
        assert np.array_equal(back.predict_many(q)[0], model.predict_many(q)[0])
        assert np.array_equal(back.predict_many(q)[1], model.predict_many(q)[1])

    def test_header_checked(self):
        with pytest.raises(gpr.GpInputError):
            gpr.loads("kernel squared_exponential\n")
        with pytest.raises(gpr.GpInputError, match="version"):
            gpr.loads("# gp-model format 99\n")

    def test_truncated(self, rng):
        text = gpr.dumps(random_model(rng, m=4))
        with pytest.raises(gpr.GpInputError):
            gpr.loads("\n".join(text.splitlines()[:-1]))


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=8, unique=True),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_variance_in_prior_range(points, qx, qy):
    x = np.array(points)
    model = GpModel.build(Kernel(1.3, (0.9, 1.4)), 0.01, Dataset(x, np.ones(len(x))))
    _, var = predict(model, (qx, qy))
    assert 0.0 <= var <= 1.3 + 1e-9
