import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prerules import glm
from prerules.errors import DataError
from prerules.glm import PenaltySpec, cv_select, fit_path, group_prox, soft_threshold

from oracles import kkt_violation, loss_gradient, polar_prox


def instance(family, n=60, p=6, q=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    eta = X[:, 0] - 0.5 * X[:, 1]
    if family == "binomial":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    elif family == "poisson":
        y = rng.poisson(np.exp(0.3 * eta)).astype(float)
    elif family == "mgaussian":
        y = np.column_stack([eta + rng.normal(size=n), -eta + rng.normal(size=n)][:q])
    else:
        y = eta + rng.normal(size=n)
    return X, y


class TestSoftThreshold:
    @pytest.mark.parametrize("z, gamma, out", [(3, 1, 2), (0.5, 1, 0), (-3, 1, -2), (0, 0, 0)])
    def test_values(self, z, gamma, out):
        assert soft_threshold(z, gamma) == out

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.1)

    @given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
    def test_odd_and_shrinking(self, z, gamma):
        assert soft_threshold(-z, gamma) == -soft_threshold(z, gamma)
        assert abs(soft_threshold(z, gamma)) <= abs(z)


class TestPathBasics:
    @pytest.mark.parametrize("family", ["gaussian", "binomial", "poisson", "mgaussian"])
    def test_head_is_null_model(self, family):
        X, y = instance(family)
        path = fit_path(X, y, family)
        assert np.all(path.coefs[0] == 0)
        assert path.nonzero[-1] > 0
        assert np.all(np.diff(path.lambdas) < 0)

    def test_lambda_max_gaussian(self):
        X, y = instance("gaussian")
        path = fit_path(X, y)
        expected = np.max(np.abs(X.T @ (y - y.mean()))) / len(y)
        assert path.lambdas[0] == pytest.approx(expected, rel=1e-12)

    def test_grid_ratio(self):
        X, y = instance("gaussian", n=60, p=6)
        path = fit_path(X, y, spec=PenaltySpec(early_stop=False))
        assert len(path.lambdas) == 100
        assert path.lambdas[-1] / path.lambdas[0] == pytest.approx(1e-4)
        X, y = instance("gaussian", n=10, p=12)
        path = fit_path(X, y, spec=PenaltySpec(early_stop=False))
        assert path.lambdas[-1] / path.lambdas[0] == pytest.approx(1e-2)

    def test_nonzero_count_tends_to_grow(self):
        X, y = instance("gaussian", n=100, p=10)
        counts = fit_path(X, y).nonzero
        assert counts[-1] >= counts[len(counts) // 2] >= counts[0]

    @pytest.mark.parametrize("bad", [dict(penalty_factor=-np.ones(6)), dict(lower=0.5),
                                     dict(upper=-1.0), dict(lambdas=np.array([0.1, 0.2]))])
    def test_invalid_spec(self, bad):
        X, y = instance("gaussian")
        with pytest.raises(ValueError):
            fit_path(X, y, spec=PenaltySpec(**bad))

    def test_response_validation(self):
        X, _ = instance("gaussian", n=5)
        with pytest.raises(DataError):
            fit_path(X, np.array([0, 1, 2, 0, 1.0]), "binomial")
        with pytest.raises(DataError):
            fit_path(X, np.array([0, 1.5, 2, 0, 1.0]), "poisson")


class TestOracles:
    def test_least_squares_limit(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(20, 5))
        y = X @ rng.normal(size=5) + rng.normal(size=20)
        A = np.column_stack([np.ones(20), X])
        ols = np.linalg.solve(A.T @ A, A.T @ y)
        lam_max = np.max(np.abs(X.T @ (y - y.mean()))) / 20
        path = fit_path(X, y, spec=PenaltySpec(lambdas=np.geomspace(lam_max, lam_max * 1e-12, 60)))
        np.testing.assert_allclose(path.coefs[-1, :, 0], ols[1:], atol=1e-6)
        assert path.intercepts[-1, 0] == pytest.approx(ols[0], abs=1e-6)

    @pytest.mark.parametrize("family", ["gaussian", "binomial", "poisson", "mgaussian"])
    def test_kkt_along_path(self, family):
        X, y = instance(family, seed=3)
        path = fit_path(X, y, family)
        for i in range(len(path.lambdas)):
            assert kkt_violation(X, y, path, i, family) <= 1e-6

    @pytest.mark.parametrize("family", ["gaussian", "binomial", "poisson"])
    def test_unpenalized_column_has_zero_gradient(self, family):
        X, y = instance(family, seed=4)
        pf = np.r_[0.0, np.ones(5)]
        path = fit_path(X, y, family, PenaltySpec(penalty_factor=pf))
        for i in range(len(path.lambdas)):
            g = loss_gradient(X, y, path.intercepts[i], path.coefs[i], family)
            assert abs(g[0, 0]) <= 1e-6
        assert path.coefs[0, 0, 0] != 0 and np.all(path.coefs[0, 1:] == 0)

    @pytest.mark.parametrize("box", [dict(lower=0.0), dict(upper=0.0)])
    def test_box_feasible_and_kkt(self, box):
        X, y = instance("gaussian", seed=5)
        spec = PenaltySpec(**box)
        path = fit_path(X, y, spec=spec)
        lower, upper = spec.resolved(6)[1:]
        assert np.all(path.coefs[..., 0] >= lower) and np.all(path.coefs[..., 0] <= upper)
        for i in range(len(path.lambdas)):
            assert kkt_violation(X, y, path, i, "gaussian", lower=lower, upper=upper) <= 1e-6

    def test_warm_equals_cold(self):
        X, y = instance("gaussian", n=40, p=5, seed=6)
        path = fit_path(X, y)
        for i in (5, 20, len(path.lambdas) - 1):
            b0, B = glm.fit_single(X, y, path.lambdas[i])
            np.testing.assert_allclose(B, path.coefs[i], atol=1e-6)
            np.testing.assert_allclose(b0, path.intercepts[i], atol=1e-6)

    def test_objective_non_increasing_per_sweep(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 6))
        X[:, 1] = X[:, 0] + 0.1 * rng.normal(size=30)
        y = X[:, 0] + rng.normal(size=30)
        lam = 0.05
        b0, beta = 0.0, np.zeros(6)
        prev = glm.penalized_objective(X, y, y.mean(), beta, lam, "gaussian")
        for _ in range(40):
            b0, beta = glm.gaussian_sweeps(X, y, lam, 1, beta=beta, intercept=b0)
            obj = glm.penalized_objective(X, y, b0, beta, lam, "gaussian")
            assert obj <= prev + 1e-13
            prev = obj


class TestGroup:
    def test_joint_sparsity(self):
        X, Y = instance("mgaussian", n=80, p=8, seed=9)
        path = fit_path(X, Y, "mgaussian")
        for B in path.coefs:
            active = B != 0
            assert np.all(active.all(axis=1) | ~active.any(axis=1))

    def test_prox_matches_direction_search(self):
        rng = np.random.default_rng(10)
        for _ in range(300):
            z = rng.normal(size=2)
            v, lam = rng.uniform(0.2, 2), rng.uniform(0, 1.5)
            np.testing.assert_allclose(group_prox(z, v, lam), polar_prox(z, v, lam), atol=1e-8)
            np.testing.assert_allclose(group_prox(z, v, lam, lower=0.0), polar_prox(z, v, lam, nonneg=True),
                                       atol=1e-8)

    def test_sign_box_only(self):
        X, Y = instance("mgaussian")
        with pytest.raises(ValueError):
            fit_path(X, Y, "mgaussian", PenaltySpec(upper=1.0))
        path = fit_path(X, Y, "mgaussian", PenaltySpec(lower=0.0))
        assert np.all(path.coefs >= 0)


class TestCv:
    def test_selection_rules(self):
        mean = np.array([5.0, 3.0, 2.0, 1.5, 1.4, 1.45])
        se = np.full(6, 0.2)
        assert glm.select_index(mean, se, "min") == (4, 4)
        assert glm.select_index(mean, se, "1se") == (4, 3)

    def test_curve_invariants(self):
        X, y = instance("gaussian", n=120, p=8, seed=11)
        res = cv_select(X, y, rng=0)
        c = res.curve
        assert c.lambda_1se >= c.lambda_min
        assert c.mean[c.index_1se] <= c.mean[c.index_min] + c.se[c.index_min]
        assert c.fold_errors.shape == (10, len(c.lambdas))
        np.testing.assert_allclose(res.coef, res.path.coefs[res.index])

    def test_reproducible(self):
        X, y = instance("binomial", n=150, seed=12)
        a = cv_select(X, y, "binomial", rng=3)
        b = cv_select(X, y, "binomial", rng=3)
        np.testing.assert_array_equal(a.curve.mean, b.curve.mean)

    def test_threads_match_serial(self):
        X, y = instance("poisson", n=150, seed=13)
        a = cv_select(X, y, "poisson", rng=3, n_jobs=1)
        b = cv_select(X, y, "poisson", rng=3, n_jobs=4)
        np.testing.assert_array_equal(a.curve.fold_errors, b.curve.fold_errors)

    def test_losses(self):
        y = np.array([1.0, 0.0])
        eta = np.array([[0.0], [0.0]])
        np.testing.assert_allclose(glm.pointwise_loss("binomial", y, eta), [0.25, 0.25])
        np.testing.assert_allclose(glm.pointwise_loss("binomial", y, eta, "deviance"), [2 * np.log(2)] * 2)
        np.testing.assert_allclose(glm.pointwise_loss("poisson", np.array([2.0]), np.log([[2.0]])), [0.0])

    def test_pure_noise_selects_null_model(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            X = rng.normal(size=(200, 10))
            y = rng.normal(size=200)
            res = cv_select(X, y, rng=seed)
            hits += np.count_nonzero(res.coef) <= 1
        assert hits >= 18

    def test_separation_warns(self):
        x = np.linspace(-1, 1, 40)[:, None]
        y = (x[:, 0] > 0).astype(float)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit_path(x, y, "binomial", PenaltySpec(lambda_min_ratio=1e-6, early_stop=False))
        assert any(issubclass(w.category, glm.SeparationWarning) for w in caught)
