import numpy as np
import pytest
import statsmodels.api as sm
import sympy

import oracles
from conftest import random_sparse
from influence_sketching.glm import (ConvergenceError, FitOptions, fit_from_coefficients,
                                     fit_irls, get_family, irls_step, irls_weight,
                                     pseudo_residuals)
from influence_sketching.sparse import SparseDesignMatrix


def logistic_problem(seed, n=300, p=6):
    r = np.random.default_rng(seed)
    X = random_sparse(r, n, p, 0.5)
    beta = r.normal(size=p)
    y = (r.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(float)
    return X, y


class TestWeights:
    def test_table(self):
        assert irls_weight("linear", 3.7) == 1.0
        assert irls_weight("logistic", 0.5) == 0.25
        assert irls_weight("logistic", 0.9) == pytest.approx(0.09, abs=1e-15)
        assert irls_weight("poisson", 2.5) == 2.5

    @pytest.mark.parametrize("family, mu", [("logistic", 1.2), ("logistic", -0.1),
                                            ("poisson", -1.0), ("linear", np.nan)])
    def test_out_of_domain(self, family, mu):
        with pytest.raises(ValueError, match="domain"):
            irls_weight(family, mu)

    @pytest.mark.parametrize("family", ["logistic", "poisson"])
    def test_exponential_family_formula(self, family):
        # v = rho / (b''(theta) * (d eta / d mu)^2) with rho = 1, canonical link
        theta, mu = sympy.symbols("theta mu", positive=True)
        if family == "logistic":
            b = sympy.log(1 + sympy.exp(theta))
            link = sympy.log(mu / (1 - mu))
        else:
            b = sympy.exp(theta)
            link = sympy.log(mu)
        mean = sympy.diff(b, theta)
        theta_of_mu = sympy.solve(sympy.Eq(mean, mu), theta)[0]
        v = 1 / (sympy.diff(b, theta, 2).subs(theta, theta_of_mu) * sympy.diff(link, mu) ** 2)
        v_fn = sympy.lambdify(mu, sympy.simplify(v), "numpy")
        r = np.random.default_rng(7)
        mus = r.uniform(0.001, 0.999, 100) if family == "logistic" else r.uniform(0.01, 50, 100)
        np.testing.assert_allclose(irls_weight(family, mus), v_fn(mus), rtol=1e-12, atol=0)

    def test_linear_weight_formula(self):
        # Gaussian: b(theta) = theta^2 / 2, identity link
        theta = sympy.symbols("theta")
        b = theta**2 / 2
        assert sympy.diff(b, theta, 2) == 1
        np.testing.assert_array_equal(irls_weight("linear", np.linspace(-5, 5, 100)), 1.0)


class TestLinear:
    def test_equals_ols_in_one_iteration(self, rng):
        X = random_sparse(rng, 60, 5, 0.6)
        y = rng.normal(size=60)
        fit = fit_irls(SparseDesignMatrix(X), y, "linear")
        np.testing.assert_allclose(fit.beta, oracles.ols(X, y), atol=1e-10)
        assert fit.n_iter == 1 and fit.converged
        np.testing.assert_array_equal(fit.pseudo_residuals, y - fit.fitted_mean)
        np.testing.assert_array_equal(pseudo_residuals(fit, y), y - fit.fitted_mean)
        assert not fit.approximate_influence_basis


class TestLogistic:
    def test_separable_example_raises(self):
        X = SparseDesignMatrix(np.array([[-2.0], [-1.0], [1.0], [2.0]]))
        with pytest.raises(ConvergenceError) as info:
            fit_irls(X, np.array([0.0, 0.0, 1.0, 1.0]), "logistic")
        assert info.value.floored_rows > 0
        assert len(info.value.deviance_trace) > 10

    def test_newton_oracle_small(self):
        x = np.array([-2.0, -1.0, 1.0, 2.0])
        X = np.column_stack([np.ones(4), x])
        y = np.array([0.0, 1.0, 0.0, 1.0])
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic")
        np.testing.assert_allclose(fit.beta, oracles.newton_logistic(X, y), atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_newton_oracle_random(self, seed):
        X, y = logistic_problem(seed)
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic")
        np.testing.assert_allclose(fit.beta, oracles.newton_logistic(X, y), atol=1e-6)

    def test_all_ones_intercept_only(self):
        X = SparseDesignMatrix(np.ones((5, 1)))
        with pytest.raises(ConvergenceError, match="below floor"):
            fit_irls(X, np.ones(5), "logistic")

    def test_hand_pseudo_residual(self):
        fit = fit_from_coefficients(SparseDesignMatrix(np.ones((1, 1))), np.array([1.0]),
                                    np.array([0.0]), "logistic")
        assert fit.pseudo_residuals[0] == pytest.approx(1.0, abs=1e-15)

    def test_pearson_residuals_match_statsmodels(self):
        X, y = logistic_problem(11, n=200, p=5)
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic")
        ref = sm.GLM(y, X, family=sm.families.Binomial()).fit(tol=1e-14)
        np.testing.assert_allclose(fit.beta, ref.params, atol=1e-7)
        np.testing.assert_allclose(fit.pseudo_residuals, ref.resid_pearson, atol=1e-8)

    def test_fixed_point(self):
        X, y = logistic_problem(3)
        Xs = SparseDesignMatrix(X)
        opts = FitOptions()
        fit = fit_irls(Xs, y, "logistic", opts)
        next_beta, _ = irls_step(Xs, y, get_family("logistic"), fit.beta, opts)
        assert np.max(np.abs(next_beta - fit.beta)) < 10 * opts.tol

    def test_converged_means_small_relative_change(self):
        X, y = logistic_problem(4)
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic")
        a, b = fit.deviance_trace[-2:]
        assert abs(a - b) / abs(b) < FitOptions().tol

    @pytest.mark.parametrize("bad", [[0.0, 2.0], [0.5, 1.0]])
    def test_rejects_labels(self, bad):
        with pytest.raises(ValueError):
            fit_irls(SparseDesignMatrix(np.ones((2, 1))), np.array(bad), "logistic")


class TestPoisson:
    def test_matches_statsmodels(self, rng):
        X = random_sparse(rng, 150, 4, 0.5)
        y = rng.poisson(np.exp(X @ np.array([0.5, 0.3, -0.4, 0.2]))).astype(float)
        fit = fit_irls(SparseDesignMatrix(X), y, "poisson")
        ref = sm.GLM(y, X, family=sm.families.Poisson()).fit(tol=1e-14)
        np.testing.assert_allclose(fit.beta, ref.params, atol=1e-7)
        np.testing.assert_allclose(fit.pseudo_residuals, ref.resid_pearson, atol=1e-8)
        np.testing.assert_allclose(fit.irls_weights.entries, fit.fitted_mean, rtol=1e-15)

    def test_rejects_non_integers(self):
        with pytest.raises(ValueError):
            fit_irls(SparseDesignMatrix(np.ones((2, 1))), np.array([1.5, 2.0]), "poisson")


class TestLasso:
    def test_matches_liblinear(self):
        from sklearn.linear_model import LogisticRegression

        X, y = logistic_problem(5, n=400, p=8)
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic", FitOptions(l1_strength=1.0))
        # liblinear penalizes its intercept, so give it the features only and a huge
        # intercept_scaling to make that penalty negligible
        ref = LogisticRegression(penalty="l1", C=1.0, solver="liblinear", tol=1e-12,
                                 intercept_scaling=1e6, max_iter=100000).fit(X[:, 1:], y)
        np.testing.assert_allclose(fit.beta[1:], ref.coef_.ravel(), atol=1e-5)
        assert fit.beta[0] == pytest.approx(ref.intercept_[0], abs=1e-4)

    def test_caveat_flag_and_sparsity(self):
        X, y = logistic_problem(6)
        fit = fit_irls(SparseDesignMatrix(X), y, "logistic", FitOptions(l1_strength=1e4))
        assert fit.approximate_influence_basis
        assert fit.regularization == ("l1", 1e4)
        assert np.all(fit.beta[1:] == 0.0)
        assert fit.beta[0] == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-6)

    def test_linear_lasso_kkt(self, rng):
        X = random_sparse(rng, 80, 6, 0.7)
        y = X @ np.array([1.0, 2.0, 0.0, -1.5, 0.0, 0.3]) + 0.1 * rng.normal(size=80)
        lam = 5.0
        fit = fit_irls(SparseDesignMatrix(X), y, "linear", FitOptions(l1_strength=lam))
        grad = X.T @ (y - X @ fit.beta)  # minus gradient of 0.5 * RSS
        active = fit.beta != 0
        assert abs(grad[0]) < 1e-6
        np.testing.assert_allclose(grad[1:][active[1:]], lam * np.sign(fit.beta[1:][active[1:]]),
                                   atol=1e-6)
        assert np.all(np.abs(grad[1:][~active[1:]]) <= lam + 1e-6)
