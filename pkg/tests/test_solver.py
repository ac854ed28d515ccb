"""Penalized IRLS-CD solver against closed forms and independent optima."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from conftest import assert_kkt_certificate, make_glm_data
from glmci import FamilySpec
from glmci.errors import (
    ConfigError,
    DegenerateDataError,
    FoldDegeneracyError,
    InputValidationError,
)
from glmci.families import neg_log_lik, unit_deviance
from glmci.solver import (
    PenaltySpec,
    SolverConfig,
    _fold_assignment,
    cross_validate,
    fit_path,
    fit_penalized_glm,
    lambda_path,
    soft_threshold,
)

RAW = SolverConfig(fit_intercept=False, standardize=False)

GAUSSIAN = FamilySpec("gaussian")
POISSON = FamilySpec("poisson")
NEGBIN = FamilySpec("negbin", negbin_size=4.5)
TWEEDIE = FamilySpec("tweedie", power_p=1.5)


def penalized_objective(family, X, y, beta, lam1, lam2, factors=None):
    f = np.ones(X.shape[1]) if factors is None else np.asarray(factors, float)
    return (
        neg_log_lik(family, y, X @ beta)
        + lam1 * float(f @ np.abs(beta))
        + lam2 * float(f @ beta**2)
    )


class TestClosedForms:
    def test_ridge_matches_linear_solve(self):
        X, y, _ = make_glm_data(GAUSSIAN, 60, 5, seed=1)
        lam2 = 0.7
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(lambda2=lam2), RAW)
        oracle = np.linalg.solve(
            X.T @ X / 60 + 2.0 * lam2 * np.eye(5), X.T @ y / 60
        )
        np.testing.assert_allclose(fit.beta, oracle, rtol=1e-8, atol=1e-10)

    def test_ridge_respects_factors(self):
        X, y, _ = make_glm_data(GAUSSIAN, 50, 4, seed=2)
        f = np.array([0.0, 1.0, 2.0, 1.0])
        lam2 = 0.4
        fit = fit_penalized_glm(
            X, y, GAUSSIAN, PenaltySpec(lambda2=lam2, factors=f), RAW
        )
        oracle = np.linalg.solve(
            X.T @ X / 50 + 2.0 * lam2 * np.diag(f), X.T @ y / 50
        )
        np.testing.assert_allclose(fit.beta, oracle, rtol=1e-8, atol=1e-10)

    def test_unpenalized_gaussian_is_ols(self):
        X, y, _ = make_glm_data(GAUSSIAN, 80, 6, seed=3)
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(), RAW)
        ols = np.linalg.lstsq(X, y, rcond=None)[0]
        np.testing.assert_allclose(fit.beta, ols, rtol=1e-8, atol=1e-10)

    def test_unpenalized_with_intercept_is_ols(self):
        X, y, _ = make_glm_data(GAUSSIAN, 80, 4, seed=4)
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(), SolverConfig())
        Xa = np.hstack([np.ones((80, 1)), X])
        ols = np.linalg.lstsq(Xa, y, rcond=None)[0]
        assert fit.intercept == pytest.approx(ols[0], rel=1e-8, abs=1e-10)
        np.testing.assert_allclose(fit.beta, ols[1:], rtol=1e-8, atol=1e-10)

    def test_gaussian_identity_single_irls_iteration(self):
        X, y, _ = make_glm_data(GAUSSIAN, 40, 3, seed=5)
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(lambda1=0.05), SolverConfig())
        assert fit.n_iterations == 1
        assert fit.converged

    def test_lasso_orthonormal_soft_threshold(self):
        # X'X/n = I makes the lasso solution exactly S(X'y/n, lam)
        rng = np.random.default_rng(8)
        A = rng.normal(size=(64, 4))
        Q, _ = np.linalg.qr(A)
        X = Q * np.sqrt(64)
        y = rng.normal(size=64) + X[:, 0]
        lam = 0.2
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(lambda1=lam), RAW)
        target = soft_threshold(X.T @ y / 64, lam)
        np.testing.assert_allclose(fit.beta, target, rtol=1e-9, atol=1e-12)


class TestAgainstGenericOptimizer:
    @pytest.mark.parametrize("family", [POISSON, NEGBIN, TWEEDIE], ids=lambda f: f.kind)
    def test_objective_not_worse_than_nelder_mead(self, family):
        X, y, _ = make_glm_data(family, 60, 3, seed=9)
        lam1, lam2 = 0.08, 0.02
        fit = fit_penalized_glm(
            X, y, family, PenaltySpec(lambda1=lam1, lambda2=lam2), RAW
        )
        obj = lambda b: penalized_objective(family, X, y, b, lam1, lam2)
        res = optimize.minimize(
            obj, fit.beta + 0.05, method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
        )
        assert obj(fit.beta) <= res.fun + 1e-9
        assert fit.objective_value == pytest.approx(obj(fit.beta), rel=1e-10)


class TestCertificates:
    @pytest.mark.parametrize(
        "family", [GAUSSIAN, POISSON, NEGBIN, TWEEDIE], ids=lambda f: f.kind
    )
    @pytest.mark.parametrize(
        "config",
        [
            RAW,
            SolverConfig(fit_intercept=False, standardize=True),
            SolverConfig(fit_intercept=True, standardize=True),
            SolverConfig(fit_intercept=True, standardize=False),
        ],
        ids=["raw", "scaled", "ctr-scaled", "intercept"],
    )
    def test_independent_certificate(self, family, config):
        X, y, _ = make_glm_data(family, 70, 5, seed=13)
        factors = np.array([0.0, 1.0, 1.0, 2.0, 1.0])
        fit = fit_penalized_glm(
            X, y, family,
            PenaltySpec(lambda1=0.05, lambda2=0.01, factors=factors),
            config,
        )
        assert fit.converged
        assert fit.kkt_violation <= fit.kkt_tol
        assert_kkt_certificate(fit, X, y, family, config, factors=factors)


class TestPath:
    def test_warm_starts_match_cold_fits(self):
        X, y, _ = make_glm_data(POISSON, 90, 6, seed=21)
        grid = lambda_path(X, y, POISSON, n_lambda=8, lambda_min_ratio=1e-2, config=RAW)
        fits = fit_path(X, y, POISSON, grid, config=RAW)
        for lam, warm in zip(grid, fits):
            cold = fit_penalized_glm(X, y, POISSON, PenaltySpec(lambda1=lam), RAW)
            # both runs satisfy the 1e-7 stationarity tolerance, so they may
            # differ by solver slack but not more
            np.testing.assert_allclose(warm.beta, cold.beta, rtol=1e-4, atol=1e-7)
            assert warm.converged and cold.converged

    def test_increasing_grid_rejected(self):
        X, y, _ = make_glm_data(POISSON, 40, 3, seed=22)
        with pytest.raises(ConfigError):
            fit_path(X, y, POISSON, np.array([0.01, 0.1]), config=RAW)

    def test_lambda_max_kills_penalized_coefficients(self):
        for family in (GAUSSIAN, POISSON, TWEEDIE):
            X, y, _ = make_glm_data(family, 80, 5, seed=23, intercept_col=True)
            f = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
            grid = lambda_path(
                X, y, family, n_lambda=4, lambda_min_ratio=0.1,
                factors=f, config=SolverConfig(fit_intercept=False),
            )
            fit = fit_penalized_glm(
                X, y, family, PenaltySpec(lambda1=grid[0], factors=f),
                SolverConfig(fit_intercept=False),
            )
            # iterative families can leave sub-tolerance dust on coordinates
            # whose gradient sits exactly at the threshold
            if family.kind == "gaussian":
                assert np.all(fit.beta[1:] == 0.0)
            else:
                assert np.max(np.abs(fit.beta[1:])) <= 1e-5, family.kind
            assert fit.beta[0] != 0.0

    def test_all_zero_count_response_degenerate(self):
        X = np.random.default_rng(0).normal(size=(30, 3))
        with pytest.raises(DegenerateDataError):
            lambda_path(X, np.zeros(30), POISSON, n_lambda=5, config=RAW)


class TestCrossValidation:
    def test_matches_manual_fold_computation(self):
        X, y, _ = make_glm_data(GAUSSIAN, 48, 4, seed=31)
        grid = np.array([0.3, 0.1, 0.03])
        cv = cross_validate(X, y, GAUSSIAN, lambda_grid=grid, K=4, seed=7, config=RAW)
        folds = _fold_assignment(48, 4, 7)
        np.testing.assert_array_equal(cv.fold_assignment, folds)
        manual = np.zeros((3, 4))
        for k in range(4):
            tr, te = folds != k, folds == k
            for i, lam in enumerate(grid):
                fit = fit_penalized_glm(
                    X[tr], y[tr], GAUSSIAN, PenaltySpec(lambda1=lam), RAW
                )
                mu = fit.predict_mean(X[te])
                manual[i, k] = float(np.mean(unit_deviance(GAUSSIAN, y[te], mu)))
        # cv fits warm-start along the path; the manual loop fits cold
        np.testing.assert_allclose(cv.mean_cv_loss, manual.mean(axis=1), rtol=1e-6)
        np.testing.assert_allclose(
            cv.se_cv_loss, manual.std(axis=1, ddof=1) / 2.0, rtol=1e-5
        )
        assert cv.best_lambda == grid[int(np.argmin(cv.mean_cv_loss))]

    def test_fold_assignment_balanced_and_deterministic(self):
        folds = _fold_assignment(103, 5, 42)
        again = _fold_assignment(103, 5, 42)
        np.testing.assert_array_equal(folds, again)
        counts = np.bincount(folds, minlength=5)
        assert counts.max() - counts.min() <= 1

    def test_single_positive_count_breaks_a_fold(self):
        X = np.random.default_rng(3).normal(size=(20, 3))
        y = np.zeros(20)
        y[4] = 6.0
        with pytest.raises(FoldDegeneracyError):
            cross_validate(
                X, y, POISSON, lambda_grid=np.array([0.1]), K=2, seed=0, config=RAW
            )

    def test_fold_count_validation(self):
        X, y, _ = make_glm_data(GAUSSIAN, 12, 2, seed=1)
        with pytest.raises(ConfigError):
            cross_validate(X, y, GAUSSIAN, K=1, config=RAW)
        with pytest.raises(ConfigError):
            cross_validate(X, y, GAUSSIAN, K=13, config=RAW)


class TestInvariances:
    def test_column_scaling_leaves_predictions_unchanged(self):
        X, y, _ = make_glm_data(POISSON, 100, 5, seed=41)
        config = SolverConfig(fit_intercept=True, standardize=True)
        pen = PenaltySpec(lambda1=0.05)
        fit1 = fit_penalized_glm(X, y, POISSON, pen, config)
        X2 = X.copy()
        X2[:, 2] *= 7.0
        fit2 = fit_penalized_glm(X2, y, POISSON, pen, config)
        np.testing.assert_allclose(
            fit1.predict_eta(X), fit2.predict_eta(X2), rtol=1e-6, atol=1e-8
        )
        assert fit2.beta[2] == pytest.approx(fit1.beta[2] / 7.0, rel=1e-5)

    def test_constant_column_gets_zero_weight(self):
        X, y, _ = make_glm_data(GAUSSIAN, 50, 4, seed=43)
        X[:, 3] = 2.5
        fit = fit_penalized_glm(
            X, y, GAUSSIAN, PenaltySpec(lambda1=0.01), SolverConfig()
        )
        assert fit.beta[3] == 0.0

    def test_predict_mean_applies_link(self):
        X, y, _ = make_glm_data(POISSON, 60, 4, seed=44)
        fit = fit_penalized_glm(X, y, POISSON, PenaltySpec(lambda1=0.02), SolverConfig())
        eta = fit.predict_eta(X)
        np.testing.assert_allclose(fit.predict_mean(X), np.exp(eta), rtol=1e-12)

    def test_active_set(self):
        X, y, _ = make_glm_data(GAUSSIAN, 60, 5, seed=45)
        grid = lambda_path(X, y, GAUSSIAN, n_lambda=3, lambda_min_ratio=0.5, config=RAW)
        fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(lambda1=grid[0]), RAW)
        assert list(fit.active_set) == list(np.flatnonzero(fit.beta))


class TestInputChecks:
    def test_negative_penalty_rejected(self):
        with pytest.raises(ConfigError):
            PenaltySpec(lambda1=-0.1)

    def test_factor_length_mismatch(self):
        X, y, _ = make_glm_data(GAUSSIAN, 20, 3, seed=2)
        with pytest.raises(InputValidationError):
            fit_penalized_glm(
                X, y, GAUSSIAN, PenaltySpec(lambda1=0.1, factors=np.ones(4)), RAW
            )

    def test_shape_mismatch(self):
        X, y, _ = make_glm_data(GAUSSIAN, 20, 3, seed=2)
        with pytest.raises(InputValidationError):
            fit_penalized_glm(X[:10], y, GAUSSIAN, PenaltySpec(), RAW)

    def test_non_finite_design(self):
        X, y, _ = make_glm_data(GAUSSIAN, 20, 3, seed=2)
        X[0, 0] = np.nan
        with pytest.raises(InputValidationError):
            fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(), RAW)


@settings(max_examples=120, deadline=None)
@given(z=st.floats(-50, 50), gamma=st.floats(0, 20))
def test_soft_threshold_properties(z, gamma):
    s = soft_threshold(z, gamma)
    if abs(z) <= gamma:
        assert s == 0.0
    else:
        assert np.sign(s) == np.sign(z)
        assert abs(s) == pytest.approx(abs(z) - gamma, abs=1e-12)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(1e-3, 0.5))
def test_random_gaussian_fits_certify(seed, lam):
    X, y, _ = make_glm_data(GAUSSIAN, 40, 4, seed=seed)
    fit = fit_penalized_glm(X, y, GAUSSIAN, PenaltySpec(lambda1=lam), RAW)
    assert fit.converged
    assert_kkt_certificate(fit, X, y, GAUSSIAN, RAW)


def test_kernel_implementations_agree():
    # the jitted and pure-python coordinate kernels must produce identical fits
    code = (
        "import numpy as np\n"
        "from conftest import make_glm_data\n"
        "from glmci import FamilySpec\n"
        "from glmci.solver import PenaltySpec, SolverConfig, fit_penalized_glm\n"
        "X, y, _ = make_glm_data(FamilySpec('poisson'), 60, 5, seed=77)\n"
        "fit = fit_penalized_glm(X, y, FamilySpec('poisson'),\n"
        "    PenaltySpec(lambda1=0.05), SolverConfig(fit_intercept=False))\n"
        "print(repr(fit.beta.tobytes().hex()))\n"
    )
    env = dict(os.environ)
    env["PYTHONPATH"] = os.path.dirname(__file__)
    out = []
    for disable in ("0", "1"):
        env["GLMCI_DISABLE_NUMBA"] = disable
        r = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env,
            cwd=os.path.dirname(__file__),
        )
        assert r.returncode == 0, r.stderr
        out.append(r.stdout.strip())
    assert out[0] == out[1]
