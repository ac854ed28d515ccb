"""Loss values, derivatives and residuals for the four response families.

Frozen constants were computed independently with 50-digit mpmath
arithmetic; derivative identities are checked against central finite
differences of the loss itself.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_gradient
from glmci import FamilySpec, NumericOverflowError, UnsupportedFamilyError
from glmci.errors import InputValidationError
from glmci.families import (
    anscombe_residuals,
    clamp_eta,
    deviance_residuals,
    estimate_dispersion,
    eta_was_clamped,
    irls_weights,
    loss_derivative,
    loss_second_derivative,
    mean_from_eta,
    neg_log_lik,
    nll_gradient,
    pearson_residuals,
    unit_deviance,
    validate_response,
    variance_function,
)

GAUSSIAN = FamilySpec("gaussian")
POISSON = FamilySpec("poisson")
NEGBIN = FamilySpec("negbin", negbin_size=4.5)
TWEEDIE = FamilySpec("tweedie", power_p=1.5)
ALL_FAMILIES = [GAUSSIAN, POISSON, NEGBIN, TWEEDIE]


def _ids(fams):
    return [f.kind for f in fams]


class TestFrozenValues:
    def test_gaussian_nll(self):
        assert neg_log_lik(GAUSSIAN, np.array([1.0, 3.0]), np.zeros(2)) == pytest.approx(
            2.5, abs=1e-14
        )

    def test_poisson_nll_integral(self):
        assert neg_log_lik(POISSON, np.array([1.0]), np.array([0.0])) == pytest.approx(
            1.0, abs=1e-14
        )

    def test_poisson_nll_quasi(self):
        # non-integral response drops the log-factorial constant
        val = neg_log_lik(POISSON, np.array([2.5]), np.array([0.3]))
        assert val == pytest.approx(np.exp(0.3) - 2.5 * 0.3, abs=1e-14)

    def test_negbin_nll(self):
        val = neg_log_lik(NEGBIN, np.array([2.0]), np.array([0.3]))
        assert val == pytest.approx(1.5976873217721569, abs=1e-13)

    def test_negbin_nll_quasi(self):
        val = neg_log_lik(NEGBIN, np.array([2.5]), np.array([0.3]))
        assert val == pytest.approx(4.8465743929746143, abs=1e-13)

    def test_tweedie_nll_zero_response(self):
        # y=0, eta=0: only the normalizer term survives, e^{0.5}/0.5
        assert neg_log_lik(TWEEDIE, np.array([0.0]), np.array([0.0])) == pytest.approx(
            2.0, abs=1e-14
        )

    def test_tweedie_loss_derivative(self):
        val = loss_derivative(TWEEDIE, np.array([2.0]), np.array([0.3]))[0]
        assert val == pytest.approx(-0.55958171012183249, abs=1e-14)

    def test_negbin_loss_derivative(self):
        val = loss_derivative(NEGBIN, np.array([5.0]), np.array([np.log(2.0)]))[0]
        assert val == pytest.approx(-2.0769230769230769, abs=1e-13)

    def test_poisson_unit_deviance(self):
        val = unit_deviance(POISSON, np.array([3.0]), np.array([2.0]))[0]
        assert val == pytest.approx(0.43279064864898629, abs=1e-14)

    def test_negbin_unit_deviance(self):
        val = unit_deviance(NEGBIN, np.array([3.0]), np.array([2.0]))[0]
        assert val == pytest.approx(0.28627799403888634, abs=1e-14)

    def test_tweedie_unit_deviance_and_residual(self):
        val = unit_deviance(TWEEDIE, np.array([2.0]), np.array([1.0]))[0]
        assert val == pytest.approx(0.68629150101523961, abs=1e-14)
        res = deviance_residuals(TWEEDIE, np.array([2.0]), np.array([1.0]))[0]
        assert res == pytest.approx(0.8284271247461901, abs=1e-14)

    def test_negbin_pearson_residual(self):
        res = pearson_residuals(NEGBIN, np.array([5.0]), np.array([2.0]))[0]
        assert res == pytest.approx(1.7650452162436563, abs=1e-14)

    def test_tweedie_anscombe_residual(self):
        res = anscombe_residuals(TWEEDIE, np.array([4.0]), np.array([1.0]))[0]
        assert res == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("family", ALL_FAMILIES, ids=_ids(ALL_FAMILIES))
class TestDerivatives:
    def test_first_derivative_matches_fd(self, family):
        rng = np.random.default_rng(42)
        y = rng.poisson(2.0, 12).astype(float) if family.kind != "gaussian" else rng.normal(size=12)
        if family.kind == "tweedie":
            y[::3] = 0.0
        eta = rng.uniform(-1.5, 1.5, 12)
        analytic = loss_derivative(family, y, eta)
        for i in range(12):
            f = lambda e: neg_log_lik(family, y[i : i + 1], e) * 1.0
            num = fd_gradient(f, eta[i : i + 1], h=1e-6)[0]
            assert analytic[i] == pytest.approx(num, rel=2e-6, abs=2e-8)

    def test_second_derivative_matches_fd(self, family):
        rng = np.random.default_rng(7)
        y = rng.poisson(2.0, 10).astype(float) if family.kind != "gaussian" else rng.normal(size=10)
        eta = rng.uniform(-1.2, 1.2, 10)
        analytic = loss_second_derivative(family, y, eta)
        h = 1e-5
        num = (
            loss_derivative(family, y, eta + h) - loss_derivative(family, y, eta - h)
        ) / (2 * h)
        np.testing.assert_allclose(analytic, num, rtol=5e-5, atol=1e-7)

    def test_gradient_matches_fd(self, family):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(25, 4))
        beta0 = np.array([0.3, -0.2, 0.1, 0.0])
        y = (
            rng.poisson(np.exp(X @ beta0)).astype(float)
            if family.kind != "gaussian"
            else X @ beta0 + rng.normal(size=25)
        )
        g = nll_gradient(family, X, y, beta0)
        num = fd_gradient(lambda b: neg_log_lik(family, y, X @ b), beta0, h=1e-6)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-8)

    def test_second_derivative_positive(self, family):
        rng = np.random.default_rng(11)
        y = rng.poisson(3.0, 40).astype(float)
        if family.kind == "gaussian":
            y = rng.normal(size=40)
        eta = rng.uniform(-3.0, 3.0, 40)
        w = loss_second_derivative(family, y, eta)
        if family.kind == "tweedie":
            # curvature can reach zero only at y = mu = 0
            assert np.all(w >= 0)
            assert np.all(w[y > 0] > 0)
        else:
            assert np.all(w > 0)

    def test_irls_weights_positive(self, family):
        mu = np.array([0.2, 1.0, 7.5])
        assert np.all(irls_weights(family, mu) > 0)


class TestResiduals:
    @pytest.mark.parametrize("family", ALL_FAMILIES, ids=_ids(ALL_FAMILIES))
    def test_all_residuals_vanish_at_fitted_mean(self, family):
        mu = np.array([0.5, 1.0, 2.5, 4.0])
        y = mu.copy()
        assert np.all(pearson_residuals(family, y, mu) == 0)
        np.testing.assert_allclose(deviance_residuals(family, y, mu), 0.0, atol=1e-12)
        if family.kind == "tweedie":
            np.testing.assert_allclose(anscombe_residuals(family, y, mu), 0.0, atol=1e-12)

    def test_anscombe_requires_tweedie(self):
        with pytest.raises(UnsupportedFamilyError):
            anscombe_residuals(POISSON, np.array([1.0]), np.array([1.0]))

    def test_deviance_residual_sign(self):
        mu = np.array([2.0, 2.0])
        y = np.array([3.0, 1.0])
        res = deviance_residuals(POISSON, y, mu)
        assert res[0] > 0 > res[1]

    def test_poisson_dispersion_fixed_at_one(self):
        y = np.array([0.0, 3.0, 1.0, 5.0])
        mu = np.array([1.0, 2.0, 1.5, 4.0])
        assert estimate_dispersion(POISSON, y, mu, df_used=2) == 1.0

    def test_pearson_dispersion_matches_manual(self):
        rng = np.random.default_rng(5)
        mu = rng.uniform(0.5, 3.0, 30)
        y = rng.normal(mu, 1.3)
        fam = FamilySpec("gaussian", link="log")
        manual = np.sum((y - mu) ** 2 / variance_function(fam, mu)) / (30 - 4)
        assert estimate_dispersion(fam, y, mu, df_used=4) == pytest.approx(manual, rel=1e-12)


class TestValidation:
    def test_negative_counts_rejected(self):
        with pytest.raises(InputValidationError):
            validate_response(POISSON, np.array([1.0, -1.0]))

    def test_non_finite_rejected(self):
        with pytest.raises(InputValidationError):
            validate_response(GAUSSIAN, np.array([1.0, np.inf]))

    def test_two_dimensional_rejected(self):
        with pytest.raises(InputValidationError):
            validate_response(GAUSSIAN, np.ones((3, 2)))

    def test_tweedie_power_domain(self):
        with pytest.raises(InputValidationError):
            FamilySpec("tweedie", power_p=2.0)
        with pytest.raises(InputValidationError):
            FamilySpec("tweedie", power_p=1.0)

    def test_identity_link_only_gaussian(self):
        with pytest.raises(UnsupportedFamilyError):
            FamilySpec("poisson", link="identity")

    def test_unknown_family(self):
        with pytest.raises(UnsupportedFamilyError):
            FamilySpec("binomial")

    def test_overflow_reports_index(self):
        y = np.array([0.0, 1e200, 1.0])
        with pytest.raises(NumericOverflowError) as exc:
            neg_log_lik(GAUSSIAN, y, np.zeros(3))
        assert exc.value.index == 1

    def test_eta_clamp(self):
        eta = np.array([-50.0, 0.0, 50.0])
        clamped = clamp_eta(eta)
        assert eta_was_clamped(eta)
        assert not eta_was_clamped(clamped)
        np.testing.assert_array_equal(clamped, [-30.0, 0.0, 30.0])
        mu = mean_from_eta(POISSON, eta)
        assert mu[2] == pytest.approx(np.exp(30.0))


@settings(max_examples=60, deadline=None)
@given(
    y=st.floats(0.0, 40.0),
    eta=st.floats(-4.0, 4.0),
    kind=st.sampled_from(["poisson", "negbin", "tweedie"]),
)
def test_unit_deviance_nonnegative(y, eta, kind):
    fam = {"poisson": POISSON, "negbin": NEGBIN, "tweedie": TWEEDIE}[kind]
    mu = mean_from_eta(fam, np.array([eta]))
    d = unit_deviance(fam, np.array([y]), mu)[0]
    assert d >= -1e-12
    d_self = unit_deviance(fam, np.array([max(y, 1e-6)]), np.array([max(y, 1e-6)]))[0]
    assert abs(d_self) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(
    y=st.floats(0.0, 30.0),
    eta=st.floats(-3.5, 3.5),
    kind=st.sampled_from(["gaussian", "poisson", "negbin", "tweedie"]),
)
def test_loss_derivative_consistent_with_fd(y, eta, kind):
    fam = {
        "gaussian": GAUSSIAN, "poisson": POISSON, "negbin": NEGBIN, "tweedie": TWEEDIE
    }[kind]
    ya = np.array([float(y)])
    d = loss_derivative(fam, ya, np.array([eta]))[0]
    h = 1e-5
    num = (
        neg_log_lik(fam, ya, np.array([eta + h])) - neg_log_lik(fam, ya, np.array([eta - h]))
    ) / (2 * h)
    assert d == pytest.approx(num, rel=5e-4, abs=5e-6)


@settings(max_examples=40, deadline=None)
@given(eta1=st.floats(-4, 4), eta2=st.floats(-4, 4))
def test_mean_monotone_in_eta(eta1, eta2):
    lo, hi = sorted([eta1, eta2])
    for fam in ALL_FAMILIES:
        m = mean_from_eta(fam, np.array([lo, hi]))
        assert m[0] <= m[1] + 1e-15
