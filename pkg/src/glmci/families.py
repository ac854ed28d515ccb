"""Response-family calculus for penalized GLM fitting.

Four families are supported: gaussian, poisson, negative binomial with fixed
size, and Tweedie compound Poisson-gamma with power in (1, 2). All families
except gaussian use the log link; gaussian defaults to the identity link.
Losses are average negative log-likelihoods, so objectives and gradients stay
O(1) as n grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import InputValidationError, NumericOverflowError, UnsupportedFamilyError

FAMILY_KINDS = ("gaussian", "poisson", "negbin", "tweedie")
LINKS = ("identity", "log")

# Linear predictors are clamped to this band before exponentiation. Wide
# enough that it never binds on sane data, tight enough that exp() cannot
# overflow for any supported family.
ETA_CLAMP = 30.0


@dataclass(frozen=True)
class FamilySpec:
    """Immutable description of a response family.

    power_p applies to tweedie only and must lie strictly inside (1, 2).
    negbin_size is the size parameter of the negative binomial (its
    variance is mu + mu^2/negbin_size). dispersion_phi scales the variance
    for gaussian and tweedie; poisson and negbin fix it at 1.
    """

    kind: str
    link: str = ""
    power_p: float = 1.5
    dispersion_phi: float = 1.0
    negbin_size: float = 4.5

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise UnsupportedFamilyError(f"unknown family kind {self.kind!r}")
        link = self.link or ("identity" if self.kind == "gaussian" else "log")
        object.__setattr__(self, "link", link)
        if self.link not in LINKS:
            raise UnsupportedFamilyError(f"unknown link {self.link!r}")
        if self.link == "identity" and self.kind != "gaussian":
            raise UnsupportedFamilyError(
                f"identity link is only valid for gaussian, got {self.kind}"
            )
        if self.kind == "tweedie" and not (1.0 < self.power_p < 2.0):
            raise InputValidationError(
                f"tweedie power must lie in (1, 2), got {self.power_p}"
            )
        if self.dispersion_phi <= 0:
            raise InputValidationError("dispersion_phi must be positive")
        if self.kind == "negbin" and self.negbin_size <= 0:
            raise InputValidationError("negbin_size must be positive")


def clamp_eta(eta: np.ndarray) -> np.ndarray:
    return np.clip(eta, -ETA_CLAMP, ETA_CLAMP)


def eta_was_clamped(eta: np.ndarray) -> bool:
    return bool(np.any(np.abs(eta) > ETA_CLAMP))


def mean_from_eta(family: FamilySpec, eta: np.ndarray) -> np.ndarray:
    """Inverse link applied to a (clamped) linear predictor."""
    if family.link == "identity":
        return np.asarray(eta, dtype=float)
    return np.exp(clamp_eta(np.asarray(eta, dtype=float)))


def validate_response(family: FamilySpec, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InputValidationError("response must be a 1-d vector")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise InputValidationError(f"non-finite response at index {bad}")
    if family.kind in ("poisson", "negbin", "tweedie") and np.any(y < 0):
        bad = int(np.flatnonzero(y < 0)[0])
        raise InputValidationError(
            f"{family.kind} responses must be nonnegative, index {bad} is {y[bad]}"
        )
    return y


def _is_integral(y: np.ndarray) -> bool:
    return bool(np.all(y == np.floor(y)))


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        idx = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericOverflowError(f"non-finite {what} at observation {idx}", index=idx)


def _per_obs_nll(family: FamilySpec, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    eta = clamp_eta(np.asarray(eta, dtype=float))
    y = np.asarray(y, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        if family.link == "log":
            return 0.5 * (y - np.exp(eta)) ** 2
        return 0.5 * (y - eta) ** 2
    if kind == "poisson":
        out = np.exp(eta) - y * eta
        if _is_integral(y):
            out = out + gammaln(y + 1.0)
        return out
    if kind == "negbin":
        theta = family.negbin_size
        # log(theta + mu) computed in log space: logaddexp(log theta, eta)
        lse = np.logaddexp(np.log(theta), eta)
        out = -theta * (np.log(theta) - lse) - y * (eta - lse)
        if _is_integral(y):
            out = out - (gammaln(y + theta) - gammaln(theta) - gammaln(y + 1.0))
        return out
    # tweedie
    p = family.power_p
    return -y * np.exp((1.0 - p) * eta) / (1.0 - p) + np.exp((2.0 - p) * eta) / (2.0 - p)


def neg_log_lik(family: FamilySpec, y: np.ndarray, eta: np.ndarray) -> float:
    """Average negative log-likelihood at a linear predictor.

    Poisson and negbin keep their y-dependent constant terms (log y!,
    log-gamma blocks) only when every response value is integral; for
    non-integral counts the quasi-likelihood form drops them, which leaves
    all derivatives in beta unchanged. Tweedie always uses the quasi form
    without its dispersion-dependent normalizer.
    """
    with np.errstate(over="ignore"):  # overflow surfaces via the finite check
        vals = _per_obs_nll(family, y, eta)
    _check_finite(vals, "loss value")
    return float(np.mean(vals))


def loss_derivative(family: FamilySpec, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Per-observation d(nll)/d(eta), evaluated at the clamped predictor."""
    eta = clamp_eta(np.asarray(eta, dtype=float))
    y = np.asarray(y, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        if family.link == "log":
            mu = np.exp(eta)
            out = (mu - y) * mu
        else:
            out = eta - y
    elif kind == "poisson":
        out = np.exp(eta) - y
    elif kind == "negbin":
        theta = family.negbin_size
        mu = np.exp(eta)
        out = mu * (theta + y) / (theta + mu) - y
    else:
        p = family.power_p
        out = -y * np.exp((1.0 - p) * eta) + np.exp((2.0 - p) * eta)
    _check_finite(out, "loss derivative")
    return out


def loss_second_derivative(family: FamilySpec, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Per-observation d2(nll)/d(eta)2 with the observed response plugged in.

    This is the curvature that makes X'WX/n the exact Hessian of the loss;
    it differs from irls_weights for negbin and tweedie whenever y != mu.
    Positive for all supported families except gaussian with log link, where
    callers must check the sign themselves.
    """
    eta = clamp_eta(np.asarray(eta, dtype=float))
    y = np.asarray(y, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        if family.link == "log":
            mu = np.exp(eta)
            out = mu * (2.0 * mu - y)
        else:
            out = np.ones_like(eta)
    elif kind == "poisson":
        out = np.exp(eta)
    elif kind == "negbin":
        theta = family.negbin_size
        mu = np.exp(eta)
        out = theta * mu * (theta + y) / (theta + mu) ** 2
    else:
        p = family.power_p
        out = y * (p - 1.0) * np.exp((1.0 - p) * eta) + (2.0 - p) * np.exp((2.0 - p) * eta)
    _check_finite(out, "loss curvature")
    return out


def nll_gradient(family: FamilySpec, X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of neg_log_lik(y, X beta) with respect to beta."""
    X = np.asarray(X, dtype=float)
    eta = X @ np.asarray(beta, dtype=float)
    d = loss_derivative(family, y, eta)
    return X.T @ d / X.shape[0]


def irls_weights(family: FamilySpec, mu: np.ndarray) -> np.ndarray:
    """Expected-information weights at fitted means (log link except gaussian)."""
    mu = np.asarray(mu, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        if family.link == "log":
            return mu**2
        return np.ones_like(mu)
    if np.any(mu <= 0):
        raise InputValidationError("irls weights need strictly positive means")
    if kind == "poisson":
        return mu
    if kind == "negbin":
        theta = family.negbin_size
        return mu * theta / (theta + mu)
    return mu ** (2.0 - family.power_p)


def variance_function(family: FamilySpec, mu: np.ndarray) -> np.ndarray:
    """Unit variance V(mu), without the dispersion factor."""
    mu = np.asarray(mu, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        return np.ones_like(mu)
    if kind == "poisson":
        return mu
    if kind == "negbin":
        return mu + mu**2 / family.negbin_size
    return mu**family.power_p


def _check_positive_mu(family: FamilySpec, mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if family.kind != "gaussian" and np.any(mu <= 0):
        raise InputValidationError(f"{family.kind} residuals need mu > 0")
    return mu


def pearson_residuals(family: FamilySpec, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """(y - mu) / sqrt(v) with the same v used for bootstrap reconstruction.

    v is phi for gaussian, mu for poisson, mu + mu^2/size for negbin and
    phi * mu^p for tweedie. Only gaussian and tweedie carry the dispersion.
    """
    y = np.asarray(y, dtype=float)
    mu = _check_positive_mu(family, mu)
    return (y - mu) / np.sqrt(residual_variance(family, mu))


def residual_variance(family: FamilySpec, mu: np.ndarray) -> np.ndarray:
    """The v entering Pearson residuals and replicate reconstruction."""
    mu = np.asarray(mu, dtype=float)
    kind = family.kind
    if kind == "gaussian":
        return np.full_like(mu, family.dispersion_phi)
    if kind == "poisson":
        return mu
    if kind == "negbin":
        return mu + mu**2 / family.negbin_size
    return family.dispersion_phi * mu**family.power_p


def unit_deviance(family: FamilySpec, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mu = _check_positive_mu(family, mu)
    kind = family.kind
    if kind == "gaussian":
        return (y - mu) ** 2
    if kind == "poisson":
        return 2.0 * (xlogy(y, y / mu) - (y - mu))
    if kind == "negbin":
        theta = family.negbin_size
        return 2.0 * (xlogy(y, y / mu) - (y + theta) * np.log((y + theta) / (mu + theta)))
    p = family.power_p
    return 2.0 * (
        y * mu ** (1.0 - p) / (p - 1.0)
        - y ** (2.0 - p) / ((p - 1.0) * (2.0 - p))
        + mu ** (2.0 - p) / (2.0 - p)
    )


def deviance_residuals(family: FamilySpec, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """sign(y - mu) * sqrt(unit deviance)."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = unit_deviance(family, y, mu)
    # tiny negative values from cancellation are truncated before the root
    return np.sign(y - mu) * np.sqrt(np.maximum(d, 0.0))


def anscombe_residuals(family: FamilySpec, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Tweedie-only Anscombe residuals (3/(3-p)) (y^(1-p/3) - mu^(1-p/3)) / mu^(p/6)."""
    if family.kind != "tweedie":
        raise UnsupportedFamilyError("anscombe residuals are defined here for tweedie only")
    y = np.asarray(y, dtype=float)
    mu = _check_positive_mu(family, mu)
    p = family.power_p
    return (3.0 / (3.0 - p)) * (y ** (1.0 - p / 3.0) - mu ** (1.0 - p / 3.0)) / mu ** (p / 6.0)


def estimate_dispersion(family: FamilySpec, y: np.ndarray, mu: np.ndarray, df_used: int) -> float:
    """Pearson chi-square dispersion estimate with df correction.

    Returns sum((y - mu)^2 / V(mu)) / (n - df_used), except poisson where
    the dispersion is fixed at 1 by definition.
    """
    if family.kind == "poisson":
        return 1.0
    y = np.asarray(y, dtype=float)
    mu = _check_positive_mu(family, mu)
    n = y.shape[0]
    if n - df_used < 1:
        raise InputValidationError(
            f"dispersion needs n - df_used >= 1, got n={n}, df_used={df_used}"
        )
    chi2 = float(np.sum((y - mu) ** 2 / variance_function(family, mu)))
    return chi2 / (n - df_used)
