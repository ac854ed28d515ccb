"""De-biased lasso estimators and Wald-style intervals.

The gaussian path solves one relaxed-projection program per coordinate

    min u' Sigma u   subject to  ||Sigma u - e_j||_inf <= mu

via its penalized equivalent min 0.5 u'Sigma u - u_j + mu ||u||_1, whose
solution is feasible for the constrained program and attains its optimum.
The GLM path estimates the inverse Hessian either by nodewise lasso
regressions on the weighted design or by direct inversion when the
weighted Gram matrix is well conditioned.

All routines here expect the design to own its intercept: fit with an
explicit ones column carrying a zero penalty factor (fit_intercept=False),
so every coordinate, intercept included, is de-biased uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import families
from .bootstrap import IntervalTable
from .errors import (
    ConditioningError,
    ConfigError,
    InfeasibleConstraintError,
    InputValidationError,
    SingularityError,
)
from .families import FamilySpec
from .solver import FitResult, PenaltySpec, SolverConfig, _cd_kernel, cross_validate, fit_penalized_glm

DIRECT_COND_LIMIT = 1e12
FEASIBILITY_SLACK = 1e-9


@dataclass
class PrecisionEstimate:
    """Row-wise estimate of the inverse of a weighted Gram matrix."""

    theta: np.ndarray
    tau_sq: np.ndarray
    lambda_js: np.ndarray
    method: str


@dataclass
class DebiasResult:
    b_debiased: np.ndarray
    variance_diag: np.ndarray
    intervals: IntervalTable
    m_matrix: np.ndarray | None = None


def default_projection_mu(n: int, p: int) -> float:
    return float(np.sqrt(np.log(p) / n))


def solve_u_column(
    sigma_hat: np.ndarray,
    j: int,
    mu: float,
    tol: float = 1e-10,
    max_sweeps: int = 50000,
) -> np.ndarray:
    """Relaxed projection of the j-th unit vector through Sigma.

    Solves min u'Sigma u s.t. ||Sigma u - e_j||_inf <= mu by coordinate
    descent on the equivalent penalized program. With Sigma = I the
    solution is (1 - mu) e_j, and any mu >= 1 admits u = 0. Raises when the
    iterate stays infeasible, which signals that mu is too small for this
    Sigma (possible only when Sigma is singular).
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    p = sigma_hat.shape[0]
    if sigma_hat.shape != (p, p):
        raise InputValidationError("sigma_hat must be square")
    if not 0 <= j < p:
        raise InputValidationError(f"column index {j} outside 0..{p - 1}")
    if mu < 0:
        raise ConfigError("mu must be nonnegative")
    c = np.zeros(p)
    c[j] = 1.0
    u = np.zeros(p)
    pen1 = np.full(p, float(mu))
    pen2 = np.zeros(p)
    sweeps = _cd_kernel(
        np.ascontiguousarray(sigma_hat), c, u, pen1, pen2, tol, max_sweeps
    )
    slack = float(np.max(np.abs(sigma_hat @ u - c)))
    if not np.all(np.isfinite(u)) or slack > mu + FEASIBILITY_SLACK or sweeps >= max_sweeps:
        raise InfeasibleConstraintError(
            f"projection for column {j} infeasible at mu={mu} "
            f"(constraint slack {slack:.3e}); increase mu"
        )
    return u


def _require_design_owned_intercept(fit: FitResult):
    if fit.intercept != 0.0:
        raise InputValidationError(
            "de-biasing expects the design to carry its own intercept column; "
            "fit with fit_intercept=False and a zero penalty factor for it"
        )


def debias_lm(
    fit: FitResult,
    X: np.ndarray,
    y: np.ndarray,
    mu: float | None = None,
    level: float = 0.95,
) -> DebiasResult:
    """De-biased gaussian lasso with normal-theory intervals.

    b = beta_hat + M X'(y - X beta_hat)/n where row j of M solves the
    relaxed projection program; V_j = sigma_eps^2 u_j' Sigma u_j / n with
    sigma_eps^2 the residual variance under an active-set df correction.
    """
    _require_design_owned_intercept(fit)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if fit.beta.shape[0] != p:
        raise InputValidationError("fit and design disagree on the number of columns")
    if mu is None:
        mu = default_projection_mu(n, p)
    sigma = X.T @ X / n
    M = np.empty((p, p))
    for j in range(p):
        M[j] = solve_u_column(sigma, j, mu)
    resid = y - X @ fit.beta
    df = int(np.sum(fit.beta != 0))
    if n - df < 1:
        raise InputValidationError(
            f"residual variance needs n larger than the active set ({df})"
        )
    sigma_eps_sq = float(resid @ resid) / (n - df)
    b = fit.beta + M @ (X.T @ resid) / n
    variance = sigma_eps_sq * np.einsum("jk,kl,jl->j", M, sigma, M) / n
    z = ndtri(0.5 + level / 2.0)
    half = z * np.sqrt(variance)
    table = IntervalTable(
        method="debias-lm",
        level=level,
        point_estimate=b,
        lower=b - half,
        upper=b + half,
        diagnostics={"mu": mu, "sigma_eps_sq": sigma_eps_sq},
    )
    return DebiasResult(b_debiased=b, variance_diag=variance, intervals=table, m_matrix=M)


def weighted_design(
    X: np.ndarray,
    fit: FitResult,
    family: FamilySpec,
    y: np.ndarray | None = None,
) -> np.ndarray:
    """Rows of X scaled by the root curvature of the loss at the fit.

    With y supplied the weights are the observed per-observation second
    derivatives, making X_w' X_w / n the exact Hessian of the loss at the
    fitted coefficients. Without y the expected information at the fitted
    means is used; the two coincide for gaussian and poisson. Nonpositive
    curvature (possible only for gaussian with log link) is rejected.
    """
    X = np.asarray(X, dtype=float)
    eta = fit.predict_eta(X)
    if y is not None:
        w = families.loss_second_derivative(family, y, eta)
    else:
        w = families.irls_weights(family, families.mean_from_eta(family, eta))
    if np.any(w <= 0):
        bad = int(np.flatnonzero(w <= 0)[0])
        raise InputValidationError(
            f"nonpositive curvature weight at observation {bad}; cannot form the weighted design"
        )
    return X * np.sqrt(w)[:, None]


def select_nodewise_lambda(
    Xw: np.ndarray,
    K: int = 5,
    seed=0,
    n_lambda: int = 30,
    lambda_min_ratio: float = 1e-3,
) -> float:
    """Shared nodewise penalty from a CV run on the first-column regression."""
    Xw = np.asarray(Xw, dtype=float)
    if Xw.shape[1] < 2:
        raise InputValidationError("nodewise regression needs at least two columns")
    cfg = SolverConfig(fit_intercept=False, standardize=False)
    cv = cross_validate(
        Xw[:, 1:], Xw[:, 0], FamilySpec("gaussian"), K=K, seed=seed,
        config=cfg, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio,
    )
    return cv.best_lambda


def nodewise_theta(Xw: np.ndarray, lambda_js) -> PrecisionEstimate:
    """Nodewise-lasso rows of the inverse weighted Gram matrix.

    Row j regresses column j on the others at penalty lambda_js[j]; the
    row is [-gamma_j, 1, -gamma_j] / tau_j^2 with tau_j^2 the residual
    mean square plus lambda_js[j] ||gamma_j||_1. lambda_js[j] = 0 falls
    back to the exact least-squares regression, which reproduces the
    direct inverse when it exists.
    """
    Xw = np.asarray(Xw, dtype=float)
    n, p = Xw.shape
    lambda_js = np.asarray(lambda_js, dtype=float)
    if lambda_js.shape != (p,):
        raise InputValidationError(f"lambda_js must have length {p}")
    if np.any(lambda_js < 0):
        raise ConfigError("nodewise penalties must be nonnegative")
    theta = np.zeros((p, p))
    tau_sq = np.empty(p)
    cfg = SolverConfig(fit_intercept=False, standardize=False)
    others = np.arange(p)
    for j in range(p):
        rest = np.delete(others, j)
        xj = Xw[:, j]
        Xrest = Xw[:, rest]
        if lambda_js[j] == 0.0:
            gram = Xrest.T @ Xrest
            try:
                gamma = np.linalg.solve(gram, Xrest.T @ xj)
            except np.linalg.LinAlgError as exc:
                raise SingularityError(
                    f"column {j}: exact collinearity in the nodewise regression"
                ) from exc
        else:
            nfit = fit_penalized_glm(
                Xrest, xj, FamilySpec("gaussian"),
                PenaltySpec(lambda1=float(lambda_js[j])), cfg,
            )
            gamma = nfit.beta
        resid = xj - Xrest @ gamma
        t2 = float(resid @ resid) / n + float(lambda_js[j]) * float(np.sum(np.abs(gamma)))
        if not np.isfinite(t2) or t2 <= 0:
            raise SingularityError(f"column {j}: nonpositive nodewise scale tau^2={t2!r}")
        tau_sq[j] = t2
        theta[j, j] = 1.0 / t2
        theta[j, rest] = -gamma / t2
    return PrecisionEstimate(theta=theta, tau_sq=tau_sq, lambda_js=lambda_js, method="nodewise")


def direct_theta(Xw: np.ndarray) -> PrecisionEstimate:
    """Inverse of the weighted Gram matrix, guarded by a condition check."""
    Xw = np.asarray(Xw, dtype=float)
    n, p = Xw.shape
    sigma = Xw.T @ Xw / n
    cond = float(np.linalg.cond(sigma))
    if not np.isfinite(cond) or cond >= DIRECT_COND_LIMIT:
        raise ConditioningError(
            f"weighted Gram condition number {cond:.3e} exceeds {DIRECT_COND_LIMIT:.0e}; "
            "use the nodewise estimator",
            cond=cond,
        )
    theta = np.linalg.inv(sigma)
    theta = 0.5 * (theta + theta.T)
    return PrecisionEstimate(
        theta=theta,
        tau_sq=1.0 / np.diag(theta),
        lambda_js=np.zeros(p),
        method="direct",
    )


def debias_glm(
    fit: FitResult,
    X: np.ndarray,
    y: np.ndarray,
    family: FamilySpec,
    theta: PrecisionEstimate,
    level: float = 0.95,
    dispersion: float | None = None,
) -> DebiasResult:
    """One-step de-biased GLM lasso with plug-in Wald intervals.

    b = beta_hat - Theta grad(loss); var_j = phi (Theta Sigma Theta')_jj/n,
    where Sigma is the Hessian of the loss at the fit (weighted Gram of
    the observed-curvature design). The dispersion is 1 for poisson and a
    Pearson estimate otherwise unless supplied. With an unpenalized fit and
    the direct Theta this reduces to the classical Wald interval.
    """
    _require_design_owned_intercept(fit)
    X = np.asarray(X, dtype=float)
    y = families.validate_response(family, y)
    n, p = X.shape
    if fit.beta.shape[0] != p or theta.theta.shape != (p, p):
        raise InputValidationError("fit, design and theta disagree on dimensions")
    grad = families.nll_gradient(family, X, y, fit.beta)
    b = fit.beta - theta.theta @ grad
    Xw = weighted_design(X, fit, family, y)
    sigma = Xw.T @ Xw / n
    if dispersion is None:
        mu_hat = fit.predict_mean(X)
        df = int(np.sum(fit.beta != 0))
        phi = families.estimate_dispersion(family, y, mu_hat, df)
    else:
        phi = float(dispersion)
    variance = phi * np.einsum("jk,kl,jl->j", theta.theta, sigma, theta.theta) / n
    z = ndtri(0.5 + level / 2.0)
    half = z * np.sqrt(variance)
    table = IntervalTable(
        method="debias-glm",
        level=level,
        point_estimate=b,
        lower=b - half,
        upper=b + half,
        diagnostics={"dispersion": phi, "theta_method": theta.method},
    )
    return DebiasResult(b_debiased=b, variance_diag=variance, intervals=table)
