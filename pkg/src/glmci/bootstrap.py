"""Bootstrap confidence-interval engines for penalized GLMs.

Four schemes share one replicate runner:

- residual_bootstrap_lm: gaussian residual resampling around the
  threshold-modified lasso estimate.
- residual_bootstrap_glm: Pearson-style residual resampling on the mean
  scale with nonnegativity clamping for count and Tweedie responses.
- paired_bootstrap_glm: row resampling with a lasso refit per replicate.
- plr_glm: row resampling with a lasso selection step followed by a ridge
  refit that penalizes only the coordinates the lasso zeroed.

All engines derive replicate seeds purely from (master_seed,
replicate_index, retry), so results are identical for any worker count and
any execution order. Quantiles are type-7 (numpy's default linear
interpolation) everywhere.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import families
from .errors import ConfigError, DegenerateDataError, InputValidationError, ReplicateFailureError
from .families import FamilySpec
from .solver import CvResult, FitResult, PenaltySpec, SolverConfig, cross_validate, fit_penalized_glm, lambda_path

_SEED_DOMAIN_REPLICATE = 7

RESIDUAL_TYPES = ("pearson", "deviance", "anscombe")
CI_VARIANTS = ("hybrid", "basic")
COUNT_FAMILIES = ("poisson", "negbin", "tweedie")
CLAMP_FLAG_THRESHOLD = 0.2


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, level, seed and scheme options shared by all engines."""

    n_replicates: int = 1000
    level: float = 0.95
    master_seed: int = 0
    a_n_constant: float = 1.0
    modified_rule: str = "drop-small"
    residual_type: str = "pearson"
    ci_variant: str = "hybrid"
    n_workers: int = 1
    max_retries: int = 10

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be positive")
        if self.n_replicates * (1.0 - self.level) / 2.0 < 1.0:
            raise ConfigError(
                f"{self.n_replicates} replicates cannot resolve the "
                f"{self.level} level tails; increase n_replicates"
            )
        if self.residual_type not in RESIDUAL_TYPES:
            raise ConfigError(f"residual_type must be one of {RESIDUAL_TYPES}")
        if self.ci_variant not in CI_VARIANTS:
            raise ConfigError(f"ci_variant must be one of {CI_VARIANTS}")
        if self.modified_rule not in ("drop-small", "drop-large"):
            raise ConfigError("modified_rule must be 'drop-small' or 'drop-large'")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be nonnegative")


@dataclass(frozen=True)
class LambdaRule:
    """How an engine picks lambda1 inside a replicate.

    mode 'fixed' uses `value` everywhere; mode 'cv' re-selects by K-fold
    cross-validation on each replicate sample (and on the full data for the
    point estimate when no value is given).
    """

    mode: str = "cv"
    value: float | None = None
    K: int = 5
    n_lambda: int = 30
    lambda_min_ratio: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("cv", "fixed"):
            raise ConfigError("LambdaRule.mode must be 'cv' or 'fixed'")
        if self.mode == "fixed" and (self.value is None or self.value < 0):
            raise ConfigError("fixed LambdaRule needs a nonnegative value")


@dataclass
class ReplicateDraw:
    replicate_index: int
    seed: int
    beta_star: np.ndarray


@dataclass
class IntervalTable:
    """Per-coefficient intervals produced by any CI method."""

    method: str
    level: float
    point_estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.point_estimate = np.asarray(self.point_estimate, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.point_estimate.shape == self.lower.shape == self.upper.shape):
            raise InputValidationError("interval arrays must share one shape")
        if np.any(self.lower > self.upper + 1e-12):
            raise InputValidationError("interval lower bounds exceed upper bounds")
        if self.names is not None and len(self.names) != self.lower.shape[0]:
            raise InputValidationError("names length does not match intervals")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_rows(self) -> list[dict]:
        rows = []
        for j in range(self.lower.shape[0]):
            rows.append(
                {
                    "coefficient_index": j,
                    "name": self.names[j] if self.names else f"x{j}",
                    "point_estimate": float(self.point_estimate[j]),
                    "lower": float(self.lower[j]),
                    "upper": float(self.upper[j]),
                    "width": float(self.upper[j] - self.lower[j]),
                    "method": self.method,
                    "level": self.level,
                }
            )
        return rows


def percentile_interval(draws, level, variant="plain", point=None, modified=None):
    """Interval brackets from replicate draws via type-7 quantiles.

    plain:  (q_lo, q_hi)
    basic:  (2 point - q_hi, 2 point - q_lo)
    hybrid: (point + modified - q_hi, point + modified - q_lo)
    """
    draws = np.asarray(draws, dtype=float)
    if not (0.0 < level < 1.0):
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    if variant == "plain":
        return q_lo, q_hi
    if variant == "basic":
        if point is None:
            raise ConfigError("basic variant needs the point estimate")
        point = np.asarray(point, dtype=float)
        return 2.0 * point - q_hi, 2.0 * point - q_lo
    if variant == "hybrid":
        if point is None or modified is None:
            raise ConfigError("hybrid variant needs point and modified estimates")
        point = np.asarray(point, dtype=float)
        modified = np.asarray(modified, dtype=float)
        return point + modified - q_hi, point + modified - q_lo
    raise ConfigError(f"unknown interval variant {variant!r}")


def modified_estimator(beta_hat, n: int, a_n_constant: float = 1.0, rule: str = "drop-small"):
    """Threshold a lasso estimate at a_n = const * n^(-1/4).

    'drop-small' zeroes |beta_j| <= a_n and keeps the rest. 'drop-large'
    is the mirrored variant that keeps only |beta_j| < a_n.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if n < 1:
        raise InputValidationError("n must be positive")
    if a_n_constant <= 0:
        raise ConfigError("a_n_constant must be positive")
    a_n = a_n_constant * float(n) ** -0.25
    if rule == "drop-small":
        return np.where(np.abs(beta_hat) > a_n, beta_hat, 0.0)
    if rule == "drop-large":
        return np.where(np.abs(beta_hat) < a_n, beta_hat, 0.0)
    raise ConfigError("rule must be 'drop-small' or 'drop-large'")


def centered_residual_pool(residuals) -> np.ndarray:
    """Mean-center residuals before resampling (exactly, not approximately)."""
    residuals = np.asarray(residuals, dtype=float)
    return residuals - residuals.mean()


def replicate_seed(master_seed: int, index: int, retry: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(_SEED_DOMAIN_REPLICATE, index, retry))


# ---------------------------------------------------------------------------
# replicate runner: one worker, indexed seeds, order-independent reduction
# ---------------------------------------------------------------------------

_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _dispatch(index):
    return _one_replicate(_WORKER_CTX, index)


def _one_replicate(ctx, index: int) -> np.ndarray:
    kind = ctx["engine"]
    if kind == "residual-lm":
        return _residual_lm_replicate(ctx, index)
    if kind == "residual-glm":
        return _residual_glm_replicate(ctx, index)
    if kind == "paired":
        return _paired_replicate(ctx, index)
    if kind == "plr":
        return _plr_replicate(ctx, index)
    raise ConfigError(f"unknown engine {kind!r}")


def _run_replicates(ctx, config: BootstrapConfig) -> np.ndarray:
    B = config.n_replicates
    if config.n_workers == 1:
        rows = [_one_replicate(ctx, i) for i in range(B)]
    else:
        with ProcessPoolExecutor(
            max_workers=config.n_workers, initializer=_init_worker, initargs=(ctx,)
        ) as pool:
            rows = list(pool.map(_dispatch, range(B), chunksize=max(1, B // (4 * config.n_workers))))
    return np.vstack(rows)


def _fit_coef(X, y, family, lam1, lam2, factors, solver_config) -> np.ndarray:
    fit = fit_penalized_glm(
        X, y, family, PenaltySpec(lambda1=lam1, lambda2=lam2, factors=factors), solver_config
    )
    if solver_config.fit_intercept:
        return np.concatenate([[fit.intercept], fit.beta])
    return fit.beta


def _eta_from_coef(X, coef, fit_intercept):
    if fit_intercept:
        return coef[0] + X @ coef[1:]
    return X @ coef


def _resolve_lambda(X, y, family, rule: LambdaRule, factors, solver_config, seed) -> float:
    if rule.mode == "fixed":
        return float(rule.value)
    cv = cross_validate(
        X, y, family, K=rule.K, seed=seed, factors=factors, config=solver_config,
        n_lambda=rule.n_lambda, lambda_min_ratio=rule.lambda_min_ratio,
    )
    return cv.best_lambda


def _lambda_from(cv) -> float:
    if isinstance(cv, CvResult):
        return float(cv.best_lambda)
    lam = float(cv)
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    return lam


def _degenerate_sample(Xb, yb, factors, family) -> bool:
    pen = factors > 0
    if np.any(pen) and np.any(np.ptp(Xb[:, pen], axis=0) == 0.0):
        return True
    if family.kind in COUNT_FAMILIES and float(np.sum(yb)) == 0.0:
        return True
    return False


def _check_full_data(X, y, factors, family) -> None:
    # resamples of degenerate data are degenerate too, so fail before fitting
    if _degenerate_sample(X, y, factors, family):
        raise DegenerateDataError(
            "data degenerate for bootstrapping: all-zero count response "
            "or a constant penalized column"
        )


# ---------------------------------------------------------------------------
# engine: gaussian residual bootstrap
# ---------------------------------------------------------------------------

def _residual_lm_replicate(ctx, index):
    rng = np.random.default_rng(replicate_seed(ctx["master_seed"], index))
    n = ctx["eta_tilde"].shape[0]
    idx = rng.integers(0, n, size=n)
    y_star = ctx["eta_tilde"] + ctx["pool"][idx]
    return _fit_coef(
        ctx["X"], y_star, ctx["family"], ctx["lam"], 0.0, ctx["factors"], ctx["solver_config"]
    )


def residual_bootstrap_lm(
    X,
    y,
    config: BootstrapConfig,
    lambda1,
    factors=None,
    solver_config: SolverConfig | None = None,
) -> IntervalTable:
    """Residual bootstrap intervals for the gaussian lasso.

    lambda1 is the selected l1 strength, given either as a float or as a
    CvResult. The modified (thresholded) estimate defines both the
    resampling center and the residual pool; replicates refit at the same
    lambda and the bracket combines the lasso and modified estimates with
    the replicate quantiles.
    """
    family = FamilySpec("gaussian")
    solver_config = solver_config or SolverConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    factors = PenaltySpec(factors=factors).resolve_factors(X.shape[1])
    _check_full_data(X, y, factors, family)
    lam = _lambda_from(lambda1)
    coef_hat = _fit_coef(X, y, family, lam, 0.0, factors, solver_config)
    coef_tilde = modified_estimator(coef_hat, y.shape[0], config.a_n_constant, config.modified_rule)
    eta_tilde = _eta_from_coef(X, coef_tilde, solver_config.fit_intercept)
    pool = centered_residual_pool(y - eta_tilde)
    ctx = {
        "engine": "residual-lm",
        "X": X,
        "family": family,
        "lam": lam,
        "factors": factors,
        "solver_config": solver_config,
        "master_seed": config.master_seed,
        "eta_tilde": eta_tilde,
        "pool": pool,
    }
    draws = _run_replicates(ctx, config)
    lower, upper = percentile_interval(
        draws, config.level, config.ci_variant, point=coef_hat, modified=coef_tilde
    )
    return IntervalTable(
        method="resid-boot",
        level=config.level,
        point_estimate=coef_hat,
        lower=lower,
        upper=upper,
        diagnostics={"lambda": lam, "modified_estimate": coef_tilde},
    )


# ---------------------------------------------------------------------------
# engine: GLM residual bootstrap on the mean scale
# ---------------------------------------------------------------------------

def _residual_glm_replicate(ctx, index):
    rng = np.random.default_rng(replicate_seed(ctx["master_seed"], index))
    n = ctx["mu_hat"].shape[0]
    idx = rng.integers(0, n, size=n)
    y_star = ctx["mu_hat"] + ctx["sqrt_v"] * ctx["pool"][idx]
    if ctx["clamp"]:
        clamped = float(np.mean(y_star < 0))
        y_star = np.maximum(y_star, 0.0)
    else:
        clamped = 0.0
    coef = _fit_coef(
        ctx["X"], y_star, ctx["family"], ctx["lam"], 0.0, ctx["factors"], ctx["solver_config"]
    )
    return np.concatenate([coef, [clamped]])


def residual_bootstrap_glm(
    X,
    y,
    family: FamilySpec,
    config: BootstrapConfig,
    lambda1,
    factors=None,
    solver_config: SolverConfig | None = None,
) -> IntervalTable:
    """Residual bootstrap for log-link GLMs via mean-scale reconstruction.

    lambda1 is the selected l1 strength (float or CvResult). The modified
    (thresholded) estimate serves as the resampling truth: residuals of
    the configured type are taken at its mean, centered, resampled and
    mapped back through y* = mu_tilde + sqrt(v) e*; negative
    reconstructions for count and Tweedie families are clamped to zero
    and the clamped share is reported (flagged when it reaches 20%).
    """
    solver_config = solver_config or SolverConfig()
    X = np.asarray(X, dtype=float)
    y = families.validate_response(family, y)
    factors = PenaltySpec(factors=factors).resolve_factors(X.shape[1])
    _check_full_data(X, y, factors, family)
    lam = _lambda_from(lambda1)
    fit = fit_penalized_glm(X, y, family, PenaltySpec(lambda1=lam, factors=factors), solver_config)
    coef_hat = np.concatenate([[fit.intercept], fit.beta]) if solver_config.fit_intercept else fit.beta
    coef_tilde = modified_estimator(coef_hat, y.shape[0], config.a_n_constant, config.modified_rule)
    mu_tilde = families.mean_from_eta(
        family, _eta_from_coef(X, coef_tilde, solver_config.fit_intercept)
    )
    df_used = int(np.sum(coef_tilde != 0))
    phi_hat = families.estimate_dispersion(family, y, mu_tilde, df_used)
    family_used = replace(family, dispersion_phi=phi_hat) if family.kind in ("gaussian", "tweedie") else family
    if config.residual_type == "pearson":
        resid = families.pearson_residuals(family_used, y, mu_tilde)
    elif config.residual_type == "deviance":
        resid = families.deviance_residuals(family_used, y, mu_tilde)
    else:
        resid = families.anscombe_residuals(family_used, y, mu_tilde)
    pool = centered_residual_pool(resid)
    ctx = {
        "engine": "residual-glm",
        "X": X,
        "family": family,
        "lam": lam,
        "factors": factors,
        "solver_config": solver_config,
        "master_seed": config.master_seed,
        "mu_hat": mu_tilde,
        "sqrt_v": np.sqrt(families.residual_variance(family_used, mu_tilde)),
        "pool": pool,
        "clamp": family.kind in COUNT_FAMILIES,
    }
    rows = _run_replicates(ctx, config)
    draws, clamp_fractions = rows[:, :-1], rows[:, -1]
    lower, upper = percentile_interval(
        draws, config.level, config.ci_variant, point=coef_hat, modified=coef_tilde
    )
    clamp_fraction = float(np.mean(clamp_fractions))
    return IntervalTable(
        method="resid-boot",
        level=config.level,
        point_estimate=coef_hat,
        lower=lower,
        upper=upper,
        diagnostics={
            "lambda": lam,
            "dispersion": phi_hat,
            "modified_estimate": coef_tilde,
            "clamp_fraction": clamp_fraction,
            "clamp_flagged": clamp_fraction >= CLAMP_FLAG_THRESHOLD,
        },
    )


# ---------------------------------------------------------------------------
# engines: paired bootstrap and partial lasso+ridge
# ---------------------------------------------------------------------------

def _paired_sample(ctx, index):
    """Resample rows, retrying fresh seeds while the sample is degenerate."""
    n = ctx["X"].shape[0]
    last_error = None
    for retry in range(ctx["max_retries"] + 1):
        rng = np.random.default_rng(replicate_seed(ctx["master_seed"], index, retry))
        idx = rng.integers(0, n, size=n)
        Xb, yb = ctx["X"][idx], ctx["y"][idx]
        if _degenerate_sample(Xb, yb, ctx["factors"], ctx["family"]):
            last_error = "degenerate resample"
            continue
        return Xb, yb, rng
    raise ReplicateFailureError(
        f"replicate {index} stayed degenerate after {ctx['max_retries']} retries: {last_error}",
        replicate=index,
        retries=ctx["max_retries"],
    )


def _paired_replicate(ctx, index):
    Xb, yb, rng = _paired_sample(ctx, index)
    lam = _resolve_lambda(
        Xb, yb, ctx["family"], ctx["rule"], ctx["factors"], ctx["solver_config"],
        seed=replicate_seed(ctx["master_seed"], index, 99),
    )
    return _fit_coef(Xb, yb, ctx["family"], lam, 0.0, ctx["factors"], ctx["solver_config"])


def _plr_replicate(ctx, index):
    Xb, yb, rng = _paired_sample(ctx, index)
    lam = _resolve_lambda(
        Xb, yb, ctx["family"], ctx["rule"], ctx["factors"], ctx["solver_config"],
        seed=replicate_seed(ctx["master_seed"], index, 99),
    )
    coef = _fit_coef(Xb, yb, ctx["family"], lam, 0.0, ctx["factors"], ctx["solver_config"])
    return _plr_ridge_coef(Xb, yb, ctx, coef)


def _plr_ridge_coef(Xb, yb, ctx, lasso_coef):
    """Ridge refit penalizing only the coordinates the lasso zeroed."""
    offset = 1 if ctx["solver_config"].fit_intercept else 0
    beta_part = lasso_coef[offset:]
    ridge_factors = np.where((ctx["factors"] > 0) & (beta_part == 0.0), 1.0, 0.0)
    return _fit_coef(
        Xb, yb, ctx["family"], 0.0, ctx["ridge_lambda2"], ridge_factors, ctx["solver_config"]
    )


def paired_bootstrap_glm(
    X,
    y,
    family: FamilySpec,
    config: BootstrapConfig,
    lambda_rule: LambdaRule,
    factors=None,
    solver_config: SolverConfig | None = None,
) -> IntervalTable:
    """Row-resampling bootstrap with a lasso refit per replicate.

    Intervals are plain percentile brackets of the replicate coefficients.
    Degenerate resamples (a constant penalized column, or an all-zero count
    response) are retried with fresh seeds up to config.max_retries times.
    """
    solver_config = solver_config or SolverConfig()
    X = np.asarray(X, dtype=float)
    y = families.validate_response(family, y)
    factors = PenaltySpec(factors=factors).resolve_factors(X.shape[1])
    _check_full_data(X, y, factors, family)
    lam0 = _resolve_lambda(
        X, y, family, lambda_rule, factors, solver_config,
        seed=np.random.SeedSequence(config.master_seed, spawn_key=(5,)),
    )
    coef_hat = _fit_coef(X, y, family, lam0, 0.0, factors, solver_config)
    ctx = {
        "engine": "paired",
        "X": X,
        "y": y,
        "family": family,
        "rule": lambda_rule,
        "factors": factors,
        "solver_config": solver_config,
        "master_seed": config.master_seed,
        "max_retries": config.max_retries,
    }
    draws = _run_replicates(ctx, config)
    lower, upper = percentile_interval(draws, config.level, "plain")
    return IntervalTable(
        method="paired-boot",
        level=config.level,
        point_estimate=coef_hat,
        lower=lower,
        upper=upper,
        diagnostics={"lambda_full_data": lam0},
    )


def plr_glm(
    X,
    y,
    family: FamilySpec,
    config: BootstrapConfig,
    lambda_rule: LambdaRule,
    ridge_lambda2: float | None = None,
    factors=None,
    solver_config: SolverConfig | None = None,
) -> IntervalTable:
    """Paired bootstrap with lasso selection and a partial ridge refit.

    Each replicate resamples rows, runs the lasso, collects the zeroed
    penalized coordinates C2, then refits with lambda1=0 and a ridge
    penalty applied to C2 only (lambda2 defaults to 1/n). Intervals are
    plain percentile brackets of the refit coefficients; the point estimate
    runs the same two-stage pipeline on the full data.
    """
    solver_config = solver_config or SolverConfig()
    X = np.asarray(X, dtype=float)
    y = families.validate_response(family, y)
    factors = PenaltySpec(factors=factors).resolve_factors(X.shape[1])
    _check_full_data(X, y, factors, family)
    n = X.shape[0]
    ridge_lambda2 = 1.0 / n if ridge_lambda2 is None else float(ridge_lambda2)
    if ridge_lambda2 < 0:
        raise ConfigError("ridge_lambda2 must be nonnegative")
    lam0 = _resolve_lambda(
        X, y, family, lambda_rule, factors, solver_config,
        seed=np.random.SeedSequence(config.master_seed, spawn_key=(5,)),
    )
    ctx = {
        "engine": "plr",
        "X": X,
        "y": y,
        "family": family,
        "rule": lambda_rule,
        "factors": factors,
        "solver_config": solver_config,
        "master_seed": config.master_seed,
        "max_retries": config.max_retries,
        "ridge_lambda2": ridge_lambda2,
    }
    lasso_coef = _fit_coef(X, y, family, lam0, 0.0, factors, solver_config)
    coef_hat = _plr_ridge_coef(X, y, ctx, lasso_coef)
    draws = _run_replicates(ctx, config)
    lower, upper = percentile_interval(draws, config.level, "plain")
    return IntervalTable(
        method="plr",
        level=config.level,
        point_estimate=coef_hat,
        lower=lower,
        upper=upper,
        diagnostics={"lambda_full_data": lam0, "ridge_lambda2": ridge_lambda2},
    )
