"""Synthetic coverage and width experiments for the interval methods.

A scenario fixes the design law (first column constant one, remaining
columns unit-variance normal with means drawn uniformly per scenario seed),
the true coefficients (0.5 intercept, a 1/15..10/15 ramp, zeros beyond)
and the count family. Repetitions draw fresh designs and responses from
per-repetition seeds, so every method sees the same data when run under
the same scenario: width comparisons are paired by construction.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import families
from .bootstrap import (
    BootstrapConfig,
    IntervalTable,
    LambdaRule,
    paired_bootstrap_glm,
    plr_glm,
    residual_bootstrap_glm,
)
from .debias import debias_glm, direct_theta, nodewise_theta, select_nodewise_lambda, weighted_design
from .errors import ConditioningError, ConfigError, InputValidationError
from .families import FamilySpec
from .solver import PenaltySpec, SolverConfig, cross_validate, fit_penalized_glm

_SEED_MEANS = 11
_SEED_DESIGN = 2
_SEED_RESPONSE = 3
_SEED_METHOD = 13

RESPONSE_FAMILIES = ("poisson", "negbin")


def ramp_coefficients(p: int) -> np.ndarray:
    """Default truth: 0.5 intercept, i/15 for the next ten slots, zeros after."""
    if p < 2:
        raise ConfigError("scenario needs at least an intercept and one covariate")
    beta = np.zeros(p)
    beta[0] = 0.5
    top = min(10, p - 1)
    beta[1 : top + 1] = np.arange(1, top + 1) / 15.0
    return beta


@dataclass(frozen=True)
class SimScenario:
    """Design and truth for one synthetic experiment."""

    family: str = "poisson"
    n: int = 2000
    p: int = 41
    beta_true: tuple = ()
    negbin_size: float = 4.5
    feature_mean_range: tuple = (-2.0, 2.0)
    n_repetitions: int = 50
    master_seed: int = 0

    def __post_init__(self):
        if self.family not in RESPONSE_FAMILIES:
            raise ConfigError(f"scenario family must be one of {RESPONSE_FAMILIES}")
        if self.n < 10:
            raise ConfigError("scenario n is too small")
        if self.n_repetitions < 1:
            raise ConfigError("scenario needs at least one repetition")
        lo, hi = self.feature_mean_range
        if not lo < hi:
            raise ConfigError("feature_mean_range must be an increasing pair")
        if self.negbin_size <= 0:
            raise ConfigError("negbin_size must be positive")
        beta = tuple(float(b) for b in self.beta_true) or tuple(ramp_coefficients(self.p))
        if len(beta) != self.p:
            raise ConfigError(f"beta_true has length {len(beta)}, scenario p is {self.p}")
        object.__setattr__(self, "beta_true", beta)

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.beta_true)

    def family_spec(self) -> FamilySpec:
        return FamilySpec(self.family, negbin_size=self.negbin_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_true"] = list(d["beta_true"])
        d["feature_mean_range"] = list(d["feature_mean_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        d = dict(d)
        if "beta_true" in d and d["beta_true"] is not None:
            d["beta_true"] = tuple(d["beta_true"])
        if "feature_mean_range" in d:
            d["feature_mean_range"] = tuple(d["feature_mean_range"])
        return cls(**d)

    def scenario_hash(self) -> str:
        # identifies the data-generating process; n_repetitions is run length,
        # not identity, so extending a run reuses its logged repetitions
        d = self.to_dict()
        d.pop("n_repetitions")
        payload = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def design_means(scenario: SimScenario) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence(scenario.master_seed, spawn_key=(_SEED_MEANS,))
    )
    lo, hi = scenario.feature_mean_range
    return rng.uniform(lo, hi, size=scenario.p - 1)


def generate_design(scenario: SimScenario, seed) -> np.ndarray:
    """Constant first column plus N(m_j, 1) covariates; means fixed per scenario."""
    means = design_means(scenario)
    rng = np.random.default_rng(seed)
    X = np.empty((scenario.n, scenario.p))
    X[:, 0] = 1.0
    X[:, 1:] = rng.normal(means, 1.0, size=(scenario.n, scenario.p - 1))
    return X


def generate_response(X: np.ndarray, scenario: SimScenario, seed) -> np.ndarray:
    eta = families.clamp_eta(np.asarray(X, dtype=float) @ scenario.beta)
    mu = np.exp(eta)
    rng = np.random.default_rng(seed)
    if scenario.family == "poisson":
        return rng.poisson(mu).astype(float)
    size = scenario.negbin_size
    return rng.negative_binomial(size, size / (size + mu)).astype(float)


def sample_tweedie(rng: np.random.Generator, mu, power_p: float, phi: float = 1.0) -> np.ndarray:
    """Compound Poisson-gamma draws with mean mu and variance phi mu^p."""
    if not (1.0 < power_p < 2.0):
        raise ConfigError("tweedie power must lie in (1, 2)")
    mu = np.asarray(mu, dtype=float)
    lam = mu ** (2.0 - power_p) / (phi * (2.0 - power_p))
    shape = (2.0 - power_p) / (power_p - 1.0)
    scale = phi * (power_p - 1.0) * mu ** (power_p - 1.0)
    counts = rng.poisson(lam)
    out = np.zeros(mu.shape)
    pos = counts > 0
    out[pos] = rng.gamma(counts[pos] * shape, scale[pos] if scale.ndim else scale)
    return out


# ---------------------------------------------------------------------------
# interval-method registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimMethodConfig:
    """Knobs shared by the registered interval methods."""

    n_replicates: int = 50
    level: float = 0.95
    lambda_mode: str = "cv"
    K: int = 5
    n_lambda: int = 20
    lambda_min_ratio: float = 1e-2
    ci_variant: str = "hybrid"
    residual_type: str = "pearson"
    a_n_constant: float = 1.0
    ridge_lambda2: float | None = None
    theta_method: str = "auto"
    n_workers: int = 1

    def __post_init__(self):
        if self.lambda_mode not in ("cv", "fixed"):
            raise ConfigError("lambda_mode must be 'cv' or 'fixed'")
        if self.theta_method not in ("auto", "direct", "nodewise"):
            raise ConfigError("theta_method must be auto, direct or nodewise")


_METHODS: dict = {}


def register_ci_method(name: str, fn) -> None:
    """Register fn(X, y, family, config, seed, factors) -> IntervalTable."""
    _METHODS[name] = fn


def available_methods() -> tuple:
    return tuple(sorted(_METHODS))


def _intercept_factors(p: int) -> np.ndarray:
    f = np.ones(p)
    f[0] = 0.0
    return f


def _design_solver_config() -> SolverConfig:
    return SolverConfig(fit_intercept=False)


def _bootstrap_config(config: SimMethodConfig, seed: int, **overrides) -> BootstrapConfig:
    kw = dict(
        n_replicates=config.n_replicates,
        level=config.level,
        master_seed=seed,
        a_n_constant=config.a_n_constant,
        residual_type=config.residual_type,
        ci_variant=config.ci_variant,
        n_workers=config.n_workers,
    )
    kw.update(overrides)
    return BootstrapConfig(**kw)


def _replicate_lambda_rule(X, y, family, config: SimMethodConfig, factors, seed) -> LambdaRule:
    base = LambdaRule(
        mode="cv", K=config.K, n_lambda=config.n_lambda,
        lambda_min_ratio=config.lambda_min_ratio,
    )
    if config.lambda_mode == "cv":
        return base
    cv = cross_validate(
        X, y, family, K=config.K, seed=np.random.SeedSequence(seed, spawn_key=(5,)),
        factors=factors, config=_design_solver_config(),
        n_lambda=config.n_lambda, lambda_min_ratio=config.lambda_min_ratio,
    )
    return LambdaRule(mode="fixed", value=cv.best_lambda)


def _method_plr(X, y, family, config, seed, factors):
    rule = _replicate_lambda_rule(X, y, family, config, factors, seed)
    return plr_glm(
        X, y, family, _bootstrap_config(config, seed), rule,
        ridge_lambda2=config.ridge_lambda2, factors=factors,
        solver_config=_design_solver_config(),
    )


def _method_paired(X, y, family, config, seed, factors):
    rule = _replicate_lambda_rule(X, y, family, config, factors, seed)
    return paired_bootstrap_glm(
        X, y, family, _bootstrap_config(config, seed), rule,
        factors=factors, solver_config=_design_solver_config(),
    )


def _method_resid(X, y, family, config, seed, factors):
    cv = cross_validate(
        X, y, family, K=config.K, seed=np.random.SeedSequence(seed, spawn_key=(5,)),
        factors=factors, config=_design_solver_config(),
        n_lambda=config.n_lambda, lambda_min_ratio=config.lambda_min_ratio,
    )
    return residual_bootstrap_glm(
        X, y, family, _bootstrap_config(config, seed), cv,
        factors=factors, solver_config=_design_solver_config(),
    )


def _method_debias(X, y, family, config, seed, factors):
    solver_config = _design_solver_config()
    cv = cross_validate(
        X, y, family, K=config.K, seed=np.random.SeedSequence(seed, spawn_key=(5,)),
        factors=factors, config=solver_config,
        n_lambda=config.n_lambda, lambda_min_ratio=config.lambda_min_ratio,
    )
    fit = fit_penalized_glm(
        X, y, family, PenaltySpec(lambda1=cv.best_lambda, factors=factors), solver_config
    )
    Xw = weighted_design(X, fit, family, y)
    method = config.theta_method
    n, p = X.shape
    if method == "auto":
        method = "direct" if p <= n else "nodewise"
    if method == "direct":
        try:
            theta = direct_theta(Xw)
        except ConditioningError:
            method = "nodewise"
    if method == "nodewise":
        lam_node = select_nodewise_lambda(
            Xw, K=config.K, seed=np.random.SeedSequence(seed, spawn_key=(6,)),
            n_lambda=config.n_lambda, lambda_min_ratio=config.lambda_min_ratio,
        )
        theta = nodewise_theta(Xw, np.full(p, lam_node))
    return debias_glm(fit, X, y, family, theta, level=config.level).intervals


register_ci_method("plr", _method_plr)
register_ci_method("paired-boot", _method_paired)
register_ci_method("resid-boot", _method_resid)
register_ci_method("debias", _method_debias)


# ---------------------------------------------------------------------------
# coverage experiments
# ---------------------------------------------------------------------------

@dataclass
class CoverageReport:
    scenario_hash: str
    method: str
    level: float
    true_beta: np.ndarray
    ci_rate: np.ndarray
    mean_width: np.ndarray
    n_repetitions: int
    nonzero_mean_rate: float
    zero_mean_rate: float
    nonzero_mean_width: float
    metadata: dict = field(default_factory=dict)


def _repetition_seeds(scenario: SimScenario, r: int):
    master = scenario.master_seed
    design = np.random.SeedSequence(master, spawn_key=(_SEED_DESIGN, r))
    response = np.random.SeedSequence(master, spawn_key=(_SEED_RESPONSE, r))
    method_seed = int(
        np.random.SeedSequence(master, spawn_key=(_SEED_METHOD, r)).generate_state(1)[0]
    )
    return design, response, method_seed


def method_config_hash(config: SimMethodConfig) -> str:
    d = asdict(config)
    d.pop("n_workers")  # worker count never changes results
    payload = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _log_key(scenario_hash: str, method: str, config_hash: str, r: int) -> tuple:
    return (scenario_hash, method, config_hash, r)


def load_repetition_log(log_path: str) -> dict:
    """Read an append-only JSONL log of completed repetitions."""
    records = {}
    if log_path and os.path.exists(log_path):
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                key = _log_key(
                    rec["scenario_hash"], rec["method"], rec["config_hash"],
                    rec["repetition"],
                )
                records[key] = rec
    return records


def _append_log(log_path: str, rec: dict) -> None:
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def coverage_from_records(scenario: SimScenario, records: list[dict], method: str, level: float) -> CoverageReport:
    """Aggregate covered/width metrics from per-repetition interval records."""
    beta = scenario.beta
    R = len(records)
    if R == 0:
        raise InputValidationError("no repetition records to aggregate")
    lower = np.array([rec["lower"] for rec in records])
    upper = np.array([rec["upper"] for rec in records])
    covered = (lower <= beta) & (beta <= upper)
    ci_rate = covered.mean(axis=0)
    mean_width = (upper - lower).mean(axis=0)
    nonzero = np.flatnonzero(beta != 0)
    nonzero = nonzero[nonzero != 0]  # group averages exclude the intercept slot
    zero = np.flatnonzero(beta == 0)
    zero = zero[zero != 0]
    return CoverageReport(
        scenario_hash=scenario.scenario_hash(),
        method=method,
        level=level,
        true_beta=beta,
        ci_rate=ci_rate,
        mean_width=mean_width,
        n_repetitions=R,
        nonzero_mean_rate=float(ci_rate[nonzero].mean()) if nonzero.size else float("nan"),
        zero_mean_rate=float(ci_rate[zero].mean()) if zero.size else float("nan"),
        nonzero_mean_width=float(mean_width[nonzero].mean()) if nonzero.size else float("nan"),
    )


def run_coverage_experiment(
    scenario: SimScenario,
    method: str,
    config: SimMethodConfig | None = None,
    log_path: str | None = None,
) -> CoverageReport:
    """Repeatedly draw data, run one interval method, tally coverage.

    With log_path set, each finished repetition is appended to a JSONL
    file and already-logged repetitions are reused, so long runs survive
    interruption and can be recounted independently.
    """
    config = config or SimMethodConfig()
    if method not in _METHODS:
        raise ConfigError(f"unknown method {method!r}; registered: {available_methods()}")
    fn = _METHODS[method]
    family = scenario.family_spec()
    factors = _intercept_factors(scenario.p)
    shash = scenario.scenario_hash()
    chash = method_config_hash(config)
    existing = load_repetition_log(log_path) if log_path else {}
    records = []
    total_fits = 0
    for r in range(scenario.n_repetitions):
        key = _log_key(shash, method, chash, r)
        if key in existing:
            records.append(existing[key])
            continue
        design_seed, response_seed, method_seed = _repetition_seeds(scenario, r)
        X = generate_design(scenario, design_seed)
        y = generate_response(X, scenario, response_seed)
        table = fn(X, y, family, config, method_seed, factors)
        total_fits += config.n_replicates
        rec = {
            "scenario_hash": shash,
            "method": method,
            "config_hash": chash,
            "repetition": r,
            "level": config.level,
            "point": [float(v) for v in table.point_estimate],
            "lower": [float(v) for v in table.lower],
            "upper": [float(v) for v in table.upper],
        }
        records.append(rec)
        if log_path:
            _append_log(log_path, rec)
    report = coverage_from_records(scenario, records, method, config.level)
    report.metadata = {
        "method": method,
        "scenario_hash": shash,
        "new_replicate_fits": total_fits,
        "n_replicates": config.n_replicates,
        "lambda_mode": config.lambda_mode,
    }
    return report


def width_comparison(
    scenario: SimScenario,
    methods: list[str],
    config: SimMethodConfig | None = None,
    log_path: str | None = None,
) -> dict[str, CoverageReport]:
    """Run several methods on identical repetition data (paired seeds)."""
    return {
        m: run_coverage_experiment(scenario, m, config, log_path=log_path) for m in methods
    }


def coverage_rows(report: CoverageReport) -> list[dict]:
    rows = []
    for j in range(report.true_beta.shape[0]):
        rows.append(
            {
                "coefficient_index": j,
                "true_beta": float(report.true_beta[j]),
                "method": report.method,
                "ci_rate": float(report.ci_rate[j]),
                "mean_width": float(report.mean_width[j]),
            }
        )
    return rows
