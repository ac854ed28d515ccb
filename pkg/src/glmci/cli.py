"""Command line interface: fit, ci, simulate, compare.

Every run resolves to one RunConfig, which serializes losslessly to JSON.
A report is written next to a manifest carrying the full resolved config,
input digests and output names; rerunning with the same config and seed
reproduces every report byte for byte (no timestamps anywhere). Passing a
manifest as --config regenerates its reports.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .bootstrap import (
    BootstrapConfig,
    IntervalTable,
    LambdaRule,
    paired_bootstrap_glm,
    plr_glm,
    residual_bootstrap_glm,
    residual_bootstrap_lm,
)
from .data import design_with_intercept, load_csv
from .debias import debias_glm, debias_lm, direct_theta, nodewise_theta, select_nodewise_lambda, weighted_design
from .errors import ConditioningError, ConfigError, GlmciError, exit_code_for
from .families import FamilySpec
from .simbench import (
    SimMethodConfig,
    SimScenario,
    coverage_rows,
    run_coverage_experiment,
    width_comparison,
)
from .solver import PenaltySpec, SolverConfig, cross_validate, fit_penalized_glm

SCHEMA_VERSION = 1
CI_METHODS = ("plr", "debias", "resid-boot", "paired-boot")


@dataclass
class RunConfig:
    """Flat, file-serializable mirror of every CLI flag."""

    command: str = ""
    data: str | None = None
    target: str | None = None
    drop: tuple = ()
    categorical: tuple | None = None
    family: str = "gaussian"
    power_p: float = 1.5
    negbin_size: float = 4.5
    method: str = "plr"
    methods: tuple = ("plr", "resid-boot", "paired-boot")
    level: float = 0.95
    replicates: int = 1000
    seed: int = 0
    lambda1: float | None = None
    lambda2: float | None = None
    lambda_mode: str = "cv"
    K: int = 5
    n_lambda: int = 30
    lambda_min_ratio: float = 1e-3
    ci_variant: str = "hybrid"
    residual_type: str = "pearson"
    a_n_constant: float = 1.0
    ridge_lambda2: float | None = None
    theta_method: str = "auto"
    scenario: str | None = None
    repetitions: int | None = None
    log: str | None = None
    n_workers: int = 1
    out: str = "."

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("drop", "methods"):
            d[key] = list(d[key])
        if d["categorical"] is not None:
            d["categorical"] = list(d["categorical"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("drop", "methods"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("categorical") is not None:
            d["categorical"] = tuple(d["categorical"])
        return cls(**d)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    # a manifest regenerates the run it describes
    if "config" in payload and "schema_version" in payload:
        payload = payload["config"]
    return payload


def family_from_config(cfg: RunConfig) -> FamilySpec:
    return FamilySpec(
        cfg.family,
        power_p=cfg.power_p,
        dispersion_phi=1.0,
        negbin_size=cfg.negbin_size,
    )


# ---------------------------------------------------------------------------
# deterministic writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])


def interval_rows_with_display(table: IntervalTable) -> list[dict]:
    rows = table.to_rows()
    for row in rows:
        row["lower_display"] = f"{row['lower']:.3f}"
        row["upper_display"] = f"{row['upper']:.3f}"
    return rows


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: RunConfig, inputs: dict, outputs: list[str]) -> str:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "inputs": inputs,
        "outputs": outputs,
    }
    path = os.path.join(cfg.out, f"{cfg.command}.manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_design(cfg: RunConfig):
    if not cfg.data or not cfg.target:
        raise ConfigError(f"{cfg.command} needs --data and --target")
    data = load_csv(
        cfg.data, cfg.target, drop_columns=cfg.drop, categorical_columns=cfg.categorical
    )
    X, names, factors = design_with_intercept(data)
    return data, X, names, factors


def _solver_config() -> SolverConfig:
    return SolverConfig(fit_intercept=False)


def _full_data_lambda(cfg: RunConfig, X, y, family, factors) -> float:
    cv = cross_validate(
        X, y, family, K=cfg.K, seed=np.random.SeedSequence(cfg.seed, spawn_key=(5,)),
        factors=factors, config=_solver_config(),
        n_lambda=cfg.n_lambda, lambda_min_ratio=cfg.lambda_min_ratio,
    )
    return cv.best_lambda


def cmd_fit(cfg: RunConfig) -> int:
    data, X, names, factors = _load_design(cfg)
    family = family_from_config(cfg)
    lam1 = cfg.lambda1
    lam2 = cfg.lambda2 if cfg.lambda2 is not None else 0.0
    if lam1 is None:
        lam1 = _full_data_lambda(cfg, X, data.y, family, factors)
    fit = fit_penalized_glm(
        X, data.y, family, PenaltySpec(lambda1=lam1, lambda2=lam2, factors=factors),
        _solver_config(),
    )
    rows = [
        {
            "coefficient_index": j,
            "name": names[j],
            "estimate": float(fit.beta[j]),
            "penalty_factor": float(factors[j]),
        }
        for j in range(len(names))
    ]
    out_csv = os.path.join(cfg.out, "fit.csv")
    write_rows_csv(out_csv, ["coefficient_index", "name", "estimate", "penalty_factor"], rows)
    manifest = write_manifest(
        cfg,
        inputs={"data_sha256": sha256_file(cfg.data)},
        outputs=["fit.csv"],
    )
    print(
        f"fit: family={family.kind} lambda1={lam1:.6g} lambda2={lam2:.6g} "
        f"active={len(fit.active_set)}/{len(names)} converged={fit.converged}"
    )
    print(f"wrote {out_csv} and {manifest}")
    return 0


def compute_intervals(cfg: RunConfig, X, y, names, factors) -> IntervalTable:
    family = family_from_config(cfg)
    solver_config = _solver_config()
    boot = BootstrapConfig(
        n_replicates=cfg.replicates,
        level=cfg.level,
        master_seed=cfg.seed,
        a_n_constant=cfg.a_n_constant,
        residual_type=cfg.residual_type,
        ci_variant=cfg.ci_variant,
        n_workers=cfg.n_workers,
    )
    if cfg.method in ("plr", "paired-boot"):
        if cfg.lambda_mode == "fixed":
            lam = cfg.lambda1 if cfg.lambda1 is not None else _full_data_lambda(cfg, X, y, family, factors)
            rule = LambdaRule(mode="fixed", value=lam)
        else:
            rule = LambdaRule(
                mode="cv", K=cfg.K, n_lambda=cfg.n_lambda, lambda_min_ratio=cfg.lambda_min_ratio
            )
        if cfg.method == "plr":
            table = plr_glm(
                X, y, family, boot, rule, ridge_lambda2=cfg.ridge_lambda2,
                factors=factors, solver_config=solver_config,
            )
        else:
            table = paired_bootstrap_glm(
                X, y, family, boot, rule, factors=factors, solver_config=solver_config
            )
    elif cfg.method == "resid-boot":
        lam = cfg.lambda1 if cfg.lambda1 is not None else _full_data_lambda(cfg, X, y, family, factors)
        if family.kind == "gaussian" and family.link == "identity":
            table = residual_bootstrap_lm(
                X, y, boot, lam, factors=factors, solver_config=solver_config
            )
        else:
            table = residual_bootstrap_glm(
                X, y, family, boot, lam, factors=factors, solver_config=solver_config
            )
    elif cfg.method == "debias":
        lam = cfg.lambda1 if cfg.lambda1 is not None else _full_data_lambda(cfg, X, y, family, factors)
        fit = fit_penalized_glm(
            X, y, family, PenaltySpec(lambda1=lam, factors=factors), solver_config
        )
        if family.kind == "gaussian" and family.link == "identity":
            table = debias_lm(fit, X, y, level=cfg.level).intervals
        else:
            Xw = weighted_design(X, fit, family, y)
            n, p = X.shape
            method = cfg.theta_method
            if method == "auto":
                method = "direct" if p <= n else "nodewise"
            theta = None
            if method == "direct":
                try:
                    theta = direct_theta(Xw)
                except ConditioningError:
                    method = "nodewise"
            if theta is None:
                lam_node = select_nodewise_lambda(
                    Xw, K=cfg.K, seed=np.random.SeedSequence(cfg.seed, spawn_key=(6,)),
                    n_lambda=cfg.n_lambda, lambda_min_ratio=cfg.lambda_min_ratio,
                )
                theta = nodewise_theta(Xw, np.full(p, lam_node))
            table = debias_glm(fit, X, y, family, theta, level=cfg.level).intervals
    else:
        raise ConfigError(f"unknown ci method {cfg.method!r}; choose from {CI_METHODS}")
    table.names = list(names)
    return table


def cmd_ci(cfg: RunConfig) -> int:
    data, X, names, factors = _load_design(cfg)
    table = compute_intervals(cfg, X, data.y, names, factors)
    rows = interval_rows_with_display(table)
    out_csv = os.path.join(cfg.out, "ci.csv")
    write_rows_csv(
        out_csv,
        [
            "coefficient_index", "name", "point_estimate", "lower", "upper",
            "width", "method", "level", "lower_display", "upper_display",
        ],
        rows,
    )
    manifest = write_manifest(
        cfg,
        inputs={"data_sha256": sha256_file(cfg.data)},
        outputs=["ci.csv"],
    )
    print(
        f"ci: method={table.method} level={table.level} coefficients={len(rows)} "
        f"replicates={cfg.replicates} seed={cfg.seed}"
    )
    print(f"wrote {out_csv} and {manifest}")
    return 0


def _load_scenario(cfg: RunConfig) -> SimScenario:
    if not cfg.scenario:
        raise ConfigError(f"{cfg.command} needs --scenario pointing at a JSON file")
    with open(cfg.scenario, encoding="utf-8") as fh:
        payload = json.load(fh)
    scenario = SimScenario.from_dict(payload)
    overrides = {}
    if cfg.repetitions is not None:
        overrides["n_repetitions"] = cfg.repetitions
    if overrides:
        d = scenario.to_dict()
        d.update(overrides)
        scenario = SimScenario.from_dict(d)
    return scenario


def _sim_method_config(cfg: RunConfig) -> SimMethodConfig:
    return SimMethodConfig(
        n_replicates=cfg.replicates,
        level=cfg.level,
        lambda_mode=cfg.lambda_mode,
        K=cfg.K,
        n_lambda=cfg.n_lambda,
        lambda_min_ratio=cfg.lambda_min_ratio,
        ci_variant=cfg.ci_variant,
        residual_type=cfg.residual_type,
        a_n_constant=cfg.a_n_constant,
        ridge_lambda2=cfg.ridge_lambda2,
        theta_method=cfg.theta_method,
        n_workers=cfg.n_workers,
    )


COVERAGE_FIELDS = ["coefficient_index", "true_beta", "method", "ci_rate", "mean_width"]


def cmd_simulate(cfg: RunConfig) -> int:
    scenario = _load_scenario(cfg)
    report = run_coverage_experiment(
        scenario, cfg.method, _sim_method_config(cfg), log_path=cfg.log
    )
    rows = coverage_rows(report)
    out_csv = os.path.join(cfg.out, "simulate.csv")
    write_rows_csv(out_csv, COVERAGE_FIELDS, rows)
    manifest = write_manifest(
        cfg,
        inputs={"scenario": scenario.to_dict(), "scenario_hash": scenario.scenario_hash()},
        outputs=["simulate.csv"],
    )
    print(
        f"simulate: method={report.method} repetitions={report.n_repetitions} "
        f"nonzero_rate={report.nonzero_mean_rate:.3f} zero_rate={report.zero_mean_rate:.3f}"
    )
    print(f"wrote {out_csv} and {manifest}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    scenario = _load_scenario(cfg)
    reports = width_comparison(
        scenario, list(cfg.methods), _sim_method_config(cfg), log_path=cfg.log
    )
    rows = []
    for method in cfg.methods:
        rows.extend(coverage_rows(reports[method]))
    out_csv = os.path.join(cfg.out, "compare.csv")
    write_rows_csv(out_csv, COVERAGE_FIELDS, rows)
    manifest = write_manifest(
        cfg,
        inputs={"scenario": scenario.to_dict(), "scenario_hash": scenario.scenario_hash()},
        outputs=["compare.csv"],
    )
    for method in cfg.methods:
        rep = reports[method]
        print(
            f"compare: method={method} nonzero_width={rep.nonzero_mean_width:.4f} "
            f"nonzero_rate={rep.nonzero_mean_rate:.3f}"
        )
    print(f"wrote {out_csv} and {manifest}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _split_list(value: str) -> tuple:
    return tuple(v for v in value.split(",") if v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glmci",
        description="Penalized GLM fitting and post-selection confidence intervals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config file (or a manifest); flags override it")
        sp.add_argument("--out", help="output directory (default .)")
        sp.add_argument("--seed", type=int, help="master seed (default 0)")
        sp.add_argument("--level", type=float, help="confidence level (default 0.95)")
        sp.add_argument("--K", type=int, help="cross-validation folds (default 5)")
        sp.add_argument("--n-lambda", type=int, dest="n_lambda", help="path length (default 30)")
        sp.add_argument(
            "--lambda-min-ratio", type=float, dest="lambda_min_ratio",
            help="path floor as a fraction of lambda_max (default 1e-3)",
        )
        sp.add_argument("--n-workers", type=int, dest="n_workers", help="replicate workers")

    def add_data(sp):
        sp.add_argument("--data", help="input CSV path")
        sp.add_argument("--target", help="response column name")
        sp.add_argument("--drop", type=_split_list, help="comma-separated columns to drop")
        sp.add_argument(
            "--categorical", type=_split_list,
            help="comma-separated categorical columns (omit to auto-detect)",
        )
        sp.add_argument("--family", choices=["gaussian", "poisson", "negbin", "tweedie"])
        sp.add_argument("--power-p", type=float, dest="power_p", help="tweedie power (default 1.5)")
        sp.add_argument("--negbin-size", type=float, dest="negbin_size", help="negbin size (default 4.5)")

    p_fit = sub.add_parser("fit", help="fit one penalized GLM and write coefficients")
    add_common(p_fit)
    add_data(p_fit)
    p_fit.add_argument("--lambda1", type=float, help="l1 strength (default: CV-selected)")
    p_fit.add_argument("--lambda2", type=float, help="ridge strength (default 0)")

    p_ci = sub.add_parser("ci", help="confidence intervals on a dataset")
    add_common(p_ci)
    add_data(p_ci)
    p_ci.add_argument("--method", choices=list(CI_METHODS))
    p_ci.add_argument("--replicates", type=int, help="bootstrap replicates (default 1000)")
    p_ci.add_argument("--lambda1", type=float, help="fixed l1 strength (default: CV-selected)")
    p_ci.add_argument("--lambda-mode", choices=["cv", "fixed"], dest="lambda_mode")
    p_ci.add_argument("--ci-variant", choices=["hybrid", "basic"], dest="ci_variant")
    p_ci.add_argument(
        "--residual-type", choices=["pearson", "deviance", "anscombe"], dest="residual_type"
    )
    p_ci.add_argument("--a-n-constant", type=float, dest="a_n_constant")
    p_ci.add_argument("--ridge-lambda2", type=float, dest="ridge_lambda2")
    p_ci.add_argument("--theta-method", choices=["auto", "direct", "nodewise"], dest="theta_method")

    p_sim = sub.add_parser("simulate", help="coverage experiment on a synthetic scenario")
    add_common(p_sim)
    p_sim.add_argument("--scenario", help="scenario JSON file")
    p_sim.add_argument("--method", choices=list(CI_METHODS))
    p_sim.add_argument("--replicates", type=int, help="bootstrap replicates per repetition")
    p_sim.add_argument("--repetitions", type=int, help="override scenario repetition count")
    p_sim.add_argument("--lambda-mode", choices=["cv", "fixed"], dest="lambda_mode")
    p_sim.add_argument("--log", help="append-only JSONL log for resumable runs")

    p_cmp = sub.add_parser("compare", help="width comparison across methods, shared data")
    add_common(p_cmp)
    p_cmp.add_argument("--scenario", help="scenario JSON file")
    p_cmp.add_argument("--methods", type=_split_list, help="comma-separated method names")
    p_cmp.add_argument("--replicates", type=int)
    p_cmp.add_argument("--repetitions", type=int)
    p_cmp.add_argument("--lambda-mode", choices=["cv", "fixed"], dest="lambda_mode")
    p_cmp.add_argument("--log", help="append-only JSONL log for resumable runs")

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = load_config_file(args.config)
    merged = dict(base)
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        merged[key] = value
    merged["command"] = args.command
    cfg = RunConfig.from_dict(merged)
    if cfg.out != ".":
        os.makedirs(cfg.out, exist_ok=True)
    return cfg


COMMANDS = {
    "fit": cmd_fit,
    "ci": cmd_ci,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except GlmciError as exc:
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": exit_code_for(exc),
        }
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
