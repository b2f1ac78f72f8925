"""Data-generating processes and the Monte Carlo harness."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .estimator import SolverConfig, bootstrap_variance, confidence_interval, solve
from .exceptions import (
    CalibrationError,
    ConfigError,
    CovarianceError,
    DGPInfeasibleError,
    HDTrafoError,
    StudyError,
)
from .io import Dataset
from .lasso import LassoConfig
from .nuisance import NuisanceAtTheta
from .transform import TransformationFamily, get_family

__all__ = [
    "COV_KINDS",
    "SimConfig",
    "RepRecord",
    "SimulationReport",
    "make_covariance",
    "calibrate_sigma",
    "true_beta",
    "draw_dataset",
    "rep_seed",
    "run_study",
    "estimator_histogram",
    "summarize",
    "oracle_nuisance",
    "population_coefficients",
    "load_configs",
    "write_report_csv",
]

COV_KINDS = ("identity", "toeplitz", "equi")
REDRAW_LIMIT = 0.10
FAILURE_LIMIT = 0.20


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo design.

    ``intercept`` shifts the latent linear predictor; it is 0 in the standard
    designs and only needed to keep Box-Cox responses positive for
    ``theta0 > 0``.
    """

    family: str = "boxcox"
    theta0: float = 0.0
    n: int = 200
    n_test: int = 200
    p: int = 20
    s: int = 5
    snr: float = 1.0
    cov_kind: str = "identity"
    c: float = 0.35
    reps: int = 200
    n_boot: int = 100
    alpha: float = 0.05
    base_seed: int = 0
    intercept: float = 0.0
    grid_points: int = 41
    theta_bounds: Optional[tuple[float, float]] = None
    post_lasso: bool = True
    loading_iters: int = 5
    name: str = ""

    def __post_init__(self):
        get_family(self.family)
        if self.cov_kind not in COV_KINDS:
            raise ConfigError(f"cov_kind: must be one of {COV_KINDS}")
        checks = [
            ("n", self.n >= 2, "must be at least 2"),
            ("n_test", self.n_test >= 2, "must be at least 2"),
            ("p", self.p >= 1, "must be positive"),
            ("s", 1 <= self.s <= self.p, "must satisfy 1 <= s <= p"),
            ("snr", self.snr > 0, "must be positive"),
            ("c", abs(self.c) < 1, "must satisfy |c| < 1"),
            ("reps", self.reps >= 1, "must be at least 1"),
            ("n_boot", self.n_boot == 0 or self.n_boot >= 2, "must be 0 or at least 2"),
            ("alpha", 0 < self.alpha < 1, "must lie in (0, 1)"),
            ("loading_iters", self.loading_iters >= 1, "must be at least 1"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        if self.theta_bounds is not None:
            object.__setattr__(self, "theta_bounds", tuple(float(v) for v in self.theta_bounds))

    @property
    def family_obj(self) -> TransformationFamily:
        return get_family(self.family, self.theta_bounds)

    def lasso_config(self) -> LassoConfig:
        return LassoConfig(post_lasso=self.post_lasso, loading_iters=self.loading_iters)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(grid_points=self.grid_points, theta_bounds=self.theta_bounds)

    def replace(self, **kw) -> "SimConfig":
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)


def make_covariance(cov_kind: str, p: int, c: float = 0.35) -> np.ndarray:
    """Identity, Toeplitz ``c^|i-j|`` or ``(1 - c^p) I + c^(p - |i-j|)``."""
    if p < 1:
        raise CovarianceError("p must be positive")
    if not abs(c) < 1:
        raise CovarianceError("|c| must be below 1")
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    if cov_kind == "identity":
        cov = np.eye(p)
    elif cov_kind == "toeplitz":
        cov = c ** d.astype(float)
    elif cov_kind == "equi":
        cov = (1.0 - c**p) * np.eye(p) + c ** (p - d).astype(float)
    else:
        raise CovarianceError(f"unknown covariance kind {cov_kind!r}")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise CovarianceError(f"{cov_kind} covariance with c={c} is not positive definite") from None
    return cov


def calibrate_sigma(beta, cov, snr: float) -> float:
    """Noise variance giving ``Var(X beta) / sigma^2 = snr``."""
    if not snr > 0:
        raise CalibrationError("snr must be positive")
    beta = np.asarray(beta, dtype=float)
    signal = float(beta @ np.asarray(cov, dtype=float) @ beta)
    if signal <= 0:
        raise CalibrationError("the signal variance is zero")
    return signal / snr


def true_beta(config: SimConfig) -> np.ndarray:
    beta = np.zeros(config.p)
    beta[: config.s] = 1.0
    return beta


def _draw_rows(rng, m, chol, beta, sigma, family, config):
    X = rng.standard_normal((m, config.p)) @ chol.T
    z = config.intercept + X @ beta + sigma * rng.standard_normal(m)
    return X, z


def _draw_block(rng, m, chol, beta, sigma, family, config):
    X, z = _draw_rows(rng, m, chol, beta, sigma, family, config)
    ok = family.range_mask(config.theta0, z)
    redraws = 0
    while not ok.all():
        bad = np.flatnonzero(~ok)
        redraws += bad.size
        if redraws > REDRAW_LIMIT * m:
            raise DGPInfeasibleError(
                f"more than {REDRAW_LIMIT:.0%} of latent draws fall outside the range of the transformation"
            )
        X[bad], z[bad] = _draw_rows(rng, bad.size, chol, beta, sigma, family, config)
        ok = family.range_mask(config.theta0, z)
    return Dataset(family.inverse(config.theta0, z), X), redraws


def draw_dataset(config: SimConfig, rep_seed):
    """Training and test samples for one replication.

    ``rep_seed`` is anything accepted by :func:`numpy.random.default_rng`.
    Latent values outside the range of the transformation are redrawn
    (row by row, covariates included).

    Returns
    -------
    train, test : Dataset
    redraws : int
    """
    family = config.family_obj
    cov = make_covariance(config.cov_kind, config.p, config.c)
    chol = np.linalg.cholesky(cov)
    beta = true_beta(config)
    sigma = math.sqrt(calibrate_sigma(beta, cov, config.snr))
    rng = np.random.default_rng(rep_seed)
    train, r1 = _draw_block(rng, config.n, chol, beta, sigma, family, config)
    test, r2 = _draw_block(rng, config.n_test, chol, beta, sigma, family, config)
    return train, test, r1 + r2


def rep_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(rep)])


def _boot_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(rep), 1]).generate_state(1)[0])


@dataclass
class RepRecord:
    rep: int
    theta_hat: float = float("nan")
    accepted: float = float("nan")
    mse: float = float("nan")
    sigma_boot: float = float("nan")
    redraws: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class SimulationReport:
    config: SimConfig
    mean_estimator: float
    acceptance_rate: float
    mae: float
    rel_mse: float
    mse: float
    failures: int
    per_rep: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "name": self.config.name,
            "family": self.config.family,
            "theta0": self.config.theta0,
            "n": self.config.n,
            "p": self.config.p,
            "snr": self.config.snr,
            "cov_kind": self.config.cov_kind,
            "reps": self.config.reps,
            "estimator": self.mean_estimator,
            "acceptance_rate": self.acceptance_rate,
            "mae": self.mae,
            "rel_mse": self.rel_mse,
            "mse": self.mse,
            "failures": self.failures,
        }

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), **self.row(), "per_rep": [asdict(r) for r in self.per_rep]}


def summarize(config: SimConfig, records) -> SimulationReport:
    """Aggregate per-replication records; order of ``records`` is irrelevant."""
    records = sorted(records, key=lambda r: r.rep)
    good = [r for r in records if r.ok]
    failures = len(records) - len(good)
    if not good:
        raise StudyError("every replication failed")
    theta = np.array([r.theta_hat for r in good])
    acc = np.array([r.accepted for r in good])
    mse = np.array([r.mse for r in good])
    sigma2 = calibrate_sigma(true_beta(config), make_covariance(config.cov_kind, config.p, config.c), config.snr)
    mean_mse = float(np.mean(mse))
    return SimulationReport(
        config=config,
        mean_estimator=float(np.mean(theta)),
        acceptance_rate=float(np.mean(acc)) if np.isfinite(acc).all() else float("nan"),
        mae=float(np.mean(np.abs(theta - config.theta0))),
        rel_mse=mean_mse / sigma2,
        mse=mean_mse,
        failures=failures,
        per_rep=records,
    )


# An injected estimator maps (train, config) to (theta_hat, accepted, intercept, beta).
Estimator = Callable[[Dataset, SimConfig], tuple]


def _default_estimator(train: Dataset, config: SimConfig, rep: int):
    family = config.family_obj
    sol = solve(train, family, config.lasso_config(), config.solver_config())
    accepted = float("nan")
    sigma_boot = float("nan")
    if config.n_boot:
        sigma_boot, _, _ = bootstrap_variance(
            train,
            family,
            config.lasso_config(),
            config.solver_config(),
            config.n_boot,
            _boot_seed(config.base_seed, rep),
        )
        lo, hi = confidence_interval(sol.theta_hat, sigma_boot, config.alpha)
        accepted = float(lo <= config.theta0 <= hi)
    fit_m = sol.nuisance.fit_m
    return sol.theta_hat, accepted, fit_m.intercept, fit_m.beta, sigma_boot


def _one_rep(args) -> RepRecord:
    config, rep, estimator = args
    rec = RepRecord(rep=rep)
    try:
        train, test, rec.redraws = draw_dataset(config, rep_seed(config.base_seed, rep))
        if estimator is None:
            theta_hat, accepted, a, b, rec.sigma_boot = _default_estimator(train, config, rep)
        else:
            theta_hat, accepted, a, b = estimator(train, config)[:4]
        rec.theta_hat, rec.accepted = float(theta_hat), float(accepted)
        target = config.family_obj.eval(config.theta0, test.y)
        rec.mse = float(np.mean((target - a - test.X @ np.asarray(b)) ** 2))
    except HDTrafoError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    return [fn(j) for j in jobs]


def run_study(config: SimConfig, threads: int = 1, estimator: Optional[Estimator] = None) -> SimulationReport:
    """Run ``config.reps`` replications and aggregate them.

    Each replication draws data from ``(base_seed, rep)``, estimates theta,
    tests ``theta = theta0`` with the bootstrap interval (skipped when
    ``n_boot = 0``) and computes the out-of-sample MSE of the fitted linear
    predictor against ``Lambda_theta0(y)`` on the test sample.

    Raises
    ------
    StudyError
        More than 20% of the replications failed.
    """
    jobs = [(config, rep, estimator) for rep in range(config.reps)]
    records = _map(_one_rep, jobs, threads)
    failures = sum(not r.ok for r in records)
    if failures > FAILURE_LIMIT * config.reps:
        first = next(r.error for r in records if not r.ok)
        raise StudyError(f"{failures} of {config.reps} replications failed; first error: {first}")
    return summarize(config, records)


def _hist_rep(args):
    config, rep = args
    try:
        train, _, _ = draw_dataset(config, rep_seed(config.base_seed, rep))
        return solve(train, config.family_obj, config.lasso_config(), config.solver_config()).theta_hat
    except HDTrafoError:
        return float("nan")


def estimator_histogram(config: SimConfig, reps: Optional[int] = None, threads: int = 1) -> np.ndarray:
    """Point estimates (no bootstrap) over ``reps`` replications; failed ones are dropped."""
    reps = config.reps if reps is None else reps
    out = np.array(_map(_hist_rep, [(config, r) for r in range(reps)], threads), dtype=float)
    if np.isnan(out).sum() > FAILURE_LIMIT * reps:
        raise StudyError(f"{int(np.isnan(out).sum())} of {reps} replications failed")
    return out[np.isfinite(out)]


# ---------------------------------------------------------------- oracles

def _noise_sd(config: SimConfig) -> float:
    cov = make_covariance(config.cov_kind, config.p, config.c)
    return math.sqrt(calibrate_sigma(true_beta(config), cov, config.snr))


def oracle_nuisance(
    dataset: Dataset, config: SimConfig, theta: float, n_nodes: int = 120
) -> NuisanceAtTheta:
    """Nuisance built from the true conditional means of the DGP.

    ``m_theta(x) = E[Lambda_theta(Y) | x]`` and its theta derivative are
    integrated over the Gaussian error with Gauss-Hermite quadrature. The
    variances are the sample moments of the resulting residuals.
    """
    family = config.family_obj
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    w = w / math.sqrt(math.pi)
    sd = _noise_sd(config)
    u = config.intercept + dataset.X @ true_beta(config)
    latent = u[:, None] + math.sqrt(2.0) * sd * t[None, :]
    ok = family.range_mask(config.theta0, latent)
    if not ok.all():
        raise DGPInfeasibleError("quadrature nodes fall outside the range of the transformation")
    y_nodes = family.inverse(config.theta0, latent)
    m = family.eval(theta, y_nodes) @ w
    mdot = family.dtheta(theta, y_nodes) @ w
    return NuisanceAtTheta.from_functions(
        theta, family.eval(theta, dataset.y), family.dtheta(theta, dataset.y), m, mdot
    )


def population_coefficients(config: SimConfig, theta: float, n_nodes: int = 120) -> np.ndarray:
    """Slopes of the best linear predictor of ``Lambda_theta(Y)`` given ``X``.

    With jointly Gaussian ``(X, latent)``, Stein's lemma gives
    ``beta_theta = beta0 * E[g'(latent)]`` for ``g = Lambda_theta o Lambda_theta0^{-1}``.
    """
    family = config.family_obj
    cov = make_covariance(config.cov_kind, config.p, config.c)
    beta0 = true_beta(config)
    total_sd = math.sqrt(float(beta0 @ cov @ beta0) + _noise_sd(config) ** 2)
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    latent = config.intercept + math.sqrt(2.0) * total_sd * t
    w = w / math.sqrt(math.pi)
    ok = family.range_mask(config.theta0, latent)
    y = family.inverse(config.theta0, latent[ok])
    slope = family.dy(theta, y) / family.dy(config.theta0, y)
    return beta0 * float(slope @ w[ok])


# ---------------------------------------------------------------- config files

def _parse_block(block, path: str) -> SimConfig:
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(block) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field")
    kinds = {f.name: f.type for f in fields(SimConfig)}
    for key, value in block.items():
        kind = kinds[key]
        bad = False
        if kind in ("int",):
            bad = isinstance(value, bool) or not isinstance(value, int)
        elif kind in ("float",):
            bad = isinstance(value, bool) or not isinstance(value, (int, float))
        elif kind in ("str",):
            bad = not isinstance(value, str)
        elif kind in ("bool",):
            bad = not isinstance(value, bool)
        if bad:
            raise ConfigError(f"{path}.{key}: expected {kind}, got {type(value).__name__}")
    try:
        return SimConfig(**block)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_configs(path) -> list[SimConfig]:
    """Read a study file: either one config object or ``{"configs": [...]}``.

    Shared defaults may be given under ``"defaults"``. Errors name the
    offending field, e.g. ``configs[1].snr``.
    """
    try:
        with Path(path).open(encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if isinstance(doc, dict) and "configs" in doc:
        defaults = doc.get("defaults", {})
        if not isinstance(defaults, dict):
            raise ConfigError("defaults: expected an object")
        blocks = doc["configs"]
        if not isinstance(blocks, list) or not blocks:
            raise ConfigError("configs: expected a non-empty list")
        return [_parse_block({**defaults, **b} if isinstance(b, dict) else b, f"configs[{i}]") for i, b in enumerate(blocks)]
    return [_parse_block(doc, "config")]


def write_report_csv(reports, path) -> None:
    import csv

    rows = [r.row() for r in reports]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
