"""Z-estimation of the transformation parameter with bootstrap inference."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import __version__
from .exceptions import (
    BootstrapUnstableError,
    DegenerateTestError,
    EstimationInfeasibleError,
    FlatScoreError,
    HDTrafoError,
)
from .io import Dataset
from .lasso import LassoConfig
from .moment import empirical_moment, score_parts
from .nuisance import NUISANCE_LASSO, NuisanceAtTheta, fit_at_theta, fit_grid
from .transform import TransformationFamily, get_family

__all__ = [
    "SolverConfig",
    "Solution",
    "EstimationResult",
    "solve",
    "bootstrap_variance",
    "replicate_variance",
    "confidence_interval",
    "test_null",
    "p_value",
    "plugin_variance",
    "plugin_variance_from_score",
    "estimate",
    "TransformationModel",
]

BOOT_FAILURE_LIMIT = 0.10


@dataclass(frozen=True)
class SolverConfig:
    """Grid and refinement settings for the root search.

    ``boot_grid_points=None`` uses half the grid resolution for bootstrap
    replicates.
    """

    grid_points: int = 41
    refine_tol: float = 1e-8
    epsilon_n: float = 1e-8
    theta_bounds: Optional[tuple[float, float]] = None
    boot_grid_points: Optional[int] = None

    def __post_init__(self):
        if self.grid_points < 9:
            raise ValueError("grid_points must be at least 9")
        if not (self.refine_tol > 0 and self.epsilon_n > 0):
            raise ValueError("refine_tol and epsilon_n must be positive")
        if self.theta_bounds is not None:
            lo, hi = self.theta_bounds
            if not lo < hi:
                raise ValueError("theta_bounds must satisfy lo < hi")
            if not self.refine_tol < hi - lo:
                raise ValueError("refine_tol must be smaller than the search interval")

    def bounds(self, family: TransformationFamily) -> tuple[float, float]:
        lo, hi = self.theta_bounds if self.theta_bounds is not None else family.theta_domain
        return float(lo), float(hi)

    def boot_points(self) -> int:
        if self.boot_grid_points is not None:
            return self.boot_grid_points
        return max(5, (self.grid_points + 1) // 2)


@dataclass
class Solution:
    theta_hat: float
    trace: list
    nuisance: NuisanceAtTheta
    mean_psi: float
    multi_root: bool = False
    n_roots: int = 0
    eps_realized: float = 0.0
    grid_failures: int = 0
    grid_step: float = float("nan")

    def __iter__(self):
        # allows ``theta_hat, trace = solve(...)``
        yield self.theta_hat
        yield self.trace


def _mean_score(dataset, family, nuis):
    c = family.c_ratio(nuis.theta, dataset.y)
    psi = score_parts(nuis.lam_y, nuis.lam_dot_y, c, nuis.m_hat, nuis.sigma2, nuis.mdot_hat, nuis.sigma2dot).psi
    return float(np.mean(psi))


def solve(
    dataset: Dataset,
    family: TransformationFamily,
    lasso_config: LassoConfig = NUISANCE_LASSO,
    solver_config: SolverConfig = SolverConfig(),
    grid_points: Optional[int] = None,
) -> Solution:
    """Find theta with the smallest absolute mean score.

    The score is scanned on an equispaced grid over the search interval. Every
    sign change between neighbouring grid points is refined by Brent's
    bracketing method to ``refine_tol``, refitting the nuisance at each
    evaluated theta. Without a sign change the best grid point is returned.
    ``solve(...)`` can be unpacked as ``theta_hat, trace``.

    Raises
    ------
    EstimationInfeasibleError
        No grid point gave a finite score.
    """
    lo, hi = solver_config.bounds(family)
    k = grid_points or solver_config.grid_points
    thetas = np.linspace(lo, hi, k)
    cache: dict[float, tuple[float, NuisanceAtTheta]] = {}
    trace: list[tuple[float, float]] = []
    failures = 0
    for theta, nuis in zip(thetas, fit_grid(dataset, family, thetas, lasso_config)):
        if isinstance(nuis, Exception):
            failures += 1
            continue
        s = _mean_score(dataset, family, nuis)
        if not math.isfinite(s):
            failures += 1
            continue
        cache[float(theta)] = (s, nuis)
        trace.append((float(theta), s))
    if not trace:
        raise EstimationInfeasibleError("the score could not be evaluated at any grid point")

    grid = list(trace)
    roots = [t for t, s in grid if s == 0.0]
    brackets = [(a, b) for (a, sa), (b, sb) in zip(grid, grid[1:]) if sa * sb < 0]

    def score_at(theta: float) -> float:
        theta = float(theta)
        if theta in cache:
            return cache[theta][0]
        near = min(cache, key=lambda t: abs(t - theta))
        nuis = fit_at_theta(dataset, family, theta, lasso_config, warm=cache[near][1])
        s = _mean_score(dataset, family, nuis)
        cache[theta] = (s, nuis)
        trace.append((theta, s))
        return s

    for a, b in brackets:
        try:
            brentq(score_at, a, b, xtol=solver_config.refine_tol, maxiter=200)
        except (HDTrafoError, ValueError, RuntimeError):
            # keep whatever the refinement evaluated; the grid endpoints remain candidates
            pass

    # refined roots normally win; taking the argmin over everything evaluated
    # makes the realized tolerance zero by construction
    theta_hat, s_hat = min(trace, key=lambda ts: (abs(ts[1]), ts[0]))
    best_all = min(abs(s) for _, s in trace)
    n_roots = len(brackets) + len(roots)
    return Solution(
        theta_hat=theta_hat,
        trace=trace,
        nuisance=cache[theta_hat][1],
        mean_psi=s_hat,
        multi_root=n_roots > 1,
        n_roots=n_roots,
        eps_realized=abs(s_hat) - best_all,
        grid_failures=failures,
        grid_step=(hi - lo) / (k - 1),
    )


def replicate_variance(replicates) -> float:
    """Sample variance (denominator ``B - 1``) of bootstrap replicates, order independent."""
    reps = np.sort(np.asarray(replicates, dtype=float))
    if reps.size < 2:
        raise BootstrapUnstableError("need at least two successful bootstrap replicates")
    return float(np.var(reps, ddof=1))


def _boot_one(args):
    dataset, family, lasso_config, solver_config, seed, b = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    idx = rng.integers(0, dataset.n, size=dataset.n)
    try:
        sol = solve(dataset.subset(idx), family, lasso_config, solver_config, grid_points=solver_config.boot_points())
    except HDTrafoError:
        return b, float("nan")
    return b, sol.theta_hat


def bootstrap_variance(
    dataset: Dataset,
    family: TransformationFamily,
    lasso_config: LassoConfig = NUISANCE_LASSO,
    solver_config: SolverConfig = SolverConfig(),
    n_boot: int = 100,
    seed: int = 0,
    threads: int = 1,
):
    """Pairs bootstrap of the whole estimation procedure.

    Replicate ``b`` resamples rows with a generator seeded by ``(seed, b)``, so
    results do not depend on ``threads``.

    Returns
    -------
    sigma_boot : float
        Sample variance of the replicate estimates.
    replicates : ndarray
        Successful replicate estimates in replicate order.
    n_failed : int
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    jobs = [(dataset, family, lasso_config, solver_config, seed, b) for b in range(n_boot)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_boot_one, jobs, chunksize=max(1, n_boot // (4 * threads))))
    else:
        results = [_boot_one(job) for job in jobs]
    results.sort()
    reps = np.array([t for _, t in results])
    ok = np.isfinite(reps)
    n_failed = int((~ok).sum())
    if n_failed > BOOT_FAILURE_LIMIT * n_boot:
        raise BootstrapUnstableError(f"{n_failed} of {n_boot} bootstrap replicates failed")
    reps = reps[ok]
    return replicate_variance(reps), reps, n_failed


def confidence_interval(theta_center: float, sigma: float, alpha: float = 0.05) -> tuple[float, float]:
    """Normal interval ``center -/+ sqrt(sigma) z_{1 - alpha/2}``; ``sigma`` is a variance."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    w = math.sqrt(sigma) * float(ndtri(1.0 - alpha / 2.0))
    return theta_center - w, theta_center + w


def p_value(z: float) -> float:
    return float(2.0 * ndtr(-abs(z)))


@dataclass
class EstimationResult:
    theta_hat: float
    mean_psi_at_hat: float
    sigma_boot: Optional[float]
    sigma_plug: Optional[float]
    ci: Optional[tuple[float, float]]
    alpha: float
    n_boot: int
    solver_trace: list
    seed: int
    family: str = ""
    theta_bounds: tuple[float, float] = (float("nan"), float("nan"))
    grid_points: int = 0
    grid_step: float = float("nan")
    multi_root: bool = False
    eps_realized: float = 0.0
    boot_failures: int = 0
    replicates: Optional[np.ndarray] = field(default=None, repr=False)
    n: int = 0
    p: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = None if self.ci is None else {"lo": self.ci[0], "hi": self.ci[1], "alpha": self.alpha}
        d["solver_trace"] = [[t, s] for t, s in self.solver_trace]
        d["replicates"] = None if self.replicates is None else list(map(float, self.replicates))
        d["version"] = __version__
        return d


def test_null(result: EstimationResult, theta_null: float):
    """Two-sided level-``alpha`` test of ``theta0 = theta_null``.

    Returns
    -------
    reject : bool
    z_stat : float
    """
    sigma = result.sigma_boot
    if sigma is None or not sigma > 0:
        raise DegenerateTestError("the test needs a positive bootstrap variance")
    z = (result.theta_hat - theta_null) / math.sqrt(sigma)
    lo, hi = confidence_interval(result.theta_hat, sigma, result.alpha)
    reject = not (lo <= theta_null <= hi)
    return reject, float(z)


def plugin_variance_from_score(
    score_fn: Callable[[float], float], theta_hat: float, step: float, per_obs
) -> float:
    """``mean(psi^2) / (Gamma^2 n)`` with ``Gamma`` a central difference of ``score_fn``."""
    per_obs = np.asarray(per_obs, dtype=float)
    m2 = float(np.mean(per_obs**2))
    if m2 == 0.0:
        return 0.0
    gamma = (score_fn(theta_hat + step) - score_fn(theta_hat - step)) / (2.0 * step)
    if not abs(gamma) >= 1e-8:
        raise FlatScoreError(f"score slope {gamma:.3g} is numerically zero")
    return m2 / (gamma * gamma * per_obs.size)


def plugin_variance(
    dataset: Dataset,
    family: TransformationFamily,
    result: EstimationResult,
    nuis_at_hat: NuisanceAtTheta,
    lasso_config: LassoConfig = NUISANCE_LASSO,
    step: Optional[float] = None,
) -> float:
    """Sandwich-type variance of theta_hat on the same scale as the bootstrap variance."""
    step = result.grid_step if step is None else step
    _, per_obs = empirical_moment(dataset, family, result.theta_hat, nuis_at_hat)

    def score_fn(theta):
        nuis = fit_at_theta(dataset, family, theta, lasso_config, warm=nuis_at_hat)
        return _mean_score(dataset, family, nuis)

    return plugin_variance_from_score(score_fn, result.theta_hat, step, per_obs)


def estimate(
    dataset: Dataset,
    family: TransformationFamily,
    lasso_config: LassoConfig = NUISANCE_LASSO,
    solver_config: SolverConfig = SolverConfig(),
    n_boot: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int = 1,
    plugin: bool = True,
    return_solution: bool = False,
):
    """Point estimate, bootstrap variance and confidence interval in one call.

    ``n_boot=0`` skips the bootstrap, leaving ``sigma_boot`` and ``ci`` unset.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n_boot == 1 or n_boot < 0:
        raise ValueError("n_boot must be 0 or at least 2")
    sol = solve(dataset, family, lasso_config, solver_config)
    result = EstimationResult(
        theta_hat=sol.theta_hat,
        mean_psi_at_hat=sol.mean_psi,
        sigma_boot=None,
        sigma_plug=None,
        ci=None,
        alpha=alpha,
        n_boot=n_boot,
        solver_trace=sol.trace,
        seed=seed,
        family=family.kind,
        theta_bounds=solver_config.bounds(family),
        grid_points=solver_config.grid_points,
        grid_step=sol.grid_step,
        multi_root=sol.multi_root,
        eps_realized=sol.eps_realized,
        n=dataset.n,
        p=dataset.p,
        config={"lasso": asdict(lasso_config), "solver": asdict(solver_config)},
    )
    if plugin:
        try:
            result.sigma_plug = plugin_variance(dataset, family, result, sol.nuisance, lasso_config)
        except HDTrafoError:
            result.sigma_plug = None
    if n_boot:
        sigma, reps, n_failed = bootstrap_variance(
            dataset, family, lasso_config, solver_config, n_boot, seed, threads
        )
        result.sigma_boot = sigma
        result.replicates = reps
        result.boot_failures = n_failed
        result.ci = confidence_interval(sol.theta_hat, sigma, alpha)
    if return_solution:
        return result, sol
    return result


class TransformationModel(RegressorMixin, BaseEstimator):
    """High-dimensional transformation model ``Lambda_theta(y) = a + X b + e``.

    Estimates ``theta`` by solving the orthogonalized score equation with
    lasso nuisance fits, then bootstraps its variance.

    Parameters
    ----------
    family : {"boxcox", "yeo-johnson"}
    theta_bounds : (float, float), optional
        Search interval; defaults to the family's domain.
    grid_points : int
    refine_tol : float
    n_boot : int
        Bootstrap replicates; 0 disables inference.
    alpha : float
        Level of the confidence interval and test.
    c_mult, gamma, loading_iters, post_lasso
        Lasso penalty settings, see :class:`~hdtrafo.lasso.LassoConfig`.
    plugin : bool
        Also compute the plug-in variance.
    random_state : int
        Bootstrap seed.
    n_jobs : int
        Worker processes for the bootstrap.

    Attributes
    ----------
    theta_ : float
    result_ : EstimationResult
    nuisance_ : NuisanceAtTheta
    coef_, intercept_ : lasso fit of the transformed response at ``theta_``
    ci_ : (float, float) or None
    """

    def __init__(
        self,
        family="boxcox",
        theta_bounds=None,
        grid_points=41,
        refine_tol=1e-8,
        n_boot=100,
        alpha=0.05,
        c_mult=1.1,
        gamma=None,
        loading_iters=5,
        post_lasso=True,
        plugin=True,
        random_state=0,
        n_jobs=1,
    ):
        self.family = family
        self.theta_bounds = theta_bounds
        self.grid_points = grid_points
        self.refine_tol = refine_tol
        self.n_boot = n_boot
        self.alpha = alpha
        self.c_mult = c_mult
        self.gamma = gamma
        self.loading_iters = loading_iters
        self.post_lasso = post_lasso
        self.plugin = plugin
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.family_ = get_family(self.family, self.theta_bounds)
        lasso_config = LassoConfig(
            c_mult=self.c_mult, gamma=self.gamma, loading_iters=self.loading_iters, post_lasso=self.post_lasso
        )
        solver_config = SolverConfig(grid_points=self.grid_points, refine_tol=self.refine_tol)
        seed = 0 if self.random_state is None else int(self.random_state)
        dataset = Dataset(y, X)
        result, sol = estimate(
            dataset,
            self.family_,
            lasso_config,
            solver_config,
            n_boot=self.n_boot,
            alpha=self.alpha,
            seed=seed,
            threads=self.n_jobs,
            plugin=self.plugin,
            return_solution=True,
        )
        self.result_ = result
        self.nuisance_ = sol.nuisance
        self.theta_ = result.theta_hat
        self.ci_ = result.ci
        self.sigma_boot_ = result.sigma_boot
        self.coef_ = sol.nuisance.fit_m.beta
        self.intercept_ = sol.nuisance.fit_m.intercept
        self.n_features_in_ = X.shape[1]
        return self

    def transform_target(self, y):
        check_is_fitted(self, "theta_")
        return self.family_.eval(self.theta_, np.asarray(y, dtype=float))

    def inverse_transform_target(self, z):
        check_is_fitted(self, "theta_")
        return self.family_.inverse(self.theta_, np.asarray(z, dtype=float))

    def predict_transformed(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_

    def predict(self, X):
        """Back-transformed linear predictor (the conditional median of ``y``)."""
        z = self.predict_transformed(X)
        ok = self.family_.range_mask(self.theta_, z)
        if not ok.all():
            # push unreachable latent values just inside the range boundary
            z = z.copy()
            t = self.theta_ if self.family_.kind == "boxcox" else np.where(z >= 0, self.theta_, 2.0 - self.theta_)
            bound = -1.0 / np.where(np.asarray(t) == 0, np.inf, t) * (1.0 - 1e-12)
            if self.family_.kind == "boxcox":
                z[~ok] = bound if np.ndim(bound) == 0 else bound[~ok]
            else:
                z[~ok] = np.sign(z[~ok]) * np.abs(np.broadcast_to(bound, z.shape)[~ok])
        return self.family_.inverse(self.theta_, z)

    def test(self, theta_null: float):
        check_is_fitted(self, "result_")
        return test_null(self.result_, theta_null)
