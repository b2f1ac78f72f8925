"""Lasso with data-driven penalty loadings, solved by covariance coordinate descent.

The objective is

    (1/n) ||y - a - X b||^2 + (lam/n) * sum_j psi_j |b_j|

with an unpenalized intercept ``a`` and loadings ``psi_j`` that are refreshed
from the residuals of the previous fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import LassoInputError

__all__ = [
    "LassoConfig",
    "LassoFit",
    "LassoDesign",
    "default_lambda",
    "fit",
    "kkt_residuals",
    "kkt_violation",
    "objective",
    "WeightedLasso",
]


@dataclass(frozen=True)
class LassoConfig:
    """Penalty and solver settings.

    ``gamma=None`` selects ``0.1 / log(max(p, n))``.
    """

    lambda_override: Optional[float] = None
    c_mult: float = 1.1
    gamma: Optional[float] = None
    max_iter: int = 10_000
    tol: float = 1e-9
    loading_iters: int = 2
    penalize_intercept: bool = False
    post_lasso: bool = False

    def __post_init__(self):
        if self.lambda_override is not None and not self.lambda_override >= 0:
            raise ValueError("lambda_override must be nonnegative")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1 or self.loading_iters < 1:
            raise ValueError("max_iter and loading_iters must be >= 1")
        if self.penalize_intercept:
            raise NotImplementedError("penalized intercept is not supported")


@dataclass
class LassoFit:
    beta: np.ndarray
    intercept: float
    active_set: np.ndarray
    lambda_used: float
    loadings: np.ndarray
    iterations: int
    converged: bool
    # penalized solution before the optional least-squares refit on the active set
    beta_lasso: Optional[np.ndarray] = field(default=None, repr=False)
    intercept_lasso: Optional[float] = field(default=None, repr=False)

    def penalized_solution(self) -> tuple[np.ndarray, float]:
        if self.beta_lasso is None:
            return self.beta, self.intercept
        return self.beta_lasso, self.intercept_lasso

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.beta


class LassoDesign:
    """Centered design with cached Gram matrix, reused across many responses."""

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise LassoInputError("X must be a 2-d array")
        if not np.all(np.isfinite(X)):
            raise LassoInputError("X contains non-finite values")
        self.X = X
        self.n, self.p = X.shape
        self.x_mean = X.mean(axis=0)
        self.Xc = X - self.x_mean
        self.Xc2 = self.Xc**2
        self.gram = np.ascontiguousarray(self.Xc.T @ self.Xc / self.n)
        self.diag = np.diag(self.gram).copy()


def default_lambda(n: int, p: int, config: LassoConfig = LassoConfig()) -> float:
    """Penalty level ``2 c sqrt(n) Phi^{-1}(1 - gamma / (2p))``."""
    gamma = config.gamma if config.gamma is not None else 0.1 / np.log(max(p, n))
    return float(2.0 * config.c_mult * np.sqrt(n) * ndtri(1.0 - gamma / (2.0 * p)))


@numba.njit(cache=True)
def _sweep(G, c, pen, beta, Gb, diag, coords):
    max_change = 0.0
    p = G.shape[0]
    for j in coords:
        d = diag[j]
        if d <= 0.0:
            continue
        old = beta[j]
        rho = c[j] - Gb[j] + d * old
        if rho > pen[j]:
            new = (rho - pen[j]) / d
        elif rho < -pen[j]:
            new = (rho + pen[j]) / d
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            for k in range(p):
                Gb[k] += delta * G[k, j]
            ch = abs(delta) * np.sqrt(d)
            if ch > max_change:
                max_change = ch
    return max_change


@numba.njit(cache=True)
def _kkt_max(G, c, pen, beta, diag):
    # violation in units of the gradient (2/n) X'r
    p = G.shape[0]
    worst = 0.0
    for j in range(p):
        if diag[j] <= 0.0:
            continue
        gb = 0.0
        for k in range(p):
            gb += G[j, k] * beta[k]
        g = c[j] - gb
        if beta[j] > 0.0:
            v = abs(g - pen[j])
        elif beta[j] < 0.0:
            v = abs(g + pen[j])
        else:
            v = abs(g) - pen[j]
        if v > worst:
            worst = v
    return 2.0 * worst


@numba.njit(cache=True)
def _objective(G, c, yy, pen, beta):
    p = G.shape[0]
    quad = 0.0
    lin = 0.0
    l1 = 0.0
    for j in range(p):
        gb = 0.0
        for k in range(p):
            gb += G[j, k] * beta[k]
        quad += beta[j] * gb
        lin += c[j] * beta[j]
        l1 += pen[j] * abs(beta[j])
    return yy - 2.0 * lin + quad + 2.0 * l1


@numba.njit(cache=True)
def _cd_solve(G, c, pen, beta, diag, max_iter, step_tol, kkt_tol, yy, record):
    p = G.shape[0]
    Gb = G @ beta
    all_coords = np.arange(p)
    trace = np.empty(max_iter if record else 0)
    it = 0
    converged = False
    while it < max_iter:
        _sweep(G, c, pen, beta, Gb, diag, all_coords)
        if record:
            trace[it] = _objective(G, c, yy, pen, beta)
        it += 1
        active = np.nonzero(beta)[0]
        while it < max_iter:
            ch = _sweep(G, c, pen, beta, Gb, diag, active)
            if record:
                trace[it] = _objective(G, c, yy, pen, beta)
            it += 1
            if ch <= step_tol:
                break
        Gb = G @ beta
        if _kkt_max(G, c, pen, beta, diag) <= kkt_tol:
            converged = True
            break
    return it, converged, trace[:it]


def _loadings(design: LassoDesign, resid: np.ndarray) -> np.ndarray:
    psi = np.sqrt(design.Xc2.T @ (resid * resid) / design.n)
    # zero columns never enter the model; any positive loading will do
    return np.where(psi > 0, psi, 1.0)


def _refit(design: LassoDesign, c: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Least squares on the support of ``beta`` through the Gram matrix."""
    active = np.flatnonzero(beta)
    out = np.zeros_like(beta)
    if active.size:
        G = design.gram[np.ix_(active, active)]
        try:
            out[active] = np.linalg.solve(G, c[active])
        except np.linalg.LinAlgError:
            out[active] = np.linalg.lstsq(G, c[active], rcond=None)[0]
    return out


def _tolerances(design, yy, tol):
    yscale = max(1.0, np.sqrt(yy))
    xscale = max(1.0, np.sqrt(design.diag.max(initial=0.0)))
    return tol * yscale, tol * yscale * xscale


def fit(
    X,
    y,
    config: LassoConfig = LassoConfig(),
    warm_start: Optional[np.ndarray] = None,
    design: Optional[LassoDesign] = None,
    record_objective: bool = False,
    loadings: Optional[np.ndarray] = None,
) -> LassoFit:
    """Fit the weighted-penalty lasso.

    Parameters
    ----------
    X : array of shape (n, p)
        Ignored when ``design`` is given.
    y : array of shape (n,)
    config : LassoConfig
    warm_start : array of shape (p,), optional
        Initial coefficients for coordinate descent.
    design : LassoDesign, optional
        Precomputed centered design; saves the Gram matrix across calls.
    record_objective : bool
        Attach the per-sweep objective values as ``fit.objective_trace``.
    loadings : array of shape (p,), optional
        Fixed positive loadings; disables the data-driven refresh.

    Returns
    -------
    LassoFit
    """
    if design is None:
        design = LassoDesign(X)
    y = np.asarray(y, dtype=float)
    n, p = design.n, design.p
    if y.shape != (n,):
        raise LassoInputError(f"y has shape {y.shape}, expected ({n},)")
    if n < 2:
        raise LassoInputError("need at least 2 observations")
    if not np.isfinite(y).all():
        raise LassoInputError("y contains non-finite values")

    ybar = y.mean()
    yc = y - ybar
    yy = float(yc @ yc) / n
    c = design.Xc.T @ yc / n
    lam = config.lambda_override if config.lambda_override is not None else default_lambda(n, p, config)
    step_tol, kkt_tol = _tolerances(design, yy, config.tol)

    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    if loadings is None:
        psi = _loadings(design, yc)
        n_rounds = config.loading_iters
    else:
        psi = np.asarray(loadings, dtype=float).copy()
        if psi.shape != (p,) or not np.all(psi > 0):
            raise LassoInputError("loadings must be a positive vector of length p")
        n_rounds = 1
    total_iter = 0
    converged = False
    traces = []
    for k in range(n_rounds):
        if k > 0:
            b = _refit(design, c, beta) if config.post_lasso else beta
            psi = _loadings(design, yc - design.Xc @ b)
        pen = lam * psi / (2.0 * n)
        it, converged, trace = _cd_solve(
            design.gram, c, pen, beta, design.diag, config.max_iter, step_tol, kkt_tol, yy, record_objective
        )
        total_iter += it
        traces.append(trace)

    beta_lasso = intercept_lasso = None
    active = np.flatnonzero(beta)
    if config.post_lasso and active.size:
        beta_lasso = beta.copy()
        intercept_lasso = float(ybar - design.x_mean @ beta_lasso)
        beta = _refit(design, c, beta)

    out = LassoFit(
        beta=beta,
        intercept=float(ybar - design.x_mean @ beta),
        active_set=active,
        lambda_used=float(lam),
        loadings=psi,
        iterations=int(total_iter),
        converged=bool(converged),
        beta_lasso=beta_lasso,
        intercept_lasso=intercept_lasso,
    )
    if record_objective:
        out.objective_trace = traces
    return out


def kkt_residuals(fit_: LassoFit, X, y) -> np.ndarray:
    """Gradient ``(2/n) x_j'(y - a - X b)`` of the squared-error part at the penalized solution."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta, intercept = fit_.penalized_solution()
    r = y - intercept - X @ beta
    return 2.0 * X.T @ r / X.shape[0]


def kkt_violation(fit_: LassoFit, X, y) -> np.ndarray:
    """Per-coordinate distance from the lasso optimality conditions (0 when satisfied)."""
    g = kkt_residuals(fit_, X, y)
    n = np.asarray(X).shape[0]
    bound = fit_.lambda_used * fit_.loadings / n
    b, _ = fit_.penalized_solution()
    return np.where(b != 0, np.abs(g - np.sign(b) * bound), np.maximum(np.abs(g) - bound, 0.0))


def objective(X, y, beta, intercept, lam, loadings) -> float:
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - intercept - X @ beta
    n = X.shape[0]
    return float(r @ r / n + lam / n * np.sum(loadings * np.abs(beta)))


class WeightedLasso(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit`.

    Parameters
    ----------
    penalty : float, optional
        Fixed penalty level; the data-driven default is used when None.
    c_mult, gamma, loading_iters, max_iter, tol, post_lasso
        See :class:`LassoConfig`.
    """

    def __init__(
        self,
        penalty=None,
        c_mult=1.1,
        gamma=None,
        loading_iters=2,
        max_iter=10_000,
        tol=1e-9,
        post_lasso=False,
    ):
        self.penalty = penalty
        self.c_mult = c_mult
        self.gamma = gamma
        self.loading_iters = loading_iters
        self.max_iter = max_iter
        self.tol = tol
        self.post_lasso = post_lasso

    def _config(self) -> LassoConfig:
        return LassoConfig(
            lambda_override=self.penalty,
            c_mult=self.c_mult,
            gamma=self.gamma,
            max_iter=self.max_iter,
            tol=self.tol,
            loading_iters=self.loading_iters,
            post_lasso=self.post_lasso,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        res = fit(X, y, self._config())
        self.coef_ = res.beta
        self.intercept_ = res.intercept
        self.loadings_ = res.loadings
        self.lambda_ = res.lambda_used
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        self.fit_ = res
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_
