"""Lasso estimates of the nuisance quadruple (m, sigma^2, m_dot, sigma^2_dot) at fixed theta."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import lasso
from .exceptions import DegenerateModelError, HDTrafoError
from .io import Dataset
from .lasso import LassoConfig, LassoFit
from .transform import TransformationFamily

__all__ = ["NuisanceAtTheta", "fit_at_theta", "fit_grid", "DEGENERATE_RTOL", "NUISANCE_LASSO"]

DEGENERATE_RTOL = 1e-14

# Least-squares refit on the lasso support, with loadings refreshed from the
# refit residuals until they settle.
NUISANCE_LASSO = LassoConfig(post_lasso=True, loading_iters=5)


@dataclass
class NuisanceAtTheta:
    """Nuisance functions evaluated at the sample points for one theta.

    ``resid = lam_y - m_hat`` and ``resid_dot = lam_dot_y - mdot_hat``, where
    ``lam_y`` and ``lam_dot_y`` are the transformed response and its theta
    derivative. ``fit_m`` and ``fit_mdot`` are None for nuisance values that
    were not produced by the lasso (oracles, perturbations).
    """

    theta: float
    sigma2: float
    sigma2dot: float
    resid: np.ndarray
    resid_dot: np.ndarray
    lam_y: np.ndarray
    lam_dot_y: np.ndarray
    fit_m: Optional[LassoFit] = None
    fit_mdot: Optional[LassoFit] = None

    @property
    def m_hat(self) -> np.ndarray:
        return self.lam_y - self.resid

    @property
    def mdot_hat(self) -> np.ndarray:
        return self.lam_dot_y - self.resid_dot

    @property
    def h(self):
        """Tuple ``(h1, h2, h3, h4)`` evaluated at the sample points."""
        return self.m_hat, self.sigma2, self.mdot_hat, self.sigma2dot

    @classmethod
    def from_functions(cls, theta, lam_y, lam_dot_y, m, mdot, sigma2=None, sigma2dot=None):
        """Build from evaluated mean functions; variances default to the residual moments."""
        lam_y = np.asarray(lam_y, dtype=float)
        lam_dot_y = np.asarray(lam_dot_y, dtype=float)
        resid = lam_y - np.asarray(m, dtype=float)
        resid_dot = lam_dot_y - np.asarray(mdot, dtype=float)
        if sigma2 is None:
            sigma2 = float(np.mean(resid * resid))
        if sigma2dot is None:
            sigma2dot = float(2.0 * np.mean(resid * resid_dot))
        return cls(float(theta), float(sigma2), float(sigma2dot), resid, resid_dot, lam_y, lam_dot_y)


def _warm(fit_: Optional[LassoFit]):
    if fit_ is None:
        return None
    return fit_.penalized_solution()[0]


def fit_at_theta(
    dataset: Dataset,
    family: TransformationFamily,
    theta: float,
    lasso_config: LassoConfig = NUISANCE_LASSO,
    warm: Optional[NuisanceAtTheta] = None,
) -> NuisanceAtTheta:
    """Estimate the nuisance quadruple at ``theta`` with two lasso fits.

    Raises
    ------
    TransformDomainError, TransformOverflowError
        From the transformation of the response.
    DegenerateModelError
        When the residual variance is numerically zero.
    """
    design = dataset.design
    lam_y = family.eval(theta, dataset.y)
    lam_dot_y = family.dtheta(theta, dataset.y)

    fit_m = lasso.fit(None, lam_y, lasso_config, warm_start=_warm(warm and warm.fit_m), design=design)
    fit_mdot = lasso.fit(None, lam_dot_y, lasso_config, warm_start=_warm(warm and warm.fit_mdot), design=design)

    resid = lam_y - (fit_m.intercept + design.X @ fit_m.beta)
    resid_dot = lam_dot_y - (fit_mdot.intercept + design.X @ fit_mdot.beta)
    n = dataset.n
    sigma2 = float(resid @ resid) / n
    if sigma2 < DEGENERATE_RTOL * (1.0 + float(lam_y @ lam_y) / n):
        err = DegenerateModelError(f"residual variance {sigma2:.3g} is numerically zero at theta={theta}")
        err.sigma2 = sigma2
        raise err
    sigma2dot = 2.0 * float(resid @ resid_dot) / n
    return NuisanceAtTheta(
        theta=float(theta),
        sigma2=sigma2,
        sigma2dot=sigma2dot,
        resid=resid,
        resid_dot=resid_dot,
        lam_y=lam_y,
        lam_dot_y=lam_dot_y,
        fit_m=fit_m,
        fit_mdot=fit_mdot,
    )


def fit_grid(
    dataset: Dataset,
    family: TransformationFamily,
    thetas: Sequence[float],
    lasso_config: LassoConfig = NUISANCE_LASSO,
) -> list[Union[NuisanceAtTheta, HDTrafoError]]:
    """Fit the nuisance on an ascending grid, warm-starting from the left neighbour.

    A failing grid point is stored as its exception and does not stop the sweep.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(np.diff(thetas) < 0):
        raise ValueError("thetas must be sorted ascending")
    out: list[Union[NuisanceAtTheta, HDTrafoError]] = []
    warm = None
    for theta in thetas:
        try:
            nuis = fit_at_theta(dataset, family, theta, lasso_config, warm=warm)
        except HDTrafoError as exc:
            out.append(exc)
            continue
        out.append(nuis)
        warm = nuis
    return out
