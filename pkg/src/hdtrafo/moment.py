"""The orthogonalized score and its empirical mean."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .exceptions import EmptyDataError, VarianceError
from .io import Dataset
from .nuisance import NuisanceAtTheta
from .transform import TransformationFamily

__all__ = [
    "ScoreParts",
    "score_parts",
    "psi_single",
    "empirical_moment",
    "orthogonality_probe",
    "DEFAULT_R_GRID",
]

DEFAULT_R_GRID = np.linspace(0.0, 0.5, 11)

Number = Union[float, np.ndarray]


@dataclass
class ScoreParts:
    """Pieces of the score; ``psi = -part_I - part_II + part_III + part_c``."""

    part_I: Number
    part_II: Number
    part_III: Number
    part_c: Number
    psi: Number


def score_parts(lam, lam_dot, c, h1, h2, h3, h4, drop_part_iii: bool = False) -> ScoreParts:
    """Vectorized score components.

    ``lam``, ``lam_dot`` and ``c`` are the transformation, its theta
    derivative and the ratio of mixed to y derivative at the responses.
    ``drop_part_iii`` gives a deliberately non-orthogonal score.
    """
    if np.any(np.asarray(h2) <= 0):
        raise VarianceError("variance component h2 must be positive")
    eps = lam - h1
    part_I = h4 / (2.0 * h2)
    part_II = eps * (lam_dot - h3) / h2
    part_III = 0.0 * eps if drop_part_iii else h4 * eps * eps / (2.0 * h2 * h2)
    psi = -part_I - part_II + part_III + c
    return ScoreParts(part_I, part_II, part_III, c, psi)


def psi_single(y: float, x, theta: float, family: TransformationFamily, h) -> ScoreParts:
    """Score of one observation given the nuisance values ``h = (h1, h2, h3, h4)`` at ``x``.

    The nuisance is already evaluated, so ``x`` only documents which regressor
    row ``h`` belongs to.
    """
    h1, h2, h3, h4 = (float(v) for v in h)
    if h2 <= 0:
        raise VarianceError("variance component h2 must be positive")
    lam = family.eval(theta, y)
    lam_dot = family.dtheta(theta, y)
    c = family.c_ratio(theta, y)
    parts = score_parts(lam, lam_dot, c, h1, h2, h3, h4)
    return ScoreParts(*(float(v) for v in (parts.part_I, parts.part_II, parts.part_III, parts.part_c, parts.psi)))


def _per_obs(dataset, family, theta, nuis, drop_part_iii=False):
    if dataset.n == 0:
        raise EmptyDataError("no observations")
    lam = nuis.lam_y
    lam_dot = nuis.lam_dot_y
    c = family.c_ratio(theta, dataset.y)
    return score_parts(lam, lam_dot, c, nuis.m_hat, nuis.sigma2, nuis.mdot_hat, nuis.sigma2dot, drop_part_iii).psi


def empirical_moment(dataset: Dataset, family: TransformationFamily, theta: float, nuis: NuisanceAtTheta):
    """Mean score over the sample and the per-observation scores.

    Returns
    -------
    mean_psi : float
    per_obs : ndarray of shape (n,)
    """
    if nuis.theta != theta:
        raise ValueError(f"nuisance was fitted at theta={nuis.theta}, not {theta}")
    if np.shape(dataset.y)[0] == 0:
        raise EmptyDataError("no observations")
    per_obs = _per_obs(dataset, family, theta, nuis)
    return float(np.mean(per_obs)), per_obs


def orthogonality_probe(
    dataset: Dataset,
    family: TransformationFamily,
    theta0: float,
    nuis_true: NuisanceAtTheta,
    nuis_perturbed: NuisanceAtTheta,
    r_grid: Sequence[float] = DEFAULT_R_GRID,
    drop_part_iii: bool = False,
):
    """Slope and curvature of the mean score along ``h0 + r (h - h0)``.

    Fits ``g(r) = g0 + a r + b r^2`` by least squares over ``r_grid``.
    Orthogonality means ``a`` is zero up to sampling noise.

    Returns
    -------
    (a, b) : tuple of float
    """
    if nuis_true.theta != theta0 or nuis_perturbed.theta != theta0:
        raise ValueError("both nuisance values must be evaluated at theta0")
    r_grid = np.asarray(r_grid, dtype=float)
    h0 = nuis_true.h
    h1 = nuis_perturbed.h
    lam = family.eval(theta0, dataset.y)
    lam_dot = family.dtheta(theta0, dataset.y)
    c = family.c_ratio(theta0, dataset.y)
    g = np.empty_like(r_grid)
    for k, r in enumerate(r_grid):
        h = [a + r * (b - a) for a, b in zip(h0, h1)]
        g[k] = np.mean(score_parts(lam, lam_dot, c, *h, drop_part_iii=drop_part_iii).psi)
    if np.all(g == g[0]):
        return 0.0, 0.0
    b, a, _ = np.polyfit(r_grid, g, 2)
    return float(a), float(b)
