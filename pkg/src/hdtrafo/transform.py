"""Box-Cox and Yeo-Johnson transformation families with their derivatives.

Every power branch of both families can be written as

    K(t, L) = (exp(t * L) - 1) / t

for a branch parameter ``t`` and a log-scale argument ``L``. The derivatives
with respect to ``t`` are ``L**k * E_k(t * L)`` for entire functions ``E_k``.
Evaluating ``E_k`` through a power series when ``|t * L|`` is small removes the
removable singularities at ``t = 0`` (Box-Cox ``theta = 0``, Yeo-Johnson
``theta = 0`` and ``theta = 2``) without cancellation, and keeps every
quantity continuous in ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import (
    TransformDomainError,
    TransformOverflowError,
    TransformRangeError,
)

__all__ = [
    "BOXCOX",
    "YEOJOHNSON",
    "SERIES_CUTOFF",
    "TransformationFamily",
    "box_cox",
    "yeo_johnson",
    "get_family",
    "evaluate",
    "dtheta",
    "dy",
    "c_ratio",
    "inverse",
    "ddtheta2",
]

BOXCOX = "boxcox"
YEOJOHNSON = "yeo-johnson"

DEFAULT_DOMAINS = {BOXCOX: (-2.0, 2.0), YEOJOHNSON: (-1.0, 3.0)}

# |t * L| below this uses the series; 14 terms leave a truncation error < 1e-25.
SERIES_CUTOFF = 0.1
_N_TERMS = 14

_E1_COEF = np.array([1.0 / factorial(k + 1) for k in range(_N_TERMS)])
_E2_COEF = np.array([(k + 1) / factorial(k + 2) for k in range(_N_TERMS)])
_E3_COEF = np.array([(k + 1) * (k + 2) / factorial(k + 3) for k in range(_N_TERMS)])


def _horner(coef, z):
    out = np.full_like(z, coef[-1])
    for c in coef[-2::-1]:
        out = out * z + c
    return out


def _series_mask(z):
    return np.abs(z) < SERIES_CUTOFF


def _e1(z):
    """expm1(z) / z."""
    small = _series_mask(z)
    zs = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = np.expm1(zs) / zs
    return np.where(small, _horner(_E1_COEF, z), closed)


def _e2(z):
    """(z e^z - expm1(z)) / z**2."""
    small = _series_mask(z)
    zs = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (zs * np.exp(zs) - np.expm1(zs)) / zs**2
    return np.where(small, _horner(_E2_COEF, z), closed)


def _e3(z):
    """(z**2 e^z - 2 z e^z + 2 expm1(z)) / z**3."""
    small = _series_mask(z)
    zs = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        ez = np.exp(zs)
        closed = (zs * zs * ez - 2.0 * zs * ez + 2.0 * np.expm1(zs)) / zs**3
    return np.where(small, _horner(_E3_COEF, z), closed)


def _log1p_ratio(w):
    """log1p(w) / w, equal to 1 at w = 0."""
    zero = w == 0.0
    ws = np.where(zero, 1.0, w)
    return np.where(zero, 1.0, np.log1p(ws) / ws)


def _finite(out, what):
    if not np.all(np.isfinite(out)):
        raise TransformOverflowError(f"{what} is not finite (overflow in y**theta)")
    return out


def _wrap(y, out):
    return float(out) if np.ndim(y) == 0 else out


@dataclass(frozen=True)
class TransformationFamily:
    """A parametric family of strictly increasing response transformations.

    Parameters
    ----------
    kind : {"boxcox", "yeo-johnson"}
    theta_domain : (float, float)
        Compact parameter set searched by the estimator.
    """

    kind: str
    theta_domain: tuple[float, float]

    def __post_init__(self):
        if self.kind not in DEFAULT_DOMAINS:
            raise ValueError(f"unknown transformation family {self.kind!r}")
        lo, hi = (float(v) for v in self.theta_domain)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"theta_domain must be a bounded nonempty interval, got {self.theta_domain}")
        object.__setattr__(self, "theta_domain", (lo, hi))

    @property
    def name(self) -> str:
        return self.kind

    def contains(self, theta: float) -> bool:
        lo, hi = self.theta_domain
        return lo <= theta <= hi

    def check_y(self, y) -> np.ndarray:
        """Return ``y`` as a float array, raising if any entry is outside the y-domain."""
        arr = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise TransformDomainError("response contains non-finite values")
        if self.kind == BOXCOX and np.any(arr <= 0):
            raise TransformDomainError("Box-Cox transformation requires y > 0")
        return arr

    # Each evaluator returns a float for scalar y and an array otherwise.

    def eval(self, theta: float, y):
        arr = self.check_y(y)
        if self.kind == BOXCOX:
            L = np.log(arr)
            out = L * _e1(theta * L)
        else:
            pos = arr >= 0
            L = np.log1p(np.abs(arr))
            t = np.where(pos, theta, 2.0 - theta)
            out = np.where(pos, 1.0, -1.0) * L * _e1(t * L)
        return _wrap(y, _finite(out, "transformation"))

    def dtheta(self, theta: float, y):
        arr = self.check_y(y)
        if self.kind == BOXCOX:
            L = np.log(arr)
            out = L * L * _e2(theta * L)
        else:
            pos = arr >= 0
            L = np.log1p(np.abs(arr))
            t = np.where(pos, theta, 2.0 - theta)
            # d/dtheta = -d/dt on the negative branch, which cancels the leading minus
            out = L * L * _e2(t * L)
        return _wrap(y, _finite(out, "theta-derivative"))

    def ddtheta2(self, theta: float, y):
        arr = self.check_y(y)
        if self.kind == BOXCOX:
            L = np.log(arr)
            out = L**3 * _e3(theta * L)
        else:
            pos = arr >= 0
            L = np.log1p(np.abs(arr))
            t = np.where(pos, theta, 2.0 - theta)
            out = np.where(pos, 1.0, -1.0) * L**3 * _e3(t * L)
        return _wrap(y, _finite(out, "second theta-derivative"))

    def dy(self, theta: float, y):
        arr = self.check_y(y)
        with np.errstate(over="ignore"):
            if self.kind == BOXCOX:
                out = np.exp((theta - 1.0) * np.log(arr))
            else:
                pos = arr >= 0
                L = np.log1p(np.abs(arr))
                out = np.exp(np.where(pos, theta - 1.0, 1.0 - theta) * L)
        return _wrap(y, _finite(out, "y-derivative"))

    def c_ratio(self, theta: float, y):
        """Mixed derivative over y-derivative; independent of theta for both families."""
        arr = self.check_y(y)
        if self.kind == BOXCOX:
            out = np.log(arr)
        else:
            out = np.where(arr >= 0, 1.0, -1.0) * np.log1p(np.abs(arr))
        return _wrap(y, out)

    def inverse(self, theta: float, z):
        arr = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise TransformRangeError("cannot invert non-finite values")
        if self.kind == BOXCOX:
            w = theta * arr
            if np.any(w <= -1.0):
                raise TransformRangeError(
                    f"value outside the range of the Box-Cox transformation at theta={theta}"
                )
            with np.errstate(over="ignore"):
                out = np.exp(arr * _log1p_ratio(w))
        else:
            pos = arr >= 0
            t = np.where(pos, theta, 2.0 - theta)
            za = np.abs(arr)
            w = t * za
            if np.any(w <= -1.0):
                raise TransformRangeError(
                    f"value outside the range of the Yeo-Johnson transformation at theta={theta}"
                )
            with np.errstate(over="ignore"):
                out = np.where(pos, 1.0, -1.0) * np.expm1(za * _log1p_ratio(w))
        return _wrap(z, _finite(out, "inverse transformation"))

    def range_mask(self, theta: float, z) -> np.ndarray:
        """Boolean mask of latent values that the inverse can map back."""
        arr = np.asarray(z, dtype=float)
        if self.kind == BOXCOX:
            return theta * arr > -1.0
        t = np.where(arr >= 0, theta, 2.0 - theta)
        return t * np.abs(arr) > -1.0


def box_cox(theta_domain=None) -> TransformationFamily:
    return TransformationFamily(BOXCOX, tuple(theta_domain or DEFAULT_DOMAINS[BOXCOX]))


def yeo_johnson(theta_domain=None) -> TransformationFamily:
    return TransformationFamily(YEOJOHNSON, tuple(theta_domain or DEFAULT_DOMAINS[YEOJOHNSON]))


_ALIASES = {
    "boxcox": BOXCOX,
    "box-cox": BOXCOX,
    "box_cox": BOXCOX,
    "yeo-johnson": YEOJOHNSON,
    "yeojohnson": YEOJOHNSON,
    "yeo_johnson": YEOJOHNSON,
    "yj": YEOJOHNSON,
}


def get_family(family, theta_domain=None) -> TransformationFamily:
    """Resolve a family from a name or pass an existing family through."""
    if isinstance(family, TransformationFamily):
        if theta_domain is None:
            return family
        return TransformationFamily(family.kind, tuple(theta_domain))
    try:
        kind = _ALIASES[str(family).lower()]
    except KeyError:
        raise ValueError(f"unknown transformation family {family!r}") from None
    return TransformationFamily(kind, tuple(theta_domain or DEFAULT_DOMAINS[kind]))


def evaluate(family: TransformationFamily, theta: float, y):
    return family.eval(theta, y)


def dtheta(family: TransformationFamily, theta: float, y):
    return family.dtheta(theta, y)


def dy(family: TransformationFamily, theta: float, y):
    return family.dy(theta, y)


def c_ratio(family: TransformationFamily, theta: float, y):
    return family.c_ratio(theta, y)


def inverse(family: TransformationFamily, theta: float, z):
    return family.inverse(theta, z)


def ddtheta2(family: TransformationFamily, theta: float, y):
    return family.ddtheta2(theta, y)
