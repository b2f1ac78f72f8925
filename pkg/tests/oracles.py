"""Independent reference implementations used by the tests.

Transformations are written directly from their piecewise definitions in
mpmath at 100 digits; derivatives are taken by high-precision finite
differences (mpmath.diff), so none of the package's series code is reused.
"""

import mpmath as mp

mp.mp.dps = 100
H = mp.mpf("1e-30")


def boxcox(theta, y):
    theta, y = mp.mpf(theta), mp.mpf(y)
    if theta == 0:
        return mp.log(y)
    return (y**theta - 1) / theta


def yeojohnson(theta, y):
    theta, y = mp.mpf(theta), mp.mpf(y)
    if y >= 0:
        if theta == 0:
            return mp.log(y + 1)
        return ((y + 1) ** theta - 1) / theta
    if theta == 2:
        return -mp.log(1 - y)
    return -((1 - y) ** (2 - theta) - 1) / (2 - theta)


FAMILIES = {"boxcox": boxcox, "yeo-johnson": yeojohnson}


def d_theta(kind, theta, y, order=1):
    f = FAMILIES[kind]
    return mp.diff(lambda t: f(t, y), mp.mpf(theta), order, h=H)


def d_y(kind, theta, y):
    f = FAMILIES[kind]
    return mp.diff(lambda v: f(theta, v), mp.mpf(y), h=H)


def d_theta_y(kind, theta, y):
    f = FAMILIES[kind]
    return mp.diff(lambda t, v: f(t, v), (mp.mpf(theta), mp.mpf(y)), (1, 1), h=H)
