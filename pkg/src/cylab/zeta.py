"""Limit law of the first time the maximal Brownian local time reaches u.

Writing ``y = theta * u``, the Laplace transform is

    E[exp(-theta^2 zeta(u) / 2)] = y / sinh(y/2)^2 * I1(y/2) / I0(y/2),

so it only depends on ``theta * u`` and ``zeta(u)`` has the law of
``u^2 zeta(1)``.  The CDF is obtained by numerical Laplace inversion of
``s -> E[exp(-s zeta)] / s`` with ``theta = sqrt(2 s)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.optimize import brentq

from .records import one_d_records, truncated_levels

SERIES_MAX = 8.0
ASYMPTOTIC_MIN = 60.0
MEAN_ZETA1 = 11.0 / 48.0  # from the theta^2 term of the transform


# ------------------------------------------------------------ Bessel ratio

def _ratio_series(x: float) -> float:
    q = 0.25 * x * x
    t0 = 1.0
    s0 = 1.0
    t1 = 1.0
    s1 = 1.0
    k = 0
    while True:
        k += 1
        t0 *= q / (k * k)
        t1 *= q / (k * (k + 1))
        s0 += t0
        s1 += t1
        if t0 < 1e-17 * s0 and t1 < 1e-17 * s1:
            break
    return 0.5 * x * s1 / s0


def _ratio_cf(x: float) -> float:
    # I1/I0 = 1 / (2/x + 1 / (4/x + 1 / (6/x + ...))), modified Lentz
    tiny = 1e-300
    f = tiny
    c = f
    dd = 0.0
    k = 0
    while True:
        k += 1
        b = 2.0 * k / x
        dd = b + dd
        dd = tiny if dd == 0.0 else dd
        c = b + 1.0 / c
        c = tiny if c == 0.0 else c
        dd = 1.0 / dd
        step = c * dd
        f *= step
        if abs(step - 1.0) < 1e-16 or k > 10000:
            break
    return f


def _ratio_asymptotic(x: float) -> float:
    # large-x expansions of I0 and I1 with a common exp(x)/sqrt(2 pi x) factor
    def series(nu):
        mu = 4.0 * nu * nu
        term = 1.0
        total = 1.0
        for k in range(1, 40):
            term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
            total += term
            if abs(term) < 1e-18:
                break
        return total
    return series(1) / series(0)


def bessel_ratio(x: float) -> float:
    """I1(x) / I0(x) for real ``x >= 0``."""
    x = float(x)
    if x < 0:
        return -bessel_ratio(-x)
    if x == 0.0:
        return 0.0
    if x < SERIES_MAX:
        return _ratio_series(x)
    if x < ASYMPTOTIC_MIN:
        return _ratio_cf(x)
    return _ratio_asymptotic(x)


def _prefactor(y: float) -> float:
    """y / sinh(y/2)^2 written without overflow."""
    if y < 1e-3:
        # 4/y - y/12 + y^3/240 - ...
        return 4.0 / y - y / 12.0 + y ** 3 / 240.0
    e = math.exp(-y)
    return 4.0 * y * e / (-math.expm1(-y)) ** 2


def laplace_zeta(u: float, theta: float) -> float:
    """E[exp(-theta^2 zeta(u) / 2)]."""
    if not u > 0:
        raise ValueError(f"u must be > 0, got {u}")
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    y = theta * u
    if y == 0.0:
        return 1.0
    if y < 1e-4:
        # 1 - 11 y^2/96 + O(y^4), avoids 4/y * y/4 cancellation noise
        return 1.0 - 11.0 * y * y / 96.0
    return _prefactor(y) * bessel_ratio(0.5 * y)


def laplace_zeta_s(u: float, s: float) -> float:
    """E[exp(-s zeta(u))]."""
    return laplace_zeta(u, math.sqrt(2.0 * s))


# ------------------------------------------------------------ inversion

def _transform_mp(u):
    u = mpmath.mpf(u)

    def F(s):
        y = mpmath.sqrt(2 * s) * u
        x = y / 2
        return y / mpmath.sinh(x) ** 2 * mpmath.besseli(1, x) / mpmath.besseli(0, x) / s
    return F


SCHEMES = ("talbot", "dehoog", "cohen", "stehfest")


@dataclass(frozen=True)
class CdfValue:
    value: float
    cross: float
    unstable: bool

    def __float__(self) -> float:
        return self.value


def cdf_zeta(u: float, t: float, scheme: str = "talbot", degree: int = 24,
             tol: float = 1e-4) -> CdfValue:
    """P[zeta(u) <= t] by Laplace inversion.

    ``cross`` is the same inversion at ``degree + 12``; ``unstable`` is set
    when the two differ by more than ``tol``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if not u > 0:
        raise ValueError(f"u must be > 0, got {u}")
    if t <= 0:
        return CdfValue(0.0, 0.0, False)
    F = _transform_mp(u)
    a = float(mpmath.invertlaplace(F, t, method=scheme, degree=degree).real)
    b = float(mpmath.invertlaplace(F, t, method=scheme, degree=degree + 12).real)
    bad = abs(a - b) > tol
    if bad:
        warnings.warn(f"Laplace inversion at t={t} unstable: {a} vs {b}", RuntimeWarning)
    return CdfValue(a, b, bad)


def quantile_zeta(u: float, p: float, scheme: str = "talbot") -> float:
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    # zeta(u) = u^2 zeta(1); bracket for zeta(1) is generous
    f = lambda t: cdf_zeta(1.0, t, scheme).value - p
    lo, hi = 1e-3, 1.0
    while f(hi) < 0:
        hi *= 2
    while f(lo) > 0:
        lo /= 2
    return u * u * brentq(f, lo, hi, xtol=1e-10)


def median_zeta(u: float, scheme: str = "talbot") -> float:
    return quantile_zeta(u, 0.5, scheme)


@dataclass(frozen=True)
class ZetaLaw:
    """zeta^mu(u); only mu = 0 has analytic evaluators."""

    u: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("u must be > 0")

    def _analytic(self):
        if self.mu != 0:
            raise NotImplementedError("no closed-form transform with drift; use mc_zeta_drift")

    def laplace(self, theta: float) -> float:
        self._analytic()
        return laplace_zeta(self.u, theta)

    def cdf(self, t: float, scheme: str = "talbot") -> CdfValue:
        self._analytic()
        return cdf_zeta(self.u, t, scheme)

    def quantile(self, p: float) -> float:
        self._analytic()
        return quantile_zeta(self.u, p)

    def mean(self) -> float:
        self._analytic()
        return MEAN_ZETA1 * self.u ** 2


# ------------------------------------------------------------ Monte Carlo

def mc_zeta(u: float, N: int, replicas: int, seed: int, start: int = 0) -> np.ndarray:
    """Samples of inf_z S(uN, z) / N^2 for the simple 1D walk."""
    times, _ = one_d_records(u, N, 0.0, seed, range(start, start + replicas))
    return times / float(N) ** 2


def mc_zeta_drift(u: float, N: int, replicas: int, seed: int, delta: float | None = None,
                  truncate_L: int | None = None, horizon: int | None = None) -> np.ndarray:
    """Samples of inf_z S(uN, z) / N^2 for the walk with drift 1/N.

    With ``truncate_L`` the infimum runs only over levels floor(l N / L),
    |l| <= L^2.  Horizon misses come back as ``inf``.
    """
    delta = 1.0 / N if delta is None else delta
    levels = None if truncate_L is None else truncated_levels(N, truncate_L)
    if horizon is None:
        horizon = 10 ** 4 * N * N
    times, _ = one_d_records(u, N, delta, seed, range(replicas), horizon, levels)
    out = times / float(N) ** 2
    out[times < 0] = np.inf
    return out


def richardson_mc(u: float, N: int, replicas: int, seed: int, fn) -> tuple[float, float]:
    """Extrapolate E[fn(S/N^2)] assuming an O(N^-1/2) finite-size error.

    Combines runs at N and 4N as 2 F(4N) - F(N); returns (value, SE).
    """
    a = fn(mc_zeta(u, N, replicas, seed))
    b = fn(mc_zeta(u, 4 * N, replicas, seed + 1))
    v = 2 * b.mean() - a.mean()
    se = math.sqrt(4 * b.var(ddof=1) / len(b) + a.var(ddof=1) / len(a))
    return v, se
