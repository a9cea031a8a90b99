import math

import numpy as np
import pytest
from scipy import special

from cylab.zeta import (MEAN_ZETA1, ZetaLaw, bessel_ratio, cdf_zeta, laplace_zeta, laplace_zeta_s, mc_zeta,
                        median_zeta, quantile_zeta, richardson_mc)


@pytest.mark.parametrize("x", [1e-3, 0.3, 1.0, 5.0, 40.0, 400.0])
def test_bessel_ratio_against_scipy(x):
    ref = special.ive(1, x) / special.ive(0, x)
    assert abs(bessel_ratio(x) - ref) < 1e-12 * max(1.0, ref)


def test_laplace_transform_basics():
    assert laplace_zeta(1.0, 0.0) == pytest.approx(1.0)
    vals = [laplace_zeta(1.0, th) for th in (0.1, 1.0, 10.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    # scaling: zeta(u) = u^2 zeta(1)
    assert laplace_zeta(2.0, 0.5) == pytest.approx(laplace_zeta(1.0, 1.0), rel=1e-10)


def test_mean_from_transform_derivative():
    h = 1e-4
    d = (laplace_zeta_s(1.0, h) - laplace_zeta_s(1.0, 2 * h)) / h
    assert d == pytest.approx(MEAN_ZETA1, rel=1e-3)


def test_inversion_schemes_agree():
    for t in (0.05, 0.2, 0.8):
        a = cdf_zeta(1.0, t, "talbot").value
        b = cdf_zeta(1.0, t, "dehoog").value
        assert abs(a - b) < 1e-5
        assert 0.0 <= a <= 1.0


def test_cdf_monotone_and_quantile_roundtrip():
    ts = [0.05, 0.1, 0.2, 0.4, 0.8]
    cs = [cdf_zeta(1.0, t).value for t in ts]
    assert all(a < b for a, b in zip(cs, cs[1:]))
    q = quantile_zeta(1.0, 0.3)
    assert cdf_zeta(1.0, q).value == pytest.approx(0.3, abs=1e-6)
    assert median_zeta(2.0) == pytest.approx(4 * median_zeta(1.0), rel=1e-6)


def test_zeta_law_with_drift_has_no_closed_form():
    with pytest.raises(NotImplementedError):
        ZetaLaw(1.0, mu=0.5).cdf(0.3)
    assert ZetaLaw(2.0).mean() == pytest.approx(4 * MEAN_ZETA1)


def test_monte_carlo_median_near_limit():
    # the finite-N excess decays like N^-1/2
    m = median_zeta(1.0)
    errs = [abs(np.median(mc_zeta(1.0, N, 2000, seed=3)) - m) / m for N in (50, 800)]
    assert errs[1] < 0.15 and errs[1] < errs[0]


def test_richardson_reduces_mean_bias():
    v, se = richardson_mc(1.0, 25, 4000, 9, lambda s: s)
    raw = mc_zeta(1.0, 25, 4000, 9).mean()
    assert abs(v - MEAN_ZETA1) < abs(raw - MEAN_ZETA1)
    assert abs(v - MEAN_ZETA1) < 4 * se + 0.01
