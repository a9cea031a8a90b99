import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylab.rng import Stream
from cylab.slt import (PoissonField, SltInstance, band_kernels, check_inclusions, clock_event,
                       run_slt)

GBAR = np.array([0.1, 0.2, 0.3, 0.4])


def instance(delta, seed, n=16):
    ks = band_kernels(GBAR, delta, n, np.random.default_rng(seed))
    return SltInstance(GBAR, ks, delta)


def test_instance_validation():
    with pytest.raises(ValueError):
        SltInstance(np.array([0.5, 0.6]), np.array([[0.5, 0.5]]), 0.1)
    with pytest.raises(ValueError):
        SltInstance(GBAR, GBAR[None], 0.5)
    inst = instance(0.2, 0)
    assert all(inst.in_band(inst.g(n)) for n in range(1, 40))


def test_field_is_lazy_and_stable():
    f = PoissonField(2, Stream(1))
    a = f.point(0, 200)
    assert f.point(0, 200) == a
    pts = f.upto(0, a)
    assert len(pts) == 201 and np.all(np.diff(pts) > 0)


def test_zero_delta_gives_identical_sequences():
    res = run_slt(SltInstance(GBAR, GBAR[None], 0.0), 300, Stream(2))
    assert np.array_equal(res.chain, res.iid)
    assert np.array_equal(res.chain_points, res.iid_points)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 0.3))
def test_soft_local_time_swallows_exactly_the_chain(seed, delta):
    """After n steps the points under G_n at each state are exactly the
    chain visits there, and the last one sits on the graph of G_n."""
    res = run_slt(instance(delta, seed), 120, Stream(seed))
    G = res.soft_local_time
    for z in range(len(GBAR)):
        under = len(res.field.upto(z, G[z] * (1 + 1e-12)))
        assert under == int(np.sum(res.chain == z))
    z, i = res.chain_points[-1]
    assert res.field.point(int(z), int(i)) == pytest.approx(G[z])
    assert np.all(res.xi > 0)


def test_clock_is_unit_rate():
    res = run_slt(SltInstance(GBAR, GBAR[None], 0.0), 10, Stream(3), n_iid=20000)
    assert np.all(np.diff(res.clock) > 0)
    m = res.clock[-1]
    assert abs(res.n(0, m) - m) < 5 * math.sqrt(m)
    gaps = np.diff(np.concatenate(([0.0], res.clock)))
    assert abs(gaps.mean() - 1) < 5 / math.sqrt(len(gaps))


def test_clock_event_against_grid():
    rng = np.random.default_rng(4)
    eta = 0.3
    for _ in range(200):
        clock = np.cumsum(rng.exponential(size=80))
        ev = clock_event(clock, eta, 10.0, 50.0)
        ms = np.linspace(10.0, 50.0, 4001)
        n0 = np.searchsorted(clock, ms, side="right")
        n1 = np.searchsorted(clock, (1 + eta) * ms, side="right") - n0
        grid = bool(np.all(n1 < 2 * eta * ms) and np.all((n0 > (1 - eta) * ms) & (n0 < (1 + eta) * ms)))
        if ev:
            assert grid


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.0, 0.05, 0.1]))
def test_inclusions_hold_on_the_clock_event(seed, delta):
    eta = 0.3
    assert (1 + delta) / (1 - delta) <= 1 + eta
    scale = 60
    res = run_slt(instance(delta, seed), 500, Stream(seed))
    rep = check_inclusions(res, eta, 0.25, scale, m_max=8 * 0.25 * scale)
    if rep.event:
        assert rep.inclusion1 and rep.inclusion2
        assert rep.inclusion1_points and rep.inclusion2_points
