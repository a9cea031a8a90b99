import numpy as np
import pytest

from cylab.interlacements import (BoxSpec, VacantSample, crossing_event, estimate_theta, exist_event,
                                  killed_capacity, sample_cloud, theta_fraction, unique_event,
                                  vacant_set)
from cylab.rng import Stream

D0 = BoxSpec.ball((0, 0, 0), 0)
U2 = BoxSpec.ball((0, 0, 0), 2)


def cloud(u, r, store=True, R_esc=12):
    with pytest.warns(RuntimeWarning):
        return sample_cloud(u, D0, U2, R_esc, Stream(7, r), store=store)


def test_boxspec_geometry():
    b = BoxSpec.ball((1, 2, 3), 2)
    assert b.side == 5 and b.diam == 4 and b.center == (1, 2, 3)
    assert b.contains(BoxSpec.ball((1, 2, 3), 1)) and not BoxSpec.ball((1, 2, 3), 1).contains(b)
    assert len(b.sites()) == 125 and b.inside(b.sites()).all()


def test_hits_of_D_are_poisson_with_capacity_mean():
    """J ~ Poisson(u cap(D)) for the killed walk, so mean and variance agree."""
    u, R_esc = 1.5, 12
    cap, _ = killed_capacity(D0, R_esc)
    J = np.array([cloud(u, r, store=False).J for r in range(400)])
    mu = u * cap
    assert abs(J.mean() - mu) < 5 * np.sqrt(mu / len(J))
    assert abs(J.var(ddof=1) / mu - 1) < 0.35


def test_restriction_is_monotone():
    c = cloud(2.0, 0)
    small = c.restrict(0.5)
    assert small.J <= c.J and small.N_exc <= c.N_exc
    assert np.all(vacant_set(small).mask >= vacant_set(c).mask)
    with pytest.raises(ValueError):
        c.restrict(3.0)


def test_excursions_run_from_D_out_of_U():
    c = cloud(2.0, 1)
    ex = c.excursions()
    assert len(ex) == c.N_exc
    for e in ex:
        assert D0.inside(e.path[0])
        assert not U2.inside(e.path[-1])
        assert U2.inside(e.path[:-1]).all()
        assert np.all(np.abs(np.diff(e.path, axis=0)).sum(axis=1) == 1)
    d = c.dump()
    assert len(d["trajectories"]) == len(c.labels)


def test_vacant_set_agrees_with_trajectories():
    c = cloud(1.0, 2)
    v = vacant_set(c)
    occ = np.zeros_like(v.mask)
    for t in c.trajectories:
        inside = t[U2.inside(t)] - np.asarray(U2.lo)
        occ[tuple(inside.T)] = True
    assert np.array_equal(v.mask, ~occ)


def test_events_on_fixed_masks():
    full = VacantSample(BoxSpec.ball((0, 0, 0), 20), np.ones((41, 41, 41), dtype=bool))
    empty = VacantSample(full.box, np.zeros_like(full.mask))
    assert exist_event(full, 10) and not exist_event(empty, 10)
    assert crossing_event(full, 10) and not crossing_event(empty, 10)
    assert theta_fraction(full, 10) == 1.0 and theta_fraction(empty, 10) == 0.0
    assert unique_event(full, full, 10)


def test_theta_decreases_in_u():
    lo = estimate_theta(0.5, 8, 6, seed=1)
    hi = estimate_theta(6.0, 8, 6, seed=1)
    assert lo.value > hi.value
