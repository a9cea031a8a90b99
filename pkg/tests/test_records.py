import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylab.lattice import Geometry
from cylab.records import (HorizonExhausted, LevelLocalTime, RecordSpec, SkeletonClock, Walk1D,
                           conditioned_transition_counts, one_d_records, one_d_threshold,
                           record_threshold, record_time_from_heights, record_time_inf,
                           scan_records, truncated_levels)
from cylab.rng import Stream
from cylab.walkers import WalkConfig, conditioned_step_kernel, sample_path
from cylab.lattice import Site


def test_skeleton_clock_counts_height_changes():
    clock = SkeletonClock.from_heights([0, 0, 1, 1, 1, 0, -1])
    assert list(clock.rho) == [0, 2, 5, 6]
    assert list(clock.zhat) == [0, 1, 0, -1]
    lt = LevelLocalTime.from_clock(clock, 3)
    assert lt.total() == 4


def test_thresholds_use_ceiling():
    assert record_threshold(1.0, 3, 2) == 3
    assert record_threshold(0.5, 4, 2) == math.ceil(16 / 6)
    assert one_d_threshold(0.25, 10) == 3
    assert RecordSpec(1.0, 0, 3, 2).threshold == 3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.0, 0.05, 0.2]))
def test_scan_matches_brute_force_on_cylinder(seed, delta):
    cfg = WalkConfig(Geometry(3, 2), delta=delta)
    thr = record_threshold(1.0, 3, 2)
    res = record_time_inf(cfg, 1.0, Stream(seed), horizon=20000)
    heights = sample_path(cfg, 20000, Stream(seed)).heights()
    ref = record_time_from_heights(heights, thr)
    assert ref is not None
    assert (res.time, res.level) == (ref.time, ref.level)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.0, 0.1]), st.integers(2, 30))
def test_fused_1d_kernel_matches_generic_scan(seed, delta, N):
    t, z = one_d_records(1.0, N, delta, seed, [0, 1])
    for r in range(2):
        res = scan_records(Walk1D(delta, N), one_d_threshold(1.0, N), Stream(seed, r))
        assert (res.time, res.level) == (t[r], z[r])


def test_level_restriction_and_windows():
    seed = 11
    lv = truncated_levels(20, 2)
    assert np.all(np.diff(lv) > 0) and 0 in lv
    t, z = one_d_records(1.0, 20, 0.0, seed, [0], levels=lv)
    assert z[0] in set(lv.tolist())
    tall, _ = one_d_records(1.0, 20, 0.0, seed, [0])
    assert t[0] >= tall[0]


def test_horizon_is_reported():
    with pytest.raises(HorizonExhausted):
        scan_records(Walk1D(0.0, 50), 1000, Stream(0), horizon=100)
    t, _ = one_d_records(1.0, 50, 0.0, 0, [0], horizon=10)
    assert t[0] == -1


def test_conditioned_walk_matches_kernel():
    """Rejection-sampled transitions of the walk conditioned to pile up at
    level 0 agree with the closed-form conditioned kernel."""
    cfg = WalkConfig(Geometry(2, 1), delta=0.3)
    acc, counts = conditioned_transition_counts(cfg, 3, 20000, seed=5, start_height=0)
    assert acc > 500
    for cls, h in ((0, 3), (1, -3)):
        row = counts[cls]
        kern = conditioned_step_kernel(cfg, Site((0,), h))
        freq = row / row.sum()
        se = np.sqrt(kern * (1 - kern) / row.sum())
        assert np.all(np.abs(freq - kern) < 5 * se + 1e-3)
