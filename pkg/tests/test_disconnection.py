import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylab.disconnection import (Schedule, TraceStore, batch_disconnection, brute_force_T_N,
                                 detect_T_N, disconnects)
from cylab.lattice import Geometry, Site
from cylab.rng import Stream
from cylab.walkers import WalkConfig


def nx_disconnects(g, sites):
    """Independent oracle: Linf complement graph on the slab one level
    beyond the trace, top row against bottom row."""
    occ = {(s.torus, s.height) for s in sites}
    hs = [s.height for s in sites]
    lo, hi = min(hs) - 1, max(hs) + 1
    tors = list(itertools.product(range(g.N), repeat=g.d))
    G = nx.Graph()
    offs = [o for o in itertools.product((-1, 0, 1), repeat=g.d + 1) if any(o)]
    for x in tors:
        for h in range(lo, hi + 1):
            if (x, h) in occ:
                continue
            G.add_node((x, h))
            for o in offs:
                y = tuple((a + b) % g.N for a, b in zip(x, o[:-1]))
                k = h + o[-1]
                if lo <= k <= hi and (y, k) not in occ:
                    G.add_edge((x, h), (y, k))
    G.add_edges_from((("top", (x, hi)) for x in tors))
    G.add_edges_from((("bot", (x, lo)) for x in tors))
    return not nx.has_path(G, "top", "bot")


@st.composite
def traces(draw):
    N = draw(st.integers(1, 4))
    d = draw(st.integers(1, 2))
    g = Geometry(N, d)
    n = draw(st.integers(1, 3 * N ** d))
    pts = draw(st.lists(st.tuples(st.lists(st.integers(0, N - 1), min_size=d, max_size=d),
                                  st.integers(-2, 2)), min_size=n, max_size=n))
    return g, [Site(tuple(x), h) for x, h in pts]


@settings(max_examples=200, deadline=None)
@given(traces())
def test_predicate_matches_networkx(case):
    g, sites = case
    tr = TraceStore.from_sites(g, sites)
    got = disconnects(tr, g)
    assert got == nx_disconnects(g, sites)
    assert disconnects(tr, g, margin=2) == got


def test_full_level_disconnects():
    g = Geometry(3, 2)
    sites = [Site((a, b), 0) for a in range(3) for b in range(3)]
    assert disconnects(TraceStore.from_sites(g, sites), g)
    assert not disconnects(TraceStore.from_sites(g, sites[:-1]), g)


def test_single_site_torus_is_immediate():
    rep = detect_T_N(WalkConfig(Geometry(1, 1), delta=0.0), Stream(0))
    assert rep.T_N == 0


@pytest.mark.parametrize("N,d,delta", [(3, 1, 0.0), (2, 2, 0.0), (3, 2, 0.0), (3, 2, 0.1)])
def test_checkpoints_match_brute_force(N, d, delta):
    cfg = WalkConfig(Geometry(N, d), delta=delta)
    for r in range(8):
        flags = []
        ref = brute_force_T_N(cfg, Stream(5, r), on_step=lambda n, dis: flags.append(dis))
        assert flags[-1] and not any(flags[:-1])
        rep = detect_T_N(cfg, Stream(5, r), keep_trace=True)
        assert rep.T_N == ref
        g = cfg.geometry
        assert disconnects(rep.trace, g, rep.T_N)
        assert rep.T_N == 0 or not disconnects(rep.trace, g, rep.T_N - 1)


def test_schedule_does_not_change_result():
    cfg = WalkConfig(Geometry(4, 2), delta=0.0)
    a = detect_T_N(cfg, Stream(8))
    b = detect_T_N(cfg, Stream(8), Schedule(ratio=3.0, theta_chk=None))
    c = detect_T_N(cfg, Stream(8), Schedule(every_step=True))
    assert a.T_N == b.T_N == c.T_N
    assert c.checkpoints > a.checkpoints


def test_drift_archives_levels_without_changing_result():
    cfg = WalkConfig(Geometry(8, 2), alpha=0.6)
    archived = 0
    for r in range(4):
        rep = detect_T_N(cfg, Stream(2, r), archive_margin=3.0)
        ref = detect_T_N(cfg, Stream(2, r), archive_margin=1e9)
        assert ref.archived_levels == 0
        assert rep.T_N == ref.T_N
        archived += rep.archived_levels
    assert archived > 0


def test_batch_and_horizon():
    cfg = WalkConfig(Geometry(3, 2), delta=0.0)
    rows = []
    res = batch_disconnection(cfg, 3, seed=1, sink=rows.append)
    assert len(rows) == 3 and np.all(res.T > 0)
    assert res.T[1] == detect_T_N(cfg, Stream(1, 1)).T_N
    short = batch_disconnection(cfg, 2, seed=1, horizon=2)
    assert np.all(short.T == -1)
