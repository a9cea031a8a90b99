"""Disconnection time of the cylinder by the walk's trace.

The trace is stored as first-visit times on a dense block of levels, so the
trace at any earlier time ``n`` is ``{first <= n}`` and the exact T_N is
found by binary search between checkpoints without replaying the path.

With drift, levels far below the walker are folded into a boundary summary:
for the top archived level, each vacant site gets the label of its vacant
component inside the archived half-cylinder (0 = connected to the bottom).
The walker returning into the archive raises :class:`ArchiveRevisited`; the
margin makes this a probability ~exp(-2 * archive_margin) event.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numba
import numpy as np

from .lattice import Adjacency, Geometry, Site, torus_index, torus_shift_table
from .records import HorizonExhausted
from .rng import Stream, draw_uniform
from .walkers import WalkConfig, sample_path

NEVER = np.iinfo(np.int64).max
OK, TRIGGER, GROW, REVISIT = 0, 1, 2, 3


class ArchiveRevisited(RuntimeError):
    """The walk came back below the archived boundary level."""


# ------------------------------------------------------------ kernels

@numba.njit(cache=True)
def _walk(key, ctr, delta, n_dir, dest, pos, row, t, t_stop, first, counts, row_first, trigger, floor_row):
    top = n_dir - 2
    p_up = 0.5 * (1.0 + delta)
    nrows = first.shape[0]
    while t < t_stop:
        v = draw_uniform(key, ctr) * n_dir
        ctr += np.uint64(1)
        k = int(v)
        if k >= top:
            if 0.5 * (v - top) < p_up:
                row += 1
            else:
                row -= 1
        else:
            pos = dest[pos, k]
        t += 1
        if row <= floor_row:
            return REVISIT, ctr, pos, row, t
        if first[row, pos] == NEVER:
            first[row, pos] = t
            counts[row] += 1
            if row_first[row] == NEVER:
                row_first[row] = t
            if counts[row] == trigger:
                if row <= 1 or row >= nrows - 2:
                    return GROW, ctr, pos, row, t
                return TRIGGER, ctr, pos, row, t
        if row <= 1 or row >= nrows - 2:
            return GROW, ctr, pos, row, t
    return OK, ctr, pos, row, t


@numba.njit(cache=True)
def _connected(first, n, r_bot, r_top, labels, dest, dh):
    """Vacant path from row r_top to a bottom-connected site of row r_bot?

    Depth-first with downward moves tried first, so a connected slab is
    usually crossed without flooding it.  Returns (connected, lowest row
    reached from the top); when disconnected the whole top component is
    explored, so the lowest row does not depend on the search order.
    """
    nT = first.shape[1]
    H = r_top - r_bot + 1
    seen = np.zeros(H * nT, dtype=np.bool_)
    expanded = np.zeros(nT + 1, dtype=np.bool_)
    stack = np.empty(H * nT, dtype=np.int64)
    # neighbour order: up and level moves first, down moves last (popped first)
    order = np.argsort(-dh, kind="mergesort")
    sp = 0
    lowest = r_top
    for x in range(nT):
        if first[r_top, x] > n:
            seen[(r_top - r_bot) * nT + x] = True
            stack[sp] = (r_top - r_bot) * nT + x
            sp += 1
    while sp > 0:
        sp -= 1
        c = stack[sp]
        r = c // nT + r_bot
        x = c % nT
        for jj in range(order.shape[0]):
            j = order[jj]
            r2 = r + dh[j]
            if r2 < r_bot or r2 > r_top:
                continue
            x2 = dest[x, j]
            if first[r2, x2] <= n:
                continue
            c2 = (r2 - r_bot) * nT + x2
            if seen[c2]:
                continue
            seen[c2] = True
            stack[sp] = c2
            sp += 1
            if r2 < lowest:
                lowest = r2
            if r2 == r_bot:
                lab = labels[x2]
                if lab == 0:
                    return True, r_bot
                if lab > 0 and not expanded[lab]:
                    expanded[lab] = True
                    for y in range(nT):
                        if labels[y] == lab and not seen[y]:
                            seen[y] = True
                            stack[sp] = y
                            sp += 1
    return False, lowest


@numba.njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@numba.njit(cache=True)
def _archive_labels(first, n, r0, r1, labels0, dest, dh):
    """Labels of row r1 for vacant components of rows r0..r1, with the old
    row-r0 labels acting as extra connections (0 = bottom, -1 = occupied).

    Sweeps upward one row at a time: nodes 0..nT-1 are the current row,
    nT..2nT-1 the previous one, and node 2nT stands for the bottom.
    """
    nT = first.shape[1]
    bottom = 2 * nT
    parent = np.empty(2 * nT + 1, dtype=np.int64)
    prev = -np.ones(nT, dtype=np.int64)
    rep = -np.ones(nT + 1, dtype=np.int64)
    # row r0 from the old labels: same label = same component
    for x in range(nT):
        lab = labels0[x]
        prev[x] = -1 if (lab < 0 or first[r0, x] <= n) else lab
    cur = np.empty(nT, dtype=np.int64)
    ids = np.empty(2 * nT + 1, dtype=np.int64)
    for r in range(r0, r1 + 1):
        for i in range(2 * nT + 1):
            parent[i] = i
        if r == r0:
            # seed row r0 as "previous" and merge by label
            for lab in range(nT + 1):
                rep[lab] = -1
            for x in range(nT):
                lab = prev[x]
                if lab < 0:
                    continue
                if lab == 0:
                    parent[_find(parent, x)] = _find(parent, bottom)
                elif rep[lab] < 0:
                    rep[lab] = x
                else:
                    parent[_find(parent, x)] = _find(parent, rep[lab])
            # row r0 itself: add in-row adjacencies
            for x in range(nT):
                if first[r0, x] <= n:
                    continue
                for j in range(dest.shape[1]):
                    if dh[j] != 0:
                        continue
                    x2 = dest[x, j]
                    if first[r0, x2] <= n:
                        continue
                    a = _find(parent, x)
                    b = _find(parent, x2)
                    if a != b:
                        parent[a] = b
        else:
            # previous row components: nodes nT + x, merged by their labels
            for lab in range(nT + 1):
                rep[lab] = -1
            for x in range(nT):
                lab = prev[x]
                if lab < 0:
                    continue
                node = nT + x
                if lab == 0:
                    parent[_find(parent, node)] = _find(parent, bottom)
                elif rep[lab] < 0:
                    rep[lab] = node
                else:
                    parent[_find(parent, node)] = _find(parent, rep[lab])
            for x in range(nT):
                if first[r, x] <= n:
                    continue
                for j in range(dest.shape[1]):
                    d = dh[j]
                    if d > 0:
                        continue
                    x2 = dest[x, j]
                    if d == 0:
                        if first[r, x2] <= n:
                            continue
                        b = _find(parent, x2)
                    else:
                        if prev[x2] < 0:
                            continue
                        b = _find(parent, nT + x2)
                    a = _find(parent, x)
                    if a != b:
                        parent[a] = b
        # relabel the current row
        broot = _find(parent, bottom)
        for i in range(2 * nT + 1):
            ids[i] = -1
        nxt = 1
        for x in range(nT):
            if first[r, x] <= n:
                cur[x] = -1
                continue
            root = _find(parent, x)
            if root == broot:
                cur[x] = 0
            else:
                if ids[root] < 0:
                    ids[root] = nxt
                    nxt += 1
                cur[x] = ids[root]
        for x in range(nT):
            prev[x] = cur[x]
    return prev


# ------------------------------------------------------------ trace

@dataclass
class TraceStore:
    """First-visit times of the walk on a contiguous block of levels.

    Row ``r`` holds height ``lo + r``.  ``boundary`` is the archived
    boundary row (or -1) and ``labels`` its component labels.
    """

    N: int
    d: int
    first: np.ndarray
    counts: np.ndarray
    row_first: np.ndarray
    lo: int
    n: int = 0
    boundary: int = -1
    labels: np.ndarray | None = None
    archived_levels: int = 0

    @classmethod
    def empty(cls, N: int, d: int, rows: int = 16, lo: int | None = None) -> "TraceStore":
        nT = N ** d
        lo = -(rows // 2) if lo is None else lo
        return cls(N, d, np.full((rows, nT), NEVER, dtype=np.int64), np.zeros(rows, dtype=np.int64),
                   np.full(rows, NEVER, dtype=np.int64), lo)

    @classmethod
    def from_sites(cls, g: Geometry, sites: Iterable[Site], n: int = 0) -> "TraceStore":
        """A trace whose sites are all visited by time ``n`` (no archive)."""
        sites = list(sites)
        hs = [s.height for s in sites] or [0]
        tr = cls.empty(g.N, g.d, rows=max(hs) - min(hs) + 5, lo=min(hs) - 2)
        for s in sites:
            tr.mark(s.height, torus_index(s.torus, g.N), n)
        tr.n = n
        return tr

    def mark(self, height: int, x: int, t: int) -> None:
        r = height - self.lo
        if self.first[r, x] == NEVER:
            self.first[r, x] = t
            self.counts[r] += 1
            self.row_first[r] = min(self.row_first[r], t)

    @property
    def rows(self) -> int:
        return self.first.shape[0]

    def occupied(self, height: int, n: int | None = None) -> np.ndarray:
        n = self.n if n is None else n
        r = height - self.lo
        if r < 0 or r >= self.rows:
            return np.zeros(self.N ** self.d, dtype=bool)
        return self.first[r] <= n

    def level_counts(self, n: int | None = None) -> dict[int, int]:
        n = self.n if n is None else n
        occ = (self.first <= n).sum(axis=1)
        return {self.lo + r: int(c) for r, c in enumerate(occ) if c}

    def height_range(self, n: int | None = None) -> tuple[int, int]:
        """(minH, maxH) over live rows visited by time n."""
        n = self.n if n is None else n
        rows = np.flatnonzero(self.row_first <= n)
        if len(rows) == 0:
            raise ValueError("trace is empty")
        return self.lo + int(rows[0]), self.lo + int(rows[-1])

    def sites(self, n: int | None = None) -> list[Site]:
        n = self.n if n is None else n
        from .lattice import torus_coords
        out = []
        for r, x in zip(*np.nonzero(self.first <= n)):
            out.append(Site(torus_coords(int(x), self.N, self.d), self.lo + int(r)))
        return out

    def grow(self, row: int) -> int:
        """Re-allocate with room around ``row``; returns the shifted row."""
        old = self.rows
        new = 2 * old
        shift = new // 4
        first = np.full((new, self.first.shape[1]), NEVER, dtype=np.int64)
        first[shift:shift + old] = self.first
        counts = np.zeros(new, dtype=np.int64)
        counts[shift:shift + old] = self.counts
        rf = np.full(new, NEVER, dtype=np.int64)
        rf[shift:shift + old] = self.row_first
        self.first, self.counts, self.row_first = first, counts, rf
        self.lo -= shift
        if self.boundary >= 0:
            self.boundary += shift
        return row + shift

    def archive_below(self, row: int, dest, dh) -> int:
        """Fold rows up to ``row`` into the boundary summary; returns the
        number of rows dropped."""
        r0 = self.boundary if self.boundary >= 0 else self._bottom_row()
        if row <= r0:
            return 0
        labels0 = self.labels if self.boundary >= 0 else np.zeros(self.first.shape[1], dtype=np.int64)
        lab = _archive_labels(self.first, self.n, r0, row, labels0, dest, dh)
        drop = row
        self.first = np.ascontiguousarray(self.first[drop:])
        self.counts = self.counts[drop:].copy()
        self.row_first = self.row_first[drop:].copy()
        self.lo += drop
        self.boundary = 0
        self.labels = lab
        self.archived_levels += drop
        return drop

    def _bottom_row(self) -> int:
        rows = np.flatnonzero(self.row_first <= self.n)
        return int(rows[0]) - 1


def _complement_tables(g: Geometry, complement: Adjacency | str):
    dest, dh = torus_shift_table(g.N, g.d, Adjacency(complement))
    return np.ascontiguousarray(dest), np.ascontiguousarray(dh)


def _window(trace: TraceStore, n: int, margin: int = 1) -> tuple[int, int]:
    rows = np.flatnonzero(trace.row_first <= n)
    top = int(rows[-1]) + margin
    if top >= trace.rows:
        raise ValueError("trace storage lacks the requested top margin")
    if trace.boundary >= 0:
        return trace.boundary, top
    bot = int(rows[0]) - margin
    if bot < 0:
        raise ValueError("trace storage lacks the requested bottom margin")
    return bot, top


def _check(trace: TraceStore, n: int, dest, dh, margin: int = 1) -> tuple[bool, int]:
    r_bot, r_top = _window(trace, n, margin)
    labels = trace.labels if trace.boundary >= 0 else np.zeros(trace.first.shape[1], dtype=np.int64)
    conn, low = _connected(trace.first, n, r_bot, r_top, labels, dest, dh)
    return (not conn), trace.lo + low


def disconnects(trace: TraceStore, g: Geometry, n: int | None = None,
                complement: Adjacency | str = Adjacency.LINF, margin: int = 1) -> bool:
    """True iff the trace at time ``n`` separates top from bottom.

    The search runs on heights [minH - margin, maxH + margin]; any
    ``margin >= 1`` gives the same verdict.
    """
    n = trace.n if n is None else n
    if not np.any(trace.row_first <= n):
        return False
    dest, dh = _complement_tables(g, complement)
    return _check(trace, n, dest, dh, margin)[0]


# ------------------------------------------------------------ detection

@dataclass(frozen=True)
class Schedule:
    """Checkpoints: geometric from ``start`` (default N^d) with ``ratio``,
    plus whenever a level's distinct count first reaches theta_chk N^d.
    A trigger is only honoured once ``trigger_gap`` times the last checked
    time has elapsed, which keeps drifted runs (many levels crossing the
    fraction) from checking at every level.  ``every_step`` checks after
    each step.  The result never depends on the schedule."""

    start: int | None = None
    ratio: float = 1.5
    theta_chk: float | None = 0.5
    trigger_gap: float = 0.1
    every_step: bool = False

    def __post_init__(self):
        if self.ratio <= 1:
            raise ValueError("ratio must be > 1")


@dataclass
class DisconnectionReport:
    T_N: int
    scaled: float
    checkpoints: int
    window: tuple[int, int]
    witness: int
    steps: int
    archived_levels: int
    wall: float
    trace: TraceStore | None = field(default=None, repr=False)


def _storage_rows(trace: TraceStore, rows: int) -> None:
    while trace.rows < rows:
        trace.grow(trace.rows // 2)


def detect_T_N(cfg: WalkConfig, stream: Stream, schedule: Schedule | None = None,
               horizon: int | None = None, complement: Adjacency | str = Adjacency.LINF,
               archive_margin: float = 20.0, keep_trace: bool = False) -> DisconnectionReport:
    """Exact T_N by checkpoints plus binary search on first-visit times."""
    t0 = time.perf_counter()
    g = cfg.geometry
    if g.adjacency != Adjacency.L1:
        raise ValueError("walk steps use L1 adjacency")
    schedule = schedule or Schedule()
    horizon = NEVER - 1 if horizon is None else int(horizon)
    nT = g.torus_size
    delta = float(cfg.drift)
    dest_w, _ = torus_shift_table(g.N, g.d, Adjacency.L1)
    dest_w = np.ascontiguousarray(dest_w)
    dest_c, dh_c = _complement_tables(g, complement)
    archive_w = math.ceil(archive_margin / delta) if delta > 0 else 0

    start = cfg.start_site(stream)
    tr = TraceStore.empty(g.N, g.d, rows=64, lo=start.height - 32)
    pos = torus_index(start.torus, g.N)
    row = start.height - tr.lo
    tr.mark(start.height, pos, 0)
    key, ctr = stream.key, stream.ctr
    t = 0
    checks = 1
    trigger = (int(schedule.theta_chk * nT) + 1) if schedule.theta_chk else -1
    if schedule.every_step:
        next_cp = 1
    else:
        next_cp = int(schedule.start if schedule.start is not None else nT)
    hit, wit = _check(tr, 0, dest_c, dh_c)
    last_false = -1 if hit else 0
    while not hit:
        stop = min(next_cp, horizon)
        status = OK
        while t < stop:
            floor_row = tr.boundary
            status, ctr, pos, row, t = _walk(key, ctr, delta, 2 * g.dim, dest_w, pos, row, t, stop,
                                             tr.first, tr.counts, tr.row_first, trigger, floor_row)
            ctr = np.uint64(ctr)
            if status == GROW:
                row = tr.grow(row)
                continue
            if status == REVISIT:
                raise ArchiveRevisited(f"walk returned below archived level at t={t}")
            if status == TRIGGER and t >= last_false * (1 + schedule.trigger_gap):
                break
        tr.n = t
        checks += 1
        hit, wit = _check(tr, t, dest_c, dh_c)
        if hit:
            break
        last_false = t
        if t >= horizon:
            raise HorizonExhausted(horizon)
        if status != TRIGGER or t >= next_cp:
            if schedule.every_step:
                next_cp = t + 1
            else:
                while next_cp <= t:
                    next_cp = max(next_cp + 1, math.ceil(next_cp * schedule.ratio))
        if archive_w and row - archive_w > (tr.boundary if tr.boundary >= 0 else 0) + archive_w:
            row -= tr.archive_below(row - archive_w, dest_c, dh_c)
    # binary search on (last_false, t]
    lo_t, hi_t = last_false, t
    while hi_t - lo_t > 1:
        mid = (lo_t + hi_t) // 2
        if _check(tr, mid, dest_c, dh_c)[0]:
            hi_t = mid
        else:
            lo_t = mid
    T = max(hi_t, 0)
    _, wit = _check(tr, T, dest_c, dh_c)
    r_bot, r_top = _window(tr, T)
    stream.advance(ctr)
    return DisconnectionReport(T, T / float(nT) ** 2, checks, (tr.lo + r_bot, tr.lo + r_top), wit, t,
                               tr.archived_levels, time.perf_counter() - t0, tr if keep_trace else None)


def brute_force_T_N(cfg: WalkConfig, stream: Stream, horizon: int = 10 ** 6,
                    complement: Adjacency | str = Adjacency.LINF, block: int = 4096,
                    on_step: Callable[[int, bool], None] | None = None) -> int:
    """Reference T_N: sample the path with the generic sampler and rebuild a
    dense occupancy grid after every single step."""
    g = cfg.geometry
    dest_c, dh_c = _complement_tables(g, complement)
    start = cfg.start_site(stream)
    heights = [start.height]
    tor = [torus_index(start.torus, g.N)]
    done = 0
    while True:
        path = sample_path(WalkConfig(g, delta=cfg.drift, start=Site(
            _coords(tor[-1], g), heights[-1])), block, stream)
        hs = path.heights()[1:]
        ts = path.torus_indices()[1:]
        for h, x in zip(hs.tolist(), ts.tolist()):
            heights.append(h)
            tor.append(x)
        while done < len(heights):
            n = done
            lo = min(heights[: n + 1]) - 1
            hi = max(heights[: n + 1]) + 1
            occ = np.full((hi - lo + 1, g.torus_size), NEVER, dtype=np.int64)
            occ[np.array(heights[: n + 1]) - lo, np.array(tor[: n + 1])] = 0
            conn, _ = _connected(occ, 0, 0, hi - lo, np.zeros(g.torus_size, dtype=np.int64), dest_c, dh_c)
            if on_step is not None:
                on_step(n, not conn)
            if not conn:
                return n
            done += 1
            if n >= horizon:
                raise HorizonExhausted(horizon)


def _coords(x: int, g: Geometry) -> tuple[int, ...]:
    from .lattice import torus_coords
    return torus_coords(x, g.N, g.d)


@dataclass
class BatchResult:
    replicas: list[int]
    T: np.ndarray  # -1 marks horizon exhaustion
    scaled: np.ndarray
    reports: list


def batch_disconnection(cfg: WalkConfig, replicas: Iterable[int] | int, seed: int | None = None,
                        sink: Callable[[dict], None] | None = None, horizon: int | None = None,
                        schedule: Schedule | None = None, complement: Adjacency | str = Adjacency.LINF) -> BatchResult:
    """T_N for each replica; stream (seed, replica) fixes each run."""
    reps = list(range(replicas)) if isinstance(replicas, int) else list(replicas)
    seed = cfg.seed if seed is None else seed
    g = cfg.geometry
    T = np.full(len(reps), -1, dtype=np.int64)
    reports = []
    for i, r in enumerate(reps):
        st = Stream(seed, r)
        t0 = time.perf_counter()
        try:
            rep = detect_T_N(cfg, st, schedule, horizon, complement)
            T[i] = rep.T_N
            steps = rep.steps
        except HorizonExhausted:
            rep = None
            steps = horizon
        reports.append(rep)
        if sink is not None:
            sink({"seed": seed, "replica": r, "N": g.N, "d": g.d, "delta": float(cfg.drift),
                  "T_N": int(T[i]), "T_N_scaled": float(T[i]) / float(g.torus_size) ** 2 if T[i] >= 0 else None,
                  "steps": int(steps) if steps is not None else None, "wall": time.perf_counter() - t0})
    scaled = np.where(T >= 0, T / float(g.torus_size) ** 2, np.nan)
    return BatchResult(reps, T, scaled, reports)
