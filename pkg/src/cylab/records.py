"""Skeleton chain of the height process and record-breaking local times.

The skeleton of a walk is the sequence of times ``rho_k`` at which the
height changes (``rho_0 = 0``) together with the heights visited there.
The level local time ``L_k^z`` counts skeleton visits to ``z`` up to index
``k``; the record time at ``z`` is the first ``rho_k`` with
``L_k^z >= threshold``.

All scans are streaming: only per-level counters are kept, never the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .lattice import neighbor_offsets
from .rng import Stream, draw_u64, draw_uniform, replica_key
from .walkers import WalkConfig, fill_directions, fill_steps_1d

CHUNK = 1 << 14  # multiple of 64 so bit-packed 1D chunks line up with sample_1d
NO_HORIZON = 1 << 62


class HorizonExhausted(RuntimeError):
    """The walk ran for ``horizon`` steps without reaching the threshold."""

    def __init__(self, horizon: int):
        super().__init__(f"threshold not reached within {horizon} steps")
        self.horizon = horizon


@dataclass
class SkeletonClock:
    rho: np.ndarray
    zhat: np.ndarray

    @classmethod
    def from_heights(cls, heights) -> "SkeletonClock":
        h = np.asarray(heights, dtype=np.int64)
        moves = np.flatnonzero(np.diff(h)) + 1
        rho = np.concatenate(([0], moves)).astype(np.int64)
        return cls(rho, h[rho])

    def __len__(self) -> int:
        return len(self.rho)


@dataclass
class LevelLocalTime:
    counts: dict = field(default_factory=dict)
    k: int = -1

    @classmethod
    def from_clock(cls, clock: SkeletonClock, k: int) -> "LevelLocalTime":
        z, c = np.unique(clock.zhat[: k + 1], return_counts=True)
        return cls({int(a): int(b) for a, b in zip(z, c)}, k)

    def total(self) -> int:
        return sum(self.counts.values())


def _as_fraction(u) -> Fraction:
    if isinstance(u, Fraction):
        return u
    return Fraction(u).limit_denominator(10 ** 9)


def record_threshold(u, N: int, d: int) -> int:
    """ceil(u N^d / (d+1)), computed in rational arithmetic."""
    return max(1, math.ceil(_as_fraction(u) * N ** d / (d + 1)))


def one_d_threshold(u, N: int) -> int:
    return max(1, math.ceil(_as_fraction(u) * N))


@dataclass(frozen=True)
class RecordSpec:
    u: float
    z: int
    N: int
    d: int
    threshold_override: int | None = None

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError(f"u must be > 0, got {self.u}")
        if self.threshold_override is not None and self.threshold_override < 1:
            raise ValueError("threshold must be >= 1")

    @property
    def threshold(self) -> int:
        if self.threshold_override is not None:
            return int(self.threshold_override)
        return record_threshold(self.u, self.N, self.d)


@dataclass(frozen=True)
class Walk1D:
    """The one-dimensional walk with drift ``delta`` and scale ``N``."""

    delta: float
    N: int
    start: int = 0


@dataclass(frozen=True)
class RecordResult:
    time: int
    level: int
    threshold: int
    steps: int


# ------------------------------------------------------------ brute force

def record_time_from_heights(heights, threshold: int, levels=None) -> RecordResult | None:
    """Reference implementation on a stored height sequence."""
    clock = SkeletonClock.from_heights(heights)
    allowed = None if levels is None else set(int(z) for z in levels)
    seen: dict[int, int] = {}
    for k in range(len(clock)):
        z = int(clock.zhat[k])
        seen[z] = seen.get(z, 0) + 1
        if seen[z] >= threshold and (allowed is None or z in allowed):
            return RecordResult(int(clock.rho[k]), z, threshold, int(clock.rho[k]))
    return None


# ------------------------------------------------------------ chunked scan

@numba.njit(cache=True)
def _scan(dz, start, n_base, h, counts, off, thr, eligible):
    """Process dz[start:]; returns (status, i, h).

    status 0: record at step i (time n_base + i + 1); 1: chunk done;
    2: step i would leave the counter window (not applied).
    """
    size = counts.shape[0]
    for i in range(start, dz.shape[0]):
        s = dz[i]
        if s == 0:
            continue
        idx = h + s - off
        if idx < 0 or idx >= size:
            return 2, i, h
        h += s
        c = counts[idx] + 1
        counts[idx] = c
        if c >= thr and eligible[idx]:
            return 0, i, h
    return 1, dz.shape[0], h


def _eligible_mask(lo: int, size: int, levels) -> np.ndarray:
    if levels is None:
        return np.ones(size, dtype=np.bool_)
    z = np.arange(lo, lo + size)
    return np.isin(z, np.asarray(sorted(levels), dtype=np.int64))


class _Window:
    """Growable per-level counter array."""

    def __init__(self, center: int, half: int, levels):
        self.levels = levels
        self.off = center - half
        self.counts = np.zeros(2 * half + 1, dtype=np.int64)
        self.mask = _eligible_mask(self.off, len(self.counts), levels)

    def grow(self, h: int) -> None:
        size = len(self.counts)
        new = np.zeros(2 * size + 1, dtype=np.int64)
        shift = size // 2 + 1
        new[shift:shift + size] = self.counts
        self.counts = new
        self.off -= shift
        self.mask = _eligible_mask(self.off, len(self.counts), self.levels)


def _height_chunks(walk, stream: Stream):
    """Yield int8 height increments chunk by chunk from the stream."""
    if isinstance(walk, Walk1D):
        buf = np.empty(CHUNK, dtype=np.int64)
        while True:
            ctr = fill_steps_1d(stream.key, stream.ctr, float(walk.delta), buf)
            stream.advance(ctr)
            yield buf.astype(np.int8)
    else:
        g = walk.geometry
        dh = neighbor_offsets(g.dim)[:, -1].astype(np.int8)
        buf = np.empty(CHUNK, dtype=np.int8)
        while True:
            ctr = fill_directions(stream.key, stream.ctr, 2 * g.dim, float(walk.drift), buf)
            stream.advance(ctr)
            yield dh[buf]


def _start_height(walk) -> int:
    if isinstance(walk, Walk1D):
        return walk.start
    return walk.start_site(None).height if walk.start_mode == "point" else walk.level


def scan_records(walk, threshold: int, stream: Stream, horizon: int | None = None,
                 levels=None) -> RecordResult:
    """First skeleton time at which some eligible level reaches ``threshold``.

    ``levels`` restricts the eligible levels (``None`` means every level);
    visits to other levels still advance the clock.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    horizon = NO_HORIZON if horizon is None else int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    h = _start_height(walk)
    win = _Window(h, 256, levels)
    win.counts[h - win.off] = 1
    if threshold <= 1 and win.mask[h - win.off]:
        return RecordResult(0, h, threshold, 0)
    n = 0
    for dz in _height_chunks(walk, stream):
        if n >= horizon:
            break
        if n + len(dz) > horizon:
            dz = dz[: horizon - n]
        i = 0
        while True:
            status, i, h = _scan(dz, i, n, h, win.counts, win.off, threshold, win.mask)
            if status == 2:
                win.grow(h)
                continue
            break
        if status == 0:
            t = n + i + 1
            return RecordResult(t, h, threshold, t)
        n += len(dz)
    raise HorizonExhausted(horizon)


def record_time(cfg: WalkConfig | Walk1D, spec: RecordSpec, stream: Stream,
                horizon: int | None = None) -> int:
    """S(u, z): first skeleton time with L^z >= threshold."""
    return scan_records(cfg, spec.threshold, stream, horizon, levels=[spec.z]).time


def record_time_inf(cfg: WalkConfig | Walk1D, u, stream: Stream, horizon: int | None = None,
                    window=None, threshold: int | None = None) -> RecordResult:
    """inf over z of S(u, z).

    ``window`` is an optional ``(lo, hi)`` range of eligible levels; by default
    every level counts.  The threshold is ``ceil(u N^d/(d+1))`` on the
    cylinder and ``ceil(u N)`` for :class:`Walk1D`, unless given.
    """
    if threshold is None:
        if isinstance(cfg, Walk1D):
            threshold = one_d_threshold(u, cfg.N)
        else:
            threshold = record_threshold(u, cfg.geometry.N, cfg.geometry.d)
    levels = None if window is None else range(int(window[0]), int(window[1]) + 1)
    return scan_records(cfg, threshold, stream, horizon, levels)


# ------------------------------------------------------------ fused 1D kernel

@numba.njit(cache=True)
def _one_d_run(key, delta, thr, horizon, counts, off, mask):
    """Single 1D walk from 0 fed by the same bits as ``fill_steps_1d``.

    Returns (time, level); time = -1 on horizon, -2 on window overflow.
    """
    size = counts.shape[0]
    h = 0
    counts[off] = 1
    if thr <= 1 and mask[off]:
        return 0, 0
    ctr = np.uint64(0)
    bits = np.uint64(0)
    n = 0
    p = 0.5 * (1.0 + delta)
    while n < horizon:
        if delta == 0.0:
            bits = draw_u64(key, ctr)
            ctr += np.uint64(1)
            m = 64
        else:
            m = 1
        for j in range(m):
            if delta == 0.0:
                step = 1 if (bits >> np.uint64(j)) & np.uint64(1) else -1
            else:
                step = 1 if draw_uniform(key, ctr) < p else -1
                ctr += np.uint64(1)
            h += step
            n += 1
            idx = h + off
            if idx < 0 or idx >= size:
                return -2, h
            c = counts[idx] + 1
            counts[idx] = c
            if c >= thr and mask[idx]:
                return n, h
            if n >= horizon:
                break
    return -1, h


@numba.njit(cache=True)
def _level_mask(size, off, levels, all_levels):
    mask = np.ones(size, dtype=np.bool_)
    if all_levels:
        return mask
    mask[:] = False
    for z in levels:
        idx = z + off
        if 0 <= idx < size:
            mask[idx] = True
    return mask


@numba.njit(cache=True)
def _one_d_batch(keys, delta, thr, horizon, half, levels, all_levels):
    times = np.empty(keys.shape[0], dtype=np.int64)
    zs = np.empty(keys.shape[0], dtype=np.int64)
    for r in range(keys.shape[0]):
        hw = half
        while True:
            counts = np.zeros(2 * hw + 1, dtype=np.int64)
            mask = _level_mask(2 * hw + 1, hw, levels, all_levels)
            t, z = _one_d_run(keys[r], delta, thr, horizon, counts, hw, mask)
            if t != -2:
                break
            hw *= 2
        times[r] = t
        zs[r] = z
    return times, zs


def one_d_records(u, N: int, delta: float, seed: int, replicas, horizon: int | None = None,
                  levels=None) -> tuple[np.ndarray, np.ndarray]:
    """Record times of the 1D walk for the given replica indices.

    Returns ``(times, levels)``; a time of -1 means the horizon ran out.
    Replica ``r`` uses the same draws as ``Stream(seed, r)`` from counter 0.
    """
    if not u > 0 or N < 1:
        raise ValueError("need u > 0 and N >= 1")
    thr = one_d_threshold(u, N)
    keys = np.array([replica_key(seed, r) for r in replicas], dtype=np.uint64)
    lv = np.zeros(0, dtype=np.int64) if levels is None else np.asarray(sorted(levels), dtype=np.int64)
    return _one_d_batch(keys, float(delta), thr, NO_HORIZON if horizon is None else int(horizon),
                        max(64, 4 * thr), lv, levels is None)


def one_d_record(u, N: int, delta: float, stream: Stream, horizon: int | None = None) -> int:
    """inf_z S(uN, z) for the 1D walk from 0 with drift ``delta``.

    Reads the stream from its start (counter 0) like a fresh replica.
    """
    times, _ = one_d_records(u, N, delta, stream.seed, [stream.replica], horizon)
    if times[0] < 0:
        raise HorizonExhausted(horizon)
    return int(times[0])


def truncated_levels(N: int, L: int) -> np.ndarray:
    """Levels floor(l N / L) for |l| <= L^2."""
    ell = np.arange(-L * L, L * L + 1)
    return np.unique(np.floor_divide(ell * N, L))


# ------------------------------------------------------------ conditioned walk

@numba.njit(cache=True)
def _conditioned_batch(keys, n_dir, delta, thr, z0, escape, counts):
    """Rejection oracle: run walks until level 0 has ``thr`` skeleton visits
    or the height reaches ``escape``; tally pre-record transitions of the
    accepted walks by (sign of height, direction)."""
    top = n_dir - 2
    p_up = 0.5 * (1.0 + delta)
    local = np.zeros((3, n_dir), dtype=np.int64)
    accepted = 0
    for r in range(keys.shape[0]):
        key = keys[r]
        ctr = np.uint64(0)
        h = z0
        visits = 1 if h == 0 else 0
        local[:, :] = 0
        ok = visits >= thr
        while not ok:
            v = draw_uniform(key, ctr) * n_dir
            ctr += np.uint64(1)
            k = int(v)
            if k >= top:
                k = top if 0.5 * (v - top) < p_up else top + 1
            cat = 0 if h > 0 else (1 if h < 0 else 2)
            local[cat, k] += 1
            if k == top:
                h += 1
            elif k == top + 1:
                h -= 1
            else:
                continue
            if h == 0:
                visits += 1
                if visits >= thr:
                    ok = True
            elif h >= escape:
                break
        if ok:
            accepted += 1
            counts += local
    return accepted


def conditioned_transition_counts(cfg: WalkConfig, threshold: int, replicas: int, seed: int,
                                  start_height: int = 0, escape: int = 50):
    """Transition counts of walks conditioned on reaching ``threshold``
    skeleton visits at level 0, obtained by rejection.

    Returns ``(accepted, counts)`` where ``counts[c, k]`` tallies moves in
    direction ``k`` from heights with sign class ``c`` (0: >0, 1: <0, 2: =0).
    Walks that climb to ``escape`` are rejected; the chance that such a walk
    would have come back is ((1-delta)/(1+delta))^(escape - 0).
    """
    g = cfg.geometry
    keys = np.array([replica_key(seed, r) for r in range(replicas)], dtype=np.uint64)
    counts = np.zeros((3, 2 * g.dim), dtype=np.int64)
    acc = _conditioned_batch(keys, 2 * g.dim, float(cfg.drift), int(threshold),
                             int(start_height), int(escape), counts)
    return int(acc), counts
