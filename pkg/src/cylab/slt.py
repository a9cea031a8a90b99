"""Soft local time coupling on a finite state space.

One Poisson field on Sigma x [0, inf) (counting x Lebesgue) drives two
sequences:

* the chain: with densities g_1, g_2, ... the soft local time is
  G_n = G_{n-1} + xi_n g_n, where xi_n is the smallest value making G
  swallow one new field point; that point's state is the n-th chain point.
* the i.i.d. sequence: field points sorted by t / gbar(z).  The sorted
  values s_1 < s_2 < ... form a unit-rate Poisson process, whose counting
  function is the clock n(a, b).

If every g_n lies in [(1-delta) gbar, (1+delta) gbar] and
(1+delta)/(1-delta) <= 1+eta, then on the clock event
{ n(m,(1+eta)m) < 2 eta m, (1-eta)m < n(0,m) < (1+eta)m for m >= lam scale }
the first (1-eta)m points of either sequence are among the first
(1+3 eta)m points of the other, for every such m.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import Stream


@dataclass
class SltInstance:
    gbar: np.ndarray
    kernels: Callable[[int], np.ndarray] | np.ndarray
    delta: float

    def __post_init__(self):
        self.gbar = np.asarray(self.gbar, dtype=float)
        _check_density(self.gbar, "gbar")
        if not 0 <= self.delta < 0.5:
            raise ValueError("delta must lie in [0, 1/2)")

    @property
    def size(self) -> int:
        return len(self.gbar)

    def g(self, n: int) -> np.ndarray:
        """Density of chain point n (1-based)."""
        if callable(self.kernels):
            g = np.asarray(self.kernels(n), dtype=float)
        else:
            ks = np.asarray(self.kernels, dtype=float)
            g = ks[(n - 1) % len(ks)]
        _check_density(g, f"g_{n}")
        return g

    def in_band(self, g: np.ndarray) -> bool:
        return bool(np.all(g >= (1 - self.delta) * self.gbar - 1e-12)
                    and np.all(g <= (1 + self.delta) * self.gbar + 1e-12))


def _check_density(g: np.ndarray, name: str) -> None:
    if np.any(g < 0) or abs(g.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} is not a probability vector (sum {g.sum()})")


def band_kernels(gbar, delta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n random densities inside the multiplicative band around gbar."""
    gbar = np.asarray(gbar, dtype=float)
    out = np.empty((n, len(gbar)))
    for i in range(n):
        v = rng.uniform(-1, 1, size=len(gbar))
        v -= np.dot(gbar, v)
        v /= max(np.abs(v).max(), 1e-12)
        out[i] = gbar * (1 + delta * v)
    return out


class PoissonField:
    """Unit-intensity points on each state, generated lazily upward."""

    BLOCK = 64

    def __init__(self, size: int, stream: Stream):
        self.rngs = [stream.numpy(purpose=1000 + z) for z in range(size)]
        self.times = [np.zeros(0) for _ in range(size)]

    def point(self, z: int, i: int) -> float:
        t = self.times[z]
        while i >= len(t):
            gaps = self.rngs[z].exponential(1.0, size=max(self.BLOCK, len(t)))
            base = t[-1] if len(t) else 0.0
            t = np.concatenate((t, base + np.cumsum(gaps)))
            self.times[z] = t
        return float(t[i])

    def upto(self, z: int, level: float) -> np.ndarray:
        i = 0
        while self.point(z, i) <= level:
            i = max(2 * i, i + self.BLOCK)
        t = self.times[z]
        return t[: np.searchsorted(t, level, side="right")]


@dataclass
class CouplingResult:
    chain: np.ndarray
    chain_points: np.ndarray  # (state, index) of the swallowed points
    xi: np.ndarray
    soft_local_time: np.ndarray
    iid: np.ndarray
    iid_points: np.ndarray
    clock: np.ndarray  # s_1 < s_2 < ...
    delta: float
    field: PoissonField = field(repr=False, default=None)

    def n(self, a: float, b: float) -> int:
        """Clock increments n(a, b) = #{k : a < s_k <= b}."""
        return int(np.searchsorted(self.clock, b, side="right") - np.searchsorted(self.clock, a, side="right"))


def run_slt(inst: SltInstance, m: int, stream: Stream, n_iid: int | None = None) -> CouplingResult:
    """Chain of length ``m`` and i.i.d. sequence of length ``n_iid``
    (default ``m``) from a single field."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n_iid = m if n_iid is None else n_iid
    S = inst.size
    fld = PoissonField(S, stream)
    G = np.zeros(S)
    ptr = np.zeros(S, dtype=np.int64)
    chain = np.empty(m, dtype=np.int64)
    pts = np.empty((m, 2), dtype=np.int64)
    xi = np.empty(m)
    for n in range(1, m + 1):
        g = inst.g(n)
        nxt = np.array([fld.point(z, ptr[z]) for z in range(S)])
        with np.errstate(divide="ignore"):
            ratio = np.where(g > 0, (nxt - G) / np.where(g > 0, g, 1.0), np.inf)
        z = int(np.argmin(ratio))
        x = float(ratio[z])
        G += x * g
        chain[n - 1] = z
        pts[n - 1] = (z, ptr[z])
        xi[n - 1] = x
        ptr[z] += 1
    # i.i.d. sequence: merge states by t / gbar(z)
    heap = [(fld.point(z, 0) / inst.gbar[z], z, 0) for z in range(S) if inst.gbar[z] > 0]
    heapq.heapify(heap)
    iid = np.empty(n_iid, dtype=np.int64)
    ipts = np.empty((n_iid, 2), dtype=np.int64)
    clock = np.empty(n_iid)
    for k in range(n_iid):
        s, z, i = heapq.heappop(heap)
        iid[k] = z
        ipts[k] = (z, i)
        clock[k] = s
        heapq.heappush(heap, (fld.point(z, i + 1) / inst.gbar[z], z, i + 1))
    return CouplingResult(chain, pts, xi, G, iid, ipts, clock, inst.delta, fld)


@dataclass(frozen=True)
class InclusionReport:
    event: bool
    inclusion1: bool
    inclusion2: bool
    inclusion1_points: bool
    inclusion2_points: bool
    m_min: float
    m_max: float


def clock_event(clock: np.ndarray, eta: float, m_min: float, m_max: float) -> bool:
    """E: n(m,(1+eta)m) < 2 eta m and (1-eta)m < n(0,m) < (1+eta)m for all
    real m in [m_min, m_max].

    The counts are piecewise constant in m, jumping where m or (1+eta)m
    crosses a clock value, and the bounds are linear, so checking both
    ends of every constancy interval is exact.
    """
    s = np.asarray(clock)
    crit = np.concatenate(([m_min, m_max], s, s / (1 + eta)))
    crit = np.unique(crit[(crit >= m_min) & (crit <= m_max)])
    # one interior point per interval fixes the constant counts
    mids = 0.5 * (crit[:-1] + crit[1:]) if len(crit) > 1 else crit
    n0 = np.searchsorted(s, mids, side="right")
    n1 = np.searchsorted(s, (1 + eta) * mids, side="right") - n0
    for ends in (crit[:-1], crit[1:]) if len(crit) > 1 else (crit,):
        if np.any(n1 >= 2 * eta * ends):
            return False
        if np.any(n0 <= (1 - eta) * ends) or np.any(n0 >= (1 + eta) * ends):
            return False
    return True


def _prefix_inclusion(left_vals, right_vals, left_pts, right_pts, pairs, S):
    """Check multiset and point inclusion of left[:j] in right[:r] for each
    (j, r) in ``pairs``."""
    multiset = True
    points = True
    lc = np.zeros((len(left_vals) + 1, S), dtype=np.int64)
    rc = np.zeros((len(right_vals) + 1, S), dtype=np.int64)
    np.add.at(lc[1:], (np.arange(len(left_vals)), left_vals), 1)
    np.add.at(rc[1:], (np.arange(len(right_vals)), right_vals), 1)
    lc = np.cumsum(lc, axis=0)
    rc = np.cumsum(rc, axis=0)
    # rank of every left point in the right sequence (inf if absent)
    rank = {tuple(p): i + 1 for i, p in enumerate(right_pts.tolist())}
    pos = np.array([rank.get(tuple(p), np.iinfo(np.int64).max) for p in left_pts.tolist()], dtype=np.int64)
    worst = np.maximum.accumulate(pos) if len(pos) else pos
    for j, r in pairs:
        if j <= 0:
            continue
        if np.any(lc[j] > rc[r]):
            multiset = False
        if worst[j - 1] > r:
            points = False
    return multiset, points


def check_inclusions(res: CouplingResult, eta: float, lam: float, scale: float,
                     m_max: float | None = None) -> InclusionReport:
    """Evaluate E^lam and both inclusions for all m in [lam scale, m_max].

    Set sizes are floor((1-eta)m) on the left and ceil((1+3 eta)m) on the
    right; m_max defaults to the largest m the two sequences support.
    """
    m_min = lam * scale
    n_avail = min(len(res.chain), len(res.iid))
    top = (n_avail - 1) / (1 + 3 * eta)
    m_max = top if m_max is None else min(m_max, top)
    if m_max < m_min:
        raise ValueError("sequences too short for the requested range of m")
    ev = clock_event(res.clock, eta, m_min, m_max)
    pairs = []
    j_lo = math.floor((1 - eta) * m_min)
    j_hi = math.floor((1 - eta) * m_max)
    for j in range(max(j_lo, 1), j_hi + 1):
        # smallest m in range with floor((1-eta) m) = j gives the smallest right set
        m = max(j / (1 - eta), m_min)
        pairs.append((j, math.ceil((1 + 3 * eta) * m - 1e-12)))
    S = int(max(res.chain.max(initial=0), res.iid.max(initial=0))) + 1
    i1, p1 = _prefix_inclusion(res.iid, res.chain, res.iid_points, res.chain_points, pairs, S)
    i2, p2 = _prefix_inclusion(res.chain, res.iid, res.chain_points, res.iid_points, pairs, S)
    return InclusionReport(ev, i1, i2, p1, p2, m_min, m_max)
