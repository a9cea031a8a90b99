"""Step kernels and path samplers for biased walks.

Direction ``k`` of a (d+1)-dimensional walk is the k-th L1 offset of
:func:`cylab.lattice.neighbor_offsets`: ``2i`` is ``+e_(i+1)`` and ``2i+1`` is
``-e_(i+1)``.  The height axis is the last one, so ``UP = 2d`` and
``DOWN = 2d + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np

from .lattice import Geometry, Site, Space, neighbor_offsets, torus_index, torus_shift_table
from .rng import Stream, draw_u64, draw_uniform


def up_index(d: int) -> int:
    return 2 * d


def down_index(d: int) -> int:
    return 2 * d + 1


@dataclass(frozen=True)
class WalkConfig:
    """Walk on the cylinder (or Z^(d+1)) with upward drift.

    Give either ``delta`` or ``alpha``; with ``alpha`` the drift is
    ``N ** (-d * alpha)`` and ``alpha = inf`` means no drift.
    ``start_mode`` is ``"point"`` (start at ``start``) or ``"uniform-level"``
    (uniform torus point on height ``level``).
    """

    geometry: Geometry
    delta: float | Fraction | None = None
    alpha: float | None = None
    start: Site | None = None
    start_mode: str = "point"
    level: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.delta is not None and self.alpha is not None:
            raise ValueError("give either delta or alpha, not both")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be in (0, inf], got {self.alpha}")
        dl = self.drift
        if not (0 <= dl < 1):
            raise ValueError(f"drift must lie in [0, 1), got {dl}")
        if self.start_mode not in ("point", "uniform-level"):
            raise ValueError(f"unknown start_mode {self.start_mode!r}")

    @property
    def drift(self):
        if self.alpha is not None:
            if math.isinf(self.alpha):
                return 0.0
            g = self.geometry
            return float(g.N) ** (-g.d * self.alpha)
        return 0 if self.delta is None else self.delta

    def start_site(self, stream: Stream | None = None) -> Site:
        g = self.geometry
        if self.start_mode == "uniform-level":
            if stream is None:
                raise ValueError("uniform-level start needs a stream")
            t = stream.numpy(purpose=1).integers(0, g.N, size=g.d)
            return Site.make(g, t, self.level)
        return self.start if self.start is not None else Site.origin(g)


def _check_delta(delta) -> None:
    if not (0 <= delta < 1):
        raise ValueError(f"drift must lie in [0, 1), got {delta}")


def _kernel_from_vertical(d: int, up_bias, exact: bool):
    n = 2 * (d + 1)
    if exact:
        base = Fraction(1, n)
        probs = [base] * n
        probs[up_index(d)] = (1 + up_bias) * base
        probs[down_index(d)] = (1 - up_bias) * base
        return probs
    probs = np.full(n, 1.0 / n)
    probs[up_index(d)] = (1.0 + up_bias) / n
    probs[down_index(d)] = (1.0 - up_bias) / n
    return probs


def step_kernel(cfg: WalkConfig, site: Site | None = None):
    """Transition probabilities over the 2(d+1) unit moves.

    Returns a float array, or a list of ``Fraction`` when the drift is a
    ``Fraction`` (exact mode).  The kernel is translation invariant, so
    ``site`` only exists for symmetry with :func:`conditioned_step_kernel`.
    """
    delta = cfg.drift
    _check_delta(delta)
    return _kernel_from_vertical(cfg.geometry.d, delta, isinstance(delta, Fraction))


def conditioned_step_kernel(cfg: WalkConfig, site: Site, phase: str = "before"):
    """Kernel of the walk conditioned to reach the record threshold at level 0.

    Before the record time the drift points toward level 0 (uniform on the
    level itself); afterwards the ordinary upward drift applies.
    """
    delta = cfg.drift
    _check_delta(delta)
    exact = isinstance(delta, Fraction)
    if phase == "after":
        return _kernel_from_vertical(cfg.geometry.d, delta, exact)
    if phase != "before":
        raise ValueError(f"phase must be 'before' or 'after', got {phase!r}")
    h = site.height
    bias = -delta if h > 0 else (delta if h < 0 else 0 * delta)
    return _kernel_from_vertical(cfg.geometry.d, bias, exact)


@dataclass(frozen=True)
class StepStats:
    length: int
    height: int
    up: int
    down: int


@dataclass
class Path:
    geometry: Geometry
    start: Site
    steps: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.steps)

    def heights(self) -> np.ndarray:
        dh = neighbor_offsets(self.geometry.dim)[:, -1]
        out = np.empty(len(self.steps) + 1, dtype=np.int64)
        out[0] = self.start.height
        np.cumsum(dh[self.steps], out=out[1:])
        out[1:] += self.start.height
        return out

    def torus_indices(self) -> np.ndarray:
        """Flat torus index of every visited site (cylinder only)."""
        g = self.geometry
        if g.space is not Space.CYLINDER:
            raise ValueError("torus indices only exist on the cylinder")
        dest, _ = torus_shift_table(g.N, g.d)
        return _follow(dest, torus_index(self.start.torus, g.N), self.steps.astype(np.int64))

    def coordinates(self) -> np.ndarray:
        """(n+1, d+1) array of unwrapped lattice coordinates."""
        offs = neighbor_offsets(self.geometry.dim)
        out = np.empty((len(self.steps) + 1, self.geometry.dim), dtype=np.int64)
        out[0] = self.start.as_array()
        np.cumsum(offs[self.steps], axis=0, out=out[1:])
        out[1:] += out[0]
        return out

    def sites(self) -> list[Site]:
        g = self.geometry
        return [Site.make(g, row[:-1], row[-1]) for row in self.coordinates()]

    def stats(self) -> StepStats:
        d = self.geometry.d
        up = int(np.count_nonzero(self.steps == up_index(d)))
        down = int(np.count_nonzero(self.steps == down_index(d)))
        h = self.heights()
        return StepStats(len(self.steps), abs(int(h[-1] - h[0])), up, down)


@numba.njit(cache=True)
def _follow(dest, start, steps):
    out = np.empty(steps.shape[0] + 1, dtype=np.int64)
    out[0] = start
    cur = start
    for i in range(steps.shape[0]):
        cur = dest[cur, steps[i]]
        out[i + 1] = cur
    return out


@numba.njit(cache=True)
def fill_directions(key, ctr, n_dir, delta, out):
    """Fill ``out`` with i.i.d. directions of the drifted L1 kernel.

    One uniform per step: its slot among ``n_dir`` picks the move; a
    vertical slot pair is re-split so that up has weight 1 + delta.
    Returns the advanced counter.
    """
    top = n_dir - 2
    p_up = 0.5 * (1.0 + delta)
    for i in range(out.shape[0]):
        v = draw_uniform(key, ctr) * n_dir
        ctr += np.uint64(1)
        k = int(v)
        if k >= top:
            w = 0.5 * (v - top)
            k = top if w < p_up else top + 1
        out[i] = k
    return ctr


def sample_path(cfg: WalkConfig, n_steps: int, stream: Stream) -> Path:
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    g = cfg.geometry
    start = cfg.start_site(stream)
    steps = np.empty(n_steps, dtype=np.int8)
    ctr = fill_directions(stream.key, stream.ctr, 2 * g.dim, float(cfg.drift), steps)
    stream.advance(ctr)
    return Path(g, start, steps)


def rn_ratio(path: Path | StepStats, delta: float) -> float:
    """Log of p_bias(e) / p(e) = (1+delta)^up (1-delta)^down."""
    _check_delta(delta)
    st = path.stats() if isinstance(path, Path) else path
    return st.up * math.log1p(delta) + st.down * math.log1p(-delta)


def rn_log_bounds(stats: StepStats, delta: float) -> tuple[float, float]:
    """Log of the two-sided bracket on the biased/unbiased path ratio."""
    lo = 0.5 * stats.length * math.log1p(-delta * delta) \
        + 0.5 * stats.height * (math.log1p(-delta) - math.log1p(delta))
    hi = 0.5 * stats.height * (math.log1p(delta) - math.log1p(-delta))
    return lo, hi


def stepwise_log_ratio(steps: Sequence[int], biased, unbiased) -> float:
    """Sum of log kernel ratios along a step sequence (independent check of
    :func:`rn_ratio`)."""
    b = np.log(np.asarray(biased, dtype=float))
    u = np.log(np.asarray(unbiased, dtype=float))
    steps = np.asarray(steps, dtype=np.int64)
    return float(np.sum(b[steps] - u[steps]))


# ---------------------------------------------------------------- 1D walk

@numba.njit(cache=True)
def fill_steps_1d(key, ctr, delta, out):
    """Fill ``out`` with +-1 steps, up with probability (1+delta)/2.

    Without drift each 64-bit draw supplies 64 steps.  Returns the counter.
    """
    n = out.shape[0]
    if delta == 0.0:
        i = 0
        while i < n:
            bits = draw_u64(key, ctr)
            ctr += np.uint64(1)
            m = min(64, n - i)
            for j in range(m):
                out[i + j] = 1 if (bits >> np.uint64(j)) & np.uint64(1) else -1
            i += m
    else:
        p = 0.5 * (1.0 + delta)
        for i in range(n):
            out[i] = 1 if draw_uniform(key, ctr) < p else -1
            ctr += np.uint64(1)
    return ctr


def sample_1d(delta: float, start: int, n_steps: int, stream: Stream) -> np.ndarray:
    """Positions w_0..w_n of the 1D walk with drift ``delta``."""
    _check_delta(delta)
    steps = np.empty(n_steps, dtype=np.int64)
    ctr = fill_steps_1d(stream.key, stream.ctr, float(delta), steps)
    stream.advance(ctr)
    out = np.empty(n_steps + 1, dtype=np.int64)
    out[0] = start
    np.cumsum(steps, out=out[1:])
    out[1:] += start
    return out


@numba.njit(cache=True)
def _visits_to_start(key, ctr, delta, escape_height):
    p = 0.5 * (1.0 + delta)
    x = 0
    visits = 1
    while True:
        x += 1 if draw_uniform(key, ctr) < p else -1
        ctr += np.uint64(1)
        if x == 0:
            visits += 1
        elif x >= escape_height:
            return visits, ctr


@numba.njit(cache=True)
def _visits_batch(keys, delta, escape_height):
    out = np.empty(keys.shape[0], dtype=np.int64)
    for r in range(keys.shape[0]):
        out[r], _ = _visits_to_start(keys[r], np.uint64(0), delta, escape_height)
    return out


def escape_bias_bound(delta: float, escape_height: int) -> float:
    """Probability that a walk stopped at ``escape_height`` would still have
    come back to 0 (the truncation error of :func:`local_time_at_start`)."""
    return ((1 - delta) / (1 + delta)) ** escape_height


def local_time_at_start(delta: float, replicas: int, seed: int, escape_height: int = 80) -> np.ndarray:
    """Total number of visits to the start point, one sample per replica.

    Needs ``delta > 0``.  A walk that reaches ``escape_height`` is treated as
    gone for good; see :func:`escape_bias_bound` for the error this makes.
    """
    if not 0 < delta < 1:
        raise ValueError("local time at the start is finite only for 0 < delta < 1")
    from .rng import replica_key
    keys = np.array([replica_key(seed, r) for r in range(replicas)], dtype=np.uint64)
    return _visits_batch(keys, float(delta), int(escape_height))
