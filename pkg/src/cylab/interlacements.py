"""Local sampler for random interlacements around a box.

Trajectories of the cloud that meet a box U are produced by thinning a
labelled Poisson field: every site x of the inner boundary of U receives
candidates at rate ``u_max`` with uniform labels in [0, u_max].  A
candidate survives when an independent walk from x leaves the ball
B(center, R_esc) before coming back to U, which happens with probability
e_{U,R}(x).  Survivors then run an ordinary forward walk from x until they
leave the ball.  The level-u cloud keeps the survivors with label <= u, so
it is Poisson with intensity u e_{U,R}, and clouds for different u are
coupled monotonically.

Everything is relative to the killed walk (absorbed outside the ball).
For that walk the sweeping identity holds exactly, so the number of
trajectories that reach D is Poisson(u cap_R(D)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import ndimage

from .potential import (Region, box, capacity_free, equilibrium_measure, green_constant,
                        interior_boundary)
from .rng import Stream, draw_uniform

KAPPA = 10


@dataclass(frozen=True)
class BoxSpec:
    """Box [lo, lo + side)^3 of Z^3."""

    lo: tuple
    side: int

    @classmethod
    def ball(cls, center, radius: int) -> "BoxSpec":
        """The sup-norm ball B(center, radius)."""
        return cls(tuple(int(c) - radius for c in center), 2 * radius + 1)

    def sites(self) -> np.ndarray:
        r = np.arange(self.side)
        g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        return g + np.asarray(self.lo, dtype=np.int64)

    @property
    def diam(self) -> int:
        return self.side - 1

    @property
    def center(self) -> tuple:
        return tuple(int(c) + self.side // 2 for c in self.lo)

    def contains(self, other: "BoxSpec") -> bool:
        a = np.asarray(self.lo)
        b = np.asarray(other.lo)
        return bool(np.all(b >= a) and np.all(b + other.side <= a + self.side))

    def inside(self, pts: np.ndarray) -> np.ndarray:
        rel = np.asarray(pts) - np.asarray(self.lo)
        return np.all((rel >= 0) & (rel < self.side), axis=-1)


def _as_box(b) -> BoxSpec:
    if isinstance(b, BoxSpec):
        return b
    lo, side = b
    return BoxSpec(tuple(int(c) for c in lo), int(side))


@numba.njit(cache=True)
def _run_cloud(key, ctr, starts, labels, code, lo, center, R, store, buf, min_label):
    """Escape trials and forward walks for every candidate.

    ``code`` (3D, padded around U): 0 outside U, 1 in U minus D, 2 in D.
    Returns accepted flags, D-hit flags, excursion counts, trajectory
    offsets into ``buf`` (-1 if not stored) and the counter.
    """
    n = starts.shape[0]
    sx, sy, sz = code.shape
    accepted = np.zeros(n, dtype=np.bool_)
    hits = np.zeros(n, dtype=np.bool_)
    nexc = np.zeros(n, dtype=np.int64)
    ends = np.full(n, -1, dtype=np.int64)
    used = 0
    overflow = False
    p = np.empty(3, dtype=np.int64)
    for i in range(n):
        # escape trial: leave the ball before returning to U
        for a in range(3):
            p[a] = starts[i, a]
        ok = False
        while True:
            k = int(draw_uniform(key, ctr) * 6.0)
            ctr += np.uint64(1)
            a = k >> 1
            p[a] += 1 if (k & 1) == 0 else -1
            if abs(p[a] - center[a]) > R:
                ok = True
                break
            gx = p[0] - lo[0]
            gy = p[1] - lo[1]
            gz = p[2] - lo[2]
            if 0 <= gx < sx and 0 <= gy < sy and 0 <= gz < sz and code[gx, gy, gz] != 0:
                break
        if not ok:
            continue
        accepted[i] = True
        lab = labels[i]
        for a in range(3):
            p[a] = starts[i, a]
        in_exc = False
        while True:
            gx = p[0] - lo[0]
            gy = p[1] - lo[1]
            gz = p[2] - lo[2]
            c = 0
            if 0 <= gx < sx and 0 <= gy < sy and 0 <= gz < sz:
                c = code[gx, gy, gz]
                if c != 0 and lab < min_label[gx, gy, gz]:
                    min_label[gx, gy, gz] = lab
            if c == 2 and not in_exc:
                in_exc = True
                hits[i] = True
                nexc[i] += 1
            elif c == 0 and in_exc:
                in_exc = False
            if store:
                if used < buf.shape[0]:
                    for a in range(3):
                        buf[used, a] = p[a]
                else:
                    overflow = True
                used += 1
            k = int(draw_uniform(key, ctr) * 6.0)
            ctr += np.uint64(1)
            a = k >> 1
            p[a] += 1 if (k & 1) == 0 else -1
            if abs(p[a] - center[a]) > R:
                break
        ends[i] = used
    return accepted, hits, nexc, ends, overflow, ctr


@dataclass
class Excursion:
    trajectory: int
    index: int
    path: np.ndarray


@dataclass
class ExcursionCloud:
    u: float
    u_max: float
    D: BoxSpec
    U: BoxSpec
    R_esc: int
    seed: int
    replica: int
    labels: np.ndarray
    starts: np.ndarray
    hits_D: np.ndarray
    n_exc: np.ndarray
    min_label: np.ndarray = field(repr=False)
    grid_lo: np.ndarray = field(repr=False)
    trajectories: list | None = field(default=None, repr=False)
    cap_D: float | None = None
    cap_D_se: float = 0.0

    @property
    def J(self) -> int:
        return int(np.count_nonzero(self.hits_D & (self.labels <= self.u)))

    @property
    def N_exc(self) -> int:
        return int(self.n_exc[self.labels <= self.u].sum())

    def restrict(self, u: float) -> "ExcursionCloud":
        """The level-u cloud from the same labelled field (u <= u_max)."""
        if u > self.u_max:
            raise ValueError("cannot raise the level above u_max")
        keep = self.labels <= u
        trajs = None if self.trajectories is None else [t for t, k in zip(self.trajectories, keep) if k]
        return ExcursionCloud(u, self.u_max, self.D, self.U, self.R_esc, self.seed, self.replica,
                              self.labels[keep], self.starts[keep], self.hits_D[keep], self.n_exc[keep],
                              self.min_label, self.grid_lo, trajs, self.cap_D, self.cap_D_se)

    def excursions(self) -> list[Excursion]:
        """D -> outside-U segments, ordered by (trajectory, order within it)."""
        if self.trajectories is None:
            raise ValueError("cloud was sampled without storing trajectories")
        out = []
        for t, path in enumerate(self.trajectories):
            if self.labels[t] > self.u:
                continue
            in_d = self.D.inside(path)
            in_u = self.U.inside(path)
            i = 0
            k = 0
            n = len(path)
            while i < n:
                if in_d[i]:
                    j = i
                    while j < n and in_u[j]:
                        j += 1
                    # the excursion ends at the first site outside U
                    out.append(Excursion(t, k, path[i:min(j + 1, n)]))
                    k += 1
                    i = j
                else:
                    i += 1
        return out

    def dump(self) -> dict:
        head = {"u": self.u, "D": [list(self.D.lo), self.D.side],
                "U": [list(self.U.lo), self.U.side], "R_esc": self.R_esc,
                "seed": self.seed, "replica": self.replica}
        trajs = [] if self.trajectories is None else [
            {"label": float(lab), "start": [int(c) for c in t[0]],
             "steps": _steps_of(t).tolist()}
            for lab, t in zip(self.labels, self.trajectories) if lab <= self.u]
        return {"header": head, "trajectories": trajs}


def _steps_of(path: np.ndarray) -> np.ndarray:
    d = np.diff(path, axis=0)
    axis = np.argmax(np.abs(d), axis=1)
    sign = d[np.arange(len(d)), axis]
    return 2 * axis + (sign < 0)


@lru_cache(maxsize=32)
def _layout(D: BoxSpec, U: BoxSpec):
    Us = U.sites()
    reg = Region.build(D.sites(), Us)
    reg.code.setflags(write=False)
    bnd = interior_boundary(Us)
    bnd.setflags(write=False)
    return reg, bnd


def killed_capacity(D: BoxSpec, R_esc: int, stream: Stream | None = None, M: int = 2000,
                    max_sites: int = 2 * 10 ** 6) -> tuple[float, float]:
    """cap of D for the walk killed outside B(D.center, R_esc), with SE.

    Exact solve when the ball is small enough, else escape frequencies.
    """
    ball = box(np.asarray(D.center), R_esc, 3)
    if len(ball) <= max_sites:
        est = equilibrium_measure(D.sites(), ball, "exact", max_sites=max_sites)
        return est.total, 0.0
    est = capacity_free(D.sites(), R_esc, M, stream or Stream(0), center=D.center, warn_at=np.inf)
    return est.total, est.total_se


def sample_cloud(u: float, D, U, R_esc: int | None = None, stream: Stream | None = None,
                 u_max: float | None = None, store: bool = True, cap_D: float | None = None,
                 warn_at: float = 0.01) -> ExcursionCloud:
    """One labelled cloud at level ``u_max`` (default ``u``), viewed at ``u``."""
    D = _as_box(D)
    U = _as_box(U)
    if u < 0:
        raise ValueError("u must be >= 0")
    if not U.contains(D):
        raise ValueError("D must be contained in U")
    if R_esc is None:
        R_esc = KAPPA * U.diam
    if R_esc <= U.side:
        raise ValueError("R_esc must exceed the radius of U")
    if R_esc < KAPPA * U.diam:
        warnings.warn(f"R_esc={R_esc} below {KAPPA} x diam(U)", RuntimeWarning)
    u_max = u if u_max is None else u_max
    if u_max < u:
        raise ValueError("u_max must be >= u")
    stream = stream or Stream(0)
    reg, bnd = _layout(D, U)
    rng = stream.numpy(purpose=2)
    counts = rng.poisson(u_max, size=len(bnd)) if u_max > 0 else np.zeros(len(bnd), dtype=np.int64)
    starts = np.repeat(bnd, counts, axis=0)
    labels = rng.uniform(0.0, u_max, size=len(starts)) if len(starts) else np.zeros(0)
    min_label = np.full(reg.shape, np.inf)
    center = np.asarray(U.center, dtype=np.int64)
    cap = 2 ** 16
    ctr0 = stream.ctr
    while True:
        buf = np.empty((cap if store else 0, 3), dtype=np.int64)
        min_label[:] = np.inf
        acc, hits, nexc, ends, overflow, ctr = _run_cloud(
            stream.key, ctr0, starts, labels, reg.code, reg.lo, center, int(R_esc), store, buf, min_label)
        if not overflow:
            break
        cap = int(ends.max()) + 1
    stream.advance(ctr)
    order = np.argsort(labels[acc], kind="stable")
    idx = np.flatnonzero(acc)[order]
    trajs = None
    if store:
        # ends of accepted candidates delimit their stored segments
        bounds = {}
        last = 0
        for i in range(len(starts)):
            if acc[i]:
                bounds[i] = (last, ends[i])
                last = ends[i]
        trajs = [buf[bounds[i][0]:bounds[i][1]].copy() for i in idx]
    bias = green_constant(3) * _cap_guess(U) / R_esc
    if bias > warn_at:
        warnings.warn(f"truncation bias bound {bias:.1%} exceeds {warn_at:.0%}", RuntimeWarning)
    return ExcursionCloud(u, u_max, D, U, int(R_esc), stream.seed, stream.replica, labels[idx], starts[idx],
                          hits[idx], nexc[idx], min_label, reg.lo, trajs, cap_D)


def _cap_guess(U: BoxSpec) -> float:
    # cap of a cube is close to that of the ball with the same volume,
    # r / c0 for a ball of radius r
    r = U.side * (3 / (4 * math.pi)) ** (1 / 3)
    return r / green_constant(3)


@dataclass
class VacantSample:
    box: BoxSpec
    mask: np.ndarray  # True = vacant, indexed from box corner


def vacant_set(cloud: ExcursionCloud, region=None, u: float | None = None) -> VacantSample:
    """V^u restricted to ``region`` (a box inside U; default U)."""
    b = cloud.U if region is None else _as_box(region)
    if not cloud.U.contains(b):
        raise ValueError("the vacant box must lie inside U")
    level = cloud.u if u is None else u
    c = np.asarray(b.lo) - cloud.grid_lo
    sl = tuple(slice(int(ci), int(ci) + b.side) for ci in c)
    return VacantSample(b, cloud.min_label[sl] > level)


_FULL = np.ones((3, 3, 3), dtype=bool)
_FACES = ndimage.generate_binary_structure(3, 1)


def _structure(adjacency: str):
    return _FULL if adjacency == "Linf" else _FACES


def _sub(v: VacantSample, R: int) -> np.ndarray:
    """The part of the sample on B(0, R)."""
    if not v.box.contains(BoxSpec.ball((0, 0, 0), R)):
        raise ValueError("vacant sample does not cover the requested ball")
    c = -np.asarray(v.box.lo)
    return v.mask[c[0] - R:c[0] + R + 1, c[1] - R:c[1] + R + 1, c[2] - R:c[2] + R + 1]


def _cluster_diameters(mask: np.ndarray, adjacency: str):
    lab, n = ndimage.label(mask, structure=_structure(adjacency))
    if n == 0:
        return lab, np.zeros(0)
    sl = ndimage.find_objects(lab)
    diam = np.array([max(s.stop - s.start - 1 for s in ss) for ss in sl], dtype=float)
    return lab, diam


def exist_event(v: VacantSample, R: int, adjacency: str = "Linf") -> bool:
    """Some vacant cluster in B(0, R) has sup-norm diameter >= R/5."""
    _, diam = _cluster_diameters(_sub(v, R), adjacency)
    return bool(len(diam) and diam.max() >= R / 5)


def unique_event(v_u: VacantSample, v_v: VacantSample, R: int, adjacency: str = "Linf") -> bool:
    """All clusters of V^u in B(0, R) with diameter >= R/10 are connected to
    each other inside V^v in B(0, 2R) (v < u, same field)."""
    lab_u, diam = _cluster_diameters(_sub(v_u, R), adjacency)
    big = np.flatnonzero(diam >= R / 10) + 1
    if len(big) <= 1:
        return True
    outer = _sub(v_v, 2 * R)
    lab_v, _ = ndimage.label(outer, structure=_structure(adjacency))
    inner = lab_v[R:3 * R + 1, R:3 * R + 1, R:3 * R + 1]
    roots = set()
    for b in big:
        vals = np.unique(inner[lab_u == b])
        if np.any(vals == 0):
            raise ValueError("V^u is not contained in V^v; use a lower level for v")
        roots.update(vals.tolist())
    return len(roots) == 1


def _touching_boundary(mask: np.ndarray, adjacency: str) -> np.ndarray:
    lab, _ = ndimage.label(mask, structure=_structure(adjacency))
    faces = np.concatenate([lab[0].ravel(), lab[-1].ravel(), lab[:, 0].ravel(), lab[:, -1].ravel(),
                            lab[:, :, 0].ravel(), lab[:, :, -1].ravel()])
    good = np.unique(faces[faces > 0])
    return np.isin(lab, good) & mask


def theta_fraction(v: VacantSample, R: int, adjacency: str = "Linf") -> float:
    """Fraction of B(0, R/2) in vacant clusters of B(0, R) reaching its boundary."""
    reach = _touching_boundary(_sub(v, R), adjacency)
    h = R // 2
    return float(reach[R - h:R + h + 1, R - h:R + h + 1, R - h:R + h + 1].mean())


def crossing_event(v: VacantSample, R: int, adjacency: str = "Linf") -> bool:
    """B(0, R) is joined to the inner boundary of B(0, 2R) inside V."""
    reach = _touching_boundary(_sub(v, 2 * R), adjacency)
    return bool(reach[R:3 * R + 1, R:3 * R + 1, R:3 * R + 1].any())


def _clouds(u_max: float, radius: int, M: int, seed: int, R_esc: int | None):
    U = BoxSpec.ball((0, 0, 0), radius)
    D = BoxSpec.ball((0, 0, 0), 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in range(M):
            yield sample_cloud(u_max, D, U, R_esc, Stream(seed, r), store=False)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n: int


def estimate_theta(u: float, R: int, M: int, seed: int = 0, R_esc: int | None = None,
                   adjacency: str = "Linf") -> Estimate:
    if R < 8:
        raise ValueError("R must be >= 8")
    if u == 0:
        return Estimate(1.0, 0.0, M)
    vals = np.array([theta_fraction(vacant_set(c, None), R, adjacency)
                     for c in _clouds(u, R, M, seed, R_esc or 4 * R)])
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0, M)


def scan_u_star(u_grid, R_list, M: int, seed: int = 0, kappa: float = 2.0,
                adjacency: str = "Linf") -> dict:
    """Crossing probabilities P[B(0,R) <-> S(0,2R) in V^u] on a grid of u,
    one coupled field per replica, and the u where curves of successive R
    cross."""
    u_grid = np.sort(np.asarray(u_grid, dtype=float))
    table = {}
    for R in R_list:
        hits = np.zeros(len(u_grid))
        for c in _clouds(float(u_grid.max()), 2 * R, M, seed + R, int(kappa * 4 * R)):
            for j, u in enumerate(u_grid):
                hits[j] += crossing_event(vacant_set(c, None, u), R, adjacency)
        table[R] = hits / M
    crossings = []
    Rs = list(R_list)
    for a, b in zip(Rs[:-1], Rs[1:]):
        diff = table[a] - table[b]
        x = np.nan
        for j in range(len(u_grid) - 1):
            if diff[j] == 0:
                x = u_grid[j]
                break
            if diff[j] * diff[j + 1] < 0:
                t = diff[j] / (diff[j] - diff[j + 1])
                x = u_grid[j] + t * (u_grid[j + 1] - u_grid[j])
                break
        crossings.append(float(x))
    return {"u": u_grid.tolist(), "crossing": {int(R): table[R].tolist() for R in Rs},
            "u_star_estimates": crossings}
