"""Discrete cylinder (Z/NZ)^d x Z and the full lattice Z^(d+1).

Coordinates are a tuple of ``d`` torus (or horizontal) coordinates plus one
height.  Heights are never wrapped.  Two adjacency relations are supported:
``L1`` (the 2(d+1) unit moves, used for walk steps) and ``LINF`` (all
3^(d+1) - 1 king moves, used for complement connectivity).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np


class Space(str, Enum):
    CYLINDER = "cylinder"
    FULL = "full-lattice"


class Adjacency(str, Enum):
    L1 = "L1"
    LINF = "Linf"


@dataclass(frozen=True)
class Geometry:
    N: int
    d: int
    space: Space = Space.CYLINDER
    adjacency: Adjacency = Adjacency.L1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "space", Space(self.space))
        object.__setattr__(self, "adjacency", Adjacency(self.adjacency))

    @property
    def dim(self) -> int:
        return self.d + 1

    @property
    def torus_size(self) -> int:
        return self.N ** self.d

    def offsets(self, adjacency: Adjacency | None = None) -> np.ndarray:
        return neighbor_offsets(self.d + 1, Adjacency(adjacency or self.adjacency))

    def with_adjacency(self, adjacency: Adjacency | str) -> "Geometry":
        return Geometry(self.N, self.d, self.space, Adjacency(adjacency))


@dataclass(frozen=True)
class Site:
    torus: tuple[int, ...]
    height: int

    @classmethod
    def make(cls, g: Geometry, torus, height: int) -> "Site":
        t = tuple(int(c) for c in torus)
        if len(t) != g.d:
            raise ValueError(f"expected {g.d} torus coordinates, got {len(t)}")
        if g.space is Space.CYLINDER:
            t = tuple(c % g.N for c in t)
        return cls(t, int(height))

    @classmethod
    def origin(cls, g: Geometry) -> "Site":
        return cls((0,) * g.d, 0)

    def as_array(self) -> np.ndarray:
        return np.array(self.torus + (self.height,), dtype=np.int64)


@lru_cache(maxsize=None)
def _offsets_cached(dim: int, adjacency: Adjacency) -> np.ndarray:
    units = []
    for i in range(dim):
        for sgn in (1, -1):
            e = [0] * dim
            e[i] = sgn
            units.append(tuple(e))
    if adjacency is Adjacency.L1:
        out = units
    else:
        diag = [o for o in itertools.product((-1, 0, 1), repeat=dim)
                if sum(c != 0 for c in o) >= 2]
        out = units + sorted(diag)
    arr = np.array(out, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def neighbor_offsets(dim: int, adjacency: Adjacency = Adjacency.L1) -> np.ndarray:
    """Offsets in canonical order: +e1, -e1, ..., +e_dim, -e_dim, then
    (Linf only) the remaining king moves in lexicographic order."""
    return _offsets_cached(dim, Adjacency(adjacency))


def neighbors(g: Geometry, s: Site) -> list[Site]:
    """All sites at adjacency distance 1 from ``s``.

    On cylinders with N <= 2 distinct offsets can land on the same site;
    the list is offset-indexed and keeps such repeats.
    """
    base = s.as_array()
    return [Site.make(g, (base[:-1] + o[:-1]).tolist(), int(base[-1] + o[-1]))
            for o in g.offsets()]


def project(s: Site) -> tuple[tuple[int, ...], int]:
    return s.torus, s.height


# Flat torus indices: coordinate i carries weight N**i.

def torus_index(torus, N: int) -> int:
    idx = 0
    for i, c in enumerate(torus):
        idx += (int(c) % N) * N ** i
    return idx


def torus_coords(idx: int, N: int, d: int) -> tuple[int, ...]:
    out = []
    for _ in range(d):
        out.append(idx % N)
        idx //= N
    return tuple(out)


@lru_cache(maxsize=None)
def torus_shift_table(N: int, d: int, adjacency: Adjacency = Adjacency.L1) -> tuple[np.ndarray, np.ndarray]:
    """For every flat torus index and every offset of the (d+1)-dim adjacency,
    the destination torus index and the height change.

    Returns ``(dest, dh)`` with ``dest.shape == (N**d, n_offsets)``.
    """
    offs = neighbor_offsets(d + 1, Adjacency(adjacency))
    n = N ** d
    coords = np.array([torus_coords(i, N, d) for i in range(n)], dtype=np.int64).reshape(n, d)
    weights = N ** np.arange(d, dtype=np.int64)
    dest = np.empty((n, len(offs)), dtype=np.int64)
    for k, o in enumerate(offs):
        dest[:, k] = ((coords + o[:-1]) % N) @ weights
    dh = offs[:, -1].copy()
    dest.setflags(write=False)
    dh.setflags(write=False)
    return dest, dh
