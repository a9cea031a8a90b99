"""Counter-based random streams keyed by (seed, replica).

Every replica owns a 64-bit key derived from ``SeedSequence(seed,
spawn_key=(replica,))``.  Draw number ``c`` of a replica is the SplitMix64
finaliser applied to ``key + c * GOLDEN``, so a value depends only on
(seed, replica, counter) and never on execution order.  The compiled
kernels carry the counter explicitly and hand it back when they return.

Python-side draws that are not on a hot path (Poisson counts, labels) go
through :meth:`Stream.numpy`, a Philox generator keyed by the same replica
key plus a purpose tag.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(inline="always", cache=True)
def draw_u64(key, ctr):
    """Raw 64-bit output for counter ``ctr``."""
    return mix64(key + ctr * GOLDEN)


@numba.njit(inline="always", cache=True)
def draw_uniform(key, ctr):
    """Uniform double in [0, 1) with 53 random bits."""
    return (mix64(key + ctr * GOLDEN) >> _S11) * _INV53


def replica_key(seed: int, replica: int) -> np.uint64:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica),))
    return ss.generate_state(1, dtype=np.uint64)[0]


@dataclass
class Stream:
    """Per-replica random stream.

    ``counter`` is advanced by every kernel that consumes draws, so
    consecutive calls continue the same stream instead of replaying it.
    """

    seed: int
    replica: int = 0
    counter: int = 0

    @property
    def key(self) -> np.uint64:
        return replica_key(self.seed, self.replica)

    @property
    def ctr(self) -> np.uint64:
        return np.uint64(self.counter)

    def advance(self, new_counter) -> None:
        self.counter = int(new_counter)

    def numpy(self, purpose: int = 0) -> np.random.Generator:
        # distinct purpose tags give independent Philox streams for the same replica
        return np.random.Generator(
            np.random.Philox(key=np.array([self.key, np.uint64(purpose)], dtype=np.uint64))
        )

    def spawn(self, sub: int) -> "Stream":
        """Child stream, e.g. for nested replicas inside one replica."""
        child_seed = int(np.random.SeedSequence([int(self.seed), int(self.replica), int(sub)])
                         .generate_state(1, dtype=np.uint64)[0])
        return Stream(child_seed, 0, 0)

    def fingerprint(self) -> str:
        h = hashlib.sha256(f"{self.seed}:{self.replica}:{int(self.key)}".encode())
        return h.hexdigest()[:16]


def uniforms(stream: Stream, n: int) -> np.ndarray:
    """Draw ``n`` uniforms from the counter stream (advances it)."""
    out = _fill_uniform(stream.key, stream.ctr, n)
    stream.advance(stream.counter + n)
    return out


@numba.njit(cache=True)
def _fill_uniform(key, ctr, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = draw_uniform(key, ctr + np.uint64(i))
    return out
