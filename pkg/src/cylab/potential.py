"""Potential theory of the simple random walk on Z^D (D = d + 1).

Boxes ``B(x, r)`` are sup-norm balls.  Finite sets are passed as integer
arrays of shape (n, D).  Two backends exist for equilibrium measures: an
exact solve of the absorbing chain on a bounding grid, and Monte Carlo
escape frequencies; the exact one is the oracle for the other.

Escape from the whole lattice is approximated by escape from ``B(0, R)``.
For a walk leaving the ball at ``z`` the chance of still coming back to
``K`` is about ``c0 cap(K) / |z|``, which gives the first-order correction
used by :func:`capacity_free` and :func:`green_function`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, ndimage, sparse
from scipy.sparse import linalg as splinalg
from scipy.special import gamma, ive

from .rng import Stream, draw_uniform

DEFAULT_MAX_SITES = 10 ** 5


# ------------------------------------------------------------ sets

def box(center, radius: int, D: int = 3) -> np.ndarray:
    """Sites of the sup-norm ball B(center, radius)."""
    c = np.broadcast_to(np.asarray(center, dtype=np.int64), (D,))
    r = np.arange(-radius, radius + 1)
    grid = np.stack(np.meshgrid(*([r] * D), indexing="ij"), axis=-1).reshape(-1, D)
    return grid + c


def cube(side: int, D: int = 3, corner=None) -> np.ndarray:
    """Sites of [0, side)^D (shifted to ``corner``)."""
    r = np.arange(side)
    grid = np.stack(np.meshgrid(*([r] * D), indexing="ij"), axis=-1).reshape(-1, D)
    return grid if corner is None else grid + np.asarray(corner, dtype=np.int64)


def _as_sites(K) -> np.ndarray:
    arr = np.asarray(K, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return np.unique(arr, axis=0)


def unit_offsets(D: int) -> np.ndarray:
    out = np.zeros((2 * D, D), dtype=np.int64)
    for i in range(D):
        out[2 * i, i] = 1
        out[2 * i + 1, i] = -1
    return out


def interior_boundary(K) -> np.ndarray:
    """Points of K with at least one L1 neighbour outside K."""
    K = _as_sites(K)
    D = K.shape[1]
    lo = K.min(axis=0) - 1
    shape = tuple(K.max(axis=0) - lo + 2)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((K - lo).T)] = True
    inner = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(D, 1))
    return K[~inner[tuple((K - lo).T)]]


# ------------------------------------------------------------ constants

def green_constant(D: int) -> float:
    """c0 with g(0, x) ~ c0 |x|^(2-D)."""
    if D < 3:
        raise ValueError("the walk is recurrent for D < 3")
    return 0.5 * D * gamma(0.5 * D - 1) / math.pi ** (0.5 * D)


def green_exact(z, D: int = 3) -> float:
    """g(0, z) on Z^D by quadrature of the continuous-time return kernel,
    g(0, z) = int_0^inf prod_i exp(-t/D) I_{z_i}(t/D) dt."""
    z = np.abs(np.broadcast_to(np.asarray(z, dtype=np.int64), (D,)))

    def f(t):
        return float(np.prod(ive(z, t / D)))

    # split to help quad with the t^(-D/2) tail
    a, _ = integrate.quad(f, 0, 50.0, limit=400, epsabs=1e-13, epsrel=1e-12)
    b, _ = integrate.quad(f, 50.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
    return a + b


def return_probability(D: int = 3) -> float:
    return 1.0 - 1.0 / green_exact(np.zeros(D, dtype=np.int64), D)


# ------------------------------------------------------------ grid region

@dataclass
class Region:
    """Bounding grid holding U (free or target) with ``pad`` layers of padding.

    ``code`` is 0 outside U, 1 on U minus K and 2 on K.
    """

    lo: np.ndarray
    shape: tuple
    code: np.ndarray

    @classmethod
    def build(cls, K, U, pad: int = 1) -> "Region":
        K = _as_sites(K)
        U = _as_sites(U)
        D = U.shape[1]
        lo = np.minimum(U.min(axis=0), K.min(axis=0)) - pad
        hi = np.maximum(U.max(axis=0), K.max(axis=0)) + pad
        shape = tuple(int(s) for s in hi - lo + 1)
        code = np.zeros(shape, dtype=np.int8)
        code[tuple((U - lo).T)] = 1
        code[tuple((K - lo).T)] = 2
        return cls(lo, shape, code)

    @property
    def D(self) -> int:
        return len(self.shape)

    def strides(self) -> np.ndarray:
        s = np.ones(self.D, dtype=np.int64)
        for i in range(self.D - 2, -1, -1):
            s[i] = s[i + 1] * self.shape[i + 1]
        return s

    def flat(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.D)
        return (sites - self.lo) @ self.strides()

    def unflat(self, idx) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(idx), self.shape), axis=-1) + self.lo

    def neighbor_flat_offsets(self) -> np.ndarray:
        st = self.strides()
        out = np.empty(2 * self.D, dtype=np.int64)
        out[0::2] = st
        out[1::2] = -st
        return out


def _step_probs(D: int, delta: float) -> np.ndarray:
    p = np.full(2 * D, 1.0 / (2 * D))
    p[2 * D - 2] = (1.0 + delta) / (2 * D)
    p[2 * D - 1] = (1.0 - delta) / (2 * D)
    return p


def _system(reg: Region, delta: float = 0.0):
    """Sparse Q on the free sites plus the one-step free->K matrix."""
    code = reg.code.ravel()
    free = np.flatnonzero(code == 1)
    targ = np.flatnonzero(code == 2)
    fidx = np.full(code.size, -1, dtype=np.int64)
    fidx[free] = np.arange(len(free))
    tidx = np.full(code.size, -1, dtype=np.int64)
    tidx[targ] = np.arange(len(targ))
    probs = _step_probs(reg.D, delta)
    rows, cols, vals, trows, tcols, tvals = [], [], [], [], [], []
    for k, off in enumerate(reg.neighbor_flat_offsets()):
        nb = free + off
        f = fidx[nb]
        m = f >= 0
        rows.append(np.flatnonzero(m))
        cols.append(f[m])
        vals.append(np.full(m.sum(), probs[k]))
        t = tidx[nb]
        m2 = t >= 0
        trows.append(np.flatnonzero(m2))
        tcols.append(t[m2])
        tvals.append(np.full(m2.sum(), probs[k]))
    n, nt = len(free), len(targ)
    Q = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    R = sparse.csr_matrix((np.concatenate(tvals), (np.concatenate(trows), np.concatenate(tcols))), shape=(n, nt))
    return free, targ, Q, R


def _solve(A, b, symmetric: bool, rtol: float = 1e-12):
    if A.shape[0] <= 20000:
        return splinalg.spsolve(A.tocsc(), b)
    if symmetric:
        x, info = splinalg.cg(A, b, rtol=rtol, atol=0.0, maxiter=20000)
    else:
        x, info = splinalg.bicgstab(A, b, rtol=rtol, atol=0.0, maxiter=20000)
    if info != 0:
        raise RuntimeError(f"iterative solve did not converge (info={info})")
    return x


def hitting_probability(reg: Region, delta: float = 0.0) -> np.ndarray:
    """h = P[H_K < T_U] on the whole grid (1 on K, 0 outside U)."""
    free, targ, Q, R = _system(reg, delta)
    A = sparse.identity(Q.shape[0], format="csr") - Q
    h = _solve(A, np.asarray(R.sum(axis=1)).ravel(), symmetric=(delta == 0.0))
    out = np.zeros(reg.code.size)
    out[free] = h
    out[targ] = 1.0
    return out.reshape(reg.shape)


# ------------------------------------------------------------ estimates

@dataclass
class EquilibriumEstimate:
    support: np.ndarray
    weights: np.ndarray
    se: np.ndarray
    total: float
    total_se: float
    method: str
    corrected_total: float | None = None
    extra: dict = field(default_factory=dict)

    def normalized(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in s): float(w) for s, w in zip(self.support, self.weights)}


def _exact_equilibrium(K, U, max_sites: int, pad: int = 1) -> EquilibriumEstimate:
    Ks = _as_sites(K)
    Us = _as_sites(U)
    if len(Us) > max_sites:
        raise ValueError(f"|U| = {len(Us)} exceeds the exact-solve cap {max_sites}")
    reg = Region.build(Ks, Us, pad)
    h = hitting_probability(reg).ravel()
    kf = reg.flat(Ks)
    esc = np.zeros(len(Ks))
    for off in reg.neighbor_flat_offsets():
        esc += 1.0 - h[kf + off]
    e = esc / (2 * reg.D)
    e[np.abs(e) < 1e-14] = 0.0
    return EquilibriumEstimate(Ks, e, np.zeros_like(e), float(e.sum()), 0.0, "exact-linear-solve",
                               extra={"region": reg, "h": h})


@numba.njit(cache=True)
def _escape_grid(key, ctr, starts, M, code, offs):
    n_dir = offs.shape[0]
    out = np.zeros(starts.shape[0], dtype=np.int64)
    for i in range(starts.shape[0]):
        for m in range(M):
            pos = starts[i]
            while True:
                k = int(draw_uniform(key, ctr) * n_dir)
                ctr += np.uint64(1)
                pos += offs[k]
                c = code[pos]
                if c == 0:
                    out[i] += 1
                    break
                if c == 2:
                    break
    return out, ctr


def _mc_equilibrium(K, U, M: int, stream: Stream) -> EquilibriumEstimate:
    Ks = _as_sites(K)
    reg = Region.build(Ks, _as_sites(U))
    bnd = interior_boundary(Ks)
    counts, ctr = _escape_grid(stream.key, stream.ctr, reg.flat(bnd), int(M),
                               reg.code.ravel(), reg.neighbor_flat_offsets())
    stream.advance(ctr)
    p = counts / M
    se = np.sqrt(p * (1 - p) / M)
    # interior points of K cannot escape
    weights = np.zeros(len(Ks))
    ses = np.zeros(len(Ks))
    pos = {tuple(s): i for i, s in enumerate(Ks.tolist())}
    for b, pv, sv in zip(bnd.tolist(), p, se):
        weights[pos[tuple(b)]] = pv
        ses[pos[tuple(b)]] = sv
    return EquilibriumEstimate(Ks, weights, ses, float(weights.sum()),
                               float(np.sqrt((ses ** 2).sum())), "monte-carlo")


def equilibrium_measure(K, U, method: str = "exact", budget: int = 10 ** 4,
                        stream: Stream | None = None, max_sites: int = DEFAULT_MAX_SITES) -> EquilibriumEstimate:
    """e_{K,U}(x) = P_x[return to K after time 0 happens after leaving U]."""
    Ks = _as_sites(K)
    Us = _as_sites(U)
    uset = {tuple(p) for p in Us.tolist()}
    if any(tuple(p) not in uset for p in Ks.tolist()):
        raise ValueError("K must be a subset of U")
    if method == "exact":
        return _exact_equilibrium(Ks, Us, max_sites)
    if method in ("mc", "monte-carlo"):
        return _mc_equilibrium(Ks, Us, budget, stream or Stream(0))
    raise ValueError(f"unknown method {method!r}")


def capacity_exact_free(K, R: int, max_sites: int = 3 * 10 ** 6) -> tuple[float, float]:
    """cap_U(K) for U = B(0, R) and its first-order free-space correction.

    The correction solves one more system for E_x[1/|X_T|; T_U < H_K] so the
    exit-point average is exact rather than approximated by 1/R.
    """
    Ks = _as_sites(K)
    D = Ks.shape[1]
    U = box(np.zeros(D, dtype=np.int64), R, D)
    est = _exact_equilibrium(Ks, U, max_sites)
    reg = est.extra["region"]
    free, targ, Q, _ = _system(reg)
    # boundary values 1/|z| for one-step exits from free sites
    code = reg.code.ravel()
    rhs = np.zeros(len(free))
    probs = 1.0 / (2 * D)
    for off in reg.neighbor_flat_offsets():
        nb = free + off
        out = code[nb] == 0
        if out.any():
            z = reg.unflat(nb[out]).astype(float)
            rhs[out] += probs / np.linalg.norm(z, axis=1)
    A = sparse.identity(Q.shape[0], format="csr") - Q
    f = np.zeros(code.size)
    f[free] = _solve(A, rhs, symmetric=True)
    kf = reg.flat(Ks)
    mean_inv = 0.0
    for off in reg.neighbor_flat_offsets():
        nb = kf + off
        ok = code[nb] == 1
        mean_inv += probs * f[nb][ok].sum()
        out = code[nb] == 0
        if out.any():
            mean_inv += probs * (1.0 / np.linalg.norm(reg.unflat(nb[out]).astype(float), axis=1)).sum()
    c0 = green_constant(D)
    cap_u = est.total
    return cap_u, cap_u / (1.0 + c0 * mean_inv)


@numba.njit(cache=True)
def _escape_free(key, ctr, starts, M, kmask, klo, center, R):
    """Walks from each start until they return to K (mask on a bounding
    grid) or leave the sup-ball B(center, R).  Returns escape counts and
    the sum of 1/|exit - center| over escapes."""
    n, D = starts.shape
    esc = np.zeros(n, dtype=np.int64)
    inv = np.zeros(n)
    kshape = kmask.shape
    pos = np.empty(D, dtype=np.int64)
    for i in range(n):
        for m in range(M):
            for a in range(D):
                pos[a] = starts[i, a]
            while True:
                k = int(draw_uniform(key, ctr) * 2 * D)
                ctr += np.uint64(1)
                a = k >> 1
                pos[a] += 1 if (k & 1) == 0 else -1
                if abs(pos[a] - center[a]) > R:
                    esc[i] += 1
                    s = 0.0
                    for b in range(D):
                        s += (pos[b] - center[b]) ** 2
                    inv[i] += 1.0 / math.sqrt(s)
                    break
                inside = True
                for b in range(D):
                    q = pos[b] - klo[b]
                    if q < 0 or q >= kshape[b]:
                        inside = False
                        break
                if inside:
                    if D == 3:
                        hit = kmask[pos[0] - klo[0], pos[1] - klo[1], pos[2] - klo[2]]
                    else:
                        idx = 0
                        for b in range(D):
                            idx = idx * kshape[b] + pos[b] - klo[b]
                        hit = kmask.ravel()[idx]
                    if hit:
                        break
    return esc, inv, ctr


def capacity_free(K, R_esc: int, M: int, stream: Stream, center=None,
                  warn_at: float = 0.02) -> EquilibriumEstimate:
    """cap(K) in Z^D from escape frequencies out of B(center, R_esc).

    ``total`` is the raw estimate (biased upward by about c0 cap / R_esc
    relative); ``corrected_total`` removes the first-order bias using the
    observed exit radii.
    """
    Ks = _as_sites(K)
    D = Ks.shape[1]
    if center is None:
        center = np.round(Ks.mean(axis=0)).astype(np.int64)
    center = np.asarray(center, dtype=np.int64)
    if np.abs(Ks - center).max() >= R_esc:
        raise ValueError("R_esc must exceed the radius of K")
    klo = Ks.min(axis=0)
    kmask = np.zeros(tuple(Ks.max(axis=0) - klo + 1), dtype=np.bool_)
    kmask[tuple((Ks - klo).T)] = True
    bnd = interior_boundary(Ks)
    esc, inv, ctr = _escape_free(stream.key, stream.ctr, bnd, int(M), kmask, klo, center, int(R_esc))
    stream.advance(ctr)
    p = esc / M
    se = np.sqrt(p * (1 - p) / M)
    raw = float(p.sum())
    c0 = green_constant(D)
    mean_inv = float(inv.sum()) / max(float(esc.sum()), 1.0)
    corrected = raw / (1.0 + c0 * raw * mean_inv)
    bias = c0 * raw * mean_inv
    if bias > warn_at:
        warnings.warn(f"escape-radius bias about {bias:.1%} of the estimate", RuntimeWarning)
    weights = np.zeros(len(Ks))
    ses = np.zeros(len(Ks))
    pos = {tuple(s): i for i, s in enumerate(Ks.tolist())}
    for b, pv, sv in zip(bnd.tolist(), p, se):
        weights[pos[tuple(b)]] = pv
        ses[pos[tuple(b)]] = sv
    return EquilibriumEstimate(Ks, weights, ses, raw, float(np.sqrt((ses ** 2).sum())), "monte-carlo",
                               corrected_total=corrected,
                               extra={"R_esc": R_esc, "relative_bias": bias})


@numba.njit(cache=True)
def _return_walks(key, ctr, M, R, D):
    returns = 0
    inv = 0.0
    pos = np.zeros(D, dtype=np.int64)
    for m in range(M):
        pos[:] = 0
        while True:
            k = int(draw_uniform(key, ctr) * 2 * D)
            ctr += np.uint64(1)
            a = k >> 1
            pos[a] += 1 if (k & 1) == 0 else -1
            if abs(pos[a]) > R:
                s = 0.0
                for b in range(D):
                    s += pos[b] * pos[b]
                inv += 1.0 / math.sqrt(s)
                break
            zero = True
            for b in range(D):
                if pos[b] != 0:
                    zero = False
                    break
            if zero:
                returns += 1
                break
    return returns, inv, ctr


@dataclass(frozen=True)
class ReturnEstimate:
    p_return: float
    se: float
    p_return_corrected: float
    walks: int
    R: int

    @property
    def capacity(self) -> float:
        return 1.0 - self.p_return_corrected


def return_frequency_mc(R: int, M: int, stream: Stream, D: int = 3) -> ReturnEstimate:
    """Fraction of walks from 0 that come back to 0 before leaving B(0, R).

    The corrected value adds the chance c0 cap({0}) / |exit| of a late return.
    """
    ret, inv, ctr = _return_walks(stream.key, stream.ctr, int(M), int(R), int(D))
    stream.advance(ctr)
    p = ret / M
    se = math.sqrt(p * (1 - p) / M)
    c0 = green_constant(D)
    # a late return needs escape first; one correction step is enough
    esc = M - ret
    late = c0 * (1 - p) * (inv / max(esc, 1))
    return ReturnEstimate(p, se, p + (1 - p) * late / (1 + late), M, R)


@dataclass
class GreenEstimate:
    x: np.ndarray
    targets: np.ndarray
    g: np.ndarray
    se: np.ndarray
    g_corrected: np.ndarray
    R: int
    cov: np.ndarray = field(repr=False, default=None)

    def rows(self):
        for y, g, s in zip(self.targets, self.g, self.se):
            dx = y - self.x
            yield tuple(int(c) for c in dx) + (float(g), float(s))

    def ratio(self, i: int, j: int) -> tuple[float, float]:
        """g_i / g_j with a delta-method SE."""
        a, b = self.g[i], self.g[j]
        r = a / b
        c = self.cov
        var = r * r * (c[i, i] / a ** 2 + c[j, j] / b ** 2 - 2 * c[i, j] / (a * b))
        return r, math.sqrt(max(var, 0.0))


@numba.njit(cache=True)
def _green_walks(key, ctr, x, targets, M, R):
    T, D = targets.shape
    sums = np.zeros(T)
    cross = np.zeros((T, T))
    corr = np.zeros(T)
    visits = np.zeros(T)
    pos = np.empty(D, dtype=np.int64)
    for m in range(M):
        for a in range(D):
            pos[a] = x[a]
        visits[:] = 0.0
        while True:
            for t in range(T):
                same = True
                for b in range(D):
                    if pos[b] != targets[t, b]:
                        same = False
                        break
                if same:
                    visits[t] += 1.0
            k = int(draw_uniform(key, ctr) * 2 * D)
            ctr += np.uint64(1)
            a = k >> 1
            pos[a] += 1 if (k & 1) == 0 else -1
            if abs(pos[a]) > R:
                for t in range(T):
                    s = 0.0
                    for b in range(D):
                        s += (pos[b] - targets[t, b]) ** 2
                    corr[t] += 1.0 / math.sqrt(s)
                break
        for t in range(T):
            sums[t] += visits[t]
            for t2 in range(T):
                cross[t, t2] += visits[t] * visits[t2]
    return sums, cross, corr, ctr


def green_function(x, y, R_esc: int, M: int, stream: Stream) -> GreenEstimate:
    """Expected visits to each target in ``y`` by a walk from ``x`` killed on
    leaving B(0, R_esc).  ``g_corrected`` adds c0 E[1/|X_T - y|], the
    first-order contribution of visits after the exit."""
    x = np.asarray(x, dtype=np.int64)
    targets = np.asarray(y, dtype=np.int64).reshape(-1, len(x))
    sums, cross, corr, ctr = _green_walks(stream.key, stream.ctr, x, targets, int(M), int(R_esc))
    stream.advance(ctr)
    mean = sums / M
    cov = (cross / M - np.outer(mean, mean)) / M
    se = np.sqrt(np.diag(cov))
    c0 = green_constant(len(x))
    return GreenEstimate(x, targets, mean, se, mean + c0 * corr / M, R_esc, cov)


def energy(K, weights, g_of=green_exact) -> float:
    """sum_{x,y} nu(x) nu(y) g(x - y) for a measure nu on K."""
    Ks = _as_sites(K)
    w = np.asarray(weights, dtype=float)
    cache: dict = {}
    total = 0.0
    for i in range(len(Ks)):
        diff = np.abs(Ks - Ks[i])
        for j in range(len(Ks)):
            key = tuple(sorted(diff[j].tolist()))
            if key not in cache:
                cache[key] = g_of(np.array(key))
            total += w[i] * w[j] * cache[key]
    return total


# ------------------------------------------------------------ hitting distribution

def entrance_law_exact(A, U, x, delta: float = 0.0) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact P_x[X_{H_A} = y | H_A < T_U] for x outside U (typically on its
    outer boundary).  Walks that step outside U after time 0 are killed.

    Returns ``(sites of A, law, P_x[H_A < T_U])``.  One transposed solve:
    phi^T (I - Q) = b^T with b the first-step distribution from x.
    """
    As = _as_sites(A)
    reg = Region.build(As, _as_sites(U))
    free, targ, Q, R = _system(reg, delta)
    x = np.asarray(x, dtype=np.int64)
    probs = _step_probs(reg.D, delta)
    code = reg.code.ravel()
    fpos = np.full(code.size, -1, dtype=np.int64)
    fpos[free] = np.arange(len(free))
    tpos = np.full(code.size, -1, dtype=np.int64)
    tpos[targ] = np.arange(len(targ))
    b = np.zeros(len(free))
    direct = np.zeros(len(targ))
    offs = unit_offsets(reg.D)
    for k, o in enumerate(offs):
        z = x + o
        if np.any(z < reg.lo) or np.any(z >= reg.lo + np.array(reg.shape)):
            continue
        zf = int(reg.flat(z)[0])
        if fpos[zf] >= 0:
            b[fpos[zf]] += probs[k]
        elif tpos[zf] >= 0:
            direct[tpos[zf]] += probs[k]
    A_T = (sparse.identity(Q.shape[0], format="csr") - Q).T.tocsr()
    phi = _solve(A_T, b, symmetric=(delta == 0.0))
    law = R.T @ phi + direct
    total = float(law.sum())
    sites = reg.unflat(targ)
    return sites, law / total, total


def normalized_equilibrium(A, U, max_sites: int = 3 * 10 ** 6) -> tuple[np.ndarray, np.ndarray]:
    """Exact e_{A,U} normalized to a probability on A, with its sites."""
    est = _exact_equilibrium(A, U, max_sites)
    return est.support, est.weights / est.total


def _align(sites_a, vals_a, sites_b) -> np.ndarray:
    idx = {tuple(s): i for i, s in enumerate(np.asarray(sites_a).tolist())}
    return np.array([vals_a[idx[tuple(s)]] for s in np.asarray(sites_b).tolist()])


@numba.njit(cache=True)
def _h_walks(key, ctr, start, n_walks, h, code, offs, up_k, down_k):
    """Doob transform of the killed walk by h = P[H_A < T_U].

    Returns the flat index of the entrance point and the up/down/length
    counts of each walk (used for likelihood ratios to the drifted walk).
    """
    n_dir = offs.shape[0]
    hit = np.empty(n_walks, dtype=np.int64)
    ups = np.zeros(n_walks, dtype=np.int64)
    downs = np.zeros(n_walks, dtype=np.int64)
    lens = np.zeros(n_walks, dtype=np.int64)
    w = np.empty(n_dir)
    for i in range(n_walks):
        pos = start
        while True:
            tot = 0.0
            for k in range(n_dir):
                tot += h[pos + offs[k]]
                w[k] = tot
            v = draw_uniform(key, ctr) * tot
            ctr += np.uint64(1)
            k = 0
            while k < n_dir - 1 and w[k] <= v:
                k += 1
            pos += offs[k]
            lens[i] += 1
            if k == up_k:
                ups[i] += 1
            elif k == down_k:
                downs[i] += 1
            if code[pos] == 2:
                hit[i] = pos
                break
    return hit, ups, downs, lens, ctr


@dataclass
class HittingReport:
    sites: np.ndarray
    e_bar: np.ndarray
    exact_law: np.ndarray
    empirical: np.ndarray
    hits: int
    exact_max_dev: float
    empirical_max_dev: float
    empirical_max_dev_se: float
    eta: float
    p_hit: float
    delta: float
    ess: float

    @property
    def passes(self) -> bool:
        return self.empirical_max_dev <= self.eta / 10


def _max_rel_dev(law, ebar) -> float:
    return float(np.max(np.abs(law / ebar - 1.0)))


class HittingLayout:
    """A = target set in B(0, L), U = B(0, K L), start x on the outer
    boundary of U.  Holds the solves shared by all runs on this layout."""

    def __init__(self, A, L: int, K: int, x=None, max_sites: int = 3 * 10 ** 6):
        As = _as_sites(A)
        D = As.shape[1]
        if np.abs(As).max() > L:
            raise ValueError("A must lie in B(0, L)")
        R = K * L
        U = box(np.zeros(D, dtype=np.int64), R, D)
        if len(U) > max_sites:
            raise ValueError(f"|U| = {len(U)} exceeds {max_sites}")
        if x is None:
            x = np.zeros(D, dtype=np.int64)
            x[0] = R + 1
        x = np.asarray(x, dtype=np.int64)
        if np.abs(x).max() != R + 1:
            raise ValueError("x must lie on the outer boundary of B(0, K L)")
        self.A, self.U, self.L, self.K, self.x, self.D = As, U, L, K, x, D
        # x sits on the outer boundary of U, so its neighbours need a second layer
        est = _exact_equilibrium(As, U, max_sites, pad=2)
        self.reg = est.extra["region"]
        self.h = est.extra["h"]
        self.sites = est.support
        self.ebar = est.weights / est.total
        self.boundary = self.ebar > 0
        self._laws: dict = {}

    def exact_law(self, delta: float = 0.0) -> tuple[np.ndarray, float]:
        if delta not in self._laws:
            ts, law, p = entrance_law_exact(self.A, self.U, self.x, delta)
            self._laws[delta] = (_align(ts, law, self.sites), p)
        return self._laws[delta]

    def sample(self, M: int, stream: Stream, delta: float = 0.0):
        """M walks of the h-transformed simple walk; returns the (weighted)
        empirical entrance law and the effective sample size."""
        reg = self.reg
        xf = int(reg.flat(self.x)[0])
        hit, ups, downs, lens, ctr = _h_walks(stream.key, stream.ctr, xf, int(M), self.h, reg.code.ravel(),
                                              reg.neighbor_flat_offsets(), 2 * self.D - 2, 2 * self.D - 1)
        stream.advance(ctr)
        order = np.argsort(reg.flat(self.sites))
        flat_sorted = reg.flat(self.sites)[order]
        hit_idx = order[np.searchsorted(flat_sorted, hit)]
        if delta > 0:
            logw = ups * math.log1p(delta) + downs * math.log1p(-delta)
            w = np.exp(logw - logw.max())
        else:
            w = np.ones(len(hit_idx))
        mass = np.bincount(hit_idx, weights=w, minlength=len(self.sites))
        ess = float(w.sum() ** 2 / (w ** 2).sum())
        return mass / mass.sum(), ess, int(len(hit_idx)), lens


def hitting_distribution_check(A, L: int, K: int, x=None, eta: float = 0.5, M: int = 10 ** 6,
                               stream: Stream | None = None, delta: float = 0.0, n_boot: int = 200,
                               layout: HittingLayout | None = None,
                               max_sites: int = 3 * 10 ** 6) -> HittingReport:
    """Entrance law into A from x on the outer boundary of U = B(0, K L),
    conditioned on reaching A before coming back to that boundary, compared
    with the normalized equilibrium measure of A.

    Conditioned walks come from the Doob transform of the simple walk, so
    every one of the ``M`` walks hits A.  With ``delta > 0`` the walks are
    reweighted by the drifted/simple likelihood ratio, which targets the
    drifted conditional law exactly.  The exact law (one sparse solve) is
    reported alongside.
    """
    stream = stream or Stream(0)
    lay = layout or HittingLayout(A, L, K, x, max_sites)
    law, p_hit = lay.exact_law(delta)
    emp, ess, hits, _ = lay.sample(M, stream, delta)
    b = lay.boundary
    ebar = lay.ebar
    dev = _max_rel_dev(emp[b], ebar[b])
    rng = stream.numpy(purpose=7)
    n_eff = max(int(round(ess)), 1)
    boots = np.array([_max_rel_dev(rng.multinomial(n_eff, emp)[b] / n_eff, ebar[b]) for _ in range(n_boot)])
    return HittingReport(lay.sites[b], ebar[b], law[b], emp[b], hits, _max_rel_dev(law[b], ebar[b]),
                         dev, float(boots.std(ddof=1)), eta, p_hit, delta, ess)
