"""Acceptance suite: one test per criterion at the stated tolerances.

Each test records a pass/fail line (printed in the terminal summary) and
then asserts.  Criteria that are not attainable at desk scale fail here on
purpose; see the decision ledger for the analysis.
"""
import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from cylab.disconnection import brute_force_T_N, detect_T_N
from cylab.interlacements import BoxSpec, killed_capacity, sample_cloud, vacant_set
from cylab.lattice import Geometry, Site
from cylab.potential import (HittingLayout, box, capacity_exact_free, capacity_free, cube,
                             equilibrium_measure, green_exact, green_function, hitting_distribution_check,
                             return_frequency_mc)
from cylab.records import conditioned_transition_counts, one_d_records
from cylab.rng import Stream
from cylab.slt import SltInstance, band_kernels, check_inclusions, run_slt
from cylab.walkers import (WalkConfig, conditioned_step_kernel, local_time_at_start, rn_log_bounds,
                           rn_ratio, sample_path, step_kernel, stepwise_log_ratio)
from cylab.zeta import laplace_zeta

RESULTS: dict[int, tuple[bool, str]] = {}


def report(k: int, ok: bool, detail: str) -> None:
    RESULTS[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ------------------------------------------------------------ 1

def test_c01_laplace_identity():
    t0 = time.perf_counter()
    thetas = np.linspace(0.05, 10.0, 20)
    err = max(abs(laplace_zeta(u, th) - laplace_zeta(1.0, u * th))
              for u in (0.5, 1.0, 2.0, 5.0) for th in thetas)
    err0 = max(abs(laplace_zeta(1.0, th) - 1.0) for th in (0.0, 1e-9, 1e-7))
    wall = time.perf_counter() - t0
    report(1, err <= 1e-12 and err0 <= 1e-10 and wall < 1.0,
           f"scaling err {err:.1e}, theta->0 err {err0:.1e}, {wall:.3f}s")


# ------------------------------------------------------------ 2

def test_c02_invariance_principle():
    N, reps = 2000, 20000
    t0 = time.perf_counter()
    times, _ = one_d_records(1.0, N, 0.0, seed=2024, replicas=range(reps))
    s = times / float(N) ** 2
    wall = time.perf_counter() - t0
    parts, ok = [], True
    for th in (0.5, 1.0, 2.0):
        x = np.exp(-0.5 * th * th * s)
        z = (x.mean() - laplace_zeta(1.0, th)) / (x.std(ddof=1) / math.sqrt(reps))
        ok &= abs(z) <= 3
        parts.append(f"theta={th}: z={z:+.1f}")
    report(2, ok, ", ".join(parts) + f" ({wall:.0f}s)")


# ------------------------------------------------------------ 3

def test_c03_geometric_tail():
    delta, n = 0.2, 10 ** 6
    lt = local_time_at_start(delta, n, seed=3)
    worst = 0.0
    for ell in range(1, 11):
        p = (1 - delta) ** (ell - 1)
        ph = float(np.mean(lt >= ell))
        se = math.sqrt(max(p * (1 - p), 1e-300) / n)
        worst = max(worst, abs(ph - p) / se if se > 0 else (0.0 if ph == p else math.inf))
    report(3, worst <= 3, f"max |z| over l=1..10: {worst:.2f}")


# ------------------------------------------------------------ 4

def test_c04_kernels_and_rn():
    worst_sum = 0.0
    for N, d in ((3, 1), (4, 2), (5, 3)):
        for delta in (0.0, 0.1, 0.5, 0.9):
            cfg = WalkConfig(Geometry(N, d), delta=delta)
            ks = [step_kernel(cfg)] + [conditioned_step_kernel(cfg, Site((0,) * d, h), ph)
                                       for h in (-3, 0, 3) for ph in ("before", "after")]
            worst_sum = max(worst_sum, max(abs(float(np.sum(k)) - 1.0) for k in ks))
    g = Geometry(3, 2)
    rng = np.random.default_rng(4)
    worst_rn, bracket = 0.0, True
    base = step_kernel(WalkConfig(g, delta=0.0))
    for r in range(10 ** 4):
        delta = float(rng.uniform(0, 0.9))
        p = sample_path(WalkConfig(g, delta=delta), int(rng.integers(1, 200)), Stream(4, r))
        lr = rn_ratio(p, delta)
        ref = stepwise_log_ratio(p.steps, step_kernel(WalkConfig(g, delta=delta)), base)
        worst_rn = max(worst_rn, abs(lr - ref))
        lo, hi = rn_log_bounds(p.stats(), delta)
        bracket &= lo - 1e-12 <= lr <= hi + 1e-12
    report(4, worst_sum <= 1e-12 and worst_rn <= 1e-12 and bracket,
           f"kernel sum err {worst_sum:.1e}, rn err {worst_rn:.1e}, bracket held: {bracket}")


# ------------------------------------------------------------ 5

def test_c05_conditioned_walk_oracle():
    cfg = WalkConfig(Geometry(3, 2), delta=0.3)
    acc, counts = conditioned_transition_counts(cfg, 2, 160000, seed=5)
    worst = 0.0
    for cls, h in ((0, 2), (1, -2), (2, 0)):
        row = counts[cls]
        n = row.sum()
        if n == 0:
            continue
        k = np.asarray(conditioned_step_kernel(cfg, Site((0, 0), h)), dtype=float)
        se = np.sqrt(k * (1 - k) / n)
        worst = max(worst, float(np.max(np.abs(row / n - k) / se)))
    report(5, acc >= 10 ** 5 and worst <= 3, f"{acc} accepted paths, max |z| {worst:.2f} over 18 cells")


# ------------------------------------------------------------ 6

def test_c06_capacity_oracles():
    M, R = 200000, 60
    free = capacity_free(np.zeros((1, 3), dtype=np.int64), R, M, Stream(6, 0))
    rf = return_frequency_mc(R, M, Stream(6, 1))
    rel = abs(free.corrected_total - rf.capacity) / rf.capacity
    caps = {L: capacity_exact_free(cube(L), 3 * L)[1] for L in (4, 8, 16)}
    r2 = [caps[L] / L ** 2 for L in caps]
    r1 = [caps[L] / L for L in caps]
    var2 = max(r2) / min(r2) - 1
    var1 = max(r1) / min(r1) - 1
    K, U = cube(2), box((0, 0, 0), 4)
    ex = equilibrium_measure(K, U)
    mc = equilibrium_measure(K, U, "mc", budget=50000, stream=Stream(6, 2))
    zmax = float(np.max(np.abs(ex.weights - mc.weights) / np.maximum(mc.se, 1e-300)))
    ok = rel <= 0.01 and var2 <= 0.25 and zmax <= 3
    report(6, ok, f"cap(0) free {free.corrected_total:.4f} vs return {rf.capacity:.4f} ({rel:.2%}); "
                  f"cap/L^2 variation {var2:.0%} (cap/L {var1:.0%}); equilibrium max |z| {zmax:.2f}")


# ------------------------------------------------------------ 7

def test_c07_green_decay():
    e = np.array([1, 0, 0])
    ratio = green_exact(8 * e) / green_exact(4 * e)
    g = green_function(np.zeros(3, dtype=np.int64), [4 * e, 8 * e], 80, 40000, Stream(7))
    mc = g.g_corrected[1] / g.g_corrected[0]
    report(7, abs(ratio - 0.5) <= 0.05, f"quadrature ratio {ratio:.4f}, Monte Carlo ratio {mc:.3f}")


# ------------------------------------------------------------ 8

def test_c08_interlacement_poisson():
    D = BoxSpec.ball((0, 0, 0), 1)
    U = BoxSpec.ball((0, 0, 0), 2)
    R_esc, u, n = 16, 1.0, 10 ** 4
    cap, _ = killed_capacity(D, R_esc)
    J = np.empty(n, dtype=np.int64)
    monotone = True
    levels = (0.25, 0.5, 0.75)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in range(n):
            c = sample_cloud(u, D, U, R_esc, Stream(8, r), store=False)
            J[r] = c.J
            prev = vacant_set(c).mask
            for v in reversed(levels):
                cur = vacant_set(c, u=v).mask
                monotone &= bool(np.all(cur >= prev))
                prev = cur
    mu = u * cap
    kmax = int(stats.poisson.ppf(0.999, mu))
    obs = np.bincount(np.minimum(J, kmax), minlength=kmax + 1).astype(float)
    exp = stats.poisson.pmf(np.arange(kmax + 1), mu) * n
    exp[-1] = stats.poisson.sf(kmax - 1, mu) * n
    # merge sparse cells so every expected count is at least 5
    o, e, acc_o, acc_e = [], [], 0.0, 0.0
    for a, b in zip(obs, exp):
        acc_o += a
        acc_e += b
        if acc_e >= 5:
            o.append(acc_o)
            e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e:
        o[-1] += acc_o
        e[-1] += acc_e
    chi2 = float(np.sum((np.array(o) - np.array(e)) ** 2 / np.array(e)))
    p = float(stats.chi2.sf(chi2, len(o) - 1))
    report(8, p > 0.01 and monotone, f"mean J {J.mean():.3f} vs u cap {mu:.3f}, chi-square p={p:.3f}, "
                                     f"monotone on all {n} samples: {monotone}")


# ------------------------------------------------------------ 9

def test_c09_soft_local_time():
    gbar = np.array([0.1, 0.15, 0.2, 0.25, 0.3])
    eta, lam, runs = 0.3, 0.25, 1000
    same = all(np.array_equal((res := run_slt(SltInstance(gbar, gbar[None], 0.0), 300, Stream(90, r))).chain,
                              res.iid) for r in range(200))
    fails, miss = [], 0
    for scale in (50, 100, 200):
        m_max = 8 * lam * scale
        length = math.ceil((1 + 3 * eta) * m_max) + 2
        bad = 0
        for r in range(runs):
            rng = np.random.default_rng([9, scale, r])
            inst = SltInstance(gbar, band_kernels(gbar, 0.05, 64, rng), 0.05)
            rep = check_inclusions(run_slt(inst, length, Stream(9 + scale, r)), eta, lam, scale, m_max)
            if not rep.event:
                bad += 1
            elif not (rep.inclusion1 and rep.inclusion2):
                miss += 1
        fails.append(bad / runs)
    dec = fails[0] > fails[1] > fails[2]
    report(9, same and miss == 0 and dec,
           f"delta=0 identical: {same}; inclusion failures on E: {miss}; "
           f"P[E^c] at 50/100/200: {', '.join(f'{f:.3f}' for f in fails)}")


# ------------------------------------------------------------ 10

def test_c10_disconnection_exactness():
    cfg = WalkConfig(Geometry(4, 2), delta=0.0)
    mism, nonmono = 0, 0
    for r in range(50):
        flags = []
        ref = brute_force_T_N(cfg, Stream(10, r), on_step=lambda n, dis: flags.append(dis))
        nonmono += int(not flags[-1] or any(flags[:-1]))
        mism += int(detect_T_N(cfg, Stream(10, r)).T_N != ref)
    report(10, mism == 0 and nonmono == 0, f"{mism} mismatches on 50 seeds, {nonmono} non-monotone oracle paths")


# ------------------------------------------------------------ 11

ALPHA_REPS = {8: 40, 12: 20, 16: 8}


def _T(N, alpha=None, delta=None, reps=200, seed=11):
    cfg = WalkConfig(Geometry(N, 2), delta=delta, alpha=alpha)
    return np.array([detect_T_N(cfg, Stream(seed, r)).T_N for r in range(reps)], dtype=float)


def test_c11_scaling_trends():
    med = {N: float(np.median(_T(N, delta=0.0) / N ** 4)) for N in (6, 8, 10)}
    spread = max(med.values()) / min(med.values())
    ks = stats.ks_2samp(_T(10, delta=0.0, seed=111), _T(10, alpha=2.0, seed=112))
    d, alpha = 2, 0.6
    Ns = np.array([8, 12, 16])
    mean_T = np.array([_T(int(N), alpha=alpha, reps=ALPHA_REPS[int(N)], seed=113).mean() for N in Ns])
    x = Ns ** (d * (1 - alpha))
    slope = np.polyfit(x, np.log(mean_T), 1)[0]
    expo = np.polyfit(np.log(Ns), np.log(np.log(mean_T)), 1)[0]
    ok = spread <= 2 and ks.pvalue > 0.01 and slope > 0 and abs(expo - d * (1 - alpha)) <= 0.3
    report(11, ok, f"median T/N^4 {', '.join(f'{v:.2f}' for v in med.values())} (ratio {spread:.2f}); "
                   f"KS p={ks.pvalue:.3f}; slope {slope:.3f}, exponent {expo:.2f} vs {d * (1 - alpha):.1f}")



# ------------------------------------------------------------ 12

def test_c12_hitting_band():
    L, K, M = 4, 16, 10 ** 6
    lay = HittingLayout(box((0, 0, 0), L), L, K)
    base = hitting_distribution_check(lay.A, L, K, M=M, stream=Stream(12, 0), layout=lay)
    delta = 1.0 / (K * L * (K + L))
    drift = hitting_distribution_check(lay.A, L, K, M=M, stream=Stream(12, 1), delta=delta, layout=lay)
    se = math.hypot(base.empirical_max_dev_se, drift.empirical_max_dev_se)
    z = abs(drift.empirical_max_dev - base.empirical_max_dev) / se
    ok = base.empirical_max_dev <= 0.05 and z <= 3
    report(12, ok, f"max rel dev {base.empirical_max_dev:.3f} (exact law {base.exact_max_dev:.3f}); "
                   f"biased run {drift.empirical_max_dev:.3f}, |z|={z:.2f}")
