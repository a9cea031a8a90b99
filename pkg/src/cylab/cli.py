"""Command-line experiment driver.

Config precedence, lowest to highest: built-in defaults, the YAML file
given by ``--config``, explicit flags (``--seed`` etc.), ``--set key=value``
overrides.  Results go to ``--out``, else ``$CYLAB_OUTPUT_DIR``, else
``./cylab-out``.

Each command writes ``<kind>-<hash>.csv`` (tables) and/or
``<kind>-<hash>.jsonl`` (samples), which are a pure function of the
config, plus ``<kind>-<hash>.timing.jsonl`` with wall times.
Exit codes: 0 ok, 2 config error, 3 horizon exhausted on every replica.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Callable

import numpy as np
import yaml

SCHEMA = 1
KINDS = ("disconnect", "record-times", "zeta", "potential", "interlacements", "slt", "conditioned-check")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    N: int = 4
    d: int = 2
    delta: float | None = None
    alpha: float | None = None
    u: float = 1.0
    eta: float = 0.3
    lam: float = 0.25
    replicas: int = 10
    horizon: int | None = None
    seed: int = 0
    workers: int = 1
    output: str | None = None
    schedule: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    # fields that change where/how results are written but not what they are
    _NON_SEMANTIC = ("workers", "output")

    def validate(self) -> None:
        errs = []
        if self.kind not in KINDS:
            errs.append(f"kind: unknown experiment {self.kind!r}")
        for name in ("N", "d"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                errs.append(f"{name}: must be a positive integer")
        if not isinstance(self.replicas, int) or self.replicas < 0:
            errs.append("replicas: must be a non-negative integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            errs.append("workers: must be >= 1")
        if self.delta is not None and self.alpha is not None:
            errs.append("delta/alpha: give at most one")
        if self.delta is not None and not 0 <= self.delta < 1:
            errs.append("delta: must lie in [0, 1)")
        if self.alpha is not None and not self.alpha > 0:
            errs.append("alpha: must be > 0")
        if self.horizon is not None and self.horizon < 1:
            errs.append("horizon: must be >= 1")
        if not isinstance(self.params, dict) or not isinstance(self.schedule, dict):
            errs.append("params/schedule: must be mappings")
        if errs:
            raise ConfigError("; ".join(errs))

    def semantic(self) -> dict:
        d = dataclasses.asdict(self)
        for k in self._NON_SEMANTIC:
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def walk(self):
        from .lattice import Geometry
        from .walkers import WalkConfig
        alpha = math.inf if self.alpha is not None and self.alpha >= 1e9 else self.alpha
        return WalkConfig(Geometry(self.N, self.d), delta=self.delta, alpha=alpha, seed=self.seed)

    def p(self, key: str, default=None):
        return self.params.get(key, default)


FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def load_config(kind: str, path: str | None, overrides: dict) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror}") from e
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            raise ConfigError(f"{path}:{mark.line + 1}:{mark.column + 1}: {e.problem}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data.update(loaded)
    data.update(overrides)
    data.setdefault("kind", kind)
    if data["kind"] != kind:
        raise ConfigError(f"kind: config is for {data['kind']!r}, command is {kind!r}")
    params = dict(data.pop("params", None) or {})
    for k in list(data):
        if k not in FIELDS:
            params[k] = data.pop(k)
    try:
        cfg = ExperimentConfig(params=params, **data)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    cfg.validate()
    return cfg


# ------------------------------------------------------------ output

class Sink:
    """Collects rows; files are written once, sorted by replica."""

    def __init__(self, cfg: ExperimentConfig, outdir: FsPath):
        self.cfg = cfg
        self.dir = outdir
        self.stem = f"{cfg.kind}-{cfg.hash}"
        self.tables: dict[str, list[dict]] = {}
        self.samples: list[dict] = []
        self.timing: list[dict] = []

    def row(self, table: str, row: dict) -> None:
        self.tables.setdefault(table, []).append(self._stamp(row))

    def sample(self, row: dict) -> None:
        self.samples.append(self._stamp(row))

    def _stamp(self, row: dict) -> dict:
        return {"schema": SCHEMA, "experiment": self.cfg.hash, **row}

    def write(self, header: dict[str, list[str]] | None = None) -> list[FsPath]:
        self.dir.mkdir(parents=True, exist_ok=True)
        out = []
        names = set(self.tables) | set(header or {})
        for name in sorted(names):
            rows = sorted(self.tables.get(name, []), key=_order)
            cols = ["schema", "experiment"] + list((header or {}).get(name, []))
            for r in rows:
                cols += [k for k in r if k not in cols]
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) for k, v in r.items()})
            p = self.dir / (f"{self.stem}.csv" if name == "main" else f"{self.stem}.{name}.csv")
            p.write_text(buf.getvalue())
            out.append(p)
        if self.samples:
            p = self.dir / f"{self.stem}.jsonl"
            rows = sorted(self.samples, key=_order)
            p.write_text("".join(json.dumps(r, sort_keys=True, default=_jsonable) + "\n" for r in rows))
            out.append(p)
        if self.timing:
            p = self.dir / f"{self.stem}.timing.jsonl"
            p.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in sorted(self.timing, key=_order)))
        return out


def _order(r: dict):
    return (r.get("replica", -1), json.dumps(r, sort_keys=True, default=_jsonable))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, default=_jsonable)
    return v


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _map(fn: Callable, items: list, workers: int) -> list:
    """Order-preserving map, optionally over processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ------------------------------------------------------------ commands

def _disconnect_one(args):
    cfg, r = args
    from .disconnection import ArchiveRevisited, Schedule, detect_T_N
    from .records import HorizonExhausted
    from .rng import Stream
    t0 = time.perf_counter()
    st = Stream(cfg.seed, r)
    fp = st.fingerprint()
    row = {"replica": r, "seed": cfg.seed, "N": cfg.N, "d": cfg.d, "delta": float(cfg.walk().drift), "stream": fp}
    try:
        rep = detect_T_N(cfg.walk(), st, Schedule(**cfg.schedule), cfg.horizon,
                         cfg.p("complement", "Linf"))
        row.update(T_N=rep.T_N, T_N_scaled=rep.scaled, steps=rep.steps, checkpoints=rep.checkpoints,
                   archived_levels=rep.archived_levels, status="ok")
    except HorizonExhausted:
        row.update(T_N=None, T_N_scaled=None, steps=cfg.horizon, checkpoints=None, archived_levels=None,
                   status="horizon")
    except ArchiveRevisited:
        row.update(T_N=None, T_N_scaled=None, steps=None, checkpoints=None, archived_levels=None,
                   status="archive-revisited")
    return row, time.perf_counter() - t0


def cmd_disconnect(cfg: ExperimentConfig, sink: Sink) -> int:
    res = _map(_disconnect_one, [(cfg, r) for r in range(cfg.replicas)], cfg.workers)
    for row, wall in res:
        sink.row("main", row)
        sink.timing.append({"replica": row["replica"], "wall": wall})
    sink.write({"main": ["replica", "seed", "N", "d", "delta", "T_N", "T_N_scaled", "steps", "checkpoints",
                         "archived_levels", "status", "stream"]})
    return _horizon_code([r for r, _ in res])


def _horizon_code(rows) -> int:
    if rows and all(r["status"] == "horizon" for r in rows):
        return 3
    return 0


def _records_one(args):
    cfg, r = args
    from .records import HorizonExhausted, Walk1D, record_time_inf
    from .rng import Stream
    t0 = time.perf_counter()
    one_d = bool(cfg.p("one_d", False))
    us = {"S": cfg.u}
    if "u_bar" in cfg.params:
        us["S_lower"] = cfg.p("u_bar") - cfg.p("delta_u", 0.0)
    if "u_ss" in cfg.params:
        us["S_upper"] = cfg.p("u_ss") + cfg.p("delta_u", 0.0)
    walk = Walk1D(float(cfg.delta or 0.0), cfg.N) if one_d else cfg.walk()
    rows = []
    for name, u in us.items():
        st = Stream(cfg.seed, r)  # same path for every u
        row = {"replica": r, "quantity": name, "u": u, "stream": st.fingerprint()}
        try:
            res = record_time_inf(walk, u, st, cfg.horizon)
            row.update(z=res.level, S=res.time, threshold=res.threshold, status="ok")
        except HorizonExhausted:
            row.update(z=None, S=None, threshold=None, status="horizon")
        rows.append(row)
    return rows, time.perf_counter() - t0


def cmd_record_times(cfg: ExperimentConfig, sink: Sink) -> int:
    res = _map(_records_one, [(cfg, r) for r in range(cfg.replicas)], cfg.workers)
    flat = []
    for rows, wall in res:
        for row in rows:
            sink.row("main", row)
            flat.append(row)
        if rows:
            sink.timing.append({"replica": rows[0]["replica"], "wall": wall})
    sink.write({"main": ["replica", "quantity", "u", "z", "S", "threshold", "status", "stream"]})
    return _horizon_code(flat)


def cmd_zeta(cfg: ExperimentConfig, sink: Sink) -> int:
    from scipy import stats
    from .zeta import cdf_zeta, laplace_zeta, mc_zeta
    us = cfg.p("u_grid", [cfg.u])
    thetas = cfg.p("theta_grid", [0.5, 1.0, 2.0])
    for u in us:
        for th in thetas:
            sink.row("transform", {"u": u, "theta": th, "laplace": laplace_zeta(u, th)})
    t_grid = cfg.p("t_grid", [0.05, 0.1, 0.2, 0.4, 0.8])
    for t in t_grid:
        c = cdf_zeta(cfg.u, t, cfg.p("scheme", "talbot"))
        sink.row("cdf", {"u": cfg.u, "t": t, "cdf": c.value, "cross": c.cross, "unstable": c.unstable})
    if cfg.replicas:
        x = mc_zeta(cfg.u, cfg.N, cfg.replicas, cfg.seed)
        for r, v in enumerate(x):
            sink.sample({"replica": r, "u": cfg.u, "N": cfg.N, "S_scaled": float(v)})
        # KS against the inverted CDF, interpolated on a grid spanning the sample
        grid = np.unique(np.quantile(x, np.linspace(0.0, 1.0, int(cfg.p("ks_grid", 41)))))
        vals = np.array([cdf_zeta(cfg.u, float(t)).value for t in grid])
        F = lambda s: np.interp(s, grid, vals)
        ks = stats.kstest(x, F)
        for th in thetas:
            e = np.exp(-th * th * x / 2)
            se = e.std(ddof=1) / math.sqrt(len(e))
            ref = laplace_zeta(cfg.u, th)
            sink.row("mc", {"theta": th, "mc": float(e.mean()), "se": float(se), "laplace": ref,
                            "z": float((e.mean() - ref) / se) if se > 0 else 0.0})
        sink.row("ks", {"n": len(x), "statistic": float(ks.statistic), "pvalue": float(ks.pvalue),
                        "note": "CDF interpolated on sample quantiles"})
    sink.write({"transform": ["u", "theta", "laplace"], "cdf": ["u", "t", "cdf", "cross", "unstable"],
                "mc": ["theta", "mc", "se", "laplace", "z"], "ks": ["n", "statistic", "pvalue", "note"]})
    return 0


def cmd_potential(cfg: ExperimentConfig, sink: Sink) -> int:
    from .potential import (box, capacity_exact_free, capacity_free, cube, green_exact,
                            hitting_distribution_check, return_frequency_mc)
    from .rng import Stream
    D = cfg.d + 1
    for L in cfg.p("box_sides", [2, 4]):
        cap, corr = capacity_exact_free(cube(L, D), int(cfg.p("R_exact", 3 * L)))
        sink.row("capacity", {"L": L, "cap_U": cap, "cap_corrected": corr, "per_L": corr / L, "per_L2": corr / L ** 2})
    if cfg.replicas:
        M = cfg.replicas
        c = capacity_free(np.zeros((1, D), dtype=np.int64), int(cfg.p("R_esc", 50)), M, Stream(cfg.seed, 0))
        rf = return_frequency_mc(int(cfg.p("R_esc", 50)), M, Stream(cfg.seed, 1), D)
        sink.row("point", {"method": "escape", "raw": c.total, "corrected": c.corrected_total, "se": c.total_se})
        sink.row("point", {"method": "return-frequency", "raw": rf.capacity, "corrected": rf.capacity,
                           "se": rf.se})
    if D == 3:
        for r in cfg.p("green_radii", [4, 8]):
            sink.row("green", {"r": r, "g": green_exact((r, 0, 0), 3)})
    hd = cfg.p("hitting")
    if hd:
        L, K = int(hd.get("L", 1)), int(hd.get("K", 4))
        rep = hitting_distribution_check(box((0,) * D, L, D), L, K, eta=cfg.eta, M=int(hd.get("M", 10 ** 4)),
                                         stream=Stream(cfg.seed, 2), delta=float(hd.get("delta", 0.0)))
        sink.row("hitting", {k: _jsonable(v) if isinstance(v, (np.generic, np.ndarray)) else v
                             for k, v in dataclasses.asdict(rep).items() if np.ndim(v) == 0})
    sink.write()
    return 0


def _cloud_one(args):
    cfg, r = args
    from .interlacements import BoxSpec, exist_event, sample_cloud, vacant_set
    from .rng import Stream
    R = int(cfg.p("R", 3))
    D = BoxSpec((-R,) * (cfg.d + 1), 2 * R)
    U = BoxSpec((-3 * R,) * (cfg.d + 1), 6 * R)
    st = Stream(cfg.seed, r)
    t0 = time.perf_counter()
    cloud = sample_cloud(cfg.u, D, U, stream=st, store=bool(cfg.p("dump", False)))
    row = {"replica": r, "u": cfg.u, "J": cloud.J, "N_exc": cloud.N_exc, "cap_D": cloud.cap_D,
           "stream": st.fingerprint()}
    v = vacant_set(cloud)
    row["exist"] = bool(exist_event(v, R))
    row["vacant_fraction"] = float(v.mask.mean())
    dump = cloud.dump() if cfg.p("dump", False) else None
    return row, dump, time.perf_counter() - t0


def cmd_interlacements(cfg: ExperimentConfig, sink: Sink) -> int:
    res = _map(_cloud_one, [(cfg, r) for r in range(cfg.replicas)], cfg.workers)
    for row, dump, wall in res:
        sink.row("main", row)
        if dump is not None:
            sink.sample({"replica": row["replica"], **dump})
        sink.timing.append({"replica": row["replica"], "wall": wall})
    if cfg.p("theta_R"):
        from .interlacements import estimate_theta
        est = estimate_theta(cfg.u, int(cfg.p("theta_R")), max(cfg.replicas, 1), cfg.seed)
        sink.row("theta", {"u": cfg.u, "R": cfg.p("theta_R"), "theta": est.value, "se": est.se, "n": est.n})
    if cfg.p("u_grid"):
        from .interlacements import scan_u_star
        scan = scan_u_star(cfg.p("u_grid"), cfg.p("R_list", [2, 3]), max(cfg.replicas, 1), cfg.seed)
        for R, row in scan["crossing"].items():
            for u, p in zip(scan["u"], row):
                sink.row("crossing", {"R": R, "u": u, "crossing": p})
        sink.row("u_star", {"estimates": scan["u_star_estimates"]})
    sink.write({"main": ["replica", "u", "J", "N_exc", "cap_D", "exist", "vacant_fraction", "stream"]})
    return 0


def _slt_instance(cfg: ExperimentConfig):
    from .slt import SltInstance, band_kernels
    from .rng import Stream
    src = cfg.p("kernels", "band")
    delta = float(cfg.delta if cfg.delta is not None else 0.05)
    if src == "band":
        m = int(cfg.p("size", 20))
        rng = Stream(cfg.seed, 0).numpy(purpose=7)
        gbar = rng.dirichlet(np.ones(m))
        return SltInstance(gbar, band_kernels(gbar, delta, int(cfg.p("n_kernels", 64)), rng), delta)
    if src == "alternating":
        a = 0.5 + delta / 2
        return SltInstance(np.array([0.5, 0.5]), np.array([[a, 1 - a], [1 - a, a]]), delta)
    if src == "cylinder":
        return cylinder_instance(int(cfg.p("L", 1)), int(cfg.p("K", 4)), cfg.d + 1, int(cfg.p("n_starts", 8)))
    raise ConfigError(f"params.kernels: unknown source {src!r}")


def cylinder_instance(L: int, K: int, D: int = 3, n_starts: int = 8):
    """Entrance laws on the inner boundary of B(0, L) from starts spread
    over the boundary of B(0, KL); gbar is the normalized equilibrium
    measure and delta the largest observed relative deviation."""
    from .potential import HittingLayout, box
    from .slt import SltInstance
    A = box((0,) * D, L, D)
    R = K * L
    laws = []
    gbar = None
    for i in range(n_starts):
        ang = 2 * math.pi * i / n_starts
        x = [R + 1, int(round(R * 0.5 * math.cos(ang))), int(round(R * 0.5 * math.sin(ang)))][:D]
        lay = HittingLayout(A, L, K, x=x)
        law, _ = lay.exact_law(0.0)
        keep = lay.boundary
        gbar = lay.ebar[keep]
        laws.append(law[keep] / law[keep].sum())
    laws = np.array(laws)
    delta = float(np.max(np.abs(laws / gbar - 1)))
    if delta >= 0.5:
        raise ConfigError(f"params.K: entrance laws deviate from the equilibrium measure by {delta:.3f} "
                          f">= 1/2; increase K")
    return SltInstance(gbar, laws, delta)


def _slt_one(args):
    cfg, r, scales = args
    from .rng import Stream
    from .slt import check_inclusions, run_slt
    inst = _slt_instance(cfg)
    rows = []
    for scale in scales:
        m_max = float(cfg.p("m_factor", 8)) * cfg.lam * scale
        n = int(math.ceil((1 + 3 * cfg.eta) * m_max)) + 2
        st = Stream(cfg.seed, r)
        res = run_slt(inst, n, st)
        rep = check_inclusions(res, cfg.eta, cfg.lam, scale, m_max)
        rows.append({"replica": r, "scale": scale, "delta": inst.delta, "eta": cfg.eta, "lam": cfg.lam,
                     "event": rep.event, "inclusion1": rep.inclusion1, "inclusion2": rep.inclusion2,
                     "points1": rep.inclusion1_points, "points2": rep.inclusion2_points})
    return rows


def cmd_slt(cfg: ExperimentConfig, sink: Sink) -> int:
    scales = cfg.p("scales", [50, 100, 200])
    res = _map(_slt_one, [(cfg, r, scales) for r in range(cfg.replicas)], cfg.workers)
    for rows in res:
        for row in rows:
            sink.sample(row)
    for scale in scales:
        rows = [row for rr in res for row in rr if row["scale"] == scale]
        ev = [row for row in rows if row["event"]]
        ok = [row for row in ev if row["inclusion1"] and row["inclusion2"]]
        sink.row("main", {"scale": scale, "runs": len(rows),
                          "event_rate": len(ev) / len(rows) if rows else None,
                          "bad_event_rate": 1 - len(ev) / len(rows) if rows else None,
                          "inclusion_rate_on_event": len(ok) / len(ev) if ev else None})
    sink.write({"main": ["scale", "runs", "event_rate", "bad_event_rate", "inclusion_rate_on_event"]})
    return 0


def cmd_conditioned_check(cfg: ExperimentConfig, sink: Sink) -> int:
    from .lattice import Site
    from .records import conditioned_transition_counts
    from .walkers import conditioned_step_kernel
    w = cfg.walk()
    thr = int(cfg.p("threshold", 2))
    acc, counts = conditioned_transition_counts(w, thr, cfg.replicas, cfg.seed)
    heights = {0: 1, 1: -1, 2: 0}
    zero = (0,) * cfg.d
    for c, h in heights.items():
        k = np.array(conditioned_step_kernel(w, Site(zero, h)), dtype=float)
        n = counts[c].sum()
        for j in range(len(k)):
            f = counts[c, j] / n if n else float("nan")
            se = math.sqrt(k[j] * (1 - k[j]) / n) if n else float("nan")
            sink.row("main", {"class": ["h>0", "h<0", "h=0"][c], "direction": j, "count": int(counts[c, j]),
                              "freq": f, "kernel": float(k[j]), "se": se,
                              "z": (f - k[j]) / se if n and se > 0 else 0.0})
    sink.row("summary", {"replicas": cfg.replicas, "accepted": int(acc), "threshold": thr})
    sink.write({"main": ["class", "direction", "count", "freq", "kernel", "se", "z"]})
    return 0


COMMANDS = {
    "disconnect": cmd_disconnect,
    "record-times": cmd_record_times,
    "zeta": cmd_zeta,
    "potential": cmd_potential,
    "interlacements": cmd_interlacements,
    "slt": cmd_slt,
    "conditioned-check": cmd_conditioned_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cylab", description="Monte Carlo experiments on the discrete cylinder.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in KINDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML file with ExperimentConfig keys")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted keys reach into params/schedule)")
    return ap


def _overrides(ns) -> dict:
    ov: dict[str, Any] = {}
    for k in ("seed", "replicas", "workers"):
        if getattr(ns, k) is not None:
            ov[k] = getattr(ns, k)
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        k, v = item.split("=", 1)
        val = _parse_value(v)
        if "." in k:
            head, tail = k.split(".", 1)
            ov.setdefault(head, {})[tail] = val
        else:
            ov[k] = val
    return ov


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        ov = _overrides(ns)
        nested = {k: ov.pop(k) for k in ("params", "schedule") if k in ov}
        cfg = load_config(ns.command, ns.config, ov)
        for k, v in nested.items():
            getattr(cfg, k).update(v)
        cfg.validate()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    outdir = FsPath(ns.out or cfg.output or os.environ.get("CYLAB_OUTPUT_DIR", "cylab-out"))
    sink = Sink(cfg, outdir)
    try:
        code = COMMANDS[ns.command](cfg, sink)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    print(f"{ns.command}: wrote {sink.stem}.* to {outdir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
