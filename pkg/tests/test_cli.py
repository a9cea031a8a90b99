import csv
import json

import pytest

from cylab.cli import ExperimentConfig, cylinder_instance, load_config, main, ConfigError


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_disconnect_rows_and_reproducibility(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "disconnect", "--set", "N=3", "--replicas", "4", "--seed", "2") == 0
    assert run(b, "disconnect", "--set", "N=3", "--replicas", "4", "--seed", "2", "--workers", "2") == 0
    fa = sorted(p.name for p in a.glob("*.csv"))
    assert fa == sorted(p.name for p in b.glob("*.csv"))
    for name in fa:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read(a / fa[0])
    assert [int(r["replica"]) for r in rows] == [0, 1, 2, 3]
    assert all(r["status"] == "ok" and int(r["T_N"]) > 0 for r in rows)
    assert list(a.glob("*.timing.jsonl"))


def test_hash_ignores_output_and_workers():
    a = ExperimentConfig("zeta", workers=1, output="x")
    b = ExperimentConfig("zeta", workers=4, output="y")
    assert a.hash == b.hash
    assert a.hash != ExperimentConfig("zeta", seed=1).hash


def test_zero_replicas_writes_header(tmp_path):
    assert run(tmp_path, "disconnect", "--replicas", "0") == 0
    (f,) = tmp_path.glob("*.csv")
    head = f.read_text().splitlines()
    assert len(head) == 1 and head[0].startswith("schema,experiment,replica")


def test_horizon_exit_code(tmp_path):
    assert run(tmp_path, "disconnect", "--replicas", "2", "--set", "horizon=3") == 3
    (f,) = tmp_path.glob("*.csv")
    assert {r["status"] for r in read(f)} == {"horizon"}


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("N: 3\nd: [1,\n")
    assert main(["disconnect", "--config", str(bad)]) == 2
    assert "bad.yaml:" in capsys.readouterr().err
    assert run(tmp_path, "disconnect", "--set", "N=0") == 2
    assert run(tmp_path, "disconnect", "--set", "delta=0.1", "--set", "alpha=1") == 2
    with pytest.raises(ConfigError):
        load_config("zeta", None, {"kind": "slt"})


def test_yaml_config_and_params(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("N: 3\nreplicas: 2\nseed: 4\none_d: true\nu_bar: 1.0\nu_ss: 1.0\ndelta_u: 0.5\n")
    c = load_config("record-times", str(cfg), {})
    assert c.N == 3 and c.params["one_d"] is True
    assert run(tmp_path, "record-times", "--config", str(cfg)) == 0
    (f,) = tmp_path.glob("record-times-*.csv")
    rows = read(f)
    assert len(rows) == 6
    for rep in ("0", "1"):
        S = {r["quantity"]: int(r["S"]) for r in rows if r["replica"] == rep}
        # same path for every u, so record times are monotone in u
        assert S["S_lower"] <= S["S"] <= S["S_upper"]


def test_other_commands_smoke(tmp_path):
    assert run(tmp_path / "z", "zeta", "--replicas", "50", "--set", "N=20") == 0
    assert run(tmp_path / "s", "slt", "--replicas", "3") == 0
    assert run(tmp_path / "c", "conditioned-check", "--replicas", "200", "--set", "N=2", "--set", "d=1") == 0
    for d in ("z", "s", "c"):
        assert list((tmp_path / d).glob("*.csv"))


def test_cylinder_slt_band_too_wide():
    with pytest.raises(ConfigError):
        cylinder_instance(1, 4)
