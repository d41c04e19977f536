import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specbounds import cli
from specbounds import mesh as Mh
from specbounds.report import csv_text, dumps, fmt_float

SMALL = ["--k", "10", "--lines", "2000", "--centers", "32", "--radii", "8",
         "--planes", "20", "--grid", "128"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- report writers


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_float_roundtrips(x):
    assert float(fmt_float(x)) == x


def test_dumps_nonfinite_and_numpy():
    s = dumps({"a": np.float64(0.1), "b": [1, np.int64(2)], "c": math.inf, "d": math.nan,
               "e": np.array([1.5, 2.5]), "f": None, "g": True})
    d = json.loads(s)
    assert d["a"] == 0.1 and d["b"] == [1, 2] and d["c"] == "inf" and d["d"] == "nan"
    assert d["e"] == [1.5, 2.5] and d["f"] is None and d["g"] is True
    assert "0.10000000000000001" in s
    assert dumps({"z": 1 / 3}) == dumps({"z": 1 / 3})
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_csv_text():
    assert csv_text([["a", "b"], [1, 0.5], ["x", math.inf]]) == "a,b\n1,0.5\nx,inf\n"


# ---------------------------------------------------------------- sources and config


def test_parse_mesh_source(tmp_path):
    assert cli.parse_mesh_source("icosphere:subdiv=2").n_vertices == 162
    t = cli.parse_mesh_source("torus:R=2,r=1,nu=16,nv=8")
    assert t.genus == 1 and t.n_faces == 256
    assert cli.parse_mesh_source("two_spheres:sep=5,subdiv=1").n_components == 2
    p = Mh.save_off(Mh.gen_icosphere(1), tmp_path / "s.off")
    assert cli.parse_mesh_source(str(p)).n_vertices == 42
    with pytest.raises(OSError, match="no such mesh file or generator"):
        cli.parse_mesh_source("dodecahedron:n=3")


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# test\nmesh = icosphere:subdiv=2\nk = 7\nseed = 3\n")
    a = cli.parse_args(["spectrum", "--config", str(cfg)])
    assert (a.mesh, int(a.k), int(a.seed)) == ("icosphere:subdiv=2", 7, 3)
    b = cli.parse_args(["spectrum", "--config", str(cfg), "--k", "4"])
    assert b.k == 4 and int(b.seed) == 3
    bad = tmp_path / "bad.cfg"
    bad.write_text("bogus = 1\n")
    with pytest.raises(SystemExit):
        cli.parse_args(["spectrum", "--config", str(bad)])


def test_positive_counts_enforced():
    with pytest.raises(SystemExit):
        cli.parse_args(["index", "--mesh", "icosphere:subdiv=1", "--lines", "0"])


# ---------------------------------------------------------------- commands


def test_gen(tmp_path, capsys):
    out = tmp_path / "ico.off"
    assert cli.main(["gen", "icosphere", "--subdiv", "5", "--out", str(out)]) == 0
    assert Mh.load_mesh(out).n_vertices == 10242
    tor = tmp_path / "t.off"
    assert cli.main(["gen", "torus", "--R", "2", "--r", "1", "--nu", "128", "--nv", "64",
                     "--out", str(tor)]) == 0
    assert Mh.load_mesh(tor).genus == 1
    poly = tmp_path / "sphere.txt"
    poly.write_text("x^2 + y^2 + z^2 - 1\n")
    imp = tmp_path / "s.off"
    assert cli.main(["gen", "implicit", "--poly", str(poly), "--res", "64", "--out", str(imp)]) == 0
    assert Mh.load_mesh(imp).genus == 0


def test_spectrum_index_concentration_shadow(tmp_path, capsys):
    src = ["--mesh", "icosphere:subdiv=3", "--out", str(tmp_path)]
    assert cli.main(["spectrum", *src, "--k", "5"]) == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert rows[0] == ["j", "lambda", "lambda_vol", "residual"] and len(rows) == 7
    assert float(rows[2][1]) == pytest.approx(2, rel=0.02)
    assert cli.main(["index", *src, "--lines", "2000"]) == 0
    assert json.loads((tmp_path / "index.json").read_text())["i_hat"] == 2
    assert cli.main(["concentration", *src, "--centers", "16", "--radii", "8"]) == 0
    assert json.loads((tmp_path / "concentration.json").read_text())["L_hat"] > 0
    assert cli.main(["shadow", *src, "--direction", "0,0,1", "--grid", "256"]) == 0
    sh = json.loads((tmp_path / "shadow.json").read_text())["shadow"]
    assert abs(sh["shadow_area"] - math.pi) < 0.1


def test_check_outputs_and_determinism(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        code = cli.main(["check", "--mesh", "icosphere:subdiv=3", *SMALL, "--out", str(d)])
        assert code == 0
        outs.append({n: (d / n).read_bytes() for n in ("report.json", "bounds.csv", "spectrum.csv",
                                                       "weyl.svg")})
    assert outs[0] == outs[1]
    rep = json.loads(outs[0]["report.json"])
    assert rep["all_passed"] and rep["config"]["seed"] == 0
    assert set(rep["checks"]) == {"bounds", "weyl", "projection_lemma", "crossings_even", "packing_replay"}
    rows = read_csv(tmp_path / "a" / "bounds.csv")
    hersch = [r for r in rows if r[0] == "Hersch"][0]
    assert float(hersch[1]) == pytest.approx(8 * math.pi, rel=0.02) and hersch[4] == "pass"
    assert outs[0]["weyl.svg"].startswith(b"<?xml")


def test_check_torus_milnor(tmp_path, capsys):
    code = cli.main(["check", "--mesh", "torus:R=2,r=1,nu=64,nv=32", *SMALL, "--degree", "4",
                     "--pack-k", "0", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "bounds.csv")
    milnor = [r for r in rows if r[0] == "Milnor_degree"][0]
    assert float(milnor[1]) == 4 and float(milnor[2]) == 4 and milnor[4] == "pass"


def test_check_k_too_large(tmp_path, capsys):
    code = cli.main(["check", "--mesh", "icosphere:subdiv=0", "--k", "12", "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "k too large" in err and "[laplace]" in err


def test_bad_mesh_reports_stage(tmp_path, capsys):
    bad = tmp_path / "open.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert cli.main(["spectrum", "--mesh", str(bad), "--out", str(tmp_path)]) == 2
    assert "[mesh]" in capsys.readouterr().err


def test_pack_commands(tmp_path, capsys):
    d = tmp_path / "two"
    assert cli.main(["pack", "--mesh", "two_spheres:sep=100,subdiv=3", "--alpha-policy", "components",
                     "--out", str(d)]) == 0
    rows = read_csv(d / "rayleigh.csv")
    assert rows[0][-1] == "cap_6_8e_over_r2" and len(rows) == 3
    assert all(abs(float(r[1])) < 1e-12 for r in rows[1:])
    code = cli.main(["pack", "--mesh", "icosphere:subdiv=3", "--K", "3", "--alpha-policy", "explicit",
                     "--alpha", "1.0", "--out", str(tmp_path / "bad")])
    assert code == 2
    err = capsys.readouterr().err
    assert "precondition violated" in err and "omega/(2*8^3*K)" in err
    assert cli.main(["pack", "--mesh", "icosphere:subdiv=3", "--K", "3", "--out", str(tmp_path / "p")]) == 0
    payload = json.loads((tmp_path / "p" / "packing.json").read_text())
    assert payload["packing"]["K"] == 3 and payload["test_functions"]["all_ok"]


def test_pack_replay_sphere(tmp_path, capsys):
    d = tmp_path / "rep"
    assert cli.main(["pack", "--mesh", "icosphere:subdiv=5", "--k", "2", "--centers", "32",
                     "--radii", "8", "--out", str(d)]) == 0
    rows = read_csv(d / "rayleigh.csv")
    assert len(rows) >= 4
    for r in rows[1:]:
        assert float(r[1]) <= float(r[-1])


def test_thread_cap_env(monkeypatch, tmp_path, capsys):
    import numba

    before = numba.get_num_threads()
    monkeypatch.setenv("SPECBOUNDS_THREADS", "1")
    try:
        assert cli.main(["index", "--mesh", "icosphere:subdiv=1", "--lines", "100",
                         "--out", str(tmp_path)]) == 0
        assert numba.get_num_threads() == 1
    finally:
        numba.set_num_threads(before)
