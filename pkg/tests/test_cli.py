import json
import subprocess
import sys

import pytest

from fairbary.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen", "--example", 1, "--n", 40, "-o", d / "ex1.json") == 0
    assert run("gen", "--example", 2, "--n", 40, "-o", d / "ex2.json") == 0
    assert run("gen", "--random", "overlap", "--n", 12, "--seed", 3, "--binary", "-o", d / "ov.json") == 0
    assert run("gen", "--random", "awareness", "--n", 40, "--seed", 1, "-o", d / "aw.json") == 0
    return d


def load(p):
    return json.loads(p.read_text())


def test_solve_and_determinism(files):
    assert run("solve", files / "ex1.json", "-o", files / "s1.json") == 0
    assert run("solve", files / "ex1.json", "-o", files / "s1b.json") == 0
    assert (files / "s1.json").read_bytes() == (files / "s1b.json").read_bytes()
    doc = load(files / "s1.json")
    assert doc["kind"] == "solve" and doc["provenance"]["instance_hash"]
    assert doc["payload"]["ot_value"] == pytest.approx(0.25, abs=0.02)


def test_classify(files):
    assert run("classify", files / "ov.json", "--y", 0.5, "-o", files / "c.json") == 0
    p = load(files / "c.json")["payload"]
    assert p["parity_gap"] <= 1e-12 and p["lp_oracle"] == pytest.approx(p["surrogate_risk"], abs=1e-9)
    assert p["risk"] is not None


def test_nested_example2(files):
    assert run("nested", files / "ex2.json", "--grid=-8:3:0.02", "--levels=-3,0", "-o", files / "n2.json") == 0
    p = load(files / "n2.json")["payload"]
    assert p["verdict"] == "NOT_NESTED" and p["flipped"]
    assert all(d == pytest.approx(1.0) for _, d in p["flipped"])
    assert run("plot", files / "n2.json", "--kind", "boundary", "-o", files / "b.svg") == 0
    assert (files / "b.svg").read_text().lstrip().startswith("<?xml")
    assert run("plot", files / "n2.json", "--kind", "cdf", "-o", files / "c.csv") == 2


def test_nested_example1_and_plots(files):
    assert run("nested", files / "ex1.json", "--grid=-2:3:0.02", "-o", files / "n1.json") == 0
    p = load(files / "n1.json")["payload"]
    assert p["verdict"] == "NESTED" and p["potential"]["duality_gap_plus"] <= 0.05
    assert run("plot", files / "n1.json", "--kind", "cdf", "-o", files / "f.csv") == 0
    lines = (files / "f.csv").read_text().splitlines()
    assert lines[0] == "y,F" and len(lines) == len(p["kappa_table"]) + 1
    assert run("plot", files / "n1.json", "--kind", "omega", "-o", files / "o.svg") == 0
    assert run("plot", files / "n1.json", "--kind", "omega", "-o", files / "o2.svg") == 0
    assert (files / "o.svg").read_bytes() == (files / "o2.svg").read_bytes()
    assert run("plot", files / "n1.json", "--kind", "bogus", "-o", files / "x.svg") == 2
    assert run("plot", files / "n1.json", "--kind", "omega", "-o", files / "x.png") == 2


def test_audit(files):
    assert run("solve", files / "aw.json", "-o", files / "sa.json") == 0
    assert run("audit", files / "aw.json", files / "sa.json", "-o", files / "a.json") == 0
    p = load(files / "a.json")["payload"]
    assert p["order_awareness_reference"]["preserves_order"]
    assert run("audit", files / "ov.json", files / "c.json", "-o", files / "e.json") == 0
    assert load(files / "e.json")["payload"]["envy"]["case"] in (
        "BAYES_SUBSET_FAIR", "FAIR_SUBSET_BAYES", "NOT_ENVY_FREE")
    # result from another instance
    assert run("audit", files / "ex1.json", files / "sa.json", "-o", files / "z.json") == 2


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("solve", bad) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["code"] == 2


def test_schema_violation(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"schema": "v1", "mode": "omega"}))
    assert run("solve", p) == 2


def test_mass_bound_exit(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"schema": "v1", "mode": "omega",
                             "omega": {"mu_plus": [[0, 0.1, 1]], "mu_minus": [[1, -0.1, 1]], "d_scale": 1.0}}))
    assert run("solve", p) == 3


def test_bad_grid(files):
    assert run("nested", files / "ex1.json", "--grid=3:-2:0.01") == 2
    assert run("nested", files / "ex1.json", "--grid=abc") == 2


def test_raw_round_trip(files, tmp_path):
    assert run("gen", "--random", "overlap", "--n", 12, "--seed", 3, "--binary", "-o", tmp_path / "o.json") == 0
    assert (tmp_path / "o.json").read_bytes() == (files / "ov.json").read_bytes()


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "fairbary.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "fairbary" in r.stdout
