import csv
import json

import numpy as np
import pytest

from pseudotherm.cli import RunConfig, main, run, validate


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_family_requirement():
    problems = validate(RunConfig("spectrum", family="local", n=2, m=1))
    assert any("requires n >= 3" in p for p in problems)


def test_validate_capacity():
    problems = validate(RunConfig("spectrum", n=10, m=5))
    assert any(p.startswith("capacity") and str(1024) in p for p in problems)


def test_validate_fig7_config_ok():
    assert validate(RunConfig("tvdecay", n=5, initial="00+++", mrange="1:8")) == []


def test_validate_lists_every_problem():
    problems = validate(RunConfig("lightcone", family="local", n=64, na=4, realizations=0, record_every=0))
    assert len(problems) == 3  # seed, realizations, record_every


def test_validate_initial_parse_and_size():
    assert any("initial" in p for p in validate(RunConfig("tvdecay", n=5, initial="00x++", m=1)))
    assert any("sites" in p for p in validate(RunConfig("tvdecay", n=4, initial="00+++", m=1)))
    assert any("exceeds the initial" in p for p in validate(RunConfig("tvdecay", n=5, initial="000++", m=5)))


def test_spectrum_run(tmp_path):
    code = main(["spectrum", "--n", "5", "--m", "2", "--k", "20", "--output", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "spectrum_m2.csv")
    assert list(rows[0]) == ["index", "eigenvalue", "residual"]
    assert len(rows) == 20
    assert 0.915 <= float(rows[1]["eigenvalue"]) <= 0.925
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["n"] == 5 and manifest["version"] and manifest["wall_time"] >= 0


def test_exit_codes(tmp_path):
    assert main(["spectrum", "--n", "2", "--m", "1", "--output", str(tmp_path)]) == 2
    assert main(["spectrum", "--n", "10", "--m", "5", "--output", str(tmp_path)]) == 3
    assert main(["spectrum", "--n", "5", "--m", "2", "--k", "12", "--tol", "1e-30",
                 "--output", str(tmp_path)]) in (0, 4)


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    from pseudotherm import cli
    from pseudotherm.errors import IterativeFailure

    def boom(*a, **k):
        raise IterativeFailure("no convergence", 1e-3)

    monkeypatch.setattr(cli, "top_eigenvalues", boom)
    assert main(["spectrum", "--n", "4", "--m", "1", "--output", str(tmp_path)]) == 4


def test_config_file_and_env_output(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 3, "m": 2, "family": "local"}))
    out = tmp_path / "envout"
    monkeypatch.setenv("PSEUDOTHERM_OUTPUT_DIR", str(out))
    assert main(["irreducibility", "--config", str(cfg)]) == 0
    comp = json.loads((out / "component.json").read_text())
    assert comp["component_size"] == 28 and comp["connected"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 3, "bogus": 1}))
    assert main(["irreducibility", "--config", str(bad)]) == 2


def test_irreducibility_notcnot(tmp_path):
    sub = tmp_path / "s.json"
    sub.write_text("[6, 2, 4, 0]")
    code = main(["irreducibility", "--family", "notcnot", "--n", "3", "--m", "4", "--subset", str(sub),
                 "--output", str(tmp_path)])
    assert code == 0
    comp = json.loads((tmp_path / "component.json").read_text())
    assert not comp["connected"] and [0, 1, 2, 4] not in comp["members"]


def test_tvdecay_run(tmp_path):
    code = main(["tvdecay", "--n", "5", "--initial", "00+++", "--mrange", "1:3", "--output", str(tmp_path)])
    assert code == 0
    fits = read_csv(tmp_path / "fits.csv")
    assert [int(r["m"]) for r in fits] == [1, 2, 3]
    assert float(fits[0]["lambda"]) == pytest.approx(0.90, abs=0.01)
    assert float(fits[1]["lambda"]) == pytest.approx(0.92, abs=0.01)
    assert read_csv(tmp_path / "tv_m2.csv")[0].keys() == {"t", "tv"}


def test_lightcone_deterministic(tmp_path):
    args = ["lightcone", "--n", "12", "--na", "2", "--realizations", "50", "--seed", "7", "--t-max", "240"]
    assert main(args + ["--output", str(tmp_path / "a")]) == 0
    assert main(args + ["--output", str(tmp_path / "b"), "--threads", "1"]) == 0
    for name in ("observables.csv", "fronts.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "observables.csv")
    assert list(rows[0]) == ["t", "site", "zbar", "z2bar"]
    assert main(["lightcone", "--n", "12", "--na", "2", "--output", str(tmp_path / "c")]) == 2


def test_mixing_run(tmp_path):
    assert main(["mixing", "--n", "4", "--mrange", "1:2", "--output", str(tmp_path)]) == 0
    for row in read_csv(tmp_path / "mixing.csv"):
        t = int(row["t_mix"])
        assert float(row["lower_bound"]) <= t <= float(row["upper_bound"])


def test_moments_run(tmp_path):
    code = main(["moments", "--n", "3", "--initial", "0++", "--m", "2", "--t-max", "30", "--record-every", "10",
                 "--output", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "moments.csv")
    assert [int(r["t"]) for r in rows] == [0, 10, 20, 30]
    tv = [float(r["tv_phi"]) for r in rows]
    assert np.all(np.diff(tv) <= 1e-12)


def test_phimap_run(tmp_path):
    code = main(["phimap", "--n", "3", "--initial", "0++", "--mrange", "1:4", "--t-max", "3", "--output", str(tmp_path)])
    assert code == 0
    tv = [float(r["tv"]) for r in read_csv(tmp_path / "phi_tv.csv")]
    assert np.all(np.diff(tv) >= -1e-12)
    probs = [float(r["probability"]) for r in read_csv(tmp_path / "phi_m2.csv")]
    assert sum(probs) == pytest.approx(1, abs=1e-12)


def test_run_returns_validation_code_directly(tmp_path):
    assert run(RunConfig("bogus", n=3, output=str(tmp_path))) == 2
