from __future__ import annotations

import csv
import hashlib
import json
import math

import numpy as np
import pytest

from gpe_norm.cli import ConfigError, RunConfig, main

SUB = {"N": 2, "p": 3.07, "q": 6.43, "alpha": 2, "beta": 2, "mu1": 3.96, "mu2": 0.245,
       "nu": 6.27, "a": 0.599, "b": 0.759}


def _write(path, data):
    path.write_text(json.dumps(data))
    return path


def _run(tmp_path, scenario, data, name="out", *extra):
    cfg = _write(tmp_path / f"{name}.json", data)
    out = tmp_path / name
    code = main([scenario, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_soliton_profile_matches_sech(tmp_path, capsys):
    code, out = _run(tmp_path, "soliton", {"N": 1, "eta": 4, "mu": 1, "a": 4})
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["lambda"] == pytest.approx(1.0, abs=1e-6)
    data = np.loadtxt(out / "profile_soliton.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 1] - math.sqrt(2) / np.cosh(data[:, 0]))) < 1e-6


def test_manifest_checksums(tmp_path):
    code, out = _run(tmp_path, "soliton", {"N": 1, "eta": 4, "mu": 1, "a": 4})
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"] == "soliton"
    assert man["files"]
    for entry in man["files"]:
        blob = (out / entry["path"]).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
        assert len(blob) == entry["bytes"]
        assert b"\r\n" not in blob


def test_thresholds_report(tmp_path):
    code, out = _run(tmp_path, "thresholds", SUB)
    assert code == 0
    geo = json.loads((out / "geometry.json").read_text())
    assert geo["R0"] < geo["R"] < geo["R1"]
    assert geo["k0"] > 0
    assert geo["nu_u"] == 0.0 and geo["nu_v"] == 0.0


@pytest.mark.parametrize("patch", [{"q": 3.5}, {"p": 1.5}, {"mu1": -1}])
def test_regime_violation_exits_2(tmp_path, capsys, patch):
    code, _ = _run(tmp_path, "minimize", {**SUB, **patch})
    assert code == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [
    {"sweep_axis": "a", "sweep_values": []},
    {"sweep_axis": "a", "sweep_values": [0.5, 0.3]},
    {"sweep_axis": "zz", "sweep_values": [0.3]},
])
def test_bad_sweep_exits_2(tmp_path, patch):
    code, _ = _run(tmp_path, "sweep", {**SUB, **patch})
    assert code == 2


def test_malformed_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["minimize", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_config_validation():
    with pytest.raises(ConfigError, match="missing"):
        RunConfig.from_dict({"N": 2}, "minimize")
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({**SUB, "bogus": 1}, "minimize")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**SUB, "M": 10}, "minimize")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**SUB, "tol": 0}, "minimize")


def test_config_hash_ignores_output_location():
    a = RunConfig.from_dict({**SUB, "out": "x"}, "minimize")
    b = RunConfig.from_dict({**SUB, "out": "y", "workers": 3}, "minimize")
    c = RunConfig.from_dict({**SUB, "seed": 7}, "minimize")
    assert a.sha256() == b.sha256() != c.sha256()


def test_minimize_outputs(tmp_path):
    code, out = _run(tmp_path, "minimize", {**SUB, "L": 40, "M": 1024})
    assert code == 0
    sol = json.loads((out / "solution_local.json").read_text())
    assert sol["classification"] == "P_plus"
    assert sol["mass_u"] == pytest.approx(SUB["a"])
    with open(out / "profile_local.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "u", "v"]
    assert len(rows) == 1025


def test_sweep_energy_decreases_with_mass(tmp_path):
    data = {**SUB, "L": 60, "M": 1024, "sweep_axis": "a", "sweep_values": [0.45, 0.5, 0.599]}
    code, out = _run(tmp_path, "sweep", data)
    assert code == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok"] * 3
    energies = [float(r["energy"]) for r in rows]
    assert all(e2 <= e1 for e1, e2 in zip(energies, energies[1:]))


def test_sweep_is_worker_independent(tmp_path):
    data = {**SUB, "L": 40, "M": 512, "sweep_axis": "b", "sweep_values": [0.6, 0.759]}
    _, o1 = _run(tmp_path, "sweep", data, "w1")
    _, o2 = _run(tmp_path, "sweep", data, "w2", "--workers", "2")
    for name in ("sweep.csv", "sweep.json"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_fiber_is_seeded(tmp_path):
    _, o1 = _run(tmp_path, "fiber", SUB, "f1", "--seed", "4")
    _, o2 = _run(tmp_path, "fiber", SUB, "f2", "--seed", "4")
    assert (o1 / "fiber.json").read_bytes() == (o2 / "fiber.json").read_bytes()
