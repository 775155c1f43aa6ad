import csv
import io
import json

import pytest
import yaml

from hicontrast.cli import BLOCH_COLUMNS, CSV_COLUMNS, main

SMALL = {
    "geometry": {"n": 8},
    "sweep": {"eps": [0.5, 0.25, 0.125, 0.0625], "radii": 3, "alpha": [0.5]},
    "correctors": {"theta_radii": [0.0, 0.5], "draws": 1},
    "spectra": {"eps": [0.25, 0.125], "theta_points": 6, "lam_max": 300.0},
}


def _config(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", "--config", str(_config(tmp_path, SMALL))]) == 0
    out = _last_json(capsys)
    assert out["status"] == "valid" and out["interior_soft_nodes"] == 9


@pytest.mark.parametrize(
    "patch,code",
    [
        ({"geometry": {"n": 8, "inclusion": [[0.0, 0.5], [0.25, 0.75]]}}, "InclusionTouchesBoundary"),
        ({"geometry": {"n": 8, "inclusion": [[0.25, 0.75], [0.0, 1.0]]}}, "StiffDisconnected"),
        ({"geometry": {"n": 8, "inclusion": [[0.3, 0.7], [0.25, 0.75]]}}, "MisalignedInclusion"),
        ({"coefficients": {"a0": 0.5}}, "EllipticityViolated"),
        ({"sweep": {"eps": []}}, "ConfigError"),
        ({"bogus": 1}, "ConfigError"),
    ],
)
def test_validation_errors_exit_2(tmp_path, capsys, patch, code):
    data = {**SMALL, **patch}
    assert main(["validate", "--config", str(_config(tmp_path, data))]) == 2
    out = _last_json(capsys)
    assert out["status"] == "error" and out["code"] == code


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert _last_json(capsys)["code"] == "ConfigError"


def test_spectrum_rejects_classical(tmp_path, capsys):
    data = {**SMALL, "geometry": {"n": 8, "inclusion": None}}
    assert main(["spectrum", "--config", str(_config(tmp_path, data)), "--out", str(tmp_path / "r")]) == 2


def test_sweep_csv(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sweep", "--config", str(_config(tmp_path, SMALL)), "--out", str(out), "--threads", "2"]) == 0
    raw = (out / "sweep.csv").read_bytes()
    assert raw.endswith(b"\r\n")
    rows = list(csv.reader(io.StringIO(raw.decode())))
    assert tuple(rows[0]) == CSV_COLUMNS == ("eps", "theta1", "theta2", "region", "distance")
    body = rows[1:]
    assert {float(r[0]) for r in body} == {0.5, 0.25, 0.125, 0.0625}
    assert {r[3] for r in body} <= {"inner", "transition", "outer"}
    report = json.loads((out / "sweep.json").read_text())
    assert report["sweep"]["fit"]["slope"] > 0
    assert set(report) >= {"config", "config_hash", "model_hash", "fixture_version", "seed", "version"}
    assert "sweep" in json.loads((out / "timings.json").read_text())


def test_report_deterministic(tmp_path, capsys):
    cfg = str(_config(tmp_path, SMALL))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["report", "--config", cfg, "--out", str(a)]) == 0
    assert main(["report", "--config", cfg, "--out", str(b), "--threads", "3", "--no-cache"]) == 0
    for name in ("report.json", "sweep.csv", "beta.csv", "bloch.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # a second run reading the cache reproduces the bytes too
    assert main(["report", "--config", cfg, "--out", str(a)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    rep = json.loads((a / "report.json").read_text())["report"]
    assert set(rep) == {"validate", "homogenize", "correctors", "sweep", "spectrum"}
    assert rep["spectrum"]["truncation_stability"]["hausdorff"] <= 1e-6
    header = (a / "bloch.csv").read_bytes().split(b"\r\n")[0].decode()
    assert tuple(header.split(",")) == BLOCH_COLUMNS


def test_seed_changes_corrector_suite(tmp_path, capsys):
    cfg = str(_config(tmp_path, SMALL))
    assert main(["correctors", "--config", cfg, "--out", str(tmp_path / "s0"), "--seed", "0"]) == 0
    assert main(["correctors", "--config", cfg, "--out", str(tmp_path / "s1"), "--seed", "1"]) == 0
    r0 = json.loads((tmp_path / "s0" / "correctors.json").read_text())
    r1 = json.loads((tmp_path / "s1" / "correctors.json").read_text())
    assert r0["seed"] == 0 and r1["seed"] == 1
    assert r0["correctors"]["max_ratio"] != r1["correctors"]["max_ratio"]


def test_homogenize_laminate(tmp_path, capsys):
    data = {
        "geometry": {"n": 8, "inclusion": None},
        "coefficients": {"a1": {"laminate": {"a_minus": 1.0, "a_plus": 4.0}}},
        "output": {"fields": True},
    }
    out = tmp_path / "lam"
    assert main(["homogenize", "--config", str(_config(tmp_path, data)), "--out", str(out)]) == 0
    rep = json.loads((out / "homogenize.json").read_text())["homogenize"]
    assert rep["Ahom"][0] == pytest.approx([1.6, 0.0], abs=1e-8)
    assert rep["Ahom"][1] == pytest.approx([0.0, 2.5], abs=1e-8)
    assert (out / "cell_solutions.csv").read_bytes().startswith(b"y1,y2,N1,N2\r\n")
