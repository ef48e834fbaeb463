import csv
import io
import json

import pytest

from affsym.cli import ConfigError, config_from_mapping, main, run, to_csv


def _strip_ts(text):
    doc = json.loads(text)
    doc["meta"].pop("timestamp")
    return doc


def run_main(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_classify_z2z2(capsys):
    code, out, _ = run_main(["classify", "--surface", "z2z2", "--point", "0,0,0"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["schema"] == 1
    assert doc["results"][0]["group"] == "Z2xZ2"
    assert set(doc["meta"]) == {"version", "command", "surface", "config_hash", "seed", "timestamp"}


def test_scan_unit_sphere_histogram(capsys):
    code, out, _ = run_main(["scan", "--surface", "unit_sphere3", "--grid", "t=0:1:3,u=0:1:3,v=0:1:3"], capsys)
    assert code == 0
    assert json.loads(out)["summary"]["histogram"] == {"SO3": 27}


def test_verify_warped_passes(capsys):
    code, out, _ = run_main(
        ["verify", "--surface", "proper_warped:unit_sphere2", "--grid", "t=0.4:1.0:2,u=-0.5:0.5:2,v=-0.5:0.5:2"],
        capsys,
    )
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert all(r["pass"] for r in doc["results"])
    assert len(doc["results"]) == 8 * 12


def test_verify_reports_failures_with_exit_1(tmp_path, capsys):
    cfg = {"command": "verify", "surface": "z2z2", "point": [0.1, 0.2, 0.3], "tolerances": {"gauss": 1e-30}}
    doc, ok = run(config_from_mapping(cfg))
    assert not ok and not doc["passed"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, out, _ = run_main(["verify", "--config", str(p)], capsys)
    assert code == 1
    failing = [r["name"] for r in json.loads(out)["results"] if not r["pass"]]
    assert failing == ["gauss"]


def test_construct_reports_validity(capsys):
    code, out, _ = run_main(["construct", "--surface", "translation_warped:elliptic_paraboloid"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["validity"]["passed"] and doc["curve"]["passed"]
    assert len(doc["results"][0]["position"]) == 4


def test_composed_surface_config(tmp_path, capsys):
    cfg = {
        "command": "construct",
        "surface": {
            "family": "translation_warped",
            "sphere": "elliptic_paraboloid",
            "curve": {"gamma1": [0, 1, 0, 0, 0, 0, 0, 0], "gamma2": [0, 0, 1, 0, 0, 0, 0, 0], "domain": [1, 2]},
        },
        "point": [1.5, 0, 0],
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, out, _ = run_main(["construct", "--config", str(p)], capsys)
    assert code == 0
    assert json.loads(out)["results"][0]["position"] == [0.0, 0.0, 2.25, 1.5]


def test_bad_curve_is_config_error(tmp_path, capsys):
    cfg = {
        "command": "construct",
        "surface": {
            "family": "translation_warped",
            "sphere": "elliptic_paraboloid",
            "curve": {"gamma1": [0, 1, 0, 0, 0, 0, 0, 0], "gamma2": [0, 0, 0, 1, 0, 0, 0, 0], "domain": [-1, 1]},
        },
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, _, err = run_main(["construct", "--config", str(p)], capsys)
    assert code == 2 and "definiteness" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["classify", "--surface", "nope"],
        ["classify", "--surface", "z2z2", "--point", "9,9,9"],
        ["classify", "--surface", "z2z2", "--point", "1,2"],
        ["scan", "--surface", "z2z2", "--grid", "t=0:1:0,u=0:1:2,v=0:1:2"],
        ["classify", "--surface", "z2z2", "--tol", "-1"],
        ["verify", "--surface", "unit_sphere3", "--structure"],
        ["bogus"],
    ],
)
def test_error_exit_2(argv, capsys):
    code, _, _ = run_main(argv, capsys)
    assert code == 2


def test_unknown_config_keys(tmp_path, capsys):
    for cfg in (
        {"command": "classify", "surface": "z2z2", "colour": 1},
        {"command": "classify", "surface": {"family": "proper_warped", "sphere": "unit_sphere2", "x": 1}},
        {"command": "classify", "surface": "z2z2", "tolerances": {"nonsense": 1e-3}},
        {"command": "classify", "surface": "z2z2", "output": {"path": "a", "mode": "w"}},
    ):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        code, _, err = run_main(["classify", "--config", str(p)], capsys)
        assert code == 2
        assert "unknown" in err or "output" in err


def test_config_validation_direct():
    with pytest.raises(ConfigError):
        config_from_mapping({"command": "classify"})
    with pytest.raises(ConfigError):
        config_from_mapping({"command": "classify", "surface": "z2z2", "seed": 1.5})
    cfg = config_from_mapping({"command": "scan", "surface": "z2z2", "grid": [[0, 1, 2], [0, 1, 2], [0, 1, 1]]})
    assert cfg.grid == ((0.0, 1.0, 2), (0.0, 1.0, 2), (0.0, 1.0, 1))


def test_config_hash_ignores_output_location():
    a = config_from_mapping({"command": "scan", "surface": "z2z2", "output": {"path": "x.json"}})
    b = config_from_mapping({"command": "scan", "surface": "z2z2"})
    c = config_from_mapping({"command": "scan", "surface": "z2z2", "seed": 4})
    assert a.hash() == b.hash() != c.hash()


def test_json_deterministic(tmp_path):
    argv = ["scan", "--surface", "proper_warped:hyperbolic_xyz", "--grid", "t=0.3:1.1:2,u=-0.4:0.4:2,v=0:0:1", "--seed", "5"]
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(argv + ["--output", str(path)]) == 0
        outs.append(path.read_text())
    assert _strip_ts(outs[0]) == _strip_ts(outs[1])
    strip = [l for o in outs for l in o.splitlines() if '"timestamp"' not in l]
    half = len(strip) // 2
    assert strip[:half] == strip[half:]


def test_csv_matches_json(tmp_path):
    base = ["scan", "--surface", "z2z2", "--grid", "t=0:0.5:2,u=0:0:1,v=0:0:1"]
    assert main(base + ["--output", str(tmp_path / "r.json")]) == 0
    assert main(base + ["--output", str(tmp_path / "r.csv")]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    rows = list(csv.DictReader(io.StringIO((tmp_path / "r.csv").read_text())))
    assert len(rows) == 2
    for row, res in zip(rows, doc["results"]):
        assert row["group"] == res["group"]
        assert float(row["params.lambda"]) == res["params"]["lambda"]
        assert float(row["residuals.gauss.value"]) == next(r["value"] for r in res["residuals"] if r["name"] == "gauss")


def test_csv_column_order_stable():
    doc = {"results": [{"b": 1.0, "a": {"x": 2.0}}, {"a": {"x": 0.1}, "b": None, "c": True}]}
    text = to_csv(doc)
    assert text.splitlines()[0] == "b,a.x,c"
    assert text.splitlines()[2] == ",0.1,true"


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("AFFSYM_THREADS", "0")
    code, _, _ = run_main(["scan", "--surface", "unit_sphere3", "--grid", "t=0:1:2,u=0:1:2,v=0:1:2"], capsys)
    assert code == 2
    monkeypatch.setenv("AFFSYM_THREADS", "3")
    code, out, _ = run_main(["scan", "--surface", "unit_sphere3", "--grid", "t=0:1:2,u=0:1:2,v=0:1:2"], capsys)
    assert code == 0 and json.loads(out)["summary"]["histogram"] == {"SO3": 8}
