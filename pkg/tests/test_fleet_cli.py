import json
import subprocess
import sys

import pytest

from qdtune import cli
from qdtune.fleet import CSV_COLUMNS, make_fleet, rows_to_csv, run_fleet
from qdtune.training import TASKS

FAULTS = [{"dead_channel": True}, {"dead_channel": True}, {"unresponsive": ["TB"]}]


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, quick_models):
    d = tmp_path_factory.mktemp("models")
    for t in TASKS:
        quick_models[t].save(d / f"{t}.model.json")
    return d


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def fleet_report(quick_models):
    members = make_fleet(8, 5, FAULTS)
    return run_fleet(members, quick_models, cooldowns=2)


def test_fleet_fault_accounting(fleet_report):
    for sec in fleet_report["sections"]:
        rows = sec["rows"]
        assert sum(r["verdict"] == "failed_iqa" for r in rows) == 2
        assert sum(r["verdict"] == "broken" for r in rows) == 1
        assert sum(r["success"] is not None for r in rows) == 5
        broken = [r for r in rows if r["verdict"] == "broken"][0]
        assert broken["faults"] == "unresponsive:TB"
    s = fleet_report["summary"]
    assert s["devices"] == 16 and s["unfaulted"] == 10


def test_cooldowns_use_fresh_noise(fleet_report):
    a, b = fleet_report["sections"]
    assert [r["device"] for r in a["rows"]] == [r["device"] for r in b["rows"]]
    assert [r["a_max"] for r in a["rows"]] != [r["a_max"] for r in b["rows"]]


def test_fleet_csv_columns(fleet_report):
    rows = fleet_report["sections"][0]["rows"]
    lines = rows_to_csv(rows).splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 9


def test_fleet_construction():
    a, b = make_fleet(8, 5, FAULTS), make_fleet(8, 5, FAULTS)
    assert a == b
    assert len({m.physics.seed for m in a}) == 8
    with pytest.raises(ValueError):
        make_fleet(2, 0, FAULTS)


def test_fleet_does_not_mutate_inputs(quick_models):
    faults = json.loads(json.dumps(FAULTS))
    members = make_fleet(3, 1, faults)
    before = list(members)
    run_fleet(members, quick_models, tune=False)
    assert faults == FAULTS and members == before


def test_unknown_config_key_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"fleet": {"count": 2, "colour": "red"}})
    assert cli.main(["fleet", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "colour" in capsys.readouterr().err


def test_malformed_config_exit_code(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert cli.main(["train", "--config", str(p)]) == 1
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 1


def test_bad_arguments_exit_code():
    with pytest.raises(SystemExit) as e:
        cli.main(["fleet", "--seed", "abc"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["calibrate"])
    assert e.value.code == 1


def test_missing_datasets_is_run_failure(tmp_path, capsys):
    assert cli.main(["train", "--out", str(tmp_path)]) == 2
    assert "run gen-data first" in capsys.readouterr().err


def test_missing_models_is_run_failure(tmp_path):
    assert cli.main(["tune", "--out", str(tmp_path)]) == 2


def test_cli_fleet_is_deterministic(tmp_path, model_dir):
    doc = {"seed": 5, "models": {"dir": str(model_dir)},
           "fleet": {"count": 3, "faults": [{"dead_channel": True}]}}
    cfg = write_cfg(tmp_path / "c.json", doc)
    outs = []
    for name, workers in (("a", 1), ("b", 2)):
        out = tmp_path / name
        assert cli.main(["fleet", "--config", cfg, "--out", str(out), "--workers", str(workers)]) == 0
        outs.append(((out / "fleet.json").read_bytes(), (out / "fleet.csv").read_bytes()))
    assert outs[0] == outs[1]
    rep = json.loads(outs[0][0])
    assert rep["summary"]["failed_iqa"] == 1


def test_cli_characterize_and_tune(tmp_path, model_dir):
    cfg = write_cfg(tmp_path / "c.json", {"models": {"dir": str(model_dir)}, "device": {"seed": 0}})
    assert cli.main(["characterize", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "characterize.json").read_text())
    assert rep["characterization"]["verdict"] == "working"
    assert cli.main(["tune", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "tune.json").read_text())
    assert rep["tuning"]["success"] is True


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qdtune", "fleet", "--config", str(tmp_path / "nope.json")],
                       capture_output=True, text=True)
    assert r.returncode == 1
