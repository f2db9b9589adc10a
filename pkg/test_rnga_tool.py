import argparse
import json

import pytest

import rnga_tool
from loop_pairing import NoViablePairing
from plant_model import load_plant_file
from rnga_tool import (
    EXIT_INFEASIBLE_PAIRING,
    EXIT_INVALID_INPUT,
    EXIT_OK,
    EXIT_PROPERTY_FAILURE,
    main,
    parse_lambda_override,
)
from settings import load_settings


def write_plant(tmp_path, doc, name="plant.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def test_analyze_both(radiator_path, capsys):
    assert main(["analyze", "--plant", str(radiator_path)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert {"RGA", "RNGA"} <= set(doc["arrays"])
    assert doc["pairing"] == "absent"


def test_analyze_single_channel(tmp_path, capsys):
    doc = {"plant": {"name": "one", "outputs": ["Y"], "inputs": ["U"]},
           "element": [{"output": 1, "input": 1, "kind": "fopdt", "gain": 3.0, "tau": 4.0, "deadtime": 1.0}]}
    assert main(["analyze", "--plant", write_plant(tmp_path, doc)]) == EXIT_OK
    arrays = json.loads(capsys.readouterr().out)["arrays"]
    assert arrays["RGA"]["values"][0][0] == pytest.approx(1.0, abs=1e-15)
    assert arrays["RNGA"]["values"][0][0] == pytest.approx(1.0, abs=1e-15)


def test_malformed_plant_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    out = tmp_path / "report.json"
    assert main(["analyze", "--plant", str(bad), "--out", str(out)]) == EXIT_INVALID_INPUT
    assert not out.exists()
    assert capsys.readouterr().out == ""


def test_plant_with_unused_input_is_invalid(tmp_path):
    cells = [{"output": i, "input": j, "kind": "fopdt", "gain": 0.0 if j == 2 else 1.0 + i * j,
              "tau": 5.0, "deadtime": 1.0}
             for i in (1, 2) for j in (1, 2, 3)]
    doc = {"plant": {"name": "dead-input", "outputs": ["Y1", "Y2"], "inputs": ["U1", "U2", "U3"]},
           "element": cells}
    out = tmp_path / "pairing.json"
    assert main(["pair", "--plant", write_plant(tmp_path, doc), "--out", str(out)]) == EXIT_INVALID_INPUT
    assert not out.exists()


def test_pair_table_output(radiator_path, tmp_path):
    out = tmp_path / "pairing.txt"
    assert main(["pair", "--plant", str(radiator_path), "--format", "table", "--out", str(out)]) == EXIT_OK
    text = out.read_text(encoding="utf-8")
    assert "RNGA: Y1-U1/Y2-U2" in text
    assert "RGA: Y1-U3/Y2-U4" in text
    assert list(tmp_path.iterdir()) == [out]


def test_infeasible_pairing_exit_code(radiator_path, monkeypatch, tmp_path):
    def no_pairing(*args, **kwargs):
        raise NoViablePairing("every RGA matching contains a non-positive element")

    monkeypatch.setattr(rnga_tool, "recommend", no_pairing)
    out = tmp_path / "pairing.json"
    assert main(["pair", "--plant", str(radiator_path), "--out", str(out)]) == EXIT_INFEASIBLE_PAIRING
    assert not out.exists()


def test_lambda_override_parsing():
    assert parse_lambda_override("2=30") == rnga_tool.LambdaOverride(1, None, 30.0)
    assert parse_lambda_override("1-3=12.5") == rnga_tool.LambdaOverride(0, 2, 12.5)
    for bad in ("2", "x=1", "1-2-3=4", "0=1", "1=-2"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_lambda_override(bad)


def test_tune_with_overrides(radiator_path, capsys):
    args = ["tune", "--plant", str(radiator_path), "--lambda-f", "1-1=20", "--lambda-f", "2=25"]
    assert main(args) == EXIT_OK
    tuning = json.loads(capsys.readouterr().out)["tuning"]
    assert [row["lambda_f"] for row in tuning["RNGA"]] == [20.0, 25.0]
    assert [row["lambda_f"] for row in tuning["RGA"]] == [18.67, 25.0]


def test_override_for_unknown_loop(radiator_path):
    args = ["tune", "--plant", str(radiator_path), "--lambda-f", "1-2=20"]
    assert main(args) == EXIT_INVALID_INPUT


def test_bad_arguments():
    assert main(["pair"]) == EXIT_INVALID_INPUT
    assert main(["analyze", "--plant", "x.json", "--basis", "neither"]) == EXIT_INVALID_INPUT


def test_simulate_rejects_short_horizon(radiator_path, tmp_path):
    out = tmp_path / "sim"
    args = ["simulate", "--plant", str(radiator_path), "--horizon", "10", "--out", str(out)]
    assert main(args) == EXIT_INVALID_INPUT
    assert not out.exists()


def test_simulate_writes_outputs(radiator_path, tmp_path, capsys):
    out = tmp_path / "sim"
    args = ["simulate", "--plant", str(radiator_path), "--step-output", "1", "--horizon", "40",
            "--step-size", "0.05", "--out", str(out), "--xlsx", str(tmp_path / "r.xlsx"),
            "--db", str(tmp_path / "runs.db")]
    assert main(args) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["metrics.json", "plant.json", "report.json", "settings.json",
                     "trace_rga_yr1.csv", "trace_rnga_yr1.csv"]
    assert load_plant_file(out / "plant.json") == load_plant_file(radiator_path)
    used = load_settings(out / "settings.json")
    assert (used.horizon, used.step_size) == (40.0, 0.05)
    metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert [run["scenario"] for run in metrics["runs"]] == [
        "RNGA Y1-U1/Y2-U2, step Yr1", "RGA Y1-U3/Y2-U4, step Yr1"]
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert [row["output"] for row in report["comparison"]["step Yr1"]] == ["Y1", "Y2"]
    assert (tmp_path / "r.xlsx").exists()
    assert (tmp_path / "runs.db").exists()


def test_settings_file(radiator_path, tmp_path):
    settings = tmp_path / "settings.json"
    settings.write_text(json.dumps({"horizon": 5.0}), encoding="utf-8")
    args = ["simulate", "--plant", str(radiator_path), "--settings", str(settings)]
    assert main(args) == EXIT_INVALID_INPUT
    settings.write_text(json.dumps({"colour": "red"}), encoding="utf-8")
    assert main(["analyze", "--plant", str(radiator_path), "--settings", str(settings)]) == EXIT_INVALID_INPUT


def test_verify_is_deterministic(capsys):
    assert main(["verify", "--trials", "25", "--seed", "5", "--format", "table"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["verify", "--trials", "25", "--seed", "5", "--format", "table", "--workers", "3"]) == EXIT_OK
    assert capsys.readouterr().out == first
    assert "RESULT: PASS" in first


def test_verify_empty(capsys):
    assert main(["verify", "--trials", "0"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["trials"] == 0


def test_verify_failure_exit_code(monkeypatch, capsys):
    from property_suite import PropertyCheck

    monkeypatch.setattr("property_suite._trial",
                        lambda seed, index, max_r, max_s: [PropertyCheck("row_sums", False, 1.0)])
    assert main(["verify", "--trials", "2"]) == EXIT_PROPERTY_FAILURE
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_verify_rejects_bad_sizes():
    assert main(["verify", "--max-r", "4", "--max-s", "4"]) == EXIT_INVALID_INPUT


def test_history_lists_recorded_runs(radiator_path, tmp_path, capsys):
    db = str(tmp_path / "runs.db")
    assert main(["pair", "--plant", str(radiator_path), "--db", db]) == EXIT_OK
    args = ["simulate", "--plant", str(radiator_path), "--step-output", "2", "--horizon", "30",
            "--step-size", "0.05", "--db", db]
    assert main(args) == EXIT_OK
    capsys.readouterr()

    assert main(["history", "--db", db]) == EXIT_OK
    runs = json.loads(capsys.readouterr().out)["runs"]
    assert [(r["id"], r["command"], r["pairs"]) for r in runs] == [(1, "pair", 4), (2, "simulate", 4)]
    assert runs[1]["metrics"] == 2 * (2 + 4)

    assert main(["history", "--db", db, "--run", "2", "--format", "table"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "simulate" in text and "pair " not in text
    assert "step Yr2" in text and "ISCI" in text

    assert main(["history", "--db", db, "--run", "9"]) == EXIT_INVALID_INPUT
    assert main(["history", "--db", str(tmp_path / "missing.db")]) == EXIT_INVALID_INPUT
    assert not (tmp_path / "missing.db").exists()
