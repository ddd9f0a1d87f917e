from __future__ import annotations

import json
import subprocess
import sys

import pytest

from qotlab import suite
from qotlab.runtime import UsageError, bits_hex, cli, hex_bits


def run_json(capsys, argv):
    code = cli(argv + ["--out", "-"])
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_hex_helpers():
    assert hex_bits("ff", 8).tolist() == [1] * 8
    assert hex_bits("a", 3).tolist() == [1, 0, 1]
    assert bits_hex([1, 0, 1]) == "a"
    assert bits_hex(hex_bits("0f3c", 16)) == "0f3c"
    with pytest.raises(UsageError):
        hex_bits("fff", 8)
    with pytest.raises(UsageError):
        hex_bits("zz", 8)


def test_qot_run_example(capsys, tmp_path):
    out = tmp_path / "r.json"
    code = cli(["qot", "run", "--lambda", "8", "--b", "1", "--m0-hex", "00", "--m1-hex", "ff",
                "--seed", "7", "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0
    assert "receiver: b=1 output=ff (m1)" in text
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["records"][0]["receiver_output"] == "ff"
    assert rep["config"]["lam"] == 8 and rep["config"]["seed"] == 7


def test_reports_are_reproducible_modulo_timing(capsys):
    argv = ["qot", "run", "--lambda", "4", "--lanes", "3", "--seed", "5"]
    _, a = run_json(capsys, argv)
    _, b = run_json(capsys, argv)
    _, c = run_json(capsys, argv + ["--timing"])
    assert a == b
    assert "timing" in c and "timing" not in a
    c.pop("timing")
    c["config"].pop("timing", None)
    assert c == a


def test_aggregates_recomputable_from_records(capsys):
    _, rep = run_json(capsys, ["qot", "run", "--lambda", "2", "--lanes", "40",
                               "--adversary", "non_measuring_receiver"])
    recs = rep["records"]
    assert rep["aggregate"]["sender_aborts"] == sum(r["sender_aborted"] for r in recs)
    assert rep["aggregate"]["lanes"] == len(recs)


def test_usage_errors_exit_2(capsys):
    assert cli(["qot", "run", "--frobnicate"]) == 2
    assert cli(["qot", "run", "--b", "2", "--out", "-"]) == 2
    assert cli(["qot", "run", "--m0-hex", "0", "--lambda", "8", "--out", "-"]) == 2
    assert cli(["nope"]) == 2
    assert "usage error" in capsys.readouterr().err


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 2, "lanes": 4, "seed": 3}))
    _, rep = run_json(capsys, ["qot", "run", "--config", str(cfg), "--lanes", "2"])
    assert rep["config"]["lam"] == 2 and rep["config"]["lanes"] == 2 and rep["config"]["seed"] == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert cli(["qot", "run", "--config", str(bad), "--out", "-"]) == 2


@pytest.mark.parametrize("layer", ["naor", "equiv", "extcom"])
def test_commit_demo_layers(capsys, layer):
    code, rep = run_json(capsys, ["commit", "demo", "--layer", layer, "--lambda", "2", "--lanes", "4",
                                  "--seed-len", "16"])
    assert code == 0 and rep["aggregate"]["accepted"] == 4


def test_binding_audit_pass_and_fail(capsys):
    code, rep = run_json(capsys, ["binding", "audit", "--prg", "injective", "--seed-len", "3"])
    assert code == 0
    code, rep = run_json(capsys, ["binding", "audit", "--prg", "repeat", "--seed-len", "2"])
    # the repeating generator admits 4/64 double openings, under the 2^-2 union bound
    assert rep["checks"][0]["measured"] == pytest.approx(4 / 64)
    assert code == 0


def test_extract_and_equivocate(capsys):
    code, rep = run_json(capsys, ["extract", "test", "--lambda", "2", "--runs", "20", "--batch", "10"])
    assert code == 0 and rep["aggregate"]["bad"] == 0
    code, rep = run_json(capsys, ["equivocate", "test", "--lambda", "2", "--samples", "4000",
                                  "--seed-len", "16"])
    assert code == 0


def test_labs(capsys):
    code, rep = run_json(capsys, ["sampling", "lab", "--n", "400", "--trials", "2000", "--lambda", "1"])
    assert code == 0 and rep["passed"]
    code, rep = run_json(capsys, ["lhl", "lab", "--n", "6", "--ell", "1", "--h", "2", "6"])
    assert code == 0 and len(rep["checks"]) == 2


def test_rewind_lab_small_eps(capsys):
    code, rep = run_json(capsys, ["rewind", "lab", "--eps", "1e-4", "--count", "3"])
    assert code == 0
    assert {c["status"] for c in rep["checks"]} <= {"pass", "vacuous-pass"}


def test_report_render_csv(capsys, tmp_path):
    path = tmp_path / "lhl.json"
    assert cli(["lhl", "lab", "--n", "6", "--ell", "1", "--h", "3", "--out", str(path)]) == 0
    capsys.readouterr()
    assert cli(["report", "render", str(path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("criterion,name,measured,bound")
    assert len(lines) == 2 and "H_inf=3" in lines[1]
    assert cli(["report", "render", str(tmp_path / "missing.json")]) == 2


def test_suite_failure_names_the_criterion(capsys, monkeypatch):
    def broken(seed):
        return suite.CriterionResult(6, "Broken on purpose",
                                     [suite.Check("x", 2.0, 1.0, "x <= 1")], {})

    monkeypatch.setitem(suite.CRITERIA, 6, broken)
    code = cli(["suite", "run", "--only", "6", "--out", "-"])
    cap = capsys.readouterr()
    assert code == 1
    assert "criterion 6 failed: Broken on purpose" in cap.err
    assert json.loads(cap.out)["failed"] == [6]


def test_suite_is_idempotent(capsys):
    _, a = run_json(capsys, ["suite", "run", "--only", "6", "10"])
    _, b = run_json(capsys, ["suite", "run", "--only", "6", "10"])
    assert a == b and a["passed"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qotlab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
