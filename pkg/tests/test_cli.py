import csv
import io
import json
import subprocess
import sys

import pytest

from blockroam.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- security-table ----------------------------------------------------------

def test_security_table_defaults(capsys):
    code, out, _ = run(capsys, "security-table")
    rows = table(out)
    assert code == 0 and len(rows) == 8
    assert [r["blockroam_minutes"] for r in rows] == \
        ["1.0", "1.3", "1.6", "1.6", "2.0", "2.3", "2.6", "3.0"]
    assert rows[0]["adversarial_ratio"] == "0.10" and rows[-1]["kappa"] == "9"


def test_security_table_loose_target_needs_fewer_blocks(capsys):
    strict = table(run(capsys, "security-table")[1])
    loose = table(run(capsys, "security-table", "--target", "0.5")[1])
    assert all(int(a["kappa"]) < int(b["kappa"]) for a, b in zip(loose, strict))


def test_security_table_slot_time_scales(capsys):
    base = table(run(capsys, "security-table")[1])
    slow = table(run(capsys, "security-table", "--slot-time", "40")[1])
    for a, b in zip(base, slow):
        assert float(b["blockroam_minutes"]) == pytest.approx(2 * int(a["kappa"]) * 20 / 60,
                                                              abs=0.1)
        assert float(b["blockroam_minutes"]) == 2 * int(a["kappa"]) * 20 // 6 / 10


def test_security_table_bad_target(capsys):
    code, _, err = run(capsys, "security-table", "--target", "1.5")
    assert code == 2 and json.loads(err)["error"] == "data"


# -- exit codes and errors ---------------------------------------------------

def test_usage_errors(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and json.loads(err)["exit_code"] == 1
    code, _, err = run(capsys, "game", "table3")
    assert code == 1 and "needs --seed" in json.loads(err)["message"]


def test_malformed_instance_reports_line(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "n": 1,\n  "budgets": [1,\n}')
    code, _, err = run(capsys, "game", "solve", str(bad))
    msg = json.loads(err)
    assert code == 2 and msg["message"].startswith(f"{bad}:4:")


def test_config_key_diagnostic(capsys, tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text('{\n  "epochs": 1,\n  "paramz": {}\n}\n')
    code, _, err = run(capsys, "simulate", "--seed", "1", "--config", str(cfg))
    assert code == 2 and f"{cfg}:3" in json.loads(err)["message"]


def test_bad_params_diagnostic(capsys, tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text('{\n  "params": {"epoch_length": 0}\n}\n')
    code, _, err = run(capsys, "simulate", "--seed", "1", "--config", str(cfg))
    assert code == 2 and f"{cfg}:2" in json.loads(err)["message"]


# -- simulate ----------------------------------------------------------------

def test_simulate_honest_growth(capsys):
    code, out, _ = run(capsys, "simulate", "--seed", "5")
    summary = json.loads(out)["summary"]
    assert code == 0 and summary["growth"] == 100 and summary["slashes"] == 0


def test_simulate_monte_carlo(capsys, tmp_path):
    cfg = tmp_path / "mc.json"
    cfg.write_text(json.dumps({"mode": "monte-carlo", "monte_carlo": {
        "adversarial_ratio": 0.3, "depth": 3, "epoch_slots": 100, "trials": 20000}}))
    code, out, _ = run(capsys, "simulate", "--seed", "2", "--config", str(cfg))
    assert code == 0 and json.loads(out)["within_3_sigma"] is True


def test_simulate_events_file(capsys, tmp_path):
    ev = tmp_path / "events.jsonl"
    run(capsys, "simulate", "--seed", "5", "--events", str(ev))
    lines = ev.read_text().splitlines()
    assert json.loads(lines[0])["event"] == "epoch-start"
    assert json.loads(lines[-1])["event"] == "coin-toss"


# -- game and roaming --------------------------------------------------------

def test_game_solve_fixtures(capsys):
    g1 = json.loads(run(capsys, "game", "solve", "g1")[1])
    assert g1["alpha"] == 0 and round(g1["c"], 2) == 14.84
    g3 = table(run(capsys, "game", "solve", "g3", "--format", "csv")[1])[0]
    assert g3["U_star_p"] == "1.191" and g3["alpha_star_percent"] == "3.039"


def test_game_generate_round_trips(capsys, tmp_path):
    code, out, _ = run(capsys, "game", "generate", "--seed", "3", "--budget-range", "1", "20",
                       "--cost-range", "0.01", "1", "--n", "6", "--sigma", "5", "--reward", "10")
    path = tmp_path / "inst.json"
    path.write_text(out)
    code, solved, _ = run(capsys, "game", "solve", str(path), "--method", "subset")
    assert code == 0 and json.loads(solved)["solver"] == "subset-lp"


def test_game_table3_rows(capsys):
    code, out, _ = run(capsys, "game", "table3", "--seed", "0", "--rows", "G4", "G9")
    rows = table(out)
    assert code == 0 and [r["G"] for r in rows] == ["G4", "G9"]
    assert rows[0]["published_pool_stake_percent"] == "69.5"


def test_roaming_demo(capsys):
    out = json.loads(run(capsys, "roaming", "demo")[1])
    assert len(out["steps"]) == 7 and out["conservation"] == "exact"
    assert out["fraud_timeline"]["t_confirm_min"] == 3.0


def test_roaming_underfunded(capsys, tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"units": "20"}))
    out = json.loads(run(capsys, "roaming", "demo", "--config", str(cfg))[1])
    assert out["steps"][5]["underfunded"] is True


def test_attack_all_csv(capsys):
    code, out, _ = run(capsys, "attack", "all", "--seed", "0", "--format", "csv")
    assert code == 0 and {r["succeeded"] for r in table(out)} == {"false"}


# -- determinism -------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["security-table"],
    ["simulate", "--seed", "9"],
    ["game", "generate", "--seed", "4", "--row", "G13"],
    ["roaming", "demo", "--format", "csv"],
    ["attack", "nothing-at-stake", "--seed", "1"],
])
def test_byte_identical_reruns(capsys, argv):
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_out_flag_and_module_entry(tmp_path):
    dest = tmp_path / "t.csv"
    res = subprocess.run([sys.executable, "-m", "blockroam", "security-table", "--out", str(dest)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == ""
    assert dest.read_text().startswith("adversarial_ratio,kappa,blockroam_minutes")
