import json
import pathlib

import yaml

from fastpath.cli import main

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "scenarios"


def test_bundled_swap_deadlock_passes(capsys):
    code = main(["--scenario", str(SCENARIOS / "swap_deadlock.yaml")])
    out = capsys.readouterr().out
    assert code == 0
    assert "unlocks_completed=" in out
    lines = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    assert int(lines["unlocks_completed"]) > 0
    assert lines["quiesced"] == "true"
    # every registered checker reports exactly once
    checks = [k for k in lines if k.startswith("check.")]
    assert len(checks) == len(set(checks)) == 12
    assert all(lines[k] == "pass" for k in checks)


def test_too_many_byzantine_is_a_schema_error(tmp_path, capsys):
    data = yaml.safe_load((SCENARIOS / "swap_deadlock.yaml").read_text())
    data["faults"] = {"0": {"kind": "equivocator"},
                      "1": {"kind": "vote_withholder"}}
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(data))
    assert main(["--scenario", str(bad)]) == 2


def test_unreadable_scenario_is_exit_2(tmp_path):
    assert main(["--scenario", str(tmp_path / "missing.yaml")]) == 2
    garbled = tmp_path / "garbled.yaml"
    garbled.write_text("{notyaml: [")
    assert main(["--scenario", str(garbled)]) == 2


def test_seed_override_produces_identical_trace_files(tmp_path, capsys):
    out_a = tmp_path / "a.log"
    out_b = tmp_path / "b.log"
    scenario = str(SCENARIOS / "double_send.yaml")
    assert main(["--scenario", scenario, "--seed", "7",
                 "--trace-out", str(out_a)]) == 0
    assert main(["--scenario", scenario, "--seed", "7",
                 "--trace-out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_check_only_round_trip(tmp_path, capsys):
    out = tmp_path / "trace.log"
    assert main(["--scenario", str(SCENARIOS / "unauthorized_unlock.yaml"),
                 "--trace-out", str(out)]) == 0
    capsys.readouterr()
    assert main(["--check-only", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.count("check.") == 12


def test_check_only_flags_doctored_trace(tmp_path, capsys):
    out = tmp_path / "trace.log"
    main(["--scenario", str(SCENARIOS / "swap_deadlock.yaml"),
          "--trace-out", str(out)])
    lines = out.read_text().splitlines()
    doctored = []
    for line in lines:
        record = json.loads(line)
        if record.get("kind") == "ucert_assembled":
            record["authorized"] = False
        doctored.append(json.dumps(record, sort_keys=True,
                                   separators=(",", ":")))
    out.write_text("\n".join(doctored) + "\n")
    capsys.readouterr()
    assert main(["--check-only", str(out)]) == 1
    printed = capsys.readouterr().out
    assert "violation.starvation_freedom" in printed


def test_explore_runs_derived_seeds(capsys):
    code = main(["--scenario", str(SCENARIOS / "unauthorized_unlock.yaml"),
                 "--explore", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "runs=3" in out
    assert "violating_runs=0" in out


def test_explore_hundred_seeds_honest(capsys):
    code = main(["--scenario", str(SCENARIOS / "swap_deadlock.yaml"),
                 "--explore", "100"])
    out = capsys.readouterr().out
    assert code == 0
    assert "violating_runs=0" in out


def test_explore_hundred_seeds_with_equivocator(tmp_path, capsys):
    data = yaml.safe_load((SCENARIOS / "swap_deadlock.yaml").read_text())
    data["faults"] = {"0": {"kind": "equivocator"}}
    path = tmp_path / "equivocator.yaml"
    path.write_text(yaml.safe_dump(data))
    code = main(["--scenario", str(path), "--explore", "100"])
    out = capsys.readouterr().out
    assert code == 0
    assert "violating_runs=0" in out


def test_transfer_summary_reports_two_round_trips(tmp_path, capsys):
    scenario = {
        "committee": {"n": 4, "f": 1},
        "seed": 7, "ticks": 5000,
        "network": {"min_delay": 1, "max_delay": 5},
        "accounts": ["alice", "bob"],
        "objects": [
            {"name": "coin", "kind": "owned", "owner": {"pk": "alice"},
             "contents": 100},
            {"name": "gas_a", "kind": "owned", "owner": {"pk": "alice"},
             "contents": 50},
        ],
        "script": [
            {"at": 5, "client": "alice", "action": "transfer",
             "inputs": ["coin"], "gas": "gas_a", "to": "bob",
             "signers": ["alice"]},
        ],
    }
    path = tmp_path / "transfer.yaml"
    path.write_text(yaml.safe_dump(scenario))
    assert main(["--scenario", str(path)]) == 0
    out = capsys.readouterr().out
    assert "fast_path_round_trips=2" in out
