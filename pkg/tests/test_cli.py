import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import vnlab.config
from vnlab.cli import COMMANDS, build_parser, run
from vnlab.matcore import state_digest
from vnlab.reports import decode_state

BELL = '{"vector": [1, 0, 0, 1]}'
SPLIT = ["--s", "full:2*trivial:2", "--t", "trivial:2*full:2"]
SHRINK_T = '{"kind": "s-algebra", "steps": [{"kind": "shrink-t", "params": {"algebra": "trivial:4"}}]}'
UP_Y = '{"vector": [1, [0, 1]]}'


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch):
    monkeypatch.setattr(vnlab.config, "CONFIG_SEARCH_PATHS", [])
    for name in ("VNLAB_SEED", "VNLAB_RESTARTS", "VNLAB_WORKERS", "VNLAB_TOLERANCE", "VNLAB_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


def _json(capsys) -> dict:
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_parser_knows_every_command():
    parser = build_parser()
    for command in COMMANDS:
        assert parser.parse_args(_minimal(command)).command == command


def _minimal(command: str) -> list:
    return {
        "check-square": ["check-square", "--s", "full:2", "--t", "trivial:2"],
        "cmi": ["cmi", "--s", "full:2", "--t", "trivial:2", "--state", BELL],
        "entropy": ["entropy", "--state", UP_Y],
        "ucr": ["ucr", "--state", BELL],
        "measure": ["measure", "--kind", "isq", "--state", UP_Y, "--s", "pauli:X", "--t", "pauli:Z"],
        "scan": ["scan", "--suite", "ssa"],
        "demo": ["demo", "--name", "converse"],
    }[command]


class TestCommands:
    def test_check_square(self, capsys):
        assert run(["check-square", "--s", "pauli:X", "--t", "pauli:Z"]) == 0
        record = _json(capsys)
        assert record["type"] == "square"
        assert record["commuting"] is True
        assert record["dims"]["intersection"] == 1

    def test_cmi_on_bell_pair(self, capsys, tmp_path):
        out = tmp_path / "cmi.json"
        code = run(["cmi", "--s", "full:2*trivial:2", "--t", "trivial:2*full:2", "--state", BELL,
                    "--json-out", str(out)])
        assert code == 0
        record = _json(capsys)
        assert record["value_bits"] == pytest.approx(2.0)
        assert json.loads(out.read_text())["value_bits"] == pytest.approx(2.0)

    def test_json_out_writes_manifest(self, capsys, tmp_path):
        out = tmp_path / "cmi.json"
        assert run(["cmi", *SPLIT, "--state", BELL, "--json-out", str(out)]) == 0
        manifest = json.loads((tmp_path / "cmi.manifest.json").read_text())
        assert manifest["type"] == "manifest"
        assert manifest["command"] == "cmi"
        assert set(manifest["inputs"]) == {"s", "t", "within", "state"}
        assert manifest["inputs"]["state"] == state_digest(decode_state(json.loads(BELL)))
        assert manifest["outputs"] == [str(out)]
        assert manifest["config"]["arguments"]["state"] == BELL

    @pytest.mark.parametrize("argv", [
        ["check-square", "--s", "full:2", "--t", "trivial:2"],
        ["entropy", "--state", UP_Y, "--algebra", "diag:2"],
        ["ucr", "--state", BELL],
        ["measure", "--kind", "isq", "--state", UP_Y, "--s", "pauli:X", "--t", "pauli:Z"],
        ["demo", "--name", "epr-ucr"],
    ])
    def test_every_command_writes_manifest(self, argv, capsys, tmp_path):
        out = tmp_path / "record.json"
        assert run(argv + ["--json-out", str(out)]) == 0
        manifest = json.loads((tmp_path / "record.manifest.json").read_text())
        assert manifest["command"] == argv[0]
        assert manifest["outputs"] == [str(out)]
        assert json.loads(out.read_text())["schema"] == "vnlab/1"

    def test_cmi_with_plan(self, capsys, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({
            "kind": "s-algebra",
            "steps": [{"kind": "shrink-s", "params": {"algebra": "trivial:4"}}],
        }))
        out = tmp_path / "after.json"
        assert run(["cmi", *SPLIT, "--state", BELL, "--plan", str(plan), "--json-out", str(out)]) == 0
        operation = _json(capsys)["operation"]
        assert operation["before_bits"] == pytest.approx(2.0)
        assert operation["after_bits"] == pytest.approx(0.0, abs=1e-9)
        assert operation["monotone"] is True
        assert operation["steps"] == [{"name": "0:shrink-s", "checks": {"valid": True}}]
        manifest = json.loads((tmp_path / "after.manifest.json").read_text())
        assert set(manifest["inputs"]) == {"s", "t", "state", "plan"}

    def test_cmi_with_recovery(self, capsys):
        state = '{"vector": [1, 0, 0, 0]}'
        assert run(["cmi", "--s", "full:2*trivial:2", "--t", "trivial:2*full:2", "--state", state,
                    "--recovery"]) == 0
        record = _json(capsys)
        assert record["certificate"]["recovery_method"] == "universal"

    def test_entropy(self, capsys):
        assert run(["entropy", "--state", '{"vector": [1, 1]}', "--algebra", "diag:2"]) == 0
        record = _json(capsys)
        assert record["vn_bits"] == pytest.approx(0.0, abs=1e-9)
        assert record["algebra_bits"] == pytest.approx(1.0)
        assert record["asymmetry_bits"] == pytest.approx(1.0)
        assert record["asymmetry_exact"] is True

    def test_infinite_divergence(self, capsys):
        assert run(["entropy", "--state", '[[0.5, 0], [0, 0.5]]', "--sigma", '{"vector": [1, 0]}']) == 0
        assert _json(capsys)["divergence_bits"] == "inf"

    def test_memory_relation(self, capsys):
        assert run(["ucr", "--state", BELL]) == 0
        record = _json(capsys)
        assert record["relation"] == "memory"
        assert record["margin"] == pytest.approx(0.0, abs=1e-9)

    def test_coherence_relation(self, capsys):
        assert run(["ucr", "--relation", "coherence", "--state", '{"vector": [1, 0]}']) == 0
        assert _json(capsys)["cmi_bits"] == pytest.approx(0.0, abs=1e-9)

    def test_measure(self, capsys):
        assert run(["measure", "--kind", "isq", "--state", UP_Y, "--s", "pauli:X", "--t", "pauli:Z"]) == 0
        captured = capsys.readouterr()
        record = json.loads(captured.out.strip().splitlines()[-1])
        assert record["value_bits"] == pytest.approx(0.5)
        assert "exact" in captured.err

    def test_demo(self, capsys):
        assert run(["demo", "--name", "epr-ucr"]) == 0
        record = _json(capsys)
        assert record["type"] == "transcript"
        assert record["passed"] is True

    def test_scan_writes_records_and_manifest(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("VNLAB_WORKERS", "2")
        out = tmp_path / "ssa"
        assert run(["scan", "--suite", "ssa", "--dims", "2,3", "--samples", "3", "--out", str(out)]) == 0
        lines = [json.loads(line) for line in (out / "records.ndjson").read_text().splitlines()]
        assert [line["type"] for line in lines] == ["instance"] * 3 + ["summary"]
        assert all(line["schema"] == "vnlab/1" for line in lines)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["workers"] == 2
        assert manifest["config"]["dims"] == [2, 3]
        assert "ssa" in capsys.readouterr().out


class TestExitCodes:
    @pytest.mark.parametrize("argv", [
        ["check-square", "--s", "cartan:2", "--t", "full:2"],
        ["cmi", "--s", "full:2", "--t", "full:2", "--state", '{"vector": [0, 0]}'],
        ["measure", "--kind", "isq", "--state", BELL, "--s", "diag:4", "--t", "diag:4"],
        ["scan", "--suite", "ssa", "--dims", "2,x"],
        ["demo", "--name", "teleport"],
        ["ucr", "--state", BELL, "--x", "mub:2:0", "--z", "mub:2:0"],
        ["cmi", *SPLIT, "--state", BELL, "--plan", SHRINK_T],
        ["cmi", *SPLIT, "--state", BELL, "--within", "full:4", "--plan", SHRINK_T],
    ])
    def test_bad_input_is_two(self, argv, capsys):
        assert run(argv) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run(["--config", str(tmp_path / "none.yaml"), "demo", "--name", "converse"]) == 2

    def test_bad_tolerance(self):
        assert run(["--tolerance", "-1", "demo", "--name", "converse"]) == 2

    def test_config_file_is_used(self, tmp_path, capsys):
        cfg = tmp_path / "vnlab.yaml"
        cfg.write_text("seed: 9\nconverse_budget: 500\n")
        assert run(["--config", str(cfg), "demo", "--name", "converse"]) in (0, 1)
        assert _json(capsys)["seed"] == 9
