import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vnlab.algebra import diagonal, full, same_span, tensor_algebra
from vnlab.errors import InputError
from vnlab.matcore import projector
from vnlab.measures import isq_estimate
from vnlab.reports import (
    SCHEMA,
    RunManifest,
    decode_matrix,
    decode_state,
    encode_algebra,
    encode_matrix,
    parse_algebra,
    parse_channel,
    parse_plan,
    read_ndjson,
    resolve_input,
    to_record,
    write_ndjson,
)
from vnlab.scenarios import UP_Y, Transcript
from vnlab.squares import gen_cmi
from vnlab.ucr import coherence_ucr


class TestMatrices:
    def test_complex_entries(self):
        m = np.array([[1, 1j], [-1j, 2]])
        encoded = encode_matrix(m)
        assert encoded["dim"] == [2, 2]
        assert encoded["entries"][0][1] == [0.0, 1.0]
        assert np.allclose(decode_matrix(encoded), m)

    def test_bare_lists(self):
        assert np.allclose(decode_matrix([[0.5, 0], [0, 0.5]]), np.eye(2) / 2)

    @pytest.mark.parametrize("bad", [
        [],
        [[1, 2], [3]],
        [["a", 0], [0, 1]],
        {"dim": [3, 3], "entries": [[1, 0], [0, 1]]},
        [[float("nan"), 0], [0, 1]],
    ])
    def test_malformed(self, bad):
        with pytest.raises(InputError):
            decode_matrix(bad)

    def test_states(self):
        rho = decode_state({"vector": [1, [0, 1]]})
        assert np.allclose(rho, projector(UP_Y))
        with pytest.raises(InputError):
            decode_state({"vector": [0, 0]})
        with pytest.raises(InputError):
            decode_state([[1, 0], [0, 1]])
        with pytest.raises(InputError):
            decode_state([[1, 0, 0], [0, 0, 0]])


class TestAlgebraNames:
    def test_named(self):
        assert parse_algebra("full:3").dim == 9
        assert parse_algebra("trivial:4").dim == 1
        assert parse_algebra("diag:3").dim == 3
        assert parse_algebra("pauli:X").dim == 2
        assert parse_algebra("mub:3:2").ambient_dim == 3

    def test_tensor_product(self):
        alg = parse_algebra("pauli:Z*full:2")
        assert alg.label == "pauli:Z*full:2"
        assert same_span(alg, tensor_algebra(diagonal(2), full(2)))

    @pytest.mark.parametrize("name", ["", "full", "full:0", "pauli:Q", "mub:4:0", "mub:3:9", "cartan:2"])
    def test_bad_names(self, name):
        with pytest.raises(InputError):
            parse_algebra(name)

    def test_generators(self):
        alg = parse_algebra({"ambient_dim": 2, "generators": [[[1, 0], [0, -1]]]})
        assert same_span(alg, diagonal(2))
        encoded = encode_algebra(alg)
        assert encoded["dim"] == 2 and len(encoded["generators"]) == 2
        with pytest.raises(InputError):
            parse_algebra({"ambient_dim": 3, "generators": [[[1, 0], [0, -1]]]})


class TestPlans:
    def test_channel(self):
        phi = parse_channel({"kraus": [[[0, 1], [1, 0]]], "label": "flip"})
        assert phi.label == "flip"
        assert np.allclose(phi.apply(projector([1, 0])), projector([0, 1]))
        with pytest.raises(InputError):
            parse_channel({"kraus": [[[1, 0], [0, 0]]]})
        with pytest.raises(InputError):
            parse_channel([[1, 0], [0, 1]])

    def test_plan_params_are_decoded(self):
        plan = parse_plan({
            "kind": "s-algebra",
            "steps": [
                {"kind": "unitary-rename", "params": {"unitary": [[0, 1], [1, 0]]}},
                {"kind": "shrink-s", "params": {"algebra": "trivial:2"}},
            ],
        })
        assert [s.kind for s in plan.steps] == ["unitary-rename", "shrink-s"]
        assert plan.steps[0].params["unitary"].shape == (2, 2)
        assert plan.steps[1].params["algebra"].dim == 1
        assert plan.dims is None

    def test_bad_plans(self):
        with pytest.raises(InputError):
            parse_plan({"kind": "u-state", "steps": []})
        with pytest.raises(InputError):
            parse_plan({"kind": "s-state", "steps": [{"params": {}}]})


class TestRecords:
    def test_square_report(self):
        report = gen_cmi(diagonal(2), parse_algebra("pauli:X"), full(2), projector([1, 0]))
        record = to_record(report)
        assert record["schema"] == SCHEMA
        assert record["type"] == "square_report"
        assert set(record["terms"]) == {"H_A", "H_B", "H_M", "H_C"}
        json.dumps(record)

    def test_estimate_with_witness(self):
        est = isq_estimate(parse_algebra("pauli:X"), parse_algebra("pauli:Z"), projector(UP_Y))
        record = to_record(est)
        assert record["type"] == "estimate"
        assert record["value_bits"] == pytest.approx(0.5)
        assert record["exactness"] == est.exactness
        json.dumps(record)

    def test_ucr_and_transcript(self):
        ucr = to_record(coherence_ucr(np.eye(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), projector([1, 0])))
        assert ucr["relation"] == "coherence"
        assert ucr["passed"] is True
        transcript = Transcript("t", seed=3)
        transcript.add("step", True, value=np.float64(math.inf), matrix=np.eye(2))
        record = to_record(transcript)
        assert record["steps"][0]["values"]["value"] == "inf"
        assert record["steps"][0]["values"]["matrix"]["dim"] == [2, 2]

    def test_plain_dict_and_unknown(self):
        assert to_record({"x": np.int64(2)}) == {"schema": SCHEMA, "x": 2}
        with pytest.raises(TypeError):
            to_record(object())


class TestFiles:
    def test_resolve_input(self, tmp_path):
        assert resolve_input("full:2") == "full:2"
        assert resolve_input('{"a": 1}') == {"a": 1}
        doc = tmp_path / "state.yaml"
        doc.write_text("vector: [1, 0]\n")
        assert resolve_input(str(doc)) == {"vector": [1, 0]}
        with pytest.raises(InputError):
            resolve_input("{not json")
        with pytest.raises(InputError):
            resolve_input(str(tmp_path / "missing.json"))

    def test_invalid_json_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        with pytest.raises(InputError):
            resolve_input(str(bad))

    def test_ndjson(self, tmp_path):
        records = [{"b": 1, "a": 2}, {"c": [1, 2]}]
        path = write_ndjson(tmp_path / "out" / "scan.ndjson", records)
        assert read_ndjson(path) == records
        assert path.read_text().splitlines()[0] == '{"a": 2, "b": 1}'

    def test_manifest(self, tmp_path):
        manifest = RunManifest("cmi", {"seed": 0})
        manifest.add_input("state", np.eye(2) / 2)
        manifest.add_input("s", "full:2")
        path = manifest.write(tmp_path)
        data = json.loads(path.read_text())
        assert data["type"] == "manifest"
        assert len(data["inputs"]["state"]) == 64
        other = RunManifest("cmi", {"seed": 0})
        other.add_input("state", np.eye(2) / 2)
        other.add_input("s", "full:2")
        assert other.reproducible_key() == manifest.reproducible_key()

    def test_manifest_beside_output(self, tmp_path):
        manifest = RunManifest("entropy", {"seed": 0}, outputs=[str(tmp_path / "h.json")])
        path = manifest.write_beside(tmp_path / "h.json")
        assert path.name == "h.manifest.json"
        assert json.loads(path.read_text())["outputs"] == [str(tmp_path / "h.json")]
