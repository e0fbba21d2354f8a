import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vnlab.errors import InputError
from vnlab.matcore import as_rng
from vnlab.scan import SUITES, instance_seed, random_commuting_square, run_instance, run_scan
from vnlab.squares import _classify_fast


def test_instance_seeds_are_stable_and_distinct():
    assert instance_seed(0, "ssa", 0) == instance_seed(0, "ssa", 0)
    seeds = {instance_seed(0, suite, i) for suite in SUITES for i in range(20)}
    assert len(seeds) == len(SUITES) * 20
    assert 0 <= instance_seed(7, "ucr", 3) < 2**64


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_generated_squares_commute(d):
    rng = as_rng(instance_seed(1, "gen", d))
    for _ in range(3):
        s, t, m, family = random_commuting_square(d, rng)
        assert family in ("nested", "tensor", "mub")
        assert _classify_fast(s, t, m).is_commuting


class TestRunScan:
    def test_records_do_not_depend_on_workers(self):
        serial, _ = run_scan("ssa", [2, 4], samples=6, seed=11, workers=1)
        pooled, _ = run_scan("ssa", [2, 4], samples=6, seed=11, workers=3)
        assert serial == pooled
        assert [r["index"] for r in pooled] == list(range(6))

    def test_dims_cycle(self):
        records, summary = run_scan("ssa", [2, 3], samples=4, seed=0, workers=1)
        assert [r["dim"] for r in records] == [2, 3, 2, 3]
        assert summary.dims == [2, 3]

    @pytest.mark.parametrize("suite, dims", [
        ("ssa", [2, 3, 4]),
        ("recovery", [2, 4]),
        ("ucr", [2, 3]),
        ("duality", [2, 3, 4, 8]),
    ])
    def test_suites_hold(self, suite, dims):
        records, summary = run_scan(suite, dims, samples=6, seed=5, workers=2)
        assert summary.passed, [r for r in records if not r.get("passed")]
        assert summary.min_margin >= -summary.tolerance
        assert summary.to_dict()["passed"] is True

    def test_monotonicity_never_fails(self):
        records, summary = run_scan("mono", [2, 4], samples=6, seed=2, workers=2)
        assert summary.failures == 0
        for record in records:
            if "error" not in record:
                assert len(record["applied"]) + record["rejected"] == 3

    def test_memory_records_identity(self):
        record = run_instance("ucr", [2], 0, 0, 1e-9)
        for i in range(1, 20):
            if record["relation"] == "memory":
                break
            record = run_instance("ucr", [2], 0, i, 1e-9)
        assert record["relation"] == "memory"
        assert record["identity_ok"]
        assert record["margin"] == pytest.approx(record["cmi_bits"], abs=1e-8)

    @pytest.mark.parametrize("kwargs", [
        {"suite": "entropy", "dims": [2], "samples": 1},
        {"suite": "ssa", "dims": [], "samples": 1},
        {"suite": "ssa", "dims": [1], "samples": 1},
        {"suite": "ssa", "dims": [2], "samples": 0},
    ])
    def test_input_errors(self, kwargs):
        with pytest.raises(InputError):
            run_scan(**kwargs)

    def test_tolerance_override(self):
        _, summary = run_scan("ssa", [2], samples=1, seed=0, workers=1, tol=0.5)
        assert summary.tolerance == 0.5
        assert np.isfinite(summary.min_margin)
