import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vnlab.algebra import basis_algebra, diagonal, full, pauli_algebra, tensor_algebra, trivial
from vnlab.entropy import entropy_bits
from vnlab.errors import NotCommutingSquare, NotFactor, NotNested
from vnlab.matcore import PAULIS, haar_unitary, partial_trace, projector, random_density, random_state_vector
from vnlab.squares import (
    chain_rule,
    four_terms,
    gen_cmi,
    recovery_certificate,
    recovery_gap,
    square_info,
    square_value,
    ssa_converse_search,
    duality_check,
)

A = tensor_algebra(full(2), trivial(2))
B = tensor_algebra(trivial(2), full(2))
BELL = projector(np.array([1, 0, 0, 1]) / np.sqrt(2))

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _rotated(theta: float):
    return basis_algebra(scipy.linalg.expm(-0.5j * theta * PAULIS["Y"]))


def _mutual_information(rho) -> float:
    return (entropy_bits(partial_trace(rho, [2, 2], [0])) + entropy_bits(partial_trace(rho, [2, 2], [1]))
            - entropy_bits(rho))


class TestSquareFunctional:
    def test_terms_use_ambient_entropies(self):
        h_a, h_b, h_m, h_c = four_terms(A, B, full(4), trivial(4), BELL)
        assert h_a == pytest.approx(1.0 + 1.0)
        assert h_b == pytest.approx(2.0)
        assert h_m == pytest.approx(0.0, abs=1e-9)
        assert h_c == pytest.approx(2.0)

    def test_tensor_split_is_mutual_information(self):
        assert gen_cmi(A, B, full(4), BELL).value_bits == pytest.approx(2.0)
        rho = random_density(4, seed=3)
        assert gen_cmi(A, B, full(4), rho).value_bits == pytest.approx(_mutual_information(rho))

    def test_report_fields(self):
        report = gen_cmi(pauli_algebra("X"), pauli_algebra("Z"), full(2), projector([1, 0]))
        assert report.value == report.value_bits
        assert report.certificate["nonneg_ok"]
        assert len(report.state_hash) == 64
        assert report.square.is_commuting

    def test_refuses_non_commuting(self):
        with pytest.raises(NotCommutingSquare):
            gen_cmi(diagonal(2), _rotated(np.pi / 6), full(2), np.eye(2) / 2)

    def test_raw_evaluation_allows_negative(self):
        rot = _rotated(np.pi / 6)
        report = square_info(diagonal(2), full(2), trivial(2), rot, projector([1, 0]))
        assert not report.square.is_commuting
        assert report.value_bits < -0.5
        assert not report.certificate["nonneg_ok"]

    def test_nesting_enforced(self):
        with pytest.raises(NotNested):
            square_info(full(2), diagonal(2), trivial(2), diagonal(2), np.eye(2) / 2)


@settings(deadline=None, max_examples=25)
@given(seeds)
def test_strong_subadditivity(seed):
    ab = tensor_algebra(full(2), full(2), trivial(2))
    bc = tensor_algebra(trivial(2), full(2), full(2))
    b = tensor_algebra(trivial(2), full(2), trivial(2))
    rho = random_density(8, seed=seed)
    assert square_value(ab, bc, full(8), b, rho) >= -1e-9


class TestChainRule:
    def test_splits_into_two_squares(self):
        m = full(8)
        a = tensor_algebra(full(2), full(2), trivial(2))
        b = tensor_algebra(trivial(2), trivial(2), full(2))
        s_mid = tensor_algebra(full(2), trivial(2), trivial(2))
        t_mid = tensor_algebra(full(2), trivial(2), full(2))
        rho = random_density(8, seed=21)
        first, second = chain_rule(a, m, trivial(8), b, s_mid, t_mid, rho)
        whole = square_info(a, m, trivial(8), b, rho)
        assert first.value_bits + second.value_bits == pytest.approx(whole.value_bits, abs=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_commuting_lower_square_bounds_upper(self, seed):
        m = full(8)
        a = tensor_algebra(full(2), full(2), trivial(2))
        b = tensor_algebra(trivial(2), trivial(2), full(2))
        s_mid = tensor_algebra(full(2), trivial(2), trivial(2))
        t_mid = tensor_algebra(full(2), trivial(2), full(2))
        rho = random_density(8, seed=100 + seed)
        first, second = chain_rule(a, m, trivial(8), b, s_mid, t_mid, rho)
        whole = square_info(a, m, trivial(8), b, rho)
        assert second.square.is_commuting
        assert first.value_bits + second.value_bits == pytest.approx(whole.value_bits, abs=1e-10)
        assert first.value_bits <= whole.value_bits + 1e-9


class TestRecovery:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_universal_bound(self, seed):
        rho = random_density(4, seed=seed)
        report = recovery_certificate(A, B, full(4), rho)
        gap = report.certificate["recovery_gap"]
        assert gap >= -1e-9
        assert report.value_bits >= gap - 1e-6
        assert report.certificate["recovery_method"] == "universal"

    def test_product_state_recovers_exactly(self):
        rho = np.kron(random_density(2, seed=4), random_density(2, seed=5))
        assert recovery_gap(A, B, full(4), rho) == pytest.approx(0.0, abs=1e-6)
        assert recovery_gap(A, B, full(4), rho, method="petz") == pytest.approx(0.0, abs=1e-6)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            recovery_gap(A, B, full(4), np.eye(4) / 4, method="twirl")


class TestConverse:
    def test_rotated_pair_violates(self):
        found, witness = ssa_converse_search(diagonal(2), _rotated(np.pi / 6), full(2), budget=2000, seed=0)
        assert found
        assert square_value(diagonal(2), _rotated(np.pi / 6), full(2), trivial(2), witness) < -1e-6

    def test_commuting_square_has_no_witness(self):
        assert ssa_converse_search(pauli_algebra("X"), pauli_algebra("Z"), full(2)) == (False, None)


class TestDuality:
    def test_ghz_both_sides_one_bit(self):
        s = tensor_algebra(full(2), trivial(2), trivial(2))
        t = tensor_algebra(trivial(2), full(2), trivial(2))
        ghz = np.zeros(8)
        ghz[0] = ghz[7] = 1 / np.sqrt(2)
        lhs, rhs = duality_check(s, t, full(8), ghz)
        assert lhs == pytest.approx(1.0, abs=1e-8)
        assert rhs == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("seed", [3, 11])
    def test_rotated_tripartite_split(self, seed):
        u = haar_unitary(8, seed=seed)
        s = tensor_algebra(full(2), trivial(2), trivial(2)).conjugate(u)
        t = tensor_algebra(trivial(2), full(2), trivial(2)).conjugate(u)
        lhs, rhs = duality_check(s, t, full(8), random_state_vector(8, seed=seed + 1))
        assert lhs == pytest.approx(rhs, abs=1e-7)

    @pytest.mark.parametrize("seed", [0, 7, 42])
    def test_tripartite_split(self, seed):
        s = tensor_algebra(full(2), trivial(2), trivial(2))
        t = tensor_algebra(trivial(2), full(2), trivial(2))
        lhs, rhs = duality_check(s, t, full(8), random_state_vector(8, seed=seed))
        assert lhs == pytest.approx(rhs, abs=1e-7)
        assert lhs >= -1e-9

    def test_requires_factor(self):
        with pytest.raises(NotFactor):
            duality_check(diagonal(4), diagonal(4), diagonal(4), random_state_vector(4, seed=0))
