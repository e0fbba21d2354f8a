import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vnlab.algebra import Square, diagonal, full, pauli_algebra, tensor_algebra, trivial
from vnlab.errors import DomainError, NontrivialIntersection, NotCommutingSquare, WitnessUnavailable
from vnlab.matcore import binary_entropy, projector, random_density, trace_distance
from vnlab.measures import (
    EXACT,
    UPPER,
    continuity_bound,
    convexity_check,
    iconv_estimate,
    iext_estimate,
    is_pure_on,
    isq_estimate,
    max_isq,
    ppt_spot_check,
    tensor_square,
)
from vnlab.scenarios import UP_Y, rotated_pair
from vnlab.squares import _classify_fast

A = tensor_algebra(full(2), trivial(2))
B = tensor_algebra(trivial(2), full(2))
PHI_PLUS = np.array([1, 0, 0, 1]) / np.sqrt(2)
PHI_MINUS = np.array([1, 0, 0, -1]) / np.sqrt(2)
PSI_PLUS = np.array([0, 1, 1, 0]) / np.sqrt(2)
PSI_MINUS = np.array([0, 1, -1, 0]) / np.sqrt(2)
BELL_BASIS = (PHI_PLUS, PHI_MINUS, PSI_PLUS, PSI_MINUS)

FAST = {"restarts": 2, "maxfev": 300, "seed": 0}


def werner(fidelity: float) -> np.ndarray:
    rest = (1.0 - fidelity) / 3.0
    return (fidelity * projector(PHI_PLUS) + rest * projector(PHI_MINUS)
            + rest * projector(PSI_PLUS) + rest * projector(PSI_MINUS))


def formation_oracle(rho: np.ndarray) -> float:
    """Entanglement of formation from the two-qubit concurrence."""
    yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    tilde = yy @ rho.conj() @ yy
    lam = np.sqrt(np.clip(np.sort(np.linalg.eigvals(rho @ tilde).real)[::-1], 0.0, None))
    c = max(0.0, lam[0] - lam[1] - lam[2] - lam[3])
    return binary_entropy((1.0 + math.sqrt(max(0.0, 1.0 - c * c))) / 2.0)


class TestPurePath:
    def test_unbiased_qubit_pair(self):
        rho = projector(UP_Y)
        for estimator in (isq_estimate, iconv_estimate):
            est = estimator(pauli_algebra("X"), pauli_algebra("Z"), rho)
            assert est.exactness == EXACT
            assert est.exact
            assert est.value_bits == pytest.approx(0.5)

    def test_bell_pair(self):
        est = isq_estimate(A, B, projector(PHI_PLUS))
        assert est.exact
        assert est.value_bits == pytest.approx(1.0)

    def test_purity_on_subalgebra(self):
        assert is_pure_on(full(2), projector([1, 0]))
        assert not is_pure_on(full(4), werner(0.9))
        assert is_pure_on(diagonal(2), projector([1, 0]))
        assert not is_pure_on(diagonal(2), projector(UP_Y))


class TestPreconditions:
    def test_nontrivial_intersection(self):
        with pytest.raises(NontrivialIntersection):
            isq_estimate(diagonal(2), diagonal(2), np.eye(2) / 2)

    def test_non_commuting(self):
        s, t = rotated_pair()
        with pytest.raises(NotCommutingSquare):
            iconv_estimate(s, t, np.eye(2) / 2)

    def test_short_decomposition(self):
        with pytest.raises(DomainError):
            iconv_estimate(A, B, np.eye(4) / 4, k=2)


class TestConvexRoof:
    def test_matches_formation_on_werner_state(self):
        rho = werner(0.8)
        oracle = formation_oracle(rho)
        assert oracle == pytest.approx(binary_entropy(0.9))
        est = iconv_estimate(A, B, rho, k=4, restarts=8, seed=0)
        assert est.exactness == UPPER
        assert est.size == 4
        assert est.value_bits >= oracle - 1e-6
        assert est.value_bits <= oracle + 0.05

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_formation_on_bell_diagonal_states(self, seed):
        rng = np.random.default_rng(seed)
        weights = 0.02 + 0.92 * rng.dirichlet(np.ones(4))
        rho = sum(w * projector(v) for w, v in zip(weights, BELL_BASIS))
        est = iconv_estimate(A, B, rho, k=4, restarts=1, maxfev=200, seed=seed)
        assert est.value_bits == pytest.approx(formation_oracle(rho), abs=1e-3)

    def test_witness_reassembles_state(self):
        rho = werner(0.7)
        est = iconv_estimate(A, B, rho, **FAST)
        rebuilt = sum(p * projector(phi) for p, phi in est.witness)
        assert np.allclose(rebuilt, rho, atol=1e-8)
        assert sum(p for p, _ in est.witness) == pytest.approx(1.0)

    def test_classical_correlation_is_not_entanglement(self):
        rho = 0.5 * (projector([1, 0, 0, 0]) + projector([0, 0, 0, 1]))
        est = iconv_estimate(A, B, rho, restarts=4, seed=1)
        assert est.value_bits <= 0.02


class TestSquashed:
    def test_bounded_by_convex_roof(self):
        rho = werner(0.75)
        conv = iconv_estimate(A, B, rho, **FAST)
        sq = isq_estimate(A, B, rho, ext_dim=2, **FAST)
        assert sq.value_bits <= conv.value_bits + 1e-9
        assert sq.value_bits >= -1e-9
        labels = [label for label, _ in sq.trace]
        assert labels[:3] == ["trivial", "eigen_copy", "decomposition_copy"]

    def test_product_state_is_zero(self):
        rho = np.kron(random_density(2, seed=3), random_density(2, seed=4))
        est = isq_estimate(A, B, rho, ext_dim=2, **FAST)
        assert est.value_bits == pytest.approx(0.0, abs=1e-8)

    def test_convexity(self):
        mixed, separate = convexity_check(
            iconv_estimate, A, B, [projector(PHI_PLUS), projector(PHI_MINUS)], [0.5, 0.5], **FAST,
        )
        assert separate == pytest.approx(1.0)
        assert mixed <= separate + 1e-9

    def test_convexity_weights(self):
        with pytest.raises(DomainError):
            convexity_check(iconv_estimate, A, B, [np.eye(4) / 4], [0.5])


class TestSquareCalculus:
    def test_pure_input_is_exact(self):
        square = _classify_fast(A, B, full(4))
        est = iext_estimate([square], projector(PHI_PLUS))
        assert est.exact
        assert est.value_bits == pytest.approx(2.0)

    def test_never_above_plain_value(self):
        square = _classify_fast(A, B, full(4))
        rho = werner(0.6)
        est = iext_estimate([square], rho, ext_budget=2, restarts=1, maxfev=200)
        assert est.value_bits <= est.trace[0][1] + 1e-12
        assert est.trace[0][0] == "trivial"

    def test_tensor_square(self):
        square = _classify_fast(pauli_algebra("X"), pauli_algebra("Z"), full(2))
        product = tensor_square([square, square])
        assert product.m.ambient_dim == 4
        assert product.c.dim == 1
        broken = Square(a=square.a, b=square.b, c=square.c, m=square.m, is_commuting=False)
        with pytest.raises(NotCommutingSquare):
            tensor_square([square, broken])


class TestBounds:
    def test_continuity_bound(self):
        assert continuity_bound(0.0, 4) == pytest.approx(0.0)
        assert continuity_bound(0.01, 4) < continuity_bound(0.04, 4)
        assert continuity_bound(0.01, 4, "sq") > continuity_bound(0.01, 4, "conv")
        with pytest.raises(ValueError):
            continuity_bound(0.1, 4, "ext")
        with pytest.raises(DomainError):
            continuity_bound(1.0, 4)

    @pytest.mark.parametrize("epsilon", [0.01, 0.1])
    def test_continuity_on_close_pure_states(self, epsilon):
        rng = np.random.default_rng(int(1000 * epsilon))
        bound = continuity_bound(epsilon, 4)
        for _ in range(50):
            psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            psi /= np.linalg.norm(psi)
            chi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            chi -= np.vdot(psi, chi) * psi
            chi /= np.linalg.norm(chi)
            half = epsilon / 2
            phi = math.sqrt(1.0 - half**2) * psi + half * chi
            rho, sigma = projector(psi), projector(phi)
            assert trace_distance(rho, sigma) == pytest.approx(epsilon)
            first, second = isq_estimate(A, B, rho), isq_estimate(A, B, sigma)
            assert first.exact and second.exact
            assert abs(first.value_bits - second.value_bits) <= bound

    @pytest.mark.parametrize("alg, expected", [
        (full(2), 0.5),
        (full(3), 0.5 * math.log2(3)),
        (tensor_algebra(full(2), trivial(2)), 0.5),
    ])
    def test_max_isq_with_witness(self, alg, expected):
        value, witness = max_isq(alg)
        assert value == pytest.approx(expected)
        assert witness.value_bits == pytest.approx(expected)
        assert witness.rho.shape == (alg.ambient_dim, alg.ambient_dim)

    def test_max_isq_abelian(self):
        assert max_isq(diagonal(3)) == (0.0, None)

    def test_max_isq_composite_block(self):
        with pytest.raises(WitnessUnavailable) as exc:
            max_isq(full(4))
        assert exc.value.value == pytest.approx(1.0)

    def test_ppt(self):
        separable, low = ppt_spot_check(projector(PHI_PLUS))
        assert not separable
        assert low == pytest.approx(-0.5)
        assert ppt_spot_check(np.eye(4) / 4) == (True, pytest.approx(0.25))
        with pytest.raises(DomainError):
            ppt_spot_check(np.eye(3) / 3)
