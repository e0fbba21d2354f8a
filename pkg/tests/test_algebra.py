import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from vnlab.algebra import (
    VnAlgebra,
    basis_algebra,
    center,
    classify_square,
    commutant,
    commutant_expectation,
    complement_apply,
    cond_expectation,
    cond_expectation_blockwise,
    diagonal,
    embed,
    factor_out,
    full,
    generate,
    intersect,
    is_factor,
    join,
    normalizes,
    pauli_algebra,
    reduce_to,
    require_subalgebra,
    same_span,
    square_residual,
    stinespring,
    tensor_algebra,
    trivial,
)
from vnlab.entropy import entropy_bits
from vnlab.errors import NotSubalgebra, ShapeMismatch
from vnlab.matcore import PAULIS, haar_unitary, partial_trace, random_density


def _m2_plus_c() -> VnAlgebra:
    """M_2 ⊕ ℂ inside M_3."""
    units = []
    for i, j in ((0, 0), (0, 1), (1, 0), (1, 1), (2, 2)):
        e = np.zeros((3, 3))
        e[i, j] = 1.0
        units.append(e)
    return VnAlgebra.from_span(units, 3)


def _rotated_z(theta: float) -> VnAlgebra:
    return basis_algebra(scipy.linalg.expm(-0.5j * theta * PAULIS["Y"]))


class TestConstructors:
    def test_dimensions(self):
        assert full(3).dim == 9
        assert trivial(3).dim == 1
        assert diagonal(3).dim == 3
        assert tensor_algebra(full(2), trivial(3)).ambient_dim == 6

    def test_closure(self):
        for alg in (full(2), trivial(4), diagonal(3), _m2_plus_c(), pauli_algebra("Y")):
            assert alg.is_valid()
            assert alg.contains_identity

    def test_generate_from_anticommuting_words(self):
        xi = np.kron(PAULIS["X"], np.eye(2))
        zz = np.kron(PAULIS["Z"], PAULIS["Z"])
        alg = generate([xi, zz], 4)
        assert alg.dim == 4
        assert is_factor(alg)

    def test_generate_single_hermitian(self):
        assert same_span(generate([PAULIS["Z"]], 2), diagonal(2))

    @pytest.mark.parametrize("factors", [
        (full(2), trivial(2), trivial(2)),
        (trivial(2), full(2), trivial(2)),
        (full(2), full(2), trivial(2)),
        (diagonal(2), full(2), trivial(2)),
        (trivial(2), trivial(2), full(2)),
    ])
    def test_generate_is_idempotent_on_three_factors(self, factors):
        x = tensor_algebra(*factors)
        assert generate(x.basis, 8).dim == x.dim
        rotated = x.conjugate(haar_unitary(8, seed=17))
        assert generate(rotated.basis, 8).dim == x.dim
        assert VnAlgebra.from_span(rotated.basis, 8).dim == x.dim

    def test_join_of_three_factor_splits(self):
        s = tensor_algebra(full(2), trivial(2), trivial(2))
        t = tensor_algebra(trivial(2), full(2), trivial(2))
        joined = join(s, t)
        assert joined.dim == 16
        assert same_span(joined, tensor_algebra(full(2), full(2), trivial(2)))
        u = haar_unitary(8, seed=18)
        assert join(s.conjugate(u), t.conjugate(u)).dim == 16

    def test_zero_generator_adds_nothing(self):
        assert generate([np.zeros((2, 2))], 2).dim == 1

    def test_bad_inputs(self):
        with pytest.raises(ShapeMismatch):
            VnAlgebra(np.zeros((2, 3, 3)), 2)
        with pytest.raises(ValueError):
            pauli_algebra("W")
        with pytest.raises(ShapeMismatch):
            join(full(2), full(3))

    def test_tensor_label(self):
        assert tensor_algebra(full(2), trivial(2)).label == "full:2*trivial:2"


class TestLattice:
    """Commutants, intersections, centers."""

    def test_commutant_of_tensor_factor(self):
        a = tensor_algebra(full(2), trivial(2))
        assert same_span(commutant(a), tensor_algebra(trivial(2), full(2)))

    def test_masa_is_its_own_commutant(self):
        assert same_span(commutant(diagonal(3)), diagonal(3))

    def test_relative_commutant(self):
        within = tensor_algebra(full(2), diagonal(2))
        inner = tensor_algebra(diagonal(2), trivial(2))
        assert same_span(commutant(inner, within), tensor_algebra(diagonal(2), diagonal(2)))

    def test_commutant_requires_containment(self):
        with pytest.raises(NotSubalgebra):
            commutant(full(2), diagonal(2))

    def test_intersections(self):
        assert intersect(pauli_algebra("X"), pauli_algebra("Z")).dim == 1
        meet = intersect(diagonal(4), tensor_algebra(full(2), trivial(2)))
        assert same_span(meet, tensor_algebra(diagonal(2), trivial(2)))

    def test_centers(self):
        assert center(diagonal(3)).dim == 3
        assert center(_m2_plus_c()).dim == 2
        assert is_factor(full(3))
        assert not is_factor(diagonal(2))

    def test_containment_helpers(self):
        require_subalgebra(diagonal(2), full(2))
        with pytest.raises(NotSubalgebra):
            require_subalgebra(full(2), diagonal(2))

    def test_normalizes(self):
        hadamard = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        assert normalizes(PAULIS["X"], diagonal(2))
        assert not normalizes(hadamard, diagonal(2))


class TestLayout:
    def test_embed_places_factor(self):
        assert same_span(embed(full(2), [2, 2], [1]), tensor_algebra(trivial(2), full(2)))
        assert same_span(embed(diagonal(2), [2, 3], [0], rest=full(3)), tensor_algebra(diagonal(2), full(3)))

    def test_embed_checks_dims(self):
        with pytest.raises(ShapeMismatch):
            embed(full(3), [2, 2], [0])

    def test_reduce_to(self):
        a = tensor_algebra(full(2), trivial(2))
        assert same_span(reduce_to(a, [2, 2], [0]), full(2))
        with pytest.raises(NotSubalgebra):
            reduce_to(full(4), [2, 2], [0])

    def test_factor_out(self):
        rest, kind = factor_out(tensor_algebra(diagonal(2), full(2)), [2, 2], 1)
        assert kind == "full"
        assert same_span(rest, diagonal(2))
        rest, kind = factor_out(tensor_algebra(full(2), trivial(3)), [2, 3], 1)
        assert kind == "trivial"
        assert same_span(rest, full(2))


class TestBlocks:
    def test_shapes(self):
        assert tensor_algebra(full(2), trivial(2)).blocks().shape == [(2, 2)]
        assert diagonal(3).blocks().shape == [(1, 1)] * 3
        assert sorted(_m2_plus_c().blocks().shape) == [(1, 1), (2, 1)]

    def test_frames_form_unitary(self):
        alg = tensor_algebra(full(2), trivial(2)).conjugate(haar_unitary(4, seed=3))
        u = alg.blocks().unitary
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-8)
        assert alg.blocks().env_dim == 4

    @pytest.mark.parametrize("alg", [
        tensor_algebra(full(2), trivial(2)),
        diagonal(4),
        tensor_algebra(diagonal(2), full(2)),
        _m2_plus_c(),
    ])
    def test_blockwise_expectation_matches_projection(self, alg):
        rho = random_density(alg.ambient_dim, seed=9)
        assert np.allclose(cond_expectation_blockwise(alg, rho), cond_expectation(alg, rho), atol=1e-8)

    def test_stinespring(self):
        for alg in (diagonal(3), tensor_algebra(full(2), trivial(2)), _m2_plus_c()):
            d, e = alg.ambient_dim, alg.blocks().env_dim
            v = stinespring(alg)
            assert np.allclose(v.conj().T @ v, np.eye(d), atol=1e-8)
            rho = random_density(d, seed=4)
            out = partial_trace(v @ rho @ v.conj().T, [d, e], [0])
            assert np.allclose(out, cond_expectation(alg, rho), atol=1e-8)


class TestExpectations:
    def test_tensor_factor(self):
        a, b = random_density(2, seed=1), random_density(2, seed=2)
        alg = tensor_algebra(full(2), trivial(2))
        assert np.allclose(cond_expectation(alg, np.kron(a, b)), np.kron(a, np.eye(2) / 2))
        assert np.allclose(commutant_expectation(alg, np.kron(a, b)), np.kron(np.eye(2) / 2, b), atol=1e-8)

    def test_with_aux(self):
        a, b = random_density(2, seed=1), random_density(3, seed=2)
        out = cond_expectation(diagonal(2), np.kron(a, b), [3])
        assert np.allclose(out, np.kron(np.diag(np.diag(a)), b))
        with pytest.raises(ShapeMismatch):
            cond_expectation(diagonal(2), np.kron(a, b), [2])

    def test_complement_keeps_multiplicity(self):
        a, b = random_density(2, seed=5), random_density(2, seed=6)
        out = complement_apply(tensor_algebra(full(2), trivial(2)), np.kron(a, b))
        assert np.isclose(np.trace(out).real, 1.0)
        assert entropy_bits(out) == pytest.approx(1.0 + entropy_bits(b), abs=1e-8)


class TestSquares:
    def test_unbiased_pair_is_commuting(self):
        square = classify_square(pauli_algebra("X"), pauli_algebra("Z"), full(2))
        assert square.is_commuting
        assert square.is_co_commuting
        assert square.c.dim == 1

    def test_tensor_split_is_commuting(self):
        square = classify_square(tensor_algebra(full(2), trivial(2)), tensor_algebra(trivial(2), full(2)), full(4))
        assert square.is_commuting
        assert square.s.dim == 4 and square.t.dim == 4

    def test_rotated_pair_is_not(self):
        square = classify_square(diagonal(2), _rotated_z(np.pi / 6), full(2))
        assert not square.is_commuting
        assert square.commuting_residual > 1e-3

    def test_requires_containment(self):
        with pytest.raises(NotSubalgebra):
            classify_square(full(2), diagonal(2), diagonal(2))


@settings(deadline=None, max_examples=15)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_rotation_preserves_commuting_squares(seed):
    u = haar_unitary(6, seed=seed)
    s = tensor_algebra(full(2), trivial(3)).conjugate(u)
    t = tensor_algebra(trivial(2), full(3)).conjugate(u)
    assert square_residual(s, t, intersect(s, t)) < 1e-8
