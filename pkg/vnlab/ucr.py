"""
Uncertainty Relations
=====================
Entropic uncertainty relations as consequences of strong subadditivity
over commuting squares: with quantum memory, the generalized
Maassen–Uffink form with a complementary channel, and the coherence
relation for a pair of unbiased bases.

Each checker returns a UcrReport whose margin is lhs − rhs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .algebra import basis_algebra, full, tensor_algebra
from .config import MU_TOL, UCR_TOL
from .entropy import algebra_cond_entropy, coherence, complement_cond_entropy, entropy_bits
from .errors import NotUnbiased, ShapeMismatch
from .matcore import as_square, hermitian_part, partial_trace
from .squares import commuting_square, gen_cmi

log = logging.getLogger("vnlab.ucr")

UNBIASED_TOL = 1e-9
RELATIONS = ("memory", "maassen_uffink", "coherence", "overlap")


@dataclass
class UcrReport:
    """One evaluated uncertainty relation."""
    relation: str
    lhs_bits: float
    rhs_bits: float
    tolerance: float = UCR_TOL
    cmi_bits: Optional[float] = None       # equivalent square value, when the relation reduces to one
    instance: Dict[str, Any] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs_bits - self.rhs_bits

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tolerance


def overlap_constant(x_basis, z_basis) -> float:
    """c = max |⟨xᵢ|zⱼ⟩|² over the columns of the two bases."""
    x, z = as_square(x_basis), as_square(z_basis)
    if x.shape != z.shape:
        raise ShapeMismatch(f"bases have shapes {x.shape} and {z.shape}")
    return float(np.max(np.abs(x.conj().T @ z) ** 2))


def require_unbiased(x_basis, z_basis, tol: float = UNBIASED_TOL) -> int:
    """Return d after checking every squared overlap equals 1/d."""
    x, z = as_square(x_basis), as_square(z_basis)
    if x.shape != z.shape:
        raise ShapeMismatch(f"bases have shapes {x.shape} and {z.shape}")
    d = x.shape[0]
    overlaps = np.abs(x.conj().T @ z) ** 2
    worst = float(np.max(np.abs(overlaps - 1.0 / d)))
    if worst > tol:
        raise NotUnbiased(f"squared overlaps deviate from 1/{d} by {worst:.2e}")
    return d


def _split(rho, d: int) -> tuple:
    rho = hermitian_part(as_square(rho))
    if rho.shape[0] % d:
        raise ShapeMismatch(f"state of dim {rho.shape[0]} has no factor of dim {d}")
    return rho, rho.shape[0] // d


def memory_ucr(d: int, rho_ab, x_basis, z_basis, tol: float = UCR_TOL) -> UcrReport:
    """H(𝒳|B) + H(𝒵|B) ≥ log₂ d + H(A|B) for unbiased bases on A.

    The margin is reported together with I(𝒳⊗ℬ : 𝒵⊗ℬ ⊂ 𝒜⊗ℬ); the two
    agree identically.
    """
    if require_unbiased(x_basis, z_basis) != d:
        raise ShapeMismatch(f"bases act on dim {as_square(x_basis).shape[0]}, expected {d}")
    rho, db = _split(rho_ab, d)
    x_alg, z_alg = basis_algebra(x_basis, "X"), basis_algebra(z_basis, "Z")
    lhs = algebra_cond_entropy(x_alg, [db], rho).bits + algebra_cond_entropy(z_alg, [db], rho).bits
    cond_a = entropy_bits(rho) - entropy_bits(partial_trace(rho, [d, db], [1]))
    rhs = math.log2(d) + cond_a

    memory = full(db)
    cmi = gen_cmi(
        tensor_algebra(x_alg, memory), tensor_algebra(z_alg, memory), full(d * db), rho,
    ).value_bits
    log.debug(f"memory_ucr: margin {lhs - rhs:.3e}, square value {cmi:.3e}")
    return UcrReport(relation="memory", lhs_bits=lhs, rhs_bits=rhs, tolerance=tol, cmi_bits=cmi,
                     instance={"dims": [d, db]})


def maassen_uffink_general(s, t, rho_abc, dims: Sequence[int], tol: float = MU_TOL) -> UcrReport:
    """H(E_S^c|B) + H(T|C) ≥ H(S∩T|C) for a commuting square S, T ⊆ M_A.

    ``dims`` is (|A|, |B|, |C|); use 1 for an absent memory.
    """
    da, db, dc = (int(v) for v in dims)
    rho = hermitian_part(as_square(rho_abc))
    if rho.shape[0] != da * db * dc:
        raise ShapeMismatch(f"state of dim {rho.shape[0]} does not match {da}×{db}×{dc}")
    square = commuting_square(s, t, full(da))
    rho_ab = partial_trace(rho, [da, db, dc], [0, 1])
    rho_ac = partial_trace(rho, [da, db, dc], [0, 2])
    lhs = complement_cond_entropy(square.s, [db], rho_ab).bits + algebra_cond_entropy(square.t, [dc], rho_ac).bits
    rhs = algebra_cond_entropy(square.c, [dc], rho_ac).bits
    return UcrReport(relation="maassen_uffink", lhs_bits=lhs, rhs_bits=rhs, tolerance=tol,
                     instance={"dims": [da, db, dc], "intersection_dim": square.c.dim})


def coherence_ucr(x_basis, z_basis, rho, tol: float = UCR_TOL) -> UcrReport:
    """C_r^𝒳(ρ) + C_r^𝒵(ρ) ≥ log₂ d − H(ρ); the margin is I(𝒳:𝒵 ⊂ M_d)_ρ."""
    d = require_unbiased(x_basis, z_basis)
    rho = hermitian_part(as_square(rho))
    if rho.shape[0] != d:
        raise ShapeMismatch(f"state of dim {rho.shape[0]} does not match bases of dim {d}")
    lhs = coherence(rho, x_basis).bits + coherence(rho, z_basis).bits
    rhs = math.log2(d) - entropy_bits(rho)
    cmi = gen_cmi(basis_algebra(x_basis), basis_algebra(z_basis), full(d), rho).value_bits
    return UcrReport(relation="coherence", lhs_bits=lhs, rhs_bits=rhs, tolerance=tol, cmi_bits=cmi,
                     instance={"dims": [d]})


def overlap_ucr(d: int, rho_ab, x_basis, z_basis, tol: float = UCR_TOL) -> UcrReport:
    """H(𝒳|B) + H(𝒵|B) ≥ log₂(1/c) + H(A|B) for an arbitrary basis pair.

    Reported informationally: no square reduction is attempted when the
    bases are biased.
    """
    rho, db = _split(rho_ab, d)
    c = overlap_constant(x_basis, z_basis)
    x_alg, z_alg = basis_algebra(x_basis), basis_algebra(z_basis)
    lhs = algebra_cond_entropy(x_alg, [db], rho).bits + algebra_cond_entropy(z_alg, [db], rho).bits
    cond_a = entropy_bits(rho) - entropy_bits(partial_trace(rho, [d, db], [1]))
    rhs = -math.log2(c) + cond_a
    return UcrReport(relation="overlap", lhs_bits=lhs, rhs_bits=rhs, tolerance=tol,
                     instance={"dims": [d, db], "overlap": c})

