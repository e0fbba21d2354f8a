"""
Squares
=======
The square functional I[A M; C B] = H(A) + H(B) − H(M) − H(C), the
generalized conditional mutual information over commuting squares,
its chain rule, recovery refinements, converse search and the
commutant duality check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.optimize

from .algebra import (
    Square,
    VnAlgebra,
    classify_square,
    commutant,
    cond_expectation,
    intersect,
    is_factor,
    is_subalgebra,
    join,
    square_residual,
)
from .config import RECOVERY_TOL, SQUARE_TOL, SSA_TOL
from .entropy import entropy_bits
from .errors import NotCoCommuting, NotCommutingSquare, NotFactor, NotNested, ShapeMismatch
from .matcore import as_rng, as_square, fidelity, hermitian_part, projector, state_digest

log = logging.getLogger("vnlab.squares")

RECOVERY_METHODS = ("universal", "petz")
QUADRATURE_SPAN = 12.0


@dataclass
class SquareReport:
    """Value of the square functional with its four entropy terms."""
    value_bits: float
    terms: Tuple[float, float, float, float]   # (H_A, H_B, H_M, H_C)
    square: Square
    state_hash: str
    certificate: Dict[str, object] = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def value(self) -> float:
        return self.value_bits


def four_terms(a: VnAlgebra, b: VnAlgebra, m: VnAlgebra, c: VnAlgebra, rho) -> Tuple[float, float, float, float]:
    """(H_A, H_B, H_M, H_C) for ρ, no nesting checks."""
    return (
        entropy_bits(cond_expectation(a, rho)),
        entropy_bits(cond_expectation(b, rho)),
        entropy_bits(cond_expectation(m, rho)),
        entropy_bits(cond_expectation(c, rho)),
    )


def square_value(a, b, m, c, rho) -> float:
    h_a, h_b, h_m, h_c = four_terms(a, b, m, c, rho)
    return h_a + h_b - h_m - h_c


def _check_nested(a: VnAlgebra, m: VnAlgebra, c: VnAlgebra, b: VnAlgebra) -> None:
    for small, big, name in ((c, a, "C ⊆ A"), (c, b, "C ⊆ B"), (a, m, "A ⊆ M"), (b, m, "B ⊆ M")):
        if small.ambient_dim != big.ambient_dim or not is_subalgebra(small, big):
            raise NotNested(f"square is not nested: {name} fails")


def _report(a, m, c, b, rho, square: Square, tol: float, seed=None) -> SquareReport:
    terms = four_terms(a, b, m, c, rho)
    value = terms[0] + terms[1] - terms[2] - terms[3]
    return SquareReport(
        value_bits=value,
        terms=terms,
        square=square,
        state_hash=state_digest(rho),
        certificate={"nonneg_ok": value >= -tol, "recovery_gap": None, "tolerance": tol},
        seed=seed,
    )


def square_info(a: VnAlgebra, m: VnAlgebra, c: VnAlgebra, b: VnAlgebra, rho, tol: float = SSA_TOL) -> SquareReport:
    """Raw evaluation of I[A M; C B]; no sign guarantee."""
    rho = hermitian_part(as_square(rho))
    if rho.shape[0] != m.ambient_dim:
        raise ShapeMismatch(f"state dim {rho.shape[0]} does not match M_{m.ambient_dim}")
    _check_nested(a, m, c, b)
    residual = square_residual(a, b, c)
    square = Square(a=a, b=b, c=c, m=m, is_commuting=residual <= SQUARE_TOL, commuting_residual=residual)
    return _report(a, m, c, b, rho, square, tol)


def commuting_square(s: VnAlgebra, t: VnAlgebra, within: VnAlgebra, co_commuting: bool = False) -> Square:
    """classify_square that insists on the commuting flag."""
    square = classify_square(s, t, within) if co_commuting else _classify_fast(s, t, within)
    if not square.is_commuting:
        raise NotCommutingSquare(
            f"E_S E_T ≠ E_(S∩T): residual {square.commuting_residual:.2e} > {SQUARE_TOL:.1e}"
        )
    return square


def _classify_fast(s: VnAlgebra, t: VnAlgebra, within: VnAlgebra) -> Square:
    for alg, name in ((s, "S"), (t, "T")):
        if not is_subalgebra(alg, within):
            raise NotNested(f"{name} is not contained in the ambient algebra")
    c = intersect(s, t)
    residual = square_residual(s, t, c)
    return Square(a=s, b=t, c=c, m=within, is_commuting=residual <= SQUARE_TOL, commuting_residual=residual)


def gen_cmi(s: VnAlgebra, t: VnAlgebra, within: VnAlgebra, rho, tol: float = SSA_TOL,
            square: Optional[Square] = None) -> SquareReport:
    """I(S:T ⊆ M)_ρ for a commuting square; refuses non-commuting inputs."""
    rho = hermitian_part(as_square(rho))
    if square is None:
        square = commuting_square(s, t, within)
    elif not square.is_commuting:
        raise NotCommutingSquare("square flag says not commuting")
    return _report(s, within, square.c, t, rho, square, tol)


def chain_rule(
    a: VnAlgebra, m: VnAlgebra, c: VnAlgebra, b: VnAlgebra,
    s_mid: VnAlgebra, t_mid: VnAlgebra, rho,
) -> Tuple[SquareReport, SquareReport]:
    """Split I[A M; C B] = I[A M; s_mid t_mid] + I[s_mid t_mid; C B]."""
    first = square_info(a, m, s_mid, t_mid, rho)
    second = square_info(s_mid, t_mid, c, b, rho)
    return first, second


# Recovery

def _restricted_spectrum(x: np.ndarray):
    w, v = np.linalg.eigh(hermitian_part(x))
    top = max(float(w[-1]), 0.0)
    keep = w > 1e-12 * top if top > 0 else np.zeros(w.shape, dtype=bool)
    return w[keep], v[:, keep]


def _power(spec, z: complex) -> np.ndarray:
    w, v = spec
    return (v * np.power(w.astype(complex), z)) @ v.conj().T


def rotated_petz(sigma: np.ndarray, channel: VnAlgebra, x: np.ndarray, t: float) -> np.ndarray:
    """σ^{(1+it)/2} E_T(E_T(σ)^{(−1−it)/2} X E_T(σ)^{(−1+it)/2}) σ^{(1−it)/2} for self-adjoint E_T."""
    s_spec = _restricted_spectrum(sigma)
    image = _restricted_spectrum(cond_expectation(channel, sigma))
    inner = _power(image, (-1 - 1j * t) / 2) @ x @ _power(image, (-1 + 1j * t) / 2)
    return _power(s_spec, (1 + 1j * t) / 2) @ cond_expectation(channel, inner) @ _power(s_spec, (1 - 1j * t) / 2)


def _weight(t: np.ndarray) -> np.ndarray:
    return (np.pi / 2) / (np.cosh(np.pi * t) + 1.0)


def universal_recovery(sigma: np.ndarray, channel: VnAlgebra, x: np.ndarray) -> np.ndarray:
    """∫ β₀(t) R^{t/2}(X) dt by Gauss–Legendre quadrature on [−12, 12]."""
    s_spec = _restricted_spectrum(sigma)
    image = _restricted_spectrum(cond_expectation(channel, sigma))
    spread = 0.0
    for w, _ in (s_spec, image):
        if w.size:
            spread += float(np.log(w[-1]) - np.log(w[0]))
    nodes_count = int(min(800, 80 + 1.5 * 0.5 * spread * QUADRATURE_SPAN))
    nodes, weights = np.polynomial.legendre.leggauss(nodes_count)
    nodes = nodes * QUADRATURE_SPAN
    weights = weights * QUADRATURE_SPAN * _weight(nodes)
    total = np.zeros_like(x, dtype=complex)
    for t, w in zip(nodes, weights):
        half = t / 2
        inner = _power(image, (-1 - 1j * half) / 2) @ x @ _power(image, (-1 + 1j * half) / 2)
        total += w * (_power(s_spec, (1 + 1j * half) / 2) @ cond_expectation(channel, inner)
                      @ _power(s_spec, (1 - 1j * half) / 2))
    log.debug(f"universal_recovery: {nodes_count} nodes, log-spread {spread:.2f}")
    return hermitian_part(total)


def recovery_gap(
    s: VnAlgebra, t: VnAlgebra, within: VnAlgebra, rho,
    method: str = "universal", swap: bool = False,
) -> float:
    """−2 log₂ F(ρ_M, R(E_T ρ_M)) with R recovering E_S ρ_M through E_T.

    ``swap`` exchanges the roles of S and T. The universal (rotation-averaged)
    map carries the certified bound gen_cmi ≥ gap; ``method="petz"`` uses the
    plain Petz map instead.
    """
    if method not in RECOVERY_METHODS:
        raise ValueError(f"Unknown recovery method: {method}. Valid: {', '.join(RECOVERY_METHODS)}")
    commuting_square(s, t, within)
    if swap:
        s, t = t, s
    rho_m = cond_expectation(within, hermitian_part(as_square(rho)))
    sigma = cond_expectation(s, rho_m)
    x = cond_expectation(t, rho_m)
    if method == "petz":
        recovered = hermitian_part(rotated_petz(sigma, t, x, 0.0))
    else:
        recovered = universal_recovery(sigma, t, x)
    f = fidelity(rho_m, recovered)
    return float(-2.0 * math.log2(f)) if f > 0 else math.inf


def recovery_certificate(s, t, within, rho, tol: float = RECOVERY_TOL, method: str = "universal") -> SquareReport:
    """gen_cmi report whose certificate carries the recovery gap and the bound check."""
    report = gen_cmi(s, t, within, rho)
    gap = recovery_gap(s, t, within, rho, method=method)
    report.certificate["recovery_gap"] = gap
    report.certificate["recovery_ok"] = report.value_bits >= gap - tol
    report.certificate["recovery_method"] = method
    return report


# Converse search

def _vector(x: np.ndarray, d: int) -> np.ndarray:
    v = x[:d] + 1j * x[d:]
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.eye(d, dtype=complex)[0]


def ssa_converse_search(
    s: VnAlgebra, t: VnAlgebra, within: VnAlgebra,
    budget: int = 10_000, seed=0, restarts: int = 8,
) -> Tuple[bool, Optional[np.ndarray]]:
    """Hunt for a pure state with I(S:T ⊆ M) < −1e-6 on a non-commuting square."""
    square = _classify_fast(s, t, within)
    if square.is_commuting:
        return False, None
    d = within.ambient_dim
    rng = as_rng(seed)
    c = square.c

    def objective(x):
        return square_value(s, t, within, c, projector(_vector(x, d)))

    starts = [np.concatenate([np.eye(d)[i], np.zeros(d)]) for i in range(d)]
    while len(starts) < max(restarts, d):
        starts.append(rng.standard_normal(2 * d))
    per_start = max(50, budget // len(starts))
    best_value, best_x, spent = math.inf, None, 0
    for x0 in starts:
        if spent >= budget:
            break
        result = scipy.optimize.minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxfev": min(per_start, budget - spent), "xatol": 1e-10, "fatol": 1e-12},
        )
        spent += int(result.nfev)
        if result.fun < best_value:
            best_value, best_x = float(result.fun), result.x
    log.info(f"ssa_converse_search: best I = {best_value:.6g} after {spent} evaluations")
    if best_x is None or best_value >= -1e-6:
        return False, None
    return True, projector(_vector(best_x, d))


# Duality

def duality_check(s: VnAlgebra, t: VnAlgebra, within: VnAlgebra, psi) -> Tuple[float, float]:
    """(I(S:T ⊆ ST)_ρ, I(S′:T′ ⊆ S′T′)_ψ) with ρ = E_ST(|ψ⟩⟨ψ|), commutants taken in ``within``."""
    if not is_factor(within):
        raise NotFactor(f"{within!r} has a nontrivial center")
    square = classify_square(s, t, within)
    if not square.is_commuting:
        raise NotCommutingSquare("S, T do not form a commuting square")
    if not square.is_co_commuting:
        raise NotCoCommuting("S′, T′ do not form a commuting square")
    psi = np.asarray(psi, dtype=complex)
    pure = projector(psi) if psi.ndim == 1 else hermitian_part(psi)
    st = join(s, t)
    rho = cond_expectation(st, pure)
    lhs = square_value(s, t, st, square.c, rho)
    s_prime, t_prime = commutant(s, within), commutant(t, within)
    rhs = square_value(s_prime, t_prime, join(s_prime, t_prime), intersect(s_prime, t_prime), pure)
    log.debug(f"duality_check: lhs {lhs:.10f} rhs {rhs:.10f}")
    return lhs, rhs
