"""
Entropies
=========
Von Neumann and relative entropies in bits, sandwiched Rényi divergences,
subalgebra entropies H(N)_ρ = H(E_N(ρ)) and the asymmetry measure D^N.

Infinite relative entropies are values (``EntropyValue.finite == False``),
never exceptions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .algebra import VnAlgebra, basis_algebra, complement_apply, cond_expectation
from .config import EIG_CUTOFF
from .errors import DomainError, ShapeMismatch
from .matcore import as_rng, as_square, hermitian_part, log2m, partial_trace, psd_power, support_projector

log = logging.getLogger("vnlab.entropy")

SUPPORT_TOL = 1e-10
DEFAULT_RESTARTS = 16
DEFAULT_MAXFEV = 2000


@dataclass(frozen=True)
class EntropyValue:
    """A value in bits, possibly +∞ when supports are incompatible."""
    bits: float
    finite: bool = True
    exact: bool = True      # False for optimizer upper estimates
    restarts: int = 0

    @classmethod
    def infinite(cls) -> "EntropyValue":
        return cls(bits=math.inf, finite=False)

    def __float__(self) -> float:
        return self.bits if self.finite else math.inf

    @property
    def support_flag(self) -> str:
        return "finite" if self.finite else "infinite"


def entropy_bits(rho) -> float:
    """−Σ λ log₂ λ over eigenvalues above the relative cutoff."""
    w = scipy.linalg.eigvalsh(hermitian_part(as_square(rho)))
    top = w[-1] if w.size else 0.0
    if top <= 0:
        return 0.0
    w = w[w > EIG_CUTOFF * top]
    return float(-np.sum(w * np.log2(w)))


def vn_entropy(rho) -> EntropyValue:
    return EntropyValue(bits=entropy_bits(rho))


def _support_leak(rho: np.ndarray, sigma: np.ndarray) -> float:
    kernel = np.eye(sigma.shape[0]) - support_projector(sigma)
    return float(np.trace(kernel @ rho).real)


def rel_entropy(rho, sigma) -> EntropyValue:
    """D(ρ‖σ) = tr ρ log ρ − tr ρ log σ, infinite when supp ρ ⊄ supp σ."""
    rho, sigma = hermitian_part(as_square(rho)), hermitian_part(as_square(sigma))
    if rho.shape != sigma.shape:
        raise ShapeMismatch(f"Shapes differ: {rho.shape} vs {sigma.shape}")
    if _support_leak(rho, sigma) > SUPPORT_TOL:
        return EntropyValue.infinite()
    cross = float(np.trace(rho @ log2m(sigma)).real)
    return EntropyValue(bits=-entropy_bits(rho) - cross)


def sandwiched_renyi(rho, sigma, alpha: float) -> EntropyValue:
    """Sandwiched Rényi divergence for α ∈ [1/2, ∞]; α = 1 is the relative entropy."""
    rho, sigma = hermitian_part(as_square(rho)), hermitian_part(as_square(sigma))
    if rho.shape != sigma.shape:
        raise ShapeMismatch(f"Shapes differ: {rho.shape} vs {sigma.shape}")
    alpha = float(alpha)
    if not alpha >= 0.5:
        raise DomainError(f"alpha must lie in [1/2, ∞], got {alpha}")
    if alpha == 1.0:
        return rel_entropy(rho, sigma)
    if alpha > 1.0 and _support_leak(rho, sigma) > SUPPORT_TOL:
        return EntropyValue.infinite()
    if math.isinf(alpha):
        inv = psd_power(sigma, -0.5)
        top = scipy.linalg.eigvalsh(hermitian_part(inv @ rho @ inv))[-1]
        return EntropyValue(bits=float(np.log2(top)))
    gamma = (1.0 - alpha) / (2.0 * alpha)
    s = psd_power(sigma, gamma)
    inner = scipy.linalg.eigvalsh(hermitian_part(s @ rho @ s))
    q = float(np.sum(np.power(np.clip(inner, 0.0, None), alpha)))
    if q <= 0.0:
        return EntropyValue.infinite()
    return EntropyValue(bits=float(np.log2(q) / (alpha - 1.0)))


def algebra_entropy(n: VnAlgebra, rho) -> EntropyValue:
    """H(N)_ρ = H(E_N(ρ))."""
    return EntropyValue(bits=entropy_bits(cond_expectation(n, rho)))


def _aux_entropy(rho_joint: np.ndarray, d: int, aux_dims: Sequence[int]) -> float:
    k = int(np.prod(aux_dims)) if len(aux_dims) else 1
    return entropy_bits(partial_trace(rho_joint, [d, k], [1]))


def algebra_cond_entropy(n: VnAlgebra, aux_dims: Sequence[int], rho_joint) -> EntropyValue:
    """H(N|aux) = H((E_N ⊗ id)ρ) − H(ρ_aux)."""
    rho_joint = as_square(rho_joint)
    joint = entropy_bits(cond_expectation(n, rho_joint, aux_dims))
    return EntropyValue(bits=joint - _aux_entropy(rho_joint, n.ambient_dim, aux_dims))


def complement_cond_entropy(n: VnAlgebra, aux_dims: Sequence[int], rho_joint) -> EntropyValue:
    """H(E_N^c|aux) = H((E_N^c ⊗ id)ρ) − H(ρ_aux)."""
    rho_joint = as_square(rho_joint)
    joint = entropy_bits(complement_apply(n, rho_joint, aux_dims))
    return EntropyValue(bits=joint - _aux_entropy(rho_joint, n.ambient_dim, aux_dims))


def _density_from_params(x: np.ndarray, d: int) -> np.ndarray:
    g = (x[: d * d] + 1j * x[d * d:]).reshape(d, d)
    w = g @ g.conj().T
    return w / np.trace(w).real


def asymmetry(
    n: VnAlgebra,
    rho,
    alpha: float = 1.0,
    restarts: int = DEFAULT_RESTARTS,
    seed=0,
    maxfev: int = DEFAULT_MAXFEV,
) -> EntropyValue:
    """D_α^N(ρ) = inf over σ ∈ N of D_α(ρ‖σ).

    α = 1 is exact: H(E_N(ρ)) − H(ρ). Other orders return the best value of
    a multi-start Nelder–Mead search over σ = E_N(ω), ω = GG†/tr, which is
    an upper estimate.
    """
    rho = hermitian_part(as_square(rho))
    if alpha == 1.0:
        return EntropyValue(bits=entropy_bits(cond_expectation(n, rho)) - entropy_bits(rho))
    if not alpha >= 0.5:
        raise DomainError(f"alpha must lie in [1/2, ∞], got {alpha}")

    d = n.ambient_dim
    rng = as_rng(seed)

    def objective(x):
        value = sandwiched_renyi(rho, cond_expectation(n, _density_from_params(x, d)), alpha)
        return float(value.bits) if value.finite else 1e6

    root = psd_power(rho + 1e-6 * np.eye(d), 0.5)
    starts = [np.concatenate([root.real.reshape(-1), root.imag.reshape(-1)])]
    while len(starts) < max(1, restarts):
        starts.append(rng.standard_normal(2 * d * d))

    best = math.inf
    for i, x0 in enumerate(starts):
        result = scipy.optimize.minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxfev": maxfev, "xatol": 1e-8, "fatol": 1e-11},
        )
        best = min(best, float(result.fun))
        log.debug(f"asymmetry α={alpha}: restart {i} → {result.fun:.6g}")
    return EntropyValue(bits=best, exact=False, restarts=len(starts))


def coherence(rho, basis) -> EntropyValue:
    """Relative entropy of coherence C_r = D^X(ρ) for the basis given by the columns of ``basis``."""
    return asymmetry(basis_algebra(basis), rho, 1.0)
