"""
Measures
========
Non-classicality measures over commuting squares with trivial
intersection: the squashed mutual information I_sq, the convex roof
I_conv, the square-calculus infimum I_ext, the continuity bound and the
maximum I_sq of an algebra.

Estimators return upper bounds except on the pure path: when E_ST(ρ) is
a pure state of ST both measures equal ½·I(S:T)_ρ exactly.

Usage:
    from vnlab.measures import isq_estimate

    est = isq_estimate(x_alg, z_alg, up_y, restarts=4, seed=7)
    est.value_bits, est.exactness
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from .algebra import (
    Square,
    VnAlgebra,
    cond_expectation,
    generate,
    intersect,
    join,
    tensor_algebra,
)
from .config import PURE_TOL
from .entropy import entropy_bits
from .errors import DomainError, NontrivialIntersection, NotCommutingSquare, WitnessUnavailable
from .matcore import as_rng, as_square, binary_entropy, hermitian_part, partial_trace, projector, purify
from .squares import _classify_fast, square_value

log = logging.getLogger("vnlab.measures")

EXACT = "exact_pure_path"
UPPER = "upper_bound"
MEASURE_KINDS = ("isq", "iconv", "iext")
MAX_EXT_DIM = 16
CONTINUITY_CONSTANTS = {"sq": 12.0, "conv": 6.0}
_PHASE_STARTS = 6


@dataclass
class MeasureEstimate:
    """Estimated measure value with its provenance."""
    kind: str
    value_bits: float
    exactness: str
    size: int = 0                      # extension dimension or decomposition length
    restarts: int = 0
    seed: Optional[int] = None
    witness: Any = None                # extension state, decomposition or square
    trace: List[Tuple[str, float]] = field(default_factory=list)

    @property
    def exact(self) -> bool:
        return self.exactness == EXACT


@dataclass
class IsqWitness:
    """Configuration achieving the maximum I_sq of an algebra."""
    s: VnAlgebra
    t: VnAlgebra
    rho: np.ndarray
    value_bits: float


# Shared helpers

def _check_pair(s: VnAlgebra, t: VnAlgebra) -> Square:
    st = join(s, t)
    square = _classify_fast(s, t, st)
    if not square.is_commuting:
        raise NotCommutingSquare(f"S, T do not form a commuting square (residual {square.commuting_residual:.2e})")
    if square.c.dim != 1:
        raise NontrivialIntersection(f"S∩T has dimension {square.c.dim}; measures need S∩T = ℂ1")
    return square


def is_pure_on(n: VnAlgebra, rho, tol: float = PURE_TOL) -> bool:
    """True when ρ restricts to a pure state of N: one block carries all weight, rank one there."""
    rho = hermitian_part(as_square(rho))
    for blk in n.blocks().blocks:
        a = partial_trace(blk.compress(rho), [blk.n, blk.m], [0])
        top = float(np.linalg.eigvalsh(hermitian_part(a))[-1])
        if top >= 1.0 - tol:
            return True
    return False


def _exact(kind: str, square: Square, rho: np.ndarray, seed) -> MeasureEstimate:
    value = 0.5 * square_value(square.s, square.t, square.m, square.c, rho)
    log.debug(f"{kind}: pure path, value {value:.12f}")
    return MeasureEstimate(kind=kind, value_bits=value, exactness=EXACT, seed=seed, witness=None,
                           trace=[("pure_path", value)])


def _complex(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    n = rows * cols
    return (x[:n] + 1j * x[n:]).reshape(rows, cols)


def _real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real.reshape(-1), z.imag.reshape(-1)])


def _isometry(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Polar factor of the parameter matrix: orthonormal columns."""
    z = _complex(x, rows, cols)
    u, _ = scipy.linalg.polar(z)
    return u


def _starts(base: Sequence[np.ndarray], size: int, restarts: int, rng: np.random.Generator) -> List[np.ndarray]:
    starts = list(base)
    while len(starts) < max(restarts, len(base), 1):
        starts.append(rng.standard_normal(size))
    return starts


# Convex roof

def _decomposition_value(square: Square, psi: np.ndarray, w: np.ndarray) -> float:
    """½ Σ_x p_x I(S:T)_{φ_x} for φ_x = Ψ w_x."""
    total = 0.0
    phis = psi @ w.T
    for x in range(phis.shape[1]):
        phi = phis[:, x]
        p = float(np.vdot(phi, phi).real)
        if p < 1e-14:
            continue
        total += p * square_value(square.s, square.t, square.m, square.c, projector(phi / np.sqrt(p)))
    return 0.5 * total


def _dft(k: int, r: int) -> np.ndarray:
    f = np.exp(2j * np.pi * np.outer(np.arange(k), np.arange(r)) / k) / np.sqrt(k)
    return f


def _phase_frame(r: int) -> np.ndarray:
    """r × r unitary with unimodular entries: Sylvester–Hadamard when r is a power of two, else the DFT."""
    if r & (r - 1) == 0:
        return scipy.linalg.hadamard(r).astype(complex) / np.sqrt(r)
    return _dft(r, r)


def _phase_start(square: Square, psi: np.ndarray, k: int, r: int, rng: np.random.Generator, maxfev: int) -> np.ndarray:
    """Best isometry of the form frame · diag(e^{iθ}) found by Nelder–Mead over θ, padded to k rows.

    Equal-weight decompositions of this shape contain the optimum for
    Bell-diagonal two-qubit states.
    """
    frame = _phase_frame(r)

    def lift(theta: np.ndarray) -> np.ndarray:
        w = np.zeros((k, r), dtype=complex)
        w[:r] = frame * np.exp(1j * theta)[None, :]
        return w

    def objective(theta):
        return _decomposition_value(square, psi, lift(theta))

    best, best_theta = math.inf, np.zeros(r)
    for theta0 in [np.zeros(r)] + [rng.uniform(0.0, np.pi, r) for _ in range(_PHASE_STARTS - 1)]:
        result = scipy.optimize.minimize(objective, theta0, method="Nelder-Mead",
                                         options={"maxfev": max(maxfev, 200 * r), "xatol": 1e-9, "fatol": 1e-12})
        if result.fun < best:
            best, best_theta = float(result.fun), result.x
    log.debug(f"iconv: phase search {best:.8f}")
    return _real(lift(best_theta))


def iconv_estimate(
    s: VnAlgebra, t: VnAlgebra, rho,
    k: Optional[int] = None, restarts: int = 16, seed=0, maxfev: int = 4000,
) -> MeasureEstimate:
    """Upper bound on I_conv by descent over length-k pure decompositions of E_ST(ρ).

    Decompositions are φ_x = Ψ w_x with Ψ a purification matrix and W
    (k × r) an isometry; every length-k pure decomposition arises this way.
    Each start runs Powell and is polished with L-BFGS-B.
    """
    square = _check_pair(s, t)
    rho = cond_expectation(square.m, hermitian_part(as_square(rho)))
    if is_pure_on(square.m, rho):
        return _exact("iconv", square, rho, seed)
    psi = purify(rho)
    r = psi.shape[1]
    k = int(k) if k else r * r
    if k < r:
        raise DomainError(f"decomposition length {k} is below rank {r}")
    rng = as_rng(seed)
    eigen = np.zeros((k, r), dtype=complex)
    eigen[:r, :r] = np.eye(r)
    base = [_real(eigen), _real(_dft(k, r))]
    if k > 1:
        base.append(_real(_dft(k, r) * np.exp(0.5j * np.pi * (np.arange(k) % 2))[:, None]))
    base.insert(0, _phase_start(square, psi, k, r, rng, maxfev))

    def objective(x):
        return _decomposition_value(square, psi, _isometry(x, k, r))

    best, best_w, trace = math.inf, None, []
    for i, x0 in enumerate(_starts(base, 2 * k * r, restarts, rng)):
        result = scipy.optimize.minimize(objective, x0, method="Powell",
                                         options={"maxfev": maxfev, "xtol": 1e-6, "ftol": 1e-10})
        polished = scipy.optimize.minimize(objective, result.x, method="L-BFGS-B",
                                           options={"maxfun": maxfev, "ftol": 1e-13, "gtol": 1e-9})
        x_best = polished.x if polished.fun <= result.fun else result.x
        value = float(min(result.fun, polished.fun))
        trace.append((f"start{i}", value))
        if value < best:
            best, best_w = value, _isometry(x_best, k, r)
    log.info(f"iconv: best {best:.8f} over {len(trace)} start(s), k={k}")
    phis = psi @ best_w.T
    weights = np.einsum("ix,ix->x", phis.conj(), phis).real
    decomposition = [(float(p), phis[:, x] / np.sqrt(p)) for x, p in enumerate(weights) if p > 1e-14]
    return MeasureEstimate(kind="iconv", value_bits=best, exactness=UPPER, size=k, restarts=len(trace),
                           seed=seed if isinstance(seed, int) else None, witness=decomposition, trace=trace)


# Squashed mutual information

def _extension(psi: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """tr_E of (1 ⊗ W)|ψ⟩⟨ψ|(1 ⊗ W†) with W: C^r → C^k ⊗ C^e."""
    d = psi.shape[0]
    phi = (psi @ w.T).reshape(d, k, -1)
    return np.einsum("iae,jbe->iajb", phi, phi.conj()).reshape(d * k, d * k)


def extended_value(a: VnAlgebra, b: VnAlgebra, m: VnAlgebra, c: VnAlgebra, sigma, k: int) -> float:
    """I[A⊗F M⊗F; C⊗F B⊗F]_σ for σ on M_d ⊗ M_k and F = M_k."""
    sigma = as_square(sigma)
    aux = [k]
    return (entropy_bits(cond_expectation(a, sigma, aux)) + entropy_bits(cond_expectation(b, sigma, aux))
            - entropy_bits(cond_expectation(m, sigma, aux)) - entropy_bits(cond_expectation(c, sigma, aux)))


def _copy_isometry(w_dec: np.ndarray) -> np.ndarray:
    """Classical extension Σ p_x ρ_x ⊗ |x⟩⟨x| of a decomposition, as an isometry with k = e."""
    k, r = w_dec.shape
    w = np.zeros((k * k, r), dtype=complex)
    for x in range(k):
        w[x * k + x] = w_dec[x]
    return w


def isq_estimate(
    s: VnAlgebra, t: VnAlgebra, rho,
    ext_dim: int = 0, restarts: int = 16, seed=0, maxfev: int = 4000,
) -> MeasureEstimate:
    """Upper bound on I_sq = ½ inf I(S⊗𝒞 : T⊗𝒞 | 𝒞) over extensions of E_ST(ρ).

    Extensions are (id ⊗ Λ)(|ψ⟩⟨ψ|) with |ψ⟩ purifying E_ST(ρ) and Λ a
    channel into M_ext_dim with Kraus count rank(ρ). Candidates: the
    trivial extension, the eigenbasis copy, the best I_conv decomposition
    at the same effort, then Powell restarts.
    """
    square = _check_pair(s, t)
    rho = cond_expectation(square.m, hermitian_part(as_square(rho)))
    if is_pure_on(square.m, rho):
        return _exact("isq", square, rho, seed)
    d = rho.shape[0]
    psi = purify(rho)
    r = psi.shape[1]
    k = int(ext_dim) if ext_dim else min(d * d, MAX_EXT_DIM)
    a, b, m, c = square.s, square.t, square.m, square.c

    def value_of(w: np.ndarray, dim: int) -> float:
        return 0.5 * extended_value(a, b, m, c, _extension(psi, w, dim), dim)

    trace: List[Tuple[str, float]] = []
    candidates: List[Tuple[float, np.ndarray]] = []

    plain = 0.5 * square_value(a, b, m, c, rho)
    trace.append(("trivial", plain))
    candidates.append((plain, rho))

    copy = _copy_isometry(np.eye(r, dtype=complex))
    value = value_of(copy, r)
    trace.append(("eigen_copy", value))
    candidates.append((value, _extension(psi, copy, r)))

    conv = iconv_estimate(s, t, rho, restarts=restarts, seed=seed, maxfev=maxfev)
    w_dec = np.array([np.sqrt(p) * np.linalg.lstsq(psi, phi, rcond=None)[0] for p, phi in conv.witness])
    if w_dec.shape[0] and w_dec.shape[0] <= MAX_EXT_DIM:
        copy_dec = _copy_isometry(w_dec)
        value = value_of(copy_dec, w_dec.shape[0])
        trace.append(("decomposition_copy", value))
        candidates.append((value, _extension(psi, copy_dec, w_dec.shape[0])))

    rng = as_rng(seed)
    e = r
    size = 2 * k * e * r
    base = []
    if k >= r:
        warm = np.zeros((k * e, r), dtype=complex)
        for j in range(r):
            warm[j * e + j, j] = 1.0
        base.append(_real(warm))

    def objective(x):
        return value_of(_isometry(x, k * e, r), k)

    for i, x0 in enumerate(_starts(base, size, restarts, rng)):
        result = scipy.optimize.minimize(objective, x0, method="Powell",
                                         options={"maxfev": maxfev, "xtol": 1e-6, "ftol": 1e-10})
        if result.nfev >= maxfev:
            log.debug(f"isq: start {i} exhausted {maxfev} evaluations")
        trace.append((f"start{i}", float(result.fun)))
        candidates.append((float(result.fun), _extension(psi, _isometry(result.x, k * e, r), k)))

    best_value, best_sigma = min(candidates, key=lambda item: item[0])
    log.info(f"isq: best {best_value:.8f} over {len(trace)} candidate(s), ext_dim={k}")
    return MeasureEstimate(kind="isq", value_bits=float(best_value), exactness=UPPER, size=k,
                           restarts=max(restarts, len(base)), seed=seed if isinstance(seed, int) else None,
                           witness=best_sigma, trace=trace)


# Square-calculus infimum

def tensor_square(squares: Sequence[Square]) -> Square:
    """x₁ ⊗ x₂ ⊗ … for commuting squares; the product is again commuting."""
    for i, sq in enumerate(squares):
        if not sq.is_commuting:
            raise NotCommutingSquare(f"square {i} is not commuting")
    if len(squares) == 1:
        return squares[0]
    a = tensor_algebra(*[sq.a for sq in squares])
    b = tensor_algebra(*[sq.b for sq in squares])
    c = tensor_algebra(*[sq.c for sq in squares])
    m = tensor_algebra(*[sq.m for sq in squares])
    return Square(a=a, b=b, c=c, m=m, is_commuting=True)


def iext_estimate(
    squares: Sequence[Square], rho, ext_budget: int = 4, restarts: int = 4, seed=0, maxfev: int = 2000,
) -> MeasureEstimate:
    """Upper bound on I_ext of x = ⊗ squares by adjoining F = M_k (k ≤ ext_budget) to every corner."""
    x = tensor_square(squares)
    rho = hermitian_part(as_square(rho))
    if rho.shape[0] != x.m.ambient_dim:
        raise DomainError(f"state dim {rho.shape[0]} does not match M_{x.m.ambient_dim}")
    plain = square_value(x.a, x.b, x.m, x.c, rho)
    trace = [("trivial", plain)]
    if is_pure_on(x.m, rho):
        return MeasureEstimate(kind="iext", value_bits=plain, exactness=EXACT, seed=seed, witness=x, trace=trace)
    rho_m = cond_expectation(x.m, rho)
    psi = purify(rho_m)
    r = psi.shape[1]
    rng = as_rng(seed)
    best = plain
    for k in range(2, max(2, int(ext_budget)) + 1):
        def objective(p, k=k):
            return extended_value(x.a, x.b, x.m, x.c, _extension(psi, _isometry(p, k * r, r), k), k)

        base = []
        if k >= r:
            warm = np.zeros((k * r, r), dtype=complex)
            for j in range(r):
                warm[j * r + j, j] = 1.0
            base.append(_real(warm))
        for i, x0 in enumerate(_starts(base, 2 * k * r * r, restarts, rng)):
            result = scipy.optimize.minimize(objective, x0, method="Powell",
                                             options={"maxfev": maxfev, "xtol": 1e-6, "ftol": 1e-10})
            trace.append((f"k{k}_start{i}", float(result.fun)))
            best = min(best, float(result.fun))
    log.info(f"iext: best {best:.8f} (plain {plain:.8f})")
    return MeasureEstimate(kind="iext", value_bits=best, exactness=UPPER, size=int(ext_budget),
                           restarts=restarts, seed=seed if isinstance(seed, int) else None, witness=x, trace=trace)


# Bounds and maxima

def continuity_bound(epsilon: float, dim: int, variant: str = "sq") -> float:
    """k√ε log₂|M| + 3(1 + 2√ε) h(1/(1 + 2√ε)) with k = 12 (sq) or 6 (conv)."""
    if variant not in CONTINUITY_CONSTANTS:
        raise ValueError(f"Unknown variant: {variant}. Valid: {', '.join(CONTINUITY_CONSTANTS)}")
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    root = math.sqrt(epsilon)
    lead = CONTINUITY_CONSTANTS[variant] * root * math.log2(dim)
    return lead + 3.0 * (1.0 + 2.0 * root) * binary_entropy(1.0 / (1.0 + 2.0 * root))


def max_isq(m: VnAlgebra) -> Tuple[float, Optional[IsqWitness]]:
    """½ log₂ of the largest block dimension, with an MUB witness for prime blocks up to 13."""
    structure = m.blocks()
    block = max(structure.blocks, key=lambda blk: blk.n)
    p = block.n
    value = 0.5 * math.log2(p)
    if p == 1:
        return 0.0, None
    from .scenarios import MAX_PRIME, is_prime, mub_family

    if not is_prime(p) or p > MAX_PRIME:
        raise WitnessUnavailable(value, f"largest block has dimension {p}; witnesses need a prime ≤ {MAX_PRIME}")
    family = mub_family(p)
    d = m.ambient_dim
    rest = np.eye(d) - block.projection

    def lifted(u: np.ndarray) -> VnAlgebra:
        gens = [block.frame @ np.kron(np.outer(u[:, j], u[:, j].conj()), np.eye(block.m)) @ block.frame.conj().T
                for j in range(p)]
        if np.linalg.norm(rest) > 1e-12:
            gens.append(rest)
        return generate(gens, d)

    s, t = lifted(family.bases[0]), lifted(family.bases[1])
    e0 = np.zeros(block.m)
    e0[0] = 1.0
    rho = projector(block.frame @ np.kron(family.bases[2][:, 0], e0))
    st = join(s, t)
    achieved = 0.5 * square_value(s, t, st, intersect(s, t), rho)
    if abs(achieved - value) > 1e-9:
        raise WitnessUnavailable(value, f"witness achieved {achieved:.12f} instead of {value:.12f}")
    log.info(f"max_isq: block {p}, value {value:.6f}")
    return value, IsqWitness(s=s, t=t, rho=rho, value_bits=achieved)


def ppt_spot_check(rho, tol: float = 1e-9) -> Tuple[bool, float]:
    """Two-qubit separability by the partial-transpose test: (separable, min eigenvalue)."""
    rho = hermitian_part(as_square(rho))
    if rho.shape != (4, 4):
        raise DomainError(f"the PPT spot check is for two qubits, got shape {rho.shape}")
    pt = rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    low = float(np.linalg.eigvalsh(hermitian_part(pt))[0])
    return low >= -tol, low


def convexity_check(
    estimator: Callable[..., MeasureEstimate], s: VnAlgebra, t: VnAlgebra,
    states: Sequence[np.ndarray], weights: Sequence[float], **kwargs,
) -> Tuple[float, float]:
    """(estimate of Σ wᵢρᵢ, Σ wᵢ·estimate(ρᵢ)) with shared estimator settings."""
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(states) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise DomainError("weights must form a probability vector matching the states")
    mixture = sum(w * as_square(rho) for w, rho in zip(weights, states))
    mixed = estimator(s, t, mixture, **kwargs).value_bits
    separate = float(sum(w * estimator(s, t, rho, **kwargs).value_bits for w, rho in zip(weights, states)))
    return mixed, separate
