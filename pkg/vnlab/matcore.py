"""
Matrix Core
===========
Dense complex linear algebra used by every other module: Hermitian
eigendecomposition, spectral functions with the 0·log 0 = 0 convention,
tensor products and partial traces, state metrics and seeded sampling.

Matrices are plain ``numpy.ndarray`` values of dtype complex128. Nothing
here mutates its inputs.
"""

from __future__ import annotations

import hashlib
import logging
import string
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Sequence, Union

import numpy as np
import scipy.linalg

from .config import DENSITY_TOL, EIG_CUTOFF, HERMITIAN_TOL
from .errors import DomainError, NotHermitian, ShapeMismatch

log = logging.getLogger("vnlab.matcore")

SeedLike = Union[int, np.random.Generator, None]

SAMPLE_KINDS = ("haar_unitary", "density", "pure")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order with matching unitary eigenvectors (columns)."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(x) -> np.ndarray:
    """Return ``x`` as a 2-D complex array."""
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise ShapeMismatch(f"Expected a matrix, got array with shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("Matrix has non-finite entries")
    return m


def as_square(x) -> np.ndarray:
    m = as_matrix(x)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"Expected a square matrix, got {m.shape}")
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def check_hermitian(h, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity relative to ‖h‖₂ and return the symmetrized matrix."""
    h = as_square(h)
    scale = max(np.linalg.norm(h), 1.0)
    asym = np.linalg.norm(h - dagger(h))
    if asym > tol * scale:
        raise NotHermitian(f"‖h − h†‖ = {asym:.3e} exceeds {tol:.1e}·‖h‖")
    return hermitian_part(h)


def eig_hermitian(h, tol: float = HERMITIAN_TOL) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    h = check_hermitian(h, tol)
    w, v = scipy.linalg.eigh(h)
    order = np.argsort(w)[::-1]
    return Spectrum(eigenvalues=w[order].real.copy(), eigenvectors=v[:, order])


def _retained(eigenvalues: np.ndarray, zero_cutoff: float) -> np.ndarray:
    top = np.max(np.abs(eigenvalues)) if eigenvalues.size else 0.0
    if top == 0.0:
        return np.zeros(eigenvalues.shape, dtype=bool)
    return np.abs(eigenvalues) > zero_cutoff * top


def apply_spectral_function(
    h,
    f: Callable[[np.ndarray], np.ndarray],
    zero_cutoff: float = EIG_CUTOFF,
) -> np.ndarray:
    """Return V f(λ) V† with eigenvalues below the relative cutoff sent to 0."""
    spec = eig_hermitian(h)
    keep = _retained(spec.eigenvalues, zero_cutoff)
    values = np.zeros(spec.eigenvalues.shape, dtype=complex)
    if np.any(keep):
        with np.errstate(all="ignore"):
            mapped = np.asarray(f(spec.eigenvalues[keep]), dtype=complex)
        if not np.all(np.isfinite(mapped)):
            bad = spec.eigenvalues[keep][~np.isfinite(mapped)]
            raise DomainError(f"Spectral function undefined at eigenvalue(s) {bad}")
        values[keep] = mapped
    v = spec.eigenvectors
    return (v * values) @ v.conj().T


def psd_power(h, power: complex, zero_cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Power of a PSD matrix on its support; negative round-off eigenvalues are clipped."""
    return apply_spectral_function(h, lambda x: np.power(np.clip(x, 0.0, None).astype(complex), power), zero_cutoff)


def psd_sqrt(h) -> np.ndarray:
    return apply_spectral_function(h, lambda x: np.sqrt(np.clip(x, 0.0, None)))


def log2m(h, zero_cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Base-2 matrix logarithm on the support."""
    return apply_spectral_function(h, np.log2, zero_cutoff)


def support_projector(h, zero_cutoff: float = EIG_CUTOFF) -> np.ndarray:
    return apply_spectral_function(h, np.ones_like, zero_cutoff)


def rank(h, zero_cutoff: float = EIG_CUTOFF) -> int:
    return int(np.count_nonzero(_retained(eig_hermitian(h).eigenvalues, zero_cutoff)))


def tensor(*ms) -> np.ndarray:
    """Kronecker product of any number of matrices or vectors."""
    if not ms:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in ms])


def _check_dims(n: int, dims: Sequence[int]) -> list:
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != n:
        raise ShapeMismatch(f"Subsystem dims {dims} do not multiply to {n}")
    return dims


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``; kept order follows ``dims``."""
    m = as_square(m)
    dims = _check_dims(m.shape[0], dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ShapeMismatch(f"keep={keep} out of range for {n} subsystems")
    if 2 * n > len(string.ascii_letters):
        raise ShapeMismatch(f"Too many subsystems: {n}")
    rows = list(string.ascii_letters[:n])
    cols = list(string.ascii_letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, m.reshape(dims + dims))
    k = int(np.prod([dims[i] for i in keep]))
    return np.asarray(reduced).reshape(k, k)


def permute_systems(m, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: output factor j is input factor ``order[j]``."""
    m = as_square(m)
    dims = _check_dims(m.shape[0], dims)
    n = len(dims)
    if sorted(order) != list(range(n)):
        raise ShapeMismatch(f"order {order} is not a permutation of {n} systems")
    t = m.reshape(dims + dims).transpose(list(order) + [n + i for i in order])
    return t.reshape(m.shape)


def permutation_matrix(dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Unitary P with P m Pᵀ = permute_systems(m, dims, order)."""
    dims = [int(d) for d in dims]
    n = len(dims)
    if sorted(order) != list(range(n)):
        raise ShapeMismatch(f"order {order} is not a permutation of {n} systems")
    total = int(np.prod(dims))
    eye = np.eye(total, dtype=complex).reshape(dims + [total])
    return eye.transpose(list(order) + [n]).reshape(total, total)


PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def trace_distance(rho, sigma) -> float:
    """Full trace norm ‖ρ − σ‖₁ (no factor ½)."""
    rho, sigma = as_square(rho), as_square(sigma)
    if rho.shape != sigma.shape:
        raise ShapeMismatch(f"Shapes differ: {rho.shape} vs {sigma.shape}")
    return float(np.sum(np.abs(scipy.linalg.eigvalsh(hermitian_part(rho - sigma)))))


def fidelity(rho, sigma) -> float:
    """Root fidelity tr√(√ρ σ √ρ), clipped to [0, 1]."""
    rho, sigma = as_square(rho), as_square(sigma)
    if rho.shape != sigma.shape:
        raise ShapeMismatch(f"Shapes differ: {rho.shape} vs {sigma.shape}")
    root = psd_sqrt(rho)
    inner = scipy.linalg.eigvalsh(hermitian_part(root @ sigma @ root))
    return float(np.clip(np.sum(np.sqrt(np.clip(inner, 0.0, None))), 0.0, 1.0))


def binary_entropy(p: float) -> float:
    p = float(p)
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def is_density(rho, tol: float = DENSITY_TOL) -> bool:
    try:
        as_density(rho, tol)
    except (DomainError, NotHermitian, ShapeMismatch):
        return False
    return True


def as_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    """Validate unit trace, Hermiticity and positivity; return the symmetrized matrix."""
    rho = as_square(rho)
    if np.linalg.norm(rho - dagger(rho)) > tol * max(1.0, np.linalg.norm(rho)):
        raise NotHermitian("Density is not Hermitian")
    rho = hermitian_part(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise DomainError(f"Density trace is {tr:.12g}, expected 1")
    low = scipy.linalg.eigvalsh(rho)[0]
    if low < -tol:
        raise DomainError(f"Density has negative eigenvalue {low:.3e}")
    return rho


def purify(rho) -> np.ndarray:
    """Canonical purification Σ √λᵢ |uᵢ⟩|i⟩ on C^d ⊗ C^r, r = rank(ρ); returned as a d×r matrix."""
    spec = eig_hermitian(rho)
    keep = _retained(spec.eigenvalues, EIG_CUTOFF) & (spec.eigenvalues > 0)
    lam = spec.eigenvalues[keep]
    return spec.eigenvectors[:, keep] * np.sqrt(lam)


def pure_vector(rho, tol: float = 1e-8) -> np.ndarray | None:
    """Return a unit vector ψ with ρ = |ψ⟩⟨ψ| when ρ is pure within ``tol``, else None."""
    spec = eig_hermitian(rho)
    if abs(spec.eigenvalues[0] - 1.0) > tol:
        return None
    return spec.eigenvectors[:, 0]


def phase_overlap(psi, phi) -> float:
    """|⟨ψ|φ⟩| for normalized vectors, the global-phase-invariant comparison."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    return float(abs(np.vdot(psi, phi)) / (np.linalg.norm(psi) * np.linalg.norm(phi)))


def state_digest(m) -> str:
    """SHA-256 over the canonical complex128 byte image and shape."""
    arr = np.ascontiguousarray(np.asarray(m, dtype=np.complex128))
    h = hashlib.sha256()
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


# Sampling

def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def haar_unitary(dim: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-random unitary via QR with the diagonal of R phase-fixed."""
    rng = as_rng(seed)
    q, r = np.linalg.qr(ginibre(dim, dim, rng))
    d = np.diag(r)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phases


def random_state_vector(dim: int, seed: SeedLike = None) -> np.ndarray:
    rng = as_rng(seed)
    v = ginibre(dim, 1, rng).reshape(-1)
    return v / np.linalg.norm(v)


def random_density(dim: int, rank_: int | None = None, seed: SeedLike = None) -> np.ndarray:
    """Induced-measure random density of the given rank (full rank by default)."""
    rng = as_rng(seed)
    r = dim if rank_ is None else int(rank_)
    if not 1 <= r <= dim:
        raise DomainError(f"rank must lie in [1, {dim}], got {r}")
    g = ginibre(dim, r, rng)
    rho = g @ g.conj().T
    return hermitian_part(rho / np.trace(rho).real)


def random_hermitian(dim: int, seed: SeedLike = None) -> np.ndarray:
    return hermitian_part(ginibre(dim, dim, as_rng(seed)))


def sample(kind: str, dim: int, seed: SeedLike = None, rank: int | None = None) -> np.ndarray:
    """Seeded sampler for ``haar_unitary``, ``density`` (optionally of given rank) and ``pure`` states."""
    if dim < 1:
        raise DomainError(f"dim must be positive, got {dim}")
    if kind == "haar_unitary":
        return haar_unitary(dim, seed)
    if kind == "density":
        return random_density(dim, rank, seed)
    if kind == "pure":
        return projector(random_state_vector(dim, seed))
    raise ValueError(f"Unknown sample kind: {kind}. Valid: {', '.join(SAMPLE_KINDS)}")
