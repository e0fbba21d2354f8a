"""
Algebras
========
Finite-dimensional von Neumann subalgebras of M_d stored basis-first.

A ``VnAlgebra`` holds a Hilbert–Schmidt orthonormal basis of a *-closed
unital subspace closed under multiplication. Everything else (block
structure, superoperator form of the conditional expectation) is computed
lazily and cached once.

Vectorization is row-major throughout: vec(a x b) = (a ⊗ bᵀ) vec(x).

Usage:
    import numpy as np
    from vnlab.algebra import classify_square, full, generate

    x = generate([np.array([[0, 1], [1, 0]])], 2)
    z = generate([np.diag([1, -1])], 2)
    square = classify_square(x, z, full(2))
    square.is_commuting   # True
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .config import (
    BLOCK_GAP,
    BLOCK_RETRIES,
    BLOCK_TOL,
    RANK_CUTOFF,
    SPAN_TOL,
    SQUARE_TOL,
)
from .errors import DecompositionFailed, NotSubalgebra, ShapeMismatch
from .matcore import PAULIS, as_square, dagger, hermitian_part, partial_trace, permutation_matrix

log = logging.getLogger("vnlab.algebra")

_BLOCK_SEED = 0x5EED
_GRAM_LIMIT = 4_000_000


# Span bookkeeping

def _orth_rows(rows: np.ndarray, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Orthonormal rows spanning the row space, singular values cut relative to max(1, s₀)."""
    if rows.shape[0] == 0:
        return rows
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return rows[:0]
    r = int(np.count_nonzero(s > cutoff * max(1.0, s[0])))
    return vh[:r]


def _normalized_rows(rows: np.ndarray, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Unit rows; rows below ``cutoff`` times the largest norm are rounding noise and dropped."""
    if rows.shape[0] == 0:
        return rows
    norms = np.linalg.norm(rows, axis=1)
    top = float(norms.max())
    if top == 0.0:
        return rows[:0]
    keep = norms > cutoff * top
    return rows[keep] / norms[keep, None]


def _extend_rows(q: np.ndarray, candidates: np.ndarray, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Append to the orthonormal rows ``q`` whatever part of ``candidates`` lies outside their span."""
    cand = _normalized_rows(candidates, cutoff)
    if cand.shape[0] == 0:
        return q
    if q.shape[0]:
        for _ in range(2):
            cand = cand - (cand @ q.conj().T) @ q
    new = _orth_rows(cand, cutoff)
    if new.shape[0] == 0:
        return q
    if q.shape[0]:
        new = new - (new @ q.conj().T) @ q
    qm, _ = np.linalg.qr(new.T)
    return np.vstack([q, qm.T]) if q.shape[0] else qm.T


# The algebra type

class VnAlgebra:
    """*-closed unital subalgebra of M_d with an HS-orthonormal basis (shape k×d×d)."""

    def __init__(self, basis: np.ndarray, ambient_dim: int, label: str = ""):
        basis = np.array(basis, dtype=complex)
        if basis.ndim != 3 or basis.shape[1:] != (ambient_dim, ambient_dim):
            raise ShapeMismatch(f"basis shape {basis.shape} does not match ambient dim {ambient_dim}")
        self._basis = basis
        self._basis.setflags(write=False)
        self.ambient_dim = int(ambient_dim)
        self.label = label
        self._lock = threading.Lock()
        self._superop: Optional[np.ndarray] = None
        self._blocks: Optional["BlockStructure"] = None

    @classmethod
    def from_span(cls, mats: Iterable, ambient_dim: int, label: str = "") -> "VnAlgebra":
        """Orthonormalize a spanning set that is already known to be an algebra."""
        d = int(ambient_dim)
        rows = np.array([np.asarray(m, dtype=complex).reshape(-1) for m in mats]).reshape(-1, d * d)
        q = _extend_rows(np.zeros((0, d * d), dtype=complex), rows)
        return cls(q.reshape(-1, d, d), d, label)

    @property
    def basis(self) -> np.ndarray:
        return self._basis

    @property
    def dim(self) -> int:
        return self._basis.shape[0]

    @property
    def rows(self) -> np.ndarray:
        """Basis as vec rows, shape k×d²."""
        return self._basis.reshape(self.dim, -1)

    @property
    def contains_identity(self) -> bool:
        return self.contains(np.eye(self.ambient_dim))

    def superop(self) -> np.ndarray:
        """Conditional expectation as a d²×d² matrix acting on row-major vecs."""
        if self._superop is None:
            b = self.rows
            p = b.T @ b.conj()
            with self._lock:
                if self._superop is None:
                    self._superop = p
        return self._superop

    def blocks(self) -> "BlockStructure":
        if self._blocks is None:
            structure = block_structure(self, _cached=False)
            with self._lock:
                if self._blocks is None:
                    self._blocks = structure
        return self._blocks

    def coefficients(self, x) -> np.ndarray:
        return np.einsum("kij,ij->k", self._basis.conj(), x)

    def project(self, x) -> np.ndarray:
        return np.einsum("k,kij->ij", self.coefficients(x), self._basis)

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=complex)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol: float = SPAN_TOL) -> bool:
        x = np.asarray(x, dtype=complex)
        return self.residual(x) <= tol * max(1.0, float(np.linalg.norm(x)))

    def conjugate(self, u) -> "VnAlgebra":
        """The algebra u N u†."""
        u = as_square(u)
        basis = np.einsum("ij,kjl,ml->kim", u, self._basis, u.conj())
        return VnAlgebra(basis, self.ambient_dim, self.label)

    def closure_residuals(self) -> tuple[float, float, float]:
        """Largest residuals of adjoints, products and the identity against the span."""
        adj = max(self.residual(dagger(b)) for b in self._basis)
        prods = np.einsum("aij,bjk->abik", self._basis, self._basis).reshape(-1, self.ambient_dim, self.ambient_dim)
        prod = max(self.residual(p) for p in prods)
        unit = self.residual(np.eye(self.ambient_dim)) / np.sqrt(self.ambient_dim)
        return float(adj), float(prod), float(unit)

    def is_valid(self, tol: float = SPAN_TOL) -> bool:
        return all(r <= tol for r in self.closure_residuals())

    def __repr__(self) -> str:
        tag = f" {self.label!r}" if self.label else ""
        return f"<VnAlgebra{tag} dim={self.dim} in M_{self.ambient_dim}>"


# Constructors

def full(d: int) -> VnAlgebra:
    basis = np.zeros((d * d, d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            basis[i * d + j, i, j] = 1.0
    return VnAlgebra(basis, d, f"full:{d}")


def trivial(d: int) -> VnAlgebra:
    return VnAlgebra(np.eye(d, dtype=complex)[None] / np.sqrt(d), d, f"trivial:{d}")


def diagonal(d: int) -> VnAlgebra:
    basis = np.zeros((d, d, d), dtype=complex)
    for i in range(d):
        basis[i, i, i] = 1.0
    return VnAlgebra(basis, d, f"diag:{d}")


def basis_algebra(u, label: str = "") -> VnAlgebra:
    """Maximal abelian algebra of operators diagonal in the columns of ``u``."""
    u = as_square(u)
    basis = np.einsum("ik,jk->kij", u, u.conj())
    return VnAlgebra(basis, u.shape[0], label)


def tensor_algebra(*algebras: VnAlgebra) -> VnAlgebra:
    """N₁ ⊗ N₂ ⊗ … on the tensor product of the ambient spaces."""
    if not algebras:
        raise ShapeMismatch("tensor_algebra needs at least one factor")
    basis = algebras[0].basis
    d = algebras[0].ambient_dim
    for alg in algebras[1:]:
        basis = np.einsum("aij,bkl->abikjl", basis, alg.basis).reshape(
            basis.shape[0] * alg.dim, d * alg.ambient_dim, d * alg.ambient_dim
        )
        d *= alg.ambient_dim
    label = "*".join(a.label for a in algebras) if all(a.label for a in algebras) else ""
    return VnAlgebra(basis, d, label)


def pauli_algebra(letter: str) -> VnAlgebra:
    """The abelian qubit algebra diagonal in the X, Y or Z eigenbasis."""
    key = letter.upper()
    if key not in ("X", "Y", "Z"):
        raise ValueError(f"Unknown Pauli letter: {letter}. Valid: X, Y, Z")
    return generate([PAULIS[key]], 2, f"pauli:{key}")


def embed(alg: VnAlgebra, dims: Sequence[int], positions: Sequence[int], rest: Optional[VnAlgebra] = None) -> VnAlgebra:
    """Place ``alg`` on the factors ``positions`` of ⊗ dims, with ``rest`` (default ℂ1) on the others."""
    dims = [int(d) for d in dims]
    positions = [int(p) for p in positions]
    others = [i for i in range(len(dims)) if i not in positions]
    inner = int(np.prod([dims[i] for i in positions])) if positions else 1
    if alg.ambient_dim != inner:
        raise ShapeMismatch(f"{alg!r} does not act on factors {positions} of {dims}")
    outer = int(np.prod([dims[i] for i in others])) if others else 1
    if rest is None:
        rest = trivial(outer)
    elif rest.ambient_dim != outer:
        raise ShapeMismatch(f"{rest!r} does not act on factors {others} of {dims}")
    placed = tensor_algebra(alg, rest) if others else alg
    layout = positions + others
    order = [layout.index(j) for j in range(len(dims))]
    perm = permutation_matrix([dims[i] for i in layout], order)
    return placed.conjugate(perm)


def reduce_to(alg: VnAlgebra, dims: Sequence[int], keep: Sequence[int]) -> VnAlgebra:
    """The algebra on the ``keep`` factors when ``alg`` ⊆ M_keep ⊗ 1; NotSubalgebra otherwise."""
    dims = [int(d) for d in dims]
    keep = sorted(int(k) for k in keep)
    inner = int(np.prod([dims[i] for i in keep])) if keep else 1
    mats = [partial_trace(b, dims, keep) for b in alg.basis]
    reduced = VnAlgebra.from_span(mats, inner)
    if not same_span(embed(reduced, dims, keep), alg):
        raise NotSubalgebra(f"{alg!r} is not supported on factors {keep} of {dims}")
    return reduced


def factor_out(alg: VnAlgebra, dims: Sequence[int], index: int) -> tuple["VnAlgebra", str]:
    """Split ``alg`` = X ⊗ (M_k or ℂ1) on factor ``index``; returns X and "full" or "trivial"."""
    dims = [int(d) for d in dims]
    others = [i for i in range(len(dims)) if i != index]
    outer = int(np.prod([dims[i] for i in others])) if others else 1
    reduced = VnAlgebra.from_span([partial_trace(b, dims, others) for b in alg.basis], outer)
    k = dims[index]
    for kind, factor in (("trivial", trivial(k)), ("full", full(k))):
        if reduced.dim * factor.dim == alg.dim and same_span(embed(factor, dims, [index], rest=reduced), alg):
            return reduced, kind
    raise NotSubalgebra(f"{alg!r} does not split off factor {index} of {dims}")


def generate(generators: Sequence, ambient_dim: int, label: str = "") -> VnAlgebra:
    """Smallest *-closed unital subalgebra containing the generators."""
    d = int(ambient_dim)
    gens = [as_square(g) for g in generators]
    for g in gens:
        if g.shape != (d, d):
            raise ShapeMismatch(f"generator shape {g.shape} does not match ambient dim {d}")
    words = [np.eye(d, dtype=complex)] + gens + [dagger(g) for g in gens]
    letters = np.array(words[1:]).reshape(-1, d, d) if gens else np.zeros((0, d, d), dtype=complex)
    q = _extend_rows(np.zeros((0, d * d), dtype=complex), np.array([w.reshape(-1) for w in words]))
    rounds = 0
    while True:
        rounds += 1
        if letters.shape[0] == 0:
            break
        current = q.reshape(-1, d, d)
        products = np.einsum("gij,kjl->gkil", letters, current).reshape(-1, d * d)
        grown = _extend_rows(q, products)
        if grown.shape[0] == q.shape[0]:
            break
        q = grown
    log.debug(f"generate: dim {q.shape[0]} in M_{d} after {rounds} round(s)")
    return VnAlgebra(q.reshape(-1, d, d), d, label)


def join(*algebras: VnAlgebra) -> VnAlgebra:
    """The algebra generated by the union."""
    d = _common_dim(algebras)
    gens = [b for alg in algebras for b in alg.basis]
    return generate(gens, d)


def _common_dim(algebras: Sequence[VnAlgebra]) -> int:
    dims = {a.ambient_dim for a in algebras}
    if len(dims) != 1:
        raise ShapeMismatch(f"algebras live in different ambient dims: {sorted(dims)}")
    return dims.pop()


# Predicates

def is_subalgebra(a: VnAlgebra, b: VnAlgebra, tol: float = SPAN_TOL) -> bool:
    _common_dim([a, b])
    return all(b.contains(x, tol) for x in a.basis)


def same_span(a: VnAlgebra, b: VnAlgebra, tol: float = SPAN_TOL) -> bool:
    return a.dim == b.dim and is_subalgebra(a, b, tol)


def require_subalgebra(a: VnAlgebra, b: VnAlgebra, what: str = "") -> None:
    if not is_subalgebra(a, b):
        name = what or f"{a!r} ⊆ {b!r}"
        raise NotSubalgebra(f"containment fails: {name}")


def intersect(a: VnAlgebra, b: VnAlgebra) -> VnAlgebra:
    """Intersection of spans: null space of the stacked orthogonal complements."""
    d = _common_dim([a, b])
    eye = np.eye(d * d)
    stacked = np.vstack([eye - a.superop(), eye - b.superop()])
    ns = scipy.linalg.null_space(stacked, rcond=SPAN_TOL)
    return VnAlgebra(ns.T.reshape(-1, d, d), d)


def commutant(n: VnAlgebra, within: Optional[VnAlgebra] = None) -> VnAlgebra:
    """N′ ∩ within; ``within`` defaults to the full matrix algebra."""
    d = n.ambient_dim
    if within is not None:
        require_subalgebra(n, within, "commutant argument inside `within`")
    eye = np.eye(d)
    maps = [np.kron(b, eye) - np.kron(eye, b.T) for b in n.basis]
    if n.dim * d ** 4 <= _GRAM_LIMIT:
        ns = scipy.linalg.null_space(np.vstack(maps), rcond=RANK_CUTOFF)
    else:
        gram = sum(m.conj().T @ m for m in maps)
        w, v = scipy.linalg.eigh(hermitian_part(gram))
        ns = v[:, w <= 1e-9 * max(w[-1], 1.0)]
    result = VnAlgebra(ns.T.reshape(-1, d, d), d)
    if within is None or within.dim == d * d:
        return result
    return intersect(result, within)


def center(n: VnAlgebra) -> VnAlgebra:
    return intersect(n, commutant(n))


def is_factor(n: VnAlgebra) -> bool:
    return center(n).dim == 1


def conjugation_superop(u) -> np.ndarray:
    """x ↦ u x u† on row-major vecs."""
    u = as_square(u)
    return np.kron(u, u.conj())


def normalizes(u, n: VnAlgebra, tol: float = SPAN_TOL) -> bool:
    """True when u N u† = N."""
    u = as_square(u)
    return all(n.contains(u @ b @ u.conj().T, tol) for b in n.basis)


def expectations_commute(p: np.ndarray, q: np.ndarray, tol: float = SQUARE_TOL) -> bool:
    return float(np.linalg.norm(p @ q - q @ p, 2)) <= tol


# Block structure

@dataclass(frozen=True)
class Block:
    n: int                   # factor dimension
    m: int                   # multiplicity
    projection: np.ndarray   # central projection P_i
    frame: np.ndarray        # d × (n·m) isometry, column j*m + l

    def compress(self, x) -> np.ndarray:
        return self.frame.conj().T @ x @ self.frame


@dataclass(frozen=True)
class BlockStructure:
    ambient_dim: int
    blocks: List[Block] = field(default_factory=list)

    @property
    def unitary(self) -> np.ndarray:
        return np.hstack([b.frame for b in self.blocks])

    @property
    def shape(self) -> List[tuple]:
        return [(b.n, b.m) for b in self.blocks]

    @property
    def env_dim(self) -> int:
        return sum(b.m * b.m for b in self.blocks)

    def max_factor(self) -> int:
        return max(b.n for b in self.blocks)


def group_eigenvalues(values: np.ndarray, gap: float = BLOCK_GAP) -> List[np.ndarray]:
    """Split sorted eigenvalues wherever consecutive values differ by more than ``gap``."""
    if values.size == 0:
        return []
    cuts = np.nonzero(np.abs(np.diff(values)) > gap)[0] + 1
    return np.split(np.arange(values.size), cuts)


def _random_hermitian_in(rows: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    coeffs = rng.standard_normal(rows.shape[0]) + 1j * rng.standard_normal(rows.shape[0])
    h = hermitian_part((coeffs @ rows).reshape(d, d))
    norm = np.linalg.norm(h)
    return h / norm if norm > 0 else h


def _block_frame(rows: np.ndarray, w: np.ndarray, n: int, m: int, d: int, rng) -> Optional[np.ndarray]:
    """Frame for one block, or None if the random elements were degenerate."""
    x = _random_hermitian_in(rows, d, rng)
    vals, vecs = scipy.linalg.eigh(hermitian_part(w.conj().T @ x @ w))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    groups = group_eigenvalues(vals)
    if len(groups) != n or any(g.size != m for g in groups):
        return None
    minimal = [w @ vecs[:, g] for g in groups]            # orthonormal bases of range(p_j)
    p1 = minimal[0] @ minimal[0].conj().T
    y = rng.standard_normal(rows.shape[0]) + 1j * rng.standard_normal(rows.shape[0])
    y = (y @ rows).reshape(d, d)
    columns = []
    for j in range(n):
        if j == 0:
            e1j = p1
        else:
            pj = minimal[j] @ minimal[j].conj().T
            xj = p1 @ y @ pj
            c = np.trace(xj.conj().T @ xj).real / m
            if c < 1e-10:
                return None
            e1j = xj / np.sqrt(c)
        columns.append(e1j.conj().T @ minimal[0])
    return np.hstack(columns)


def _frame_residual(alg: VnAlgebra, blocks: List[Block]) -> float:
    u = np.hstack([b.frame for b in blocks])
    worst = 0.0
    for b in alg.basis:
        t = u.conj().T @ b @ u
        target = np.zeros_like(t)
        offset = 0
        for blk in blocks:
            size = blk.n * blk.m
            piece = t[offset:offset + size, offset:offset + size].reshape(blk.n, blk.m, blk.n, blk.m)
            factor = np.einsum("iaja->ij", piece) / blk.m
            target[offset:offset + size, offset:offset + size] = np.kron(factor, np.eye(blk.m))
            offset += size
        worst = max(worst, float(np.linalg.norm(t - target)))
    return worst


def block_structure(n: VnAlgebra, _cached: bool = True) -> BlockStructure:
    """Wedderburn form: central projections, (nᵢ, mᵢ) and aligning frames."""
    if _cached:
        return n.blocks()
    d = n.ambient_dim
    z = center(n)
    for attempt in range(BLOCK_RETRIES):
        rng = np.random.default_rng(_BLOCK_SEED + attempt)
        h = _random_hermitian_in(z.rows, d, rng)
        vals, vecs = scipy.linalg.eigh(h)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        groups = group_eigenvalues(vals)
        if len(groups) != z.dim:
            log.debug(f"block_structure: {len(groups)} groups vs center dim {z.dim}, retry {attempt + 1}")
            continue
        blocks: List[Block] = []
        ok = True
        for g in groups:
            w = vecs[:, g]
            proj = w @ w.conj().T
            restricted = _orth_rows(np.array([(proj @ b).reshape(-1) for b in n.basis]))
            size = restricted.shape[0]
            nf = int(round(np.sqrt(size)))
            if nf * nf != size or g.size % nf:
                ok = False
                break
            m = g.size // nf
            frame = _block_frame(restricted, w, nf, m, d, rng)
            if frame is None:
                ok = False
                break
            blocks.append(Block(n=nf, m=m, projection=proj, frame=frame))
        if not ok:
            log.debug(f"block_structure: degenerate block frame, retry {attempt + 1}")
            continue
        residual = _frame_residual(n, blocks)
        if residual > BLOCK_TOL:
            log.debug(f"block_structure: frame residual {residual:.2e}, retry {attempt + 1}")
            continue
        return BlockStructure(ambient_dim=d, blocks=blocks)
    raise DecompositionFailed(f"could not decompose {n!r} after {BLOCK_RETRIES} attempts")


# Conditional expectations

def cond_expectation(n: VnAlgebra, rho, aux_dims: Sequence[int] = ()) -> np.ndarray:
    """E_N(ρ) as the HS projection; with ``aux_dims`` applies E_N ⊗ id on N's slot first."""
    rho = as_square(rho)
    d = n.ambient_dim
    k = int(np.prod(aux_dims)) if len(aux_dims) else 1
    if rho.shape != (d * k, d * k):
        raise ShapeMismatch(f"state of shape {rho.shape} does not fit M_{d} ⊗ M_{k}")
    if k == 1:
        return n.project(rho)
    t = rho.reshape(d, k, d, k)
    coeffs = np.einsum("kij,iajb->kab", n.basis.conj(), t)
    return np.einsum("kij,kab->iajb", n.basis, coeffs).reshape(d * k, d * k)


def cond_expectation_blockwise(n: VnAlgebra, rho) -> np.ndarray:
    """E_N(ρ) = ⊕ᵢ tr_m(PᵢρPᵢ) ⊗ 1/mᵢ, assembled through the frames."""
    rho = as_square(rho)
    out = np.zeros_like(rho)
    for blk in n.blocks().blocks:
        a = partial_trace(blk.compress(rho), [blk.n, blk.m], [0])
        out += blk.frame @ np.kron(a, np.eye(blk.m) / blk.m) @ blk.frame.conj().T
    return out


def commutant_expectation(n: VnAlgebra, rho) -> np.ndarray:
    """E_{N′}(ρ) = ⊕ᵢ 1/nᵢ ⊗ tr_n(PᵢρPᵢ) in the same frames."""
    rho = as_square(rho)
    out = np.zeros_like(rho)
    for blk in n.blocks().blocks:
        b = partial_trace(blk.compress(rho), [blk.n, blk.m], [1])
        out += blk.frame @ np.kron(np.eye(blk.n) / blk.n, b) @ blk.frame.conj().T
    return out


def complement_apply(n: VnAlgebra, rho_joint, aux_dims: Sequence[int] = ()) -> np.ndarray:
    """(E_N^c ⊗ id)(ρ) = ⊕ᵢ 1_{mᵢ}/mᵢ ⊗ tr_{nᵢ}((Pᵢ⊗1)ρ(Pᵢ⊗1)), output dimension Σ mᵢ²·K."""
    rho = as_square(rho_joint)
    d = n.ambient_dim
    k = int(np.prod(aux_dims)) if len(aux_dims) else 1
    if rho.shape != (d * k, d * k):
        raise ShapeMismatch(f"state of shape {rho.shape} does not fit M_{d} ⊗ M_{k}")
    pieces = []
    for blk in n.blocks().blocks:
        frame = np.kron(blk.frame, np.eye(k))
        local = frame.conj().T @ rho @ frame
        tau = partial_trace(local, [blk.n, blk.m * k], [1])
        pieces.append(np.kron(np.eye(blk.m) / blk.m, tau))
    return scipy.linalg.block_diag(*pieces)


def stinespring(n: VnAlgebra) -> np.ndarray:
    """Isometry V: C^d → C^d ⊗ C^E, E = Σ mᵢ², with tr_E VρV† = E_N(ρ) and tr_sys VρV† = E_N^c(ρ)."""
    structure = n.blocks()
    d = n.ambient_dim
    e = structure.env_dim
    v = np.zeros((d * e, d), dtype=complex)
    offset = 0
    for blk in structure.blocks:
        m = blk.m
        for a in range(blk.n):
            for b in range(m):
                src = blk.frame[:, a * m + b]
                image = np.zeros((d, e), dtype=complex)
                for c in range(m):
                    image[:, offset + c * m + b] += blk.frame[:, a * m + c]
                # V maps the frame vector src to image / √m; extend linearly via the dual vector
                v += np.outer(image.reshape(-1), src.conj()) / np.sqrt(m)
        offset += m * m
    return v


# Squares

@dataclass
class Square:
    """Nested quadruple C ⊆ A∩B, A,B ⊆ M with cached square flags."""
    a: VnAlgebra
    b: VnAlgebra
    c: VnAlgebra
    m: VnAlgebra
    is_commuting: bool
    is_co_commuting: Optional[bool] = None
    commuting_residual: float = 0.0

    @property
    def s(self) -> VnAlgebra:
        return self.a

    @property
    def t(self) -> VnAlgebra:
        return self.b


def square_residual(a: VnAlgebra, b: VnAlgebra, c: VnAlgebra) -> float:
    """max(‖E_A E_B − E_C‖, ‖E_B E_A − E_C‖) as superoperators."""
    pa, pb, pc = a.superop(), b.superop(), c.superop()
    return max(float(np.linalg.norm(pa @ pb - pc, 2)), float(np.linalg.norm(pb @ pa - pc, 2)))


def classify_square(s: VnAlgebra, t: VnAlgebra, m: VnAlgebra, tol: float = SQUARE_TOL) -> Square:
    """Build the square (S, M; S∩T, T) and decide commuting and co-commuting."""
    require_subalgebra(s, m, "S ⊆ M")
    require_subalgebra(t, m, "T ⊆ M")
    c = intersect(s, t)
    residual = square_residual(s, t, c)
    s_prime = commutant(s, m)
    t_prime = commutant(t, m)
    co_residual = square_residual(s_prime, t_prime, intersect(s_prime, t_prime))
    square = Square(
        a=s, b=t, c=c, m=m,
        is_commuting=residual <= tol,
        is_co_commuting=co_residual <= tol,
        commuting_residual=residual,
    )
    log.debug(f"classify_square: residual {residual:.2e}, co-residual {co_residual:.2e}")
    return square
