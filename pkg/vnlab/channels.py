"""
Channels
========
Kraus-form quantum channels, Petz recovery, the resource-theory
predicates (bimodule, T-preserving) and validated S-/T-operations,
plus the two algebra-replacing moves: covariant averaging and
Heisenberg–Schrödinger picture swaps.

An S-operation is built from an ``OperationPlan`` and a commuting square.
Every step is checked on the algebras before anything runs; the result
is a ``ValidatedOperation`` whose ``execute`` maps ρ to (ρ̃, S̃, T̃). In a
T-operation the two algebras exchange roles throughout.

Usage:
    from vnlab.channels import OperationPlan, PlanStep, build_s_operation

    plan = OperationPlan("s-state", [PlanStep("channel", {"channel": phi})])
    op = build_s_operation(plan, square)
    rho_out, s_out, t_out = op.execute(rho)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import (
    Square,
    VnAlgebra,
    commutant,
    cond_expectation,
    factor_out,
    full,
    generate,
    intersect,
    is_subalgebra,
    join,
    reduce_to,
    same_span,
    stinespring,
    tensor_algebra,
    trivial,
)
from .config import EIG_CUTOFF, MIXTURE_TOL, SQUARE_TOL, SSA_TOL
from .errors import (
    ConstraintViolated,
    DomainError,
    NotCommutingSquare,
    NotCovariant,
    NotSubalgebra,
    ShapeMismatch,
    SingularDefault,
    StepRejected,
    ToleranceFailure,
    VnlabError,
)
from .matcore import (
    as_square,
    fidelity,
    hermitian_part,
    partial_trace,
    permute_systems,
    psd_power,
    rank,
    tensor,
    trace_distance,
)
from .squares import _classify_fast, gen_cmi

log = logging.getLogger("vnlab.channels")

CHANNEL_TOL = 1e-9

PLAN_KINDS = ("s-state", "s-algebra", "t-state", "t-algebra")
STATE_STEPS = ("extend", "channel", "discard")
STEP_STAGES = {
    "extend": 1,
    "unitary-heisenberg": 2,
    "unitary-rename": 2,
    "shrink-s": 3,
    "enlarge-t": 3,
    "shrink-t": 3,
    "enlarge-s": 3,
    "restrict": 4,
}


# Channel type

@dataclass(frozen=True, eq=False)
class Channel:
    """Completely positive map in Kraus form; ``kraus`` has shape r × out × in."""
    kraus: np.ndarray
    label: str = ""

    def __post_init__(self):
        k = np.array(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] == 0:
            raise ShapeMismatch(f"Kraus operators must stack to r × out × in, got shape {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    @classmethod
    def from_kraus(cls, ops: Sequence, label: str = "", tol: float = CHANNEL_TOL) -> "Channel":
        """Build a channel and insist on Σ K†K = I."""
        channel = cls(np.array([np.asarray(k, dtype=complex) for k in ops]), label)
        residual = channel.tp_residual()
        if residual > tol:
            raise DomainError(f"Kraus operators are not trace preserving: ‖ΣK†K − I‖ = {residual:.2e}")
        return channel

    @property
    def in_dim(self) -> int:
        return self.kraus.shape[2]

    @property
    def out_dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def kraus_rank(self) -> int:
        return self.kraus.shape[0]

    def apply(self, rho) -> np.ndarray:
        rho = as_square(rho)
        if rho.shape[0] != self.in_dim:
            raise ShapeMismatch(f"state dim {rho.shape[0]} does not match channel input {self.in_dim}")
        return np.einsum("rij,jk,rlk->il", self.kraus, rho, self.kraus.conj(), optimize=True)

    def adjoint(self, x) -> np.ndarray:
        """Heisenberg picture Φ†(x) = Σ K† x K."""
        x = as_square(x)
        if x.shape[0] != self.out_dim:
            raise ShapeMismatch(f"operator dim {x.shape[0]} does not match channel output {self.out_dim}")
        return np.einsum("rji,jk,rkl->il", self.kraus.conj(), x, self.kraus, optimize=True)

    def adjoint_many(self, xs: np.ndarray) -> np.ndarray:
        return np.einsum("rji,ajk,rkl->ail", self.kraus.conj(), xs, self.kraus, optimize=True)

    def superop(self) -> np.ndarray:
        """Σ K ⊗ K̄, acting on row-major vecs."""
        return sum(np.kron(k, k.conj()) for k in self.kraus)

    def choi(self) -> np.ndarray:
        """J = Σᵢⱼ |i⟩⟨j| ⊗ Φ(|i⟩⟨j|) on C^in ⊗ C^out."""
        vecs = np.array([k.T.reshape(-1) for k in self.kraus]).T
        return vecs @ vecs.conj().T

    def compose(self, first: "Channel") -> "Channel":
        """self ∘ first."""
        if first.out_dim != self.in_dim:
            raise ShapeMismatch(f"cannot compose: {first.out_dim} → {self.in_dim}")
        k = np.einsum("aij,bjk->abik", self.kraus, first.kraus).reshape(-1, self.out_dim, first.in_dim)
        return Channel(k, f"{self.label}∘{first.label}" if self.label and first.label else "")

    def tensor_identity(self, k: int) -> "Channel":
        """Φ ⊗ id_k with the identity on a trailing factor."""
        eye = np.eye(int(k))
        return Channel(np.array([np.kron(op, eye) for op in self.kraus]), self.label)

    def tp_residual(self) -> float:
        total = np.einsum("rji,rjk->ik", self.kraus.conj(), self.kraus)
        return float(np.linalg.norm(total - np.eye(self.in_dim), 2))

    def is_trace_preserving(self, tol: float = CHANNEL_TOL) -> bool:
        return self.tp_residual() <= tol

    def __repr__(self) -> str:
        tag = f" {self.label!r}" if self.label else ""
        return f"<Channel{tag} {self.in_dim}→{self.out_dim} rank={self.kraus_rank}>"


def _check_unitary(u, tol: float = CHANNEL_TOL) -> np.ndarray:
    u = as_square(u)
    residual = float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), 2))
    if residual > tol:
        raise DomainError(f"matrix is not unitary: ‖U†U − I‖ = {residual:.2e}")
    return u


def identity_channel(d: int) -> Channel:
    return Channel(np.eye(d, dtype=complex)[None], f"id:{d}")


def unitary_channel(u, label: str = "") -> Channel:
    return Channel(_check_unitary(u)[None], label)


def mixed_unitary(pairs: Sequence[Tuple[float, Any]], label: str = "") -> Channel:
    """Σ w U · U† for a probability vector w."""
    weights = np.array([float(w) for w, _ in pairs])
    if weights.size == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > CHANNEL_TOL:
        raise DomainError(f"weights must form a probability vector, got {weights.tolist()}")
    ops = [np.sqrt(w) * _check_unitary(u) for w, u in pairs if w > 0]
    return Channel(np.array(ops), label)


def depolarizing(d: int, p: float) -> Channel:
    """ρ ↦ (1 − p)ρ + p tr(ρ) 1/d."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"depolarizing parameter must lie in [0, 1], got {p}")
    ops = [np.sqrt(1.0 - p) * np.eye(d, dtype=complex)]
    scale = np.sqrt(p / d)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = scale
            ops.append(e)
    return Channel(np.array(ops), f"depolarizing:{d}:{p:g}")


def expectation_channel(n: VnAlgebra) -> Channel:
    """E_N in Kraus form, read off the Stinespring isometry."""
    d = n.ambient_dim
    e = n.blocks().env_dim
    v = stinespring(n).reshape(d, e, d)
    return Channel(np.transpose(v, (1, 0, 2)), f"E[{n.label}]" if n.label else "")


def complement_channel(n: VnAlgebra) -> Channel:
    """E_N^c: the environment output of the same Stinespring isometry."""
    d = n.ambient_dim
    e = n.blocks().env_dim
    return Channel(stinespring(n).reshape(d, e, d), f"E^c[{n.label}]" if n.label else "")


def from_choi(j, in_dim: int, out_dim: int) -> Channel:
    """Kraus form from a Choi matrix on C^in ⊗ C^out."""
    j = hermitian_part(as_square(j))
    if j.shape[0] != in_dim * out_dim:
        raise ShapeMismatch(f"Choi matrix of shape {j.shape} does not fit {in_dim}×{out_dim}")
    w, v = np.linalg.eigh(j)
    top = max(float(w[-1]), 0.0)
    if w[0] < -1e-9 * max(top, 1.0):
        raise DomainError(f"Choi matrix is not positive: eigenvalue {w[0]:.3e}")
    keep = w > EIG_CUTOFF * top
    ops = [np.sqrt(lam) * v[:, i].reshape(in_dim, out_dim).T for i, lam in zip(np.nonzero(keep)[0], w[keep])]
    return Channel(np.array(ops))


def choi_distance(a: Channel, b: Channel) -> float:
    """Frobenius distance of Choi matrices, the canonical equality test."""
    if (a.in_dim, a.out_dim) != (b.in_dim, b.out_dim):
        raise ShapeMismatch(f"channels differ in shape: {a!r} vs {b!r}")
    return float(np.linalg.norm(a.choi() - b.choi()))


# Predicates

@dataclass(frozen=True)
class BimoduleCheck:
    """Residuals of the module identities and of [Φ, E_N]."""
    module_residual: float
    commutator_residual: float
    tol: float = CHANNEL_TOL

    @property
    def ok(self) -> bool:
        return self.module_residual <= self.tol

    @property
    def commutes(self) -> bool:
        return self.commutator_residual <= self.tol

    def flags(self) -> Dict[str, bool]:
        return {"bimodule": self.ok, "commutes_relative": self.commutes}


def bimodule_check(phi: Channel, n: VnAlgebra, m: VnAlgebra, tol: float = CHANNEL_TOL) -> BimoduleCheck:
    """a Φ†(b) c = Φ†(a b c) for a, c ∈ N and b ∈ M, plus the residual of [Φ, E_N].

    Checked as the left and right module identities separately over
    bases; together they are equivalent to the two-sided one since N is
    unital. A non-unital bimodule map need not commute with E_N; the
    commutator residual is reported, not enforced.
    """
    d = m.ambient_dim
    if n.ambient_dim != d or phi.in_dim != d or phi.out_dim != d:
        raise ShapeMismatch(f"{phi!r} is not an endomorphism of M_{d} holding {n!r}")
    mb = m.basis
    images = phi.adjoint_many(mb)
    worst = 0.0
    for a in n.basis:
        left = phi.adjoint_many(np.einsum("ij,kjl->kil", a, mb)) - np.einsum("ij,kjl->kil", a, images)
        right = phi.adjoint_many(np.einsum("kij,jl->kil", mb, a)) - np.einsum("kij,jl->kil", images, a)
        worst = max(worst, float(np.max(np.linalg.norm(left, axis=(1, 2)))),
                    float(np.max(np.linalg.norm(right, axis=(1, 2)))))
    commutator = float(np.linalg.norm(phi.superop() @ n.superop() - n.superop() @ phi.superop(), 2))
    check = BimoduleCheck(worst, commutator, tol)
    log.debug(f"bimodule_check: module residual {worst:.2e}, commutator {commutator:.2e}")
    if check.ok and not check.commutes:
        log.warning(f"bimodule channel does not commute with E_N (residual {commutator:.2e}); it is not unital")
    return check


def is_bimodule(phi: Channel, n: VnAlgebra, m: VnAlgebra, tol: float = CHANNEL_TOL) -> bool:
    return bimodule_check(phi, n, m, tol).ok


def is_t_preserving(
    phi: Channel, t: VnAlgebra, iso=None, t_out: Optional[VnAlgebra] = None, tol: float = CHANNEL_TOL,
) -> bool:
    """E_T ∘ Φ = E_T, or E_T̃ ∘ Φ = U E_T(·) U† when an isometry U is supplied."""
    if phi.in_dim != t.ambient_dim:
        raise ShapeMismatch(f"{phi!r} does not act on M_{t.ambient_dim}")
    if iso is None:
        if phi.out_dim != t.ambient_dim:
            raise ShapeMismatch(f"{phi!r} is not an endomorphism; supply an isometry")
        residual = float(np.linalg.norm(t.superop() @ phi.superop() - t.superop(), 2))
    else:
        u = np.asarray(iso, dtype=complex)
        if u.shape != (phi.out_dim, phi.in_dim):
            raise ShapeMismatch(f"isometry of shape {u.shape} does not map {phi.in_dim} → {phi.out_dim}")
        if float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1]), 2)) > tol:
            raise DomainError("supplied map is not an isometry")
        if t_out is None:
            if u.shape[0] != u.shape[1]:
                raise ShapeMismatch("t_out is required when the isometry changes dimension")
            t_out = t.conjugate(u)
        if t_out.ambient_dim != phi.out_dim:
            raise ShapeMismatch(f"{t_out!r} does not live on the channel output")
        target = np.kron(u, u.conj()) @ t.superop()
        residual = float(np.linalg.norm(t_out.superop() @ phi.superop() - target, 2))
    log.debug(f"is_t_preserving: residual {residual:.2e}")
    return residual <= tol


# Petz recovery

def petz_map(phi: Channel, sigma, tol: float = CHANNEL_TOL, pseudo: bool = False) -> Channel:
    """R(X) = σ^{1/2} Φ†(Φ(σ)^{−1/2} X Φ(σ)^{−1/2}) σ^{1/2} in Kraus form.

    A rank-deficient Φ(σ) raises SingularDefault unless ``pseudo`` is set,
    in which case inverses are taken on the support and the result is only
    trace preserving there.
    """
    sigma = hermitian_part(as_square(sigma))
    image = hermitian_part(phi.apply(sigma))
    if rank(image) < image.shape[0] and not pseudo:
        raise SingularDefault(f"Φ(σ) has rank {rank(image)} < {image.shape[0]}")
    root = psd_power(sigma, 0.5)
    inv_root = psd_power(image, -0.5)
    ops = np.einsum("ij,rkj,kl->ril", root, phi.kraus.conj(), inv_root, optimize=True)
    recovery = Channel(ops, f"petz[{phi.label}]" if phi.label else "petz")
    if not pseudo:
        fixed = trace_distance(recovery.apply(image), sigma)
        if fixed > max(tol, 1e-7):
            raise ToleranceFailure(f"Petz map does not fix the default state: distance {fixed:.2e}")
    return recovery


def operation_recovery_bound(phi: Channel, s: VnAlgebra, t: VnAlgebra, rho) -> Tuple[float, float]:
    """(I before − I after, −2 log₂ F(E_ST ρ, R∘Φ(E_ST ρ))) for a state-modifying operation Φ.

    R is the Petz map of Φ at E_S(ρ). The second value bounds the first
    from below; it is reported, not enforced.
    """
    rho = hermitian_part(as_square(rho))
    st = join(s, t)
    before = gen_cmi(s, t, st, rho).value_bits
    after = gen_cmi(s, t, st, phi.apply(rho)).value_bits
    recovery = petz_map(phi, cond_expectation(s, rho), pseudo=True)
    base = cond_expectation(st, rho)
    f = fidelity(base, hermitian_part(recovery.apply(phi.apply(base))))
    bound = float(-2.0 * math.log2(f)) if f > 0 else math.inf
    return before - after, bound


# Operation plans

@dataclass
class PlanStep:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class OperationPlan:
    """Ordered steps of an S- or T-operation.

    ``dims`` is the tensor layout of the ambient space; extend, discard and
    restrict-with-keep steps need it. None means a single factor.
    """
    kind: str
    steps: List[PlanStep] = field(default_factory=list)
    dims: Optional[Tuple[int, ...]] = None

    @property
    def acting(self) -> str:
        return self.kind.split("-")[0]

    @property
    def modifies_algebras(self) -> bool:
        return self.kind.endswith("algebra")


@dataclass
class _Context:
    own: VnAlgebra
    other: VnAlgebra
    dims: List[int]

    @property
    def d(self) -> int:
        return self.own.ambient_dim


_Executor = Callable[[np.ndarray], np.ndarray]
_VALIDATED = object()


@dataclass(frozen=True)
class ValidatedOperation:
    """An operation whose steps all passed validation; only build_s_operation makes these."""
    plan: OperationPlan
    square: Square
    result: Square
    executors: Tuple[Tuple[str, _Executor], ...]
    token: object = None
    checks: Tuple[Tuple[str, Dict[str, bool]], ...] = ()

    def __post_init__(self):
        if self.token is not _VALIDATED:
            raise StepRejected("plan", "operation was not produced by validation")

    @property
    def s(self) -> VnAlgebra:
        return self.result.s

    @property
    def t(self) -> VnAlgebra:
        return self.result.t

    def step_checks(self, index: int) -> Dict[str, bool]:
        """Flags recorded for step ``index`` during validation."""
        return dict(self.checks[index][1])

    def execute(self, rho) -> Tuple[np.ndarray, VnAlgebra, VnAlgebra]:
        """(ρ, S, T) → (ρ̃, S̃, T̃); the input state is not modified."""
        state = hermitian_part(as_square(rho))
        if state.shape[0] != self.square.m.ambient_dim:
            raise ShapeMismatch(f"state dim {state.shape[0]} does not match M_{self.square.m.ambient_dim}")
        for name, run in self.executors:
            state = run(state)
            log.debug(f"executed {name}: dim {state.shape[0]}")
        return state, self.result.s, self.result.t


def _reject(index: int, step: PlanStep, reason: str) -> StepRejected:
    return StepRejected(f"{index}:{step.kind}", reason)


def _relative_commutant(own: VnAlgebra, other: VnAlgebra) -> VnAlgebra:
    """𝔖′ = S′ ∨ (S∩T)."""
    return join(commutant(own), intersect(own, other))


def _commuting(own: VnAlgebra, other: VnAlgebra) -> bool:
    return _classify_fast(own, other, join(own, other)).is_commuting


def _layout(dims: Sequence[int], index: int) -> Tuple[List[int], List[int]]:
    """Reordering that moves factor ``index`` last, and its inverse."""
    n = len(dims)
    forward = [i for i in range(n) if i != index] + [index]
    backward = [forward.index(j) for j in range(n)]
    return forward, backward


def _is_complete_mixture(rho: np.ndarray, dims: List[int], index: int, tol: float) -> bool:
    rest = partial_trace(rho, dims, [i for i in range(len(dims)) if i != index])
    k = dims[index]
    forward, backward = _layout(dims, index)
    product = tensor(rest, np.eye(k) / k)
    rebuilt = permute_systems(product, [dims[i] for i in forward], backward)
    return trace_distance(rho, rebuilt) <= tol


def _step_extend(ctx: _Context, params: Dict[str, Any]) -> Tuple[_Context, _Executor]:
    k = int(params.get("aux_dim", 2))
    if k < 1:
        raise ValueError(f"aux_dim must be positive, got {k}")
    own = tensor_algebra(ctx.own, full(k))
    other = tensor_algebra(ctx.other, trivial(k))
    ket = np.zeros((k, k), dtype=complex)
    ket[0, 0] = 1.0

    def run(rho):
        return np.kron(rho, ket)

    return _Context(own, other, ctx.dims + [k]), run


def _step_channel(ctx: _Context, params: Dict[str, Any], tol: float) -> Tuple[_Context, _Executor, Dict[str, bool]]:
    phi = params.get("channel")
    if not isinstance(phi, Channel):
        raise ValueError("channel step needs a Channel under 'channel'")
    if phi.in_dim != ctx.d or phi.out_dim != ctx.d:
        raise ValueError(f"{phi!r} is not an endomorphism of M_{ctx.d}")
    iso = params.get("iso")
    other_out = params.get("t_out")
    flags: Dict[str, bool] = {}
    flags["preserving"] = is_t_preserving(phi, ctx.other, iso=iso, t_out=other_out, tol=tol)
    if not flags["preserving"]:
        raise ValueError("channel moves the conditional expectation onto the other algebra")
    flags.update(bimodule_check(phi, _relative_commutant(ctx.own, ctx.other), full(ctx.d), tol).flags())
    if not flags["bimodule"]:
        raise ValueError("channel is not a bimodule for the relative commutant")
    sup = phi.superop()
    for name, alg in (("own", ctx.own), ("joint", join(ctx.own, ctx.other))):
        p = alg.superop()
        flags[f"commutes_{name}"] = float(np.linalg.norm(sup @ p - p @ sup, 2)) <= max(tol, 1e-8)
        if not flags[f"commutes_{name}"]:
            raise ValueError(f"channel does not commute with the {name} conditional expectation")
    other = ctx.other
    if iso is not None:
        u = np.asarray(iso, dtype=complex)
        other = other_out if other_out is not None else ctx.other.conjugate(u)
        if not _commuting(ctx.own, other):
            raise ValueError("isometry-adjusted algebras no longer form a commuting square")
    return _Context(ctx.own, other, ctx.dims), phi.apply, flags


def _step_discard(ctx: _Context, params: Dict[str, Any]) -> Tuple[_Context, _Executor]:
    dims = list(ctx.dims)
    index = int(params.get("index", len(dims) - 1))
    if not 0 <= index < len(dims) or len(dims) < 2:
        raise ValueError(f"no factor {index} to discard in layout {dims}")
    try:
        own, _ = factor_out(ctx.own, dims, index)
        other, _ = factor_out(ctx.other, dims, index)
    except NotSubalgebra as e:
        raise ValueError(str(e)) from e
    keep = [i for i in range(len(dims)) if i != index]
    tol = float(params.get("tolerance", MIXTURE_TOL))

    def run(rho):
        if not _is_complete_mixture(rho, dims, index, tol):
            raise StepRejected("discard", f"factor {index} is not in complete mixture with the rest")
        return partial_trace(rho, dims, keep)

    return _Context(own, other, [dims[i] for i in keep]), run


def _step_unitary(ctx: _Context, kind: str, params: Dict[str, Any], tol: float) -> Tuple[_Context, _Executor]:
    try:
        u = _check_unitary(params.get("unitary"))
    except (VnlabError, ValueError) as e:
        raise ValueError(f"bad unitary: {e}") from e
    if u.shape[0] != ctx.d:
        raise ValueError(f"unitary of dim {u.shape[0]} does not act on M_{ctx.d}")
    if kind == "unitary-rename":
        return _Context(ctx.own.conjugate(u), ctx.other.conjugate(u), ctx.dims), lambda rho: u @ rho @ u.conj().T
    rel = _relative_commutant(ctx.own, ctx.other)
    worst = max(float(np.linalg.norm(u @ b - b @ u)) for b in rel.basis)
    if worst > max(tol, 1e-8):
        raise ValueError(f"unitary is not a bimodule for the relative commutant (residual {worst:.2e})")
    own = ctx.own.conjugate(u)
    if not _commuting(own, ctx.other):
        raise ValueError("rotated algebra no longer forms a commuting square")
    return _Context(own, ctx.other, ctx.dims), lambda rho: rho


def _step_shrink(ctx: _Context, params: Dict[str, Any]) -> _Context:
    k = params.get("algebra")
    if not isinstance(k, VnAlgebra) or k.ambient_dim != ctx.d:
        raise ValueError("shrink step needs a VnAlgebra on the current space under 'algebra'")
    if not is_subalgebra(k, ctx.own):
        raise ValueError("new algebra is not contained in the old one")
    if not same_span(intersect(k, ctx.other), intersect(ctx.own, ctx.other)):
        raise ValueError("shrinking changed the intersection with the other algebra")
    if not _commuting(k, ctx.other):
        raise ValueError("shrunk algebra does not form a commuting square")
    return _Context(k, ctx.other, ctx.dims)


def _step_enlarge(ctx: _Context, params: Dict[str, Any]) -> _Context:
    k = params.get("algebra")
    if not isinstance(k, VnAlgebra) or k.ambient_dim != ctx.d:
        raise ValueError("enlarge step needs a VnAlgebra on the current space under 'algebra'")
    if not is_subalgebra(ctx.other, k):
        raise ValueError("new algebra does not contain the old one")
    if not same_span(join(ctx.own, k), join(ctx.own, ctx.other)):
        raise ValueError("enlarging changed the joint algebra")
    if not _commuting(ctx.own, k):
        raise ValueError("enlarged algebra does not form a commuting square")
    return _Context(ctx.own, k, ctx.dims)


def _step_restrict(ctx: _Context, params: Dict[str, Any]) -> Tuple[_Context, _Executor]:
    st = join(ctx.own, ctx.other)
    keep = params.get("keep")
    if keep is None:
        return ctx, lambda rho: cond_expectation(st, rho)
    dims = list(ctx.dims)
    keep = sorted(int(i) for i in keep)
    try:
        own = reduce_to(ctx.own, dims, keep)
        other = reduce_to(ctx.other, dims, keep)
    except (NotSubalgebra, ShapeMismatch) as e:
        raise ValueError(str(e)) from e

    def run(rho):
        return partial_trace(cond_expectation(st, rho), dims, keep)

    return _Context(own, other, [dims[i] for i in keep]), run


def _allowed(plan: OperationPlan, kind: str) -> bool:
    if kind in ("shrink-s", "enlarge-t") and plan.acting != "s":
        return False
    if kind in ("shrink-t", "enlarge-s") and plan.acting != "t":
        return False
    if plan.modifies_algebras:
        return kind in STEP_STAGES
    return kind in STATE_STEPS


def build_s_operation(plan: OperationPlan, square: Square, tol: float = CHANNEL_TOL) -> ValidatedOperation:
    """Validate every step of ``plan`` against ``square`` and return the executable operation."""
    if plan.kind not in PLAN_KINDS:
        raise ValueError(f"Unknown plan kind: {plan.kind}. Valid: {', '.join(PLAN_KINDS)}")
    if not square.is_commuting:
        raise NotCommutingSquare("operations act on commuting squares only")
    own, other = (square.s, square.t) if plan.acting == "s" else (square.t, square.s)
    dims = list(plan.dims) if plan.dims else [own.ambient_dim]
    if int(np.prod(dims)) != own.ambient_dim:
        raise ShapeMismatch(f"layout {dims} does not multiply to {own.ambient_dim}")
    ctx = _Context(own, other, dims)
    executors: List[Tuple[str, _Executor]] = []
    checks: List[Tuple[str, Dict[str, bool]]] = []
    stage = 0
    for i, step in enumerate(plan.steps):
        if not _allowed(plan, step.kind):
            raise _reject(i, step, f"step kind not allowed in a {plan.kind} plan")
        if plan.modifies_algebras:
            if STEP_STAGES[step.kind] < stage:
                raise _reject(i, step, "algebra steps must follow extend, unitary, shrink/enlarge, restrict order")
            stage = STEP_STAGES[step.kind]
        flags: Dict[str, bool] = {}
        try:
            if step.kind == "extend":
                ctx, run = _step_extend(ctx, step.params)
            elif step.kind == "channel":
                ctx, run, flags = _step_channel(ctx, step.params, tol)
            elif step.kind == "discard":
                ctx, run = _step_discard(ctx, step.params)
            elif step.kind.startswith("unitary"):
                ctx, run = _step_unitary(ctx, step.kind, step.params, tol)
            elif step.kind.startswith("shrink"):
                ctx, run = _step_shrink(ctx, step.params), (lambda rho: rho)
            elif step.kind.startswith("enlarge"):
                ctx, run = _step_enlarge(ctx, step.params), (lambda rho: rho)
            else:
                ctx, run = _step_restrict(ctx, step.params)
        except (ValueError, ShapeMismatch, DomainError) as e:
            raise _reject(i, step, str(e)) from e
        name = f"{i}:{step.kind}"
        checks.append((name, {**flags, "valid": True}))
        executors.append((name, run))
        log.debug(f"validated step {i}:{step.kind}")

    s_new, t_new = (ctx.own, ctx.other) if plan.acting == "s" else (ctx.other, ctx.own)
    result = _classify_fast(s_new, t_new, join(s_new, t_new))
    if not result.is_commuting:
        raise StepRejected("plan", "result is not a commuting square")
    log.info(f"validated {plan.kind} operation with {len(plan.steps)} step(s)")
    return ValidatedOperation(plan, square, result, tuple(executors), token=_VALIDATED, checks=tuple(checks))


def build_t_operation(plan: OperationPlan, square: Square, tol: float = CHANNEL_TOL) -> ValidatedOperation:
    if plan.acting != "t":
        raise ValueError(f"expected a T-operation plan, got {plan.kind}")
    return build_s_operation(plan, square, tol)


# Algebra replacement

def _expectations_of(square: Square) -> List[Tuple[str, VnAlgebra]]:
    return [("S", square.s), ("T", square.t), ("ST", join(square.s, square.t)), ("S∩T", square.c)]


def _same_meet(a: VnAlgebra, b: VnAlgebra, r: VnAlgebra) -> bool:
    return same_span(intersect(a, r), intersect(b, r))


def covariant_average(
    unitaries: Sequence[Tuple[float, Any]],
    square: Square,
    rho,
    new_s: VnAlgebra,
    new_t: VnAlgebra,
    tol: float = CHANNEL_TOL,
) -> Tuple[np.ndarray, Square]:
    """ρ̃ = Σ w U ρ U† with (S, T) replaced by (S̃, T̃).

    Each U must commute with E_S, E_T, E_ST and E_S∩T. With R the fixed
    algebra of the group, the replacement must keep S̃T̃ = ST, form a
    commuting square and agree with the old algebras on R.
    """
    rho = hermitian_part(as_square(rho))
    channel = mixed_unitary(unitaries)
    d = square.s.ambient_dim
    checks = _expectations_of(square)
    for i, (_, u) in enumerate(unitaries):
        u = as_square(u)
        c = np.kron(u, u.conj())
        for name, alg in checks:
            p = alg.superop()
            residual = float(np.linalg.norm(c @ p - p @ c, 2))
            if residual > max(tol, 1e-8):
                raise NotCovariant(i, f"does not commute with E_{name} (residual {residual:.2e})")
    r = commutant(generate([as_square(u) for _, u in unitaries], d))
    st = join(square.s, square.t)
    if not _same_meet(new_s, square.s, r):
        raise ConstraintViolated("S∩R", "replacement changes the part of S inside R")
    if not _same_meet(new_t, square.t, r):
        raise ConstraintViolated("T∩R", "replacement changes the part of T inside R")
    if not same_span(intersect(intersect(new_s, new_t), r), intersect(square.c, r)):
        raise ConstraintViolated("S∩T∩R", "replacement changes the shared part inside R")
    if not same_span(join(new_s, new_t), st):
        raise ConstraintViolated("ST", "replacement changes the joint algebra")
    replaced = _classify_fast(new_s, new_t, st)
    if not replaced.is_commuting:
        raise ConstraintViolated("commuting", "replacement algebras do not form a commuting square")
    averaged = hermitian_part(channel.apply(rho))
    log.info(f"covariant_average: {len(unitaries)} unitaries, fixed algebra dim {r.dim}")
    return averaged, replaced


def picture_swap(square: Square, r: VnAlgebra, s_new: VnAlgebra, rho, tol: float = SSA_TOL) -> Tuple[np.ndarray, Square]:
    """Trade S for S̃ while dephasing ρ by E_R; I(S:T)_ρ ≥ I(S̃:T)_{E_R ρ}."""
    rho = hermitian_part(as_square(rho))
    s, t = square.s, square.t
    if not is_subalgebra(t, r):
        raise ConstraintViolated("R∩T=T", "T is not contained in R")
    listed = _expectations_of(square)
    pr = r.superop()
    for name, alg in listed:
        p = alg.superop()
        if float(np.linalg.norm(pr @ p - p @ pr, 2)) > SQUARE_TOL:
            raise ConstraintViolated("commutation", f"E_R does not commute with E_{name}")
    pn = s_new.superop()
    for name, alg in listed + [("R", r)]:
        p = alg.superop()
        if float(np.linalg.norm(pn @ p - p @ pn, 2)) > SQUARE_TOL:
            raise ConstraintViolated("commutation", f"E_S̃ does not commute with E_{name}")
    if not _same_meet(s_new, s, r):
        raise ConstraintViolated("R∩S", "R∩S̃ differs from R∩S")
    swapped = cond_expectation(r, rho)
    within = join(s_new, t)
    new_square = _classify_fast(s_new, t, within)
    if not new_square.is_commuting:
        raise ConstraintViolated("commuting", "S̃ and T do not form a commuting square")
    before = gen_cmi(s, t, join(s, t), rho).value_bits
    after = gen_cmi(s_new, t, within, swapped, square=new_square).value_bits
    log.info(f"picture_swap: I {before:.9f} → {after:.9f}")
    if after > before + tol:
        raise ToleranceFailure(f"picture swap increased I: {before:.3e} → {after:.3e}")
    return swapped, new_square
