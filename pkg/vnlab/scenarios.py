"""
Scenarios
=========
Worked constructions: mutually unbiased bases in prime dimension, Pauli
words and controlled-Pauli frame tracking, the entanglement ↔
uncertainty conversion demo, the rotated-basis converse witness and the
monogamy table over unbiased bases.

Every scenario returns a Transcript: ordered steps with their values and
a pass flag. Transcripts are deterministic in the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .algebra import VnAlgebra, basis_algebra, full, generate, same_span, tensor_algebra, trivial
from .config import PHASE_TOL
from .errors import MalformedGate, NotPrime, NotUnbiased, ToleranceFailure
from .matcore import PAULIS, phase_overlap, projector, pure_vector, tensor, trace_distance

log = logging.getLogger("vnlab.scenarios")

MAX_PRIME = 13
MUB_TOL = 1e-10
FRAME_TOL = 1e-10
DEMOS = ("epr-ucr", "converse")

_LETTERS = "IXYZ"
# (a, b) → (power of i, letter) for the single-qubit product a·b
_PRODUCT = {
    ("X", "Y"): (1, "Z"), ("Y", "Z"): (1, "X"), ("Z", "X"): (1, "Y"),
    ("Y", "X"): (3, "Z"), ("Z", "Y"): (3, "X"), ("X", "Z"): (3, "Y"),
}


def is_prime(n: int) -> bool:
    n = int(n)
    if n < 2:
        return False
    return all(n % k for k in range(2, int(math.isqrt(n)) + 1))


# Mutually unbiased bases

@dataclass(frozen=True)
class MubFamily:
    """p + 1 mutually unbiased bases of C^p, each the columns of a unitary."""
    dim: int
    bases: Tuple[np.ndarray, ...]

    def algebra(self, index: int) -> VnAlgebra:
        return basis_algebra(self.bases[index], f"mub:{self.dim}:{index}")

    def max_overlap_error(self) -> float:
        worst = 0.0
        for i in range(len(self.bases)):
            for j in range(i + 1, len(self.bases)):
                overlaps = np.abs(self.bases[i].conj().T @ self.bases[j]) ** 2
                worst = max(worst, float(np.max(np.abs(overlaps - 1.0 / self.dim))))
        return worst


def mub_family(p: int) -> MubFamily:
    """Computational basis plus p Weyl–Heisenberg bases, components ω^{mk²+jk}/√p.

    For p = 2 the bases are the Z, X and Y eigenbases in that order.
    """
    p = int(p)
    if not is_prime(p) or p > MAX_PRIME:
        raise NotPrime(f"mub_family needs a prime ≤ {MAX_PRIME}, got {p}")
    if p == 2:
        root = 1 / np.sqrt(2)
        bases = (
            np.eye(2, dtype=complex),
            np.array([[1, 1], [1, -1]], dtype=complex) * root,
            np.array([[1, 1], [1j, -1j]], dtype=complex) * root,
        )
    else:
        omega = np.exp(2j * np.pi / p)
        k = np.arange(p)
        bases = [np.eye(p, dtype=complex)]
        for m in range(p):
            bases.append(omega ** ((m * np.outer(k * k, np.ones(p)) + np.outer(k, k)) % p) / np.sqrt(p))
        bases = tuple(bases)
    family = MubFamily(dim=p, bases=bases)
    error = family.max_overlap_error()
    if error > MUB_TOL:
        raise NotUnbiased(f"constructed bases deviate from 1/{p} by {error:.2e}")
    return family


# Pauli words

@dataclass(frozen=True)
class PauliWord:
    """i^phase · P₁ ⊗ … ⊗ Pₙ with letters from IXYZ; qubit 0 is leftmost."""
    letters: str
    phase: int = 0

    def __post_init__(self):
        if not self.letters or any(ch not in _LETTERS for ch in self.letters):
            raise MalformedGate(f"not a Pauli word: {self.letters!r}")
        object.__setattr__(self, "phase", int(self.phase) % 4)

    @classmethod
    def parse(cls, text: str) -> "PauliWord":
        """Parse ``XZ``, ``-XZ``, ``iY`` or ``-iY``."""
        text = text.strip()
        phase = 0
        if text.startswith("+"):
            text = text[1:]
        elif text.startswith("-"):
            phase, text = 2, text[1:]
        if text.startswith("i"):
            phase, text = phase + 1, text[1:]
        return cls(text, phase)

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(ch != "I" for ch in self.letters)

    @property
    def support(self) -> List[int]:
        return [i for i, ch in enumerate(self.letters) if ch != "I"]

    @property
    def unsigned(self) -> "PauliWord":
        return PauliWord(self.letters)

    def __mul__(self, other: "PauliWord") -> "PauliWord":
        if other.n != self.n:
            raise MalformedGate(f"cannot multiply words of length {self.n} and {other.n}")
        phase = self.phase + other.phase
        letters = []
        for a, b in zip(self.letters, other.letters):
            if a == "I":
                letters.append(b)
            elif b == "I":
                letters.append(a)
            elif a == b:
                letters.append("I")
            else:
                power, letter = _PRODUCT[(a, b)]
                phase += power
                letters.append(letter)
        return PauliWord("".join(letters), phase)

    def commutes_with(self, other: "PauliWord") -> bool:
        clashes = sum(a != "I" and b != "I" and a != b for a, b in zip(self.letters, other.letters))
        return clashes % 2 == 0

    def matrix(self) -> np.ndarray:
        return (1j ** self.phase) * tensor(*[PAULIS[ch] for ch in self.letters])

    def __str__(self) -> str:
        return ("", "i", "-", "-i")[self.phase] + self.letters


def words(*texts: str) -> Tuple[PauliWord, ...]:
    return tuple(PauliWord.parse(t) for t in texts)


def word_algebra(ws: Sequence[PauliWord], n: int) -> VnAlgebra:
    return generate([w.matrix() for w in ws], 2 ** n, " ".join(str(w) for w in ws))


@dataclass(frozen=True)
class ControlledGate:
    """C_{O→V} = ½(1 + O) + ½(1 − O)·V for single-qubit Paulis O, V on distinct qubits."""
    control: PauliWord
    target: PauliWord

    def __post_init__(self):
        for w, name in ((self.control, "control"), (self.target, "target")):
            if w.weight != 1 or w.phase != 0:
                raise MalformedGate(f"{name} must be an unsigned single-qubit Pauli, got {w}")
        if self.control.n != self.target.n:
            raise MalformedGate("control and target act on different numbers of qubits")
        if self.control.support == self.target.support:
            raise MalformedGate("control and target share a qubit")

    @property
    def n(self) -> int:
        return self.control.n

    def matrix(self) -> np.ndarray:
        o, v = self.control.matrix(), self.target.matrix()
        eye = np.eye(2 ** self.n)
        return 0.5 * (eye + o) + 0.5 * (eye - o) @ v

    def conjugate(self, w: PauliWord) -> PauliWord:
        """U·w·U†: O·w when w anticommutes with V, then ·V when w anticommutes with O."""
        out = w
        if not w.commutes_with(self.target):
            out = self.control * out
        if not w.commutes_with(self.control):
            out = out * self.target
        return out


@dataclass(frozen=True)
class PauliFrame:
    """Generators of the two tracked algebras on n qubits."""
    n: int
    s: Tuple[PauliWord, ...]
    t: Tuple[PauliWord, ...]

    def __post_init__(self):
        for w in self.s + self.t:
            if w.n != self.n:
                raise MalformedGate(f"word {w} does not act on {self.n} qubits")

    def s_algebra(self) -> VnAlgebra:
        return word_algebra(self.s, self.n)

    def t_algebra(self) -> VnAlgebra:
        return word_algebra(self.t, self.n)

    def labels(self) -> Dict[str, List[str]]:
        return {"s": [str(w) for w in self.s], "t": [str(w) for w in self.t]}


def pauli_frame_step(frame: PauliFrame, gate: ControlledGate, verify: bool = True) -> PauliFrame:
    """Push the frame through C_{O→V}, checking each rewrite against the matrices."""
    if gate.n != frame.n:
        raise MalformedGate(f"gate acts on {gate.n} qubits, frame on {frame.n}")
    new = PauliFrame(frame.n, tuple(gate.conjugate(w) for w in frame.s), tuple(gate.conjugate(w) for w in frame.t))
    if verify:
        u = gate.matrix()
        for old, rewritten in zip(frame.s + frame.t, new.s + new.t):
            error = float(np.linalg.norm(u @ old.matrix() @ u.conj().T - rewritten.matrix()))
            if error > FRAME_TOL:
                raise ToleranceFailure(f"rewrite {old} → {rewritten} is off by {error:.2e}")
    log.debug(f"pauli_frame_step: {frame.labels()} → {new.labels()}")
    return new


# Transcripts

@dataclass
class TranscriptStep:
    name: str
    passed: bool
    values: Dict[str, Any] = field(default_factory=dict)


@dataclass
class Transcript:
    """Ordered record of a scenario run."""
    name: str
    seed: Optional[int] = None
    steps: List[TranscriptStep] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(step.passed for step in self.steps)

    def add(self, name: str, passed: bool, **values) -> TranscriptStep:
        step = TranscriptStep(name, bool(passed), values)
        self.steps.append(step)
        log.info(f"{self.name}: {name} {'ok' if passed else 'FAILED'}")
        return step

    def step(self, name: str) -> TranscriptStep:
        for s in self.steps:
            if s.name == name:
                return s
        raise KeyError(name)


def _require(transcript: Transcript, step: TranscriptStep) -> None:
    if not step.passed:
        raise ToleranceFailure(f"{transcript.name}: step {step.name!r} failed its check")


# Entanglement ↔ uncertainty conversion

UP_Y = np.array([1, 1j], dtype=complex) / np.sqrt(2)
EPR_TARGET = (np.kron([1, 0], [1, -1]) + 1j * np.kron([0, 1], [1, 1])) / 2.0


def epr_ucr_demo(seed: int = 0, tol: float = PHASE_TOL) -> Transcript:
    """Convert two maximal-uncertainty qubits into one maximally entangled pair.

    |↑_Y↑_Y⟩ with S = ⟨Z_A, Z_B⟩, T = ⟨X_A, X_B⟩ is averaged over
    {1, Y_A, Y_B, Y_AY_B}, relabelled to ⟨X_A, Z_AZ_B⟩, ⟨X_AX_B, Z_B⟩ and
    conjugated by C_{Z_B→X_A}, which lands on the two qubit factors.
    ½·I is 1 bit at both ends.
    """
    from .channels import OperationPlan, PlanStep, build_s_operation, covariant_average
    from .squares import commuting_square, gen_cmi

    transcript = Transcript("epr-ucr", seed)
    frame = PauliFrame(2, words("ZI", "IZ"), words("XI", "IX"))
    rho = projector(np.kron(UP_Y, UP_Y))
    m = full(4)
    square = commuting_square(frame.s_algebra(), frame.t_algebra(), m)
    before = 0.5 * gen_cmi(square.s, square.t, m, rho, square=square).value_bits
    _require(transcript, transcript.add("initial", abs(before - 1.0) <= tol, half_cmi_bits=before, **frame.labels()))

    group = words("II", "YI", "IY", "YY")
    averaged_frame = PauliFrame(2, words("XI", "ZZ"), words("XX", "IZ"))
    averaged, replaced = covariant_average(
        [(0.25, w.matrix()) for w in group], square, rho,
        averaged_frame.s_algebra(), averaged_frame.t_algebra(),
    )
    moved = trace_distance(averaged, rho)
    _require(transcript, transcript.add(
        "covariant_average", moved <= tol, state_change=moved, group=[str(w) for w in group],
        **averaged_frame.labels(),
    ))

    gate = ControlledGate(PauliWord("IZ"), PauliWord("XI"))
    final_frame = pauli_frame_step(averaged_frame, gate)
    plan = OperationPlan("s-algebra", [PlanStep("unitary-rename", {"unitary": gate.matrix()})])
    out, s_out, t_out = build_s_operation(plan, replaced).execute(averaged)
    factors = (same_span(s_out, tensor_algebra(full(2), trivial(2))) and
               same_span(t_out, tensor_algebra(trivial(2), full(2))))
    vector = pure_vector(out)
    overlap = phase_overlap(vector, EPR_TARGET) if vector is not None else 0.0
    _require(transcript, transcript.add(
        "controlled_gate", factors and overlap >= 1.0 - tol, overlap=overlap, factors=factors,
        gate=f"C[{gate.control}->{gate.target}]", **final_frame.labels(),
    ))

    after = 0.5 * gen_cmi(s_out, t_out, m, out).value_bits
    _require(transcript, transcript.add("final", abs(after - 1.0) <= tol, half_cmi_bits=after))

    u = gate.matrix()
    back = u.conj().T @ out @ u
    returned = trace_distance(back, rho)
    undone = same_span(s_out.conjugate(u.conj().T), replaced.s) and same_span(t_out.conjugate(u.conj().T), replaced.t)
    _require(transcript, transcript.add("round_trip", returned <= tol and undone, state_change=returned))
    return transcript


# Rotated-basis converse witness

def rotated_pair(theta: float = math.pi / 6) -> Tuple[VnAlgebra, VnAlgebra]:
    """Qubit Z-diagonal algebra and its rotation by exp(−iθY/2); a commuting square only at θ ∈ {0, π/2, π}."""
    rotation = scipy.linalg.expm(-0.5j * theta * PAULIS["Y"])
    return basis_algebra(np.eye(2), "Z"), basis_algebra(rotation, f"rot:{theta:.6g}")


def converse_demo(theta: float = math.pi / 6, budget: int = 10_000, seed: int = 0) -> Transcript:
    """Search for a state with negative I on the rotated pair."""
    from .squares import _classify_fast, square_value, ssa_converse_search

    transcript = Transcript("converse", seed)
    s, t = rotated_pair(theta)
    m = full(2)
    square = _classify_fast(s, t, m)
    transcript.add("classify", not square.is_commuting, residual=square.commuting_residual, theta=theta)
    found, witness = ssa_converse_search(s, t, m, budget=budget, seed=seed)
    value = square_value(s, t, m, square.c, witness) if found else None
    transcript.add("search", found, value_bits=value, budget=budget)
    return transcript


# Monogamy over unbiased bases

@dataclass
class MonogamyReport:
    p: int
    state_basis: int
    entries: List[Tuple[int, int, float]]
    sums: Dict[str, float]
    ceiling_bits: float
    additivity: Tuple[float, float]

    @property
    def exceeds_ceiling(self) -> bool:
        return self.sums["ordered"] > self.ceiling_bits + 1e-9

    @property
    def additive(self) -> bool:
        return abs(self.additivity[0] - self.additivity[1]) <= 1e-7


def monogamy_table(p: int, state_basis_index: int = 0) -> MonogamyReport:
    """Exact I_sq(Sᵢ:Tⱼ) for a pure state of one unbiased basis, over pairs of the other bases.

    The sum is given for ordered pairs i ≠ j, unordered pairs, and the
    (p + 1)·½log₂p closed form. The last field compares I_sq on a product
    of two copies with the sum of the factors.
    """
    from .measures import isq_estimate

    family = mub_family(p)
    if not 0 <= state_basis_index < len(family.bases):
        raise ValueError(f"basis index must lie in [0, {len(family.bases)}), got {state_basis_index}")
    psi = family.bases[state_basis_index][:, 0]
    rho = projector(psi)
    rest = [i for i in range(len(family.bases)) if i != state_basis_index]
    algebras = {i: family.algebra(i) for i in rest}
    entries = []
    for i in rest:
        for j in rest:
            if i == j:
                continue
            est = isq_estimate(algebras[i], algebras[j], rho)
            entries.append((i, j, est.value_bits))
    ordered = float(sum(v for _, _, v in entries))
    unordered = float(sum(v for i, j, v in entries if i < j))
    ceiling = 0.5 * math.log2(p)

    i, j = rest[0], rest[1]
    single = isq_estimate(algebras[i], algebras[j], rho).value_bits
    product = isq_estimate(
        tensor_algebra(algebras[i], algebras[i]), tensor_algebra(algebras[j], algebras[j]), np.kron(rho, rho),
    ).value_bits
    log.info(f"monogamy_table p={p}: ordered sum {ordered:.6f} vs ceiling {ceiling:.6f}")
    return MonogamyReport(
        p=p, state_basis=state_basis_index, entries=entries,
        sums={"ordered": ordered, "unordered": unordered, "closed_form": (p + 1) * ceiling},
        ceiling_bits=ceiling, additivity=(product, 2 * single),
    )

