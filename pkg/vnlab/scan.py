"""
Scans
=====
Randomized property sweeps behind ``vnlab scan``. Each suite draws
instances from a per-instance seed, evaluates one inequality and
returns a record with its margin; the summary counts failures.

Suites:
    ssa       gen_cmi ≥ 0 on generated commuting squares
    ucr       memory and generalized Maassen–Uffink relations
    mono      gen_cmi never increases under validated S-/T-operations
    duality   I(S:T) of E_ST(ψ) equals I(S′:T′) of ψ
    recovery  gen_cmi ≥ recovery gap

Instances run on a thread pool; seeds come from counter-mode SHA-256 of
the master seed so records do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .algebra import (
    Square,
    VnAlgebra,
    commutant,
    diagonal,
    full,
    generate,
    intersect,
    join,
    tensor_algebra,
    trivial,
)
from .config import DUALITY_TOL, MU_TOL, RECOVERY_TOL, SSA_TOL, UCR_TOL
from .errors import InputError, StepRejected, VnlabError
from .matcore import as_rng, haar_unitary, hermitian_part, random_density, random_state_vector

log = logging.getLogger("vnlab.scan")

SUITES = ("ssa", "ucr", "mono", "duality", "recovery")
SUITE_TOLERANCES = {"ssa": SSA_TOL, "ucr": MU_TOL, "mono": SSA_TOL, "duality": DUALITY_TOL, "recovery": RECOVERY_TOL}
MONO_STEPS = 3


def instance_seed(master: int, suite: str, index: int) -> int:
    """First 8 bytes of SHA-256(master:suite:index) as an unsigned integer."""
    digest = hashlib.sha256(f"{int(master)}:{suite}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class ScanSummary:
    suite: str
    samples: int
    failures: int
    min_margin: float
    tolerance: float
    errors: int = 0
    skipped: int = 0
    dims: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.errors == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "summary", "suite": self.suite, "samples": self.samples, "failures": self.failures,
            "errors": self.errors, "skipped": self.skipped,
            "min_margin": self.min_margin if math.isfinite(self.min_margin) else None,
            "tolerance": self.tolerance, "dims": self.dims, "passed": self.passed,
        }


# Instance generators

def _factor_pairs(d: int) -> List[Tuple[int, int]]:
    return [(a, d // a) for a in range(2, d) if d % a == 0]


def _is_small_prime(d: int) -> bool:
    from .scenarios import MAX_PRIME, is_prime
    return is_prime(d) and d <= MAX_PRIME


def random_commuting_square(d: int, rng: np.random.Generator) -> Tuple[VnAlgebra, VnAlgebra, VnAlgebra, str]:
    """(S, T, M_d, family) drawn from tensor splits, unbiased pairs and nested block algebras, Haar-rotated."""
    families = ["nested"]
    if _factor_pairs(d):
        families.append("tensor")
    if _is_small_prime(d):
        families.append("mub")
    family = families[int(rng.integers(len(families)))]
    if family == "tensor":
        a, b = _factor_pairs(d)[int(rng.integers(len(_factor_pairs(d))))]
        s, t = tensor_algebra(full(a), trivial(b)), tensor_algebra(trivial(a), full(b))
    elif family == "mub":
        from .scenarios import mub_family
        bases = mub_family(d)
        i, j = rng.choice(len(bases.bases), size=2, replace=False)
        s, t = bases.algebra(int(i)), bases.algebra(int(j))
    else:
        cut = int(rng.integers(1, d)) if d > 1 else 1
        projection = np.diag([1.0] * cut + [0.0] * (d - cut))
        big = join(commutant(generate([projection], d)), diagonal(d))
        s, t = (diagonal(d), big) if rng.random() < 0.5 else (big, diagonal(d))
    u = haar_unitary(d, rng)
    return s.conjugate(u), t.conjugate(u), full(d), family


def _random_density(d: int, rng) -> np.ndarray:
    return random_density(d, int(rng.integers(1, d + 1)), rng)


def _ssa(d: int, rng) -> Dict[str, Any]:
    from .squares import gen_cmi

    s, t, m, family = random_commuting_square(d, rng)
    value = gen_cmi(s, t, m, _random_density(d, rng)).value_bits
    return {"family": family, "value_bits": value, "margin": value}


def _recovery(d: int, rng) -> Dict[str, Any]:
    from .squares import recovery_certificate

    s, t, m, family = random_commuting_square(d, rng)
    report = recovery_certificate(s, t, m, _random_density(d, rng))
    gap = report.certificate["recovery_gap"]
    return {"family": family, "value_bits": report.value_bits, "recovery_gap": gap,
            "margin": report.value_bits - gap}


def _ucr(d: int, rng) -> Dict[str, Any]:
    from .scenarios import mub_family
    from .ucr import maassen_uffink_general, memory_ucr

    p = d if _is_small_prime(d) else 2
    family = mub_family(p)
    i, j = rng.choice(len(family.bases), size=2, replace=False)
    x, z = family.bases[int(i)], family.bases[int(j)]
    if rng.random() < 0.5:
        report = memory_ucr(p, _random_density(p * 2, rng), x, z)
        identity_gap = abs(report.margin - report.cmi_bits)
        return {"relation": "memory", "p": p, "margin": report.margin, "cmi_bits": report.cmi_bits,
                "identity_ok": identity_gap <= UCR_TOL}
    report = maassen_uffink_general(family.algebra(int(i)), family.algebra(int(j)),
                                    _random_density(p * 4, rng), (p, 2, 2))
    return {"relation": "maassen_uffink", "p": p, "margin": report.margin}


def _duality(d: int, rng) -> Dict[str, Any]:
    from .squares import duality_check

    pairs = _factor_pairs(d)
    if pairs:
        a, rest = pairs[int(rng.integers(len(pairs)))]
        splits = [(b, rest // b) for b in range(1, rest + 1) if rest % b == 0]
        b, c = splits[int(rng.integers(len(splits)))]
        s = tensor_algebra(full(a), trivial(b), trivial(c))
        t = tensor_algebra(trivial(a), full(b), trivial(c))
        family = f"tensor:{a}x{b}x{c}"
    elif _is_small_prime(d):
        from .scenarios import mub_family
        bases = mub_family(d)
        i, j = rng.choice(len(bases.bases), size=2, replace=False)
        s, t = bases.algebra(int(i)), bases.algebra(int(j))
        family = "mub"
    else:
        return {"skipped": True, "margin": 0.0}
    u = haar_unitary(d, rng)
    lhs, rhs = duality_check(s.conjugate(u), t.conjugate(u), full(d), random_state_vector(d, rng))
    return {"family": family, "lhs_bits": lhs, "rhs_bits": rhs, "margin": -abs(lhs - rhs)}


def _hermitian_in(alg: VnAlgebra, rng) -> np.ndarray:
    d = alg.ambient_dim
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return hermitian_part(alg.project(hermitian_part(g)))


def random_operation(square: Square, rng) -> Tuple[Any, str]:
    """A candidate S- or T-operation plan on ``square``; validation may still refuse it."""
    from .channels import OperationPlan, PlanStep, _relative_commutant, mixed_unitary

    acting = "s" if rng.random() < 0.5 else "t"
    own, other = (square.s, square.t) if acting == "s" else (square.t, square.s)
    choice = ["heisenberg", "shrink", "enlarge", "restrict", "channel"][int(rng.integers(5))]
    if choice == "heisenberg":
        allowed = commutant(_relative_commutant(own, other))
        u = scipy.linalg.expm(1j * _hermitian_in(allowed, rng))
        return OperationPlan(f"{acting}-algebra", [PlanStep("unitary-heisenberg", {"unitary": u})]), choice
    if choice == "shrink":
        k = join(intersect(own, other), generate([_hermitian_in(own, rng)], own.ambient_dim))
        return OperationPlan(f"{acting}-algebra", [PlanStep(f"shrink-{acting}", {"algebra": k})]), choice
    if choice == "enlarge":
        k = join(other, generate([_hermitian_in(own, rng)], own.ambient_dim))
        kind = "enlarge-t" if acting == "s" else "enlarge-s"
        return OperationPlan(f"{acting}-algebra", [PlanStep(kind, {"algebra": k})]), choice
    if choice == "restrict":
        return OperationPlan(f"{acting}-algebra", [PlanStep("restrict", {})]), choice
    allowed = commutant(_relative_commutant(own, other))
    u = scipy.linalg.expm(1j * _hermitian_in(allowed, rng))
    w = float(rng.uniform(0.2, 0.8))
    channel = mixed_unitary([(w, np.eye(own.ambient_dim)), (1 - w, u)])
    return OperationPlan(f"{acting}-state", [PlanStep("channel", {"channel": channel})]), choice


def _mono(d: int, rng) -> Dict[str, Any]:
    from .channels import build_s_operation
    from .squares import _classify_fast, gen_cmi

    s, t, m, family = random_commuting_square(d, rng)
    rho = _random_density(d, rng)
    square = _classify_fast(s, t, join(s, t))
    value = gen_cmi(s, t, square.m, rho, square=square).value_bits
    margin, applied, skipped = math.inf, [], 0
    for _ in range(MONO_STEPS):
        plan, name = random_operation(square, rng)
        try:
            op = build_s_operation(plan, square)
        except StepRejected:
            skipped += 1
            continue
        rho, _, _ = op.execute(rho)
        square = op.result
        after = gen_cmi(square.s, square.t, square.m, rho, square=square).value_bits
        margin = min(margin, value - after)
        applied.append(f"{plan.kind}:{name}")
        value = after
    return {"family": family, "applied": applied, "rejected": skipped,
            "margin": margin if math.isfinite(margin) else 0.0, "final_bits": value}


_SUITE_RUNNERS: Dict[str, Callable[[int, np.random.Generator], Dict[str, Any]]] = {
    "ssa": _ssa,
    "ucr": _ucr,
    "mono": _mono,
    "duality": _duality,
    "recovery": _recovery,
}


def run_instance(suite: str, dims: Sequence[int], master_seed: int, index: int, tol: float) -> Dict[str, Any]:
    seed = instance_seed(master_seed, suite, index)
    rng = as_rng(seed)
    d = int(dims[index % len(dims)])
    record: Dict[str, Any] = {"type": "instance", "suite": suite, "index": index, "seed": seed, "dim": d}
    try:
        record.update(_SUITE_RUNNERS[suite](d, rng))
        record["passed"] = record["margin"] >= -tol and record.get("identity_ok", True)
    except VnlabError as e:
        record.update({"passed": False, "error": f"{type(e).__name__}: {e}"})
        log.warning(f"{suite}[{index}] raised {type(e).__name__}: {e}")
    return record


def run_scan(
    suite: str, dims: Sequence[int], samples: int, seed: int = 0,
    workers: int = 4, tol: Optional[float] = None,
) -> Tuple[List[Dict[str, Any]], ScanSummary]:
    """Run ``samples`` instances of a suite; records come back in index order."""
    if suite not in SUITES:
        raise InputError(f"Unknown suite: {suite}. Valid: {', '.join(SUITES)}")
    dims = [int(d) for d in dims]
    if not dims:
        raise InputError("dims must list at least one dimension")
    if any(d < 2 for d in dims):
        raise InputError(f"dimensions must be at least 2, got {dims}")
    if samples < 1:
        raise InputError(f"samples must be positive, got {samples}")
    tol = SUITE_TOLERANCES[suite] if tol is None else float(tol)
    log.info(f"scan {suite}: {samples} instance(s) over dims {dims}, seed {seed}, {workers} worker(s)")

    def job(index: int) -> Dict[str, Any]:
        return run_instance(suite, dims, seed, index, tol)

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as executor:
        records = list(executor.map(job, range(samples)))

    margins = [r["margin"] for r in records if "margin" in r and not r.get("skipped")]
    summary = ScanSummary(
        suite=suite,
        samples=samples,
        failures=sum(1 for r in records if not r.get("passed") and "error" not in r),
        errors=sum(1 for r in records if "error" in r),
        skipped=sum(1 for r in records if r.get("skipped")),
        min_margin=min(margins) if margins else math.inf,
        tolerance=tol,
        dims=dims,
    )
    log.info(f"scan {suite}: {summary.failures} failure(s), {summary.errors} error(s), min margin {summary.min_margin:.3e}")
    return records, summary
