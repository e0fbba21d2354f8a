"""
Reports
=======
JSON codecs for matrices, algebras, channels, plans and every result
type, plus newline-delimited scan output and the run manifest.

Every top-level record carries ``"schema": "vnlab/1"``. Malformed input
raises InputError before any numerics run.

Algebra names:
    full:d  trivial:d  diag:d  pauli:X|Y|Z  mub:p:k
    names joined by ``*`` form a tensor product, e.g. ``pauli:Z*full:2``
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np

from . import __version__
from .algebra import Square, VnAlgebra, diagonal, full, generate, pauli_algebra, tensor_algebra, trivial
from .errors import InputError, NotPrime
from .matcore import as_density, state_digest

log = logging.getLogger("vnlab.reports")

SCHEMA = "vnlab/1"
MANIFEST_NAME = "manifest.json"
ALGEBRA_NAMES = ("full", "trivial", "diag", "pauli", "mub")


# Matrices

def encode_matrix(m) -> Dict[str, Any]:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return {
        "dim": list(arr.shape),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in arr],
    }


def _entry(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise InputError(f"matrix entry must be a number or [re, im], got {value!r}")


def decode_matrix(obj) -> np.ndarray:
    """Accept {"dim", "entries"} or a bare nested list of numbers / [re, im] pairs."""
    rows = obj.get("entries") if isinstance(obj, dict) else obj
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise InputError("matrix must be a non-empty list of rows")
    try:
        arr = np.array([[_entry(v) for v in row] for row in rows], dtype=complex)
    except ValueError as e:
        raise InputError(f"ragged matrix: {e}") from e
    if isinstance(obj, dict) and "dim" in obj and list(arr.shape) != [int(v) for v in obj["dim"]]:
        raise InputError(f"matrix shape {list(arr.shape)} does not match declared dim {obj['dim']}")
    if not np.all(np.isfinite(arr)):
        raise InputError("matrix has non-finite entries")
    return arr


def decode_state(obj) -> np.ndarray:
    """A density matrix, or {"vector": [...]} for a pure state; validated."""
    if isinstance(obj, dict) and "vector" in obj:
        v = np.array([_entry(x) for x in obj["vector"]], dtype=complex)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InputError("state vector is zero")
        v = v / norm
        return np.outer(v, v.conj())
    try:
        return as_density(decode_matrix(obj))
    except InputError:
        raise
    except Exception as e:
        raise InputError(f"invalid state: {e}") from e


# Algebras

def _int(text: str, what: str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise InputError(f"{what} must be an integer, got {text!r}") from e
    if value < 1:
        raise InputError(f"{what} must be positive, got {value}")
    return value


def _named_algebra(name: str) -> VnAlgebra:
    head, _, rest = name.strip().partition(":")
    if head == "full":
        return full(_int(rest, "dimension"))
    if head == "trivial":
        return trivial(_int(rest, "dimension"))
    if head == "diag":
        return diagonal(_int(rest, "dimension"))
    if head == "pauli":
        try:
            return pauli_algebra(rest)
        except ValueError as e:
            raise InputError(str(e)) from e
    if head == "mub":
        p_text, _, k_text = rest.partition(":")
        from .scenarios import mub_family
        try:
            family = mub_family(_int(p_text, "prime"))
        except NotPrime as e:
            raise InputError(str(e)) from e
        k = int(k_text) if k_text.isdigit() else -1
        if not 0 <= k < len(family.bases):
            raise InputError(f"basis index must lie in [0, {len(family.bases)}), got {k_text!r}")
        return family.algebra(k)
    raise InputError(f"Unknown algebra name: {name!r}. Valid: {', '.join(ALGEBRA_NAMES)}")


def parse_algebra(spec) -> VnAlgebra:
    """Build an algebra from a name string or {"ambient_dim", "generators"}."""
    if isinstance(spec, VnAlgebra):
        return spec
    if isinstance(spec, str):
        parts = [p for p in spec.split("*") if p.strip()]
        if not parts:
            raise InputError("empty algebra name")
        algebras = [_named_algebra(p) for p in parts]
        alg = algebras[0] if len(algebras) == 1 else tensor_algebra(*algebras)
        alg.label = spec
        return alg
    if isinstance(spec, dict) and "ambient_dim" in spec:
        d = _int(str(spec["ambient_dim"]), "ambient_dim")
        gens = [decode_matrix(g) for g in spec.get("generators", [])]
        for g in gens:
            if g.shape != (d, d):
                raise InputError(f"generator shape {g.shape} does not match ambient_dim {d}")
        return generate(gens, d, spec.get("label", ""))
    raise InputError("algebra must be a name string or an object with 'ambient_dim' and 'generators'")


def encode_algebra(alg: VnAlgebra) -> Dict[str, Any]:
    return {
        "ambient_dim": alg.ambient_dim,
        "label": alg.label,
        "dim": alg.dim,
        "generators": [encode_matrix(b) for b in alg.basis],
    }


def parse_channel(obj):
    from .channels import Channel

    if not isinstance(obj, dict) or "kraus" not in obj:
        raise InputError("channel must be an object with a 'kraus' list")
    try:
        return Channel.from_kraus([decode_matrix(k) for k in obj["kraus"]], obj.get("label", ""))
    except InputError:
        raise
    except ValueError as e:
        raise InputError(f"invalid channel: {e}") from e


_PARAM_DECODERS = {
    "channel": parse_channel,
    "unitary": decode_matrix,
    "iso": decode_matrix,
    "algebra": parse_algebra,
    "t_out": parse_algebra,
}


def parse_plan(obj):
    """{"kind", "dims"?, "steps": [{"kind", "params"}]} → OperationPlan."""
    from .channels import PLAN_KINDS, OperationPlan, PlanStep

    if not isinstance(obj, dict) or obj.get("kind") not in PLAN_KINDS:
        raise InputError(f"plan kind must be one of {', '.join(PLAN_KINDS)}")
    steps = []
    for raw in obj.get("steps", []):
        if not isinstance(raw, dict) or "kind" not in raw:
            raise InputError("each plan step needs a 'kind'")
        params = {key: _PARAM_DECODERS.get(key, lambda v: v)(value) for key, value in raw.get("params", {}).items()}
        steps.append(PlanStep(raw["kind"], params))
    dims = tuple(int(v) for v in obj["dims"]) if obj.get("dims") else None
    return OperationPlan(obj["kind"], steps, dims)


# Result records

def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return _clean(value.item())
    if isinstance(value, np.ndarray):
        return encode_matrix(value)
    if isinstance(value, VnAlgebra):
        return {"label": value.label, "dim": value.dim, "ambient_dim": value.ambient_dim}
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def square_record(square: Square) -> Dict[str, Any]:
    return {
        "schema": SCHEMA,
        "type": "square",
        "commuting": bool(square.is_commuting),
        "co_commuting": square.is_co_commuting,
        "residual": float(square.commuting_residual),
        "dims": {"s": square.s.dim, "t": square.t.dim, "intersection": square.c.dim, "within": square.m.dim},
    }


def report_record(report) -> Dict[str, Any]:
    """SquareReport → JSON-ready dict."""
    return {
        "schema": SCHEMA,
        "type": "square_report",
        "value_bits": report.value_bits,
        "terms": dict(zip(("H_A", "H_B", "H_M", "H_C"), report.terms)),
        "state_hash": report.state_hash,
        "certificate": _clean(report.certificate),
        "seed": report.seed,
    }


def estimate_record(est) -> Dict[str, Any]:
    witness = est.witness
    if isinstance(witness, list):
        witness = [{"weight": p, "vector": encode_matrix(v)} for p, v in witness]
    elif isinstance(witness, Square):
        witness = square_record(witness)
    return _clean({
        "schema": SCHEMA,
        "type": "estimate",
        "kind": est.kind,
        "value_bits": est.value_bits,
        "exactness": est.exactness,
        "size": est.size,
        "restarts": est.restarts,
        "seed": est.seed,
        "witness": witness,
        "trace": [{"label": label, "value": value} for label, value in est.trace],
    })


def ucr_record(report) -> Dict[str, Any]:
    return _clean({
        "schema": SCHEMA,
        "type": "ucr",
        "relation": report.relation,
        "lhs_bits": report.lhs_bits,
        "rhs_bits": report.rhs_bits,
        "margin": report.margin,
        "passed": report.passed,
        "tolerance": report.tolerance,
        "cmi_bits": report.cmi_bits,
        "instance": report.instance,
    })


def transcript_record(transcript) -> Dict[str, Any]:
    return _clean({
        "schema": SCHEMA,
        "type": "transcript",
        "name": transcript.name,
        "seed": transcript.seed,
        "passed": transcript.passed,
        "steps": [{"name": s.name, "passed": s.passed, "values": s.values} for s in transcript.steps],
    })


def to_record(obj) -> Dict[str, Any]:
    """Dispatch on result type; unknown dataclasses fall back to asdict."""
    from .measures import MeasureEstimate
    from .scenarios import Transcript
    from .squares import SquareReport
    from .ucr import UcrReport

    if isinstance(obj, MeasureEstimate):
        return estimate_record(obj)
    if isinstance(obj, SquareReport):
        return report_record(obj)
    if isinstance(obj, UcrReport):
        return ucr_record(obj)
    if isinstance(obj, Transcript):
        return transcript_record(obj)
    if isinstance(obj, Square):
        return square_record(obj)
    if is_dataclass(obj):
        return {"schema": SCHEMA, **_clean(asdict(obj))}
    if isinstance(obj, dict):
        return {"schema": SCHEMA, **_clean(obj)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# Files

def load_document(path: str) -> Any:
    """Read JSON, or YAML for .yaml/.yml paths."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file not found: {path}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix in (".yaml", ".yml"):
            import yaml
            return yaml.safe_load(text)
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    except Exception as e:
        if e.__class__.__module__.startswith("yaml"):
            raise InputError(f"{path}: invalid YAML ({e})") from e
        raise


def resolve_input(value: str) -> Any:
    """A path to a JSON/YAML file, inline JSON, or a plain name string."""
    if value is None:
        return None
    stripped = value.strip()
    if stripped.startswith(("{", "[")):
        try:
            return json.loads(stripped)
        except json.JSONDecodeError as e:
            raise InputError(f"invalid inline JSON: {e.msg}") from e
    if Path(stripped).suffix in (".json", ".yaml", ".yml"):
        return load_document(stripped)
    return stripped


def dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def write_json(path: Path, record: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    log.info(f"wrote {path}")
    return path


def write_ndjson(path: Path, records: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(dumps(record) + "\n")
    log.info(f"wrote {path}")
    return path


def read_ndjson(path: Path) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class RunManifest:
    """What ran, with which settings and inputs, and where the output went."""
    command: str
    config: Dict[str, Any]
    inputs: Dict[str, str] = field(default_factory=dict)     # name → SHA-256 digest
    outputs: List[str] = field(default_factory=list)
    version: str = __version__
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def add_input(self, name: str, value) -> None:
        if isinstance(value, np.ndarray):
            self.inputs[name] = state_digest(value)
        else:
            self.inputs[name] = state_digest(np.frombuffer(json.dumps(value, sort_keys=True).encode(), dtype=np.uint8))

    def to_dict(self) -> Dict[str, Any]:
        return {"schema": SCHEMA, "type": "manifest", **_clean(asdict(self))}

    def write(self, directory: Path) -> Path:
        return write_json(Path(directory) / MANIFEST_NAME, self.to_dict())

    def write_beside(self, output: Path) -> Path:
        """Write as ``<stem>.manifest.json`` next to a single-record output file."""
        output = Path(output)
        return write_json(output.with_name(f"{output.stem}.manifest.json"), self.to_dict())

    def reproducible_key(self) -> Dict[str, Any]:
        """The manifest minus its timestamp: equal keys give equal outputs."""
        data = self.to_dict()
        data.pop("created_at", None)
        return data
