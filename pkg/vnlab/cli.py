"""
CLI
===
Command-line front end: classify squares, evaluate entropies and
conditional mutual information, check uncertainty relations, estimate
measures, run scans and demos.

Usage:
    vnlab check-square --s pauli:X --t pauli:Z --within full:2
    vnlab cmi --s diag:4 --t full:4 --within full:4 --state rho.json
    vnlab measure --kind isq --s pauli:X --t pauli:Z --state '{"vector": [[0.7071,0],[0,0.7071]]}'
    vnlab scan --suite ssa --dims 2,3,4 --samples 100 --out runs/ssa
    vnlab demo --name epr-ucr

Exit codes: 0 ok, 1 scan failures or failed demo checks, 2 bad input,
3 internal tolerance failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import Config

# Colors
CYAN = "\033[36m"
GREEN = "\033[32m"
YELLOW = "\033[33m"
RED = "\033[31m"
DIM = "\033[2m"
BOLD = "\033[1m"
RESET = "\033[0m"

log = logging.getLogger("vnlab.cli")

COMMANDS = ("check-square", "cmi", "entropy", "ucr", "measure", "scan", "demo")


def _emit(record: dict, json_out: Optional[str] = None, manifest=None) -> None:
    from .reports import dumps, write_json

    print(dumps(record))
    if json_out:
        path = write_json(Path(json_out), record)
        if manifest is not None:
            manifest.outputs.append(str(path))
            manifest.write_beside(path)


def _manifest(args, config: Config, **inputs):
    """RunManifest for one command: effective config, arguments and input digests."""
    from .reports import RunManifest

    arguments = {k: v for k, v in vars(args).items() if k not in ("json_out", "config")}
    manifest = RunManifest(command=args.command, config={**config.to_dict(), "arguments": arguments})
    for name, value in inputs.items():
        if value is not None:
            manifest.add_input(name, value)
    return manifest


def _err(message: str) -> None:
    print(f"{RED}error:{RESET} {message}", file=sys.stderr)


def _note(message: str) -> None:
    print(f"{DIM}{message}{RESET}", file=sys.stderr)


def _algebra(value: str):
    from .reports import parse_algebra, resolve_input

    return parse_algebra(resolve_input(value))


def _state(value: str):
    from .errors import InputError
    from .reports import decode_state, resolve_input

    if value is None:
        raise InputError("--state is required")
    return decode_state(resolve_input(value))


def _basis(value: str):
    """A basis as ``mub:p:k`` or a unitary matrix whose columns are the basis vectors."""
    from .errors import InputError
    from .reports import decode_matrix, resolve_input
    from .scenarios import mub_family

    doc = resolve_input(value)
    if isinstance(doc, str):
        head, _, rest = doc.partition(":")
        p_text, _, k_text = rest.partition(":")
        if head != "mub" or not p_text.isdigit() or not k_text.isdigit():
            raise InputError(f"basis must be mub:p:k or a matrix, got {doc!r}")
        family = mub_family(int(p_text))
        k = int(k_text)
        if k >= len(family.bases):
            raise InputError(f"basis index {k} out of range for p = {p_text}")
        return family.bases[k]
    return decode_matrix(doc)


def _within(args, s):
    from .algebra import full

    return _algebra(args.within) if args.within else full(s.ambient_dim)


# Commands

def cmd_check_square(args, config: Config) -> int:
    from .algebra import classify_square
    from .reports import square_record

    s, t = _algebra(args.s), _algebra(args.t)
    within = _within(args, s)
    square = classify_square(s, t, within, tol=config.tolerances()["square"])
    record = square_record(square)
    record["tolerance"] = config.tolerances()["square"]
    _emit(record, args.json_out, _manifest(args, config, s=s.basis, t=t.basis, within=within.basis))
    return 0


def cmd_cmi(args, config: Config) -> int:
    from .reports import report_record
    from .squares import gen_cmi, recovery_certificate

    s, t = _algebra(args.s), _algebra(args.t)
    if args.plan:
        return _cmi_with_plan(args, config, s, t)
    within = _within(args, s)
    rho = _state(args.state)
    tols = config.tolerances()
    if args.recovery:
        report = recovery_certificate(s, t, within, rho, tol=tols["recovery"], method=args.method)
    else:
        report = gen_cmi(s, t, within, rho, tol=tols["ssa"])
    manifest = _manifest(args, config, s=s.basis, t=t.basis, within=within.basis, state=rho)
    _emit(report_record(report), args.json_out, manifest)
    return 0


def _cmi_with_plan(args, config: Config, s, t) -> int:
    """Run a validated S- or T-operation and report I(S:T ⊆ ST) before and after it."""
    from .algebra import join
    from .channels import build_s_operation, build_t_operation
    from .errors import InputError
    from .reports import parse_plan, report_record, resolve_input
    from .squares import commuting_square, gen_cmi

    if args.within or args.recovery:
        raise InputError("--plan evaluates inside the join of S and T; drop --within and --recovery")
    doc = resolve_input(args.plan)
    plan = parse_plan(doc)
    rho = _state(args.state)
    tol = config.tolerances()["ssa"]
    square = commuting_square(s, t, join(s, t))
    build = build_s_operation if plan.acting == "s" else build_t_operation
    op = build(plan, square)
    before = gen_cmi(s, t, square.m, rho, tol=tol, square=square).value_bits
    out, s_out, t_out = op.execute(rho)
    report = gen_cmi(s_out, t_out, op.result.m, out, tol=tol, square=op.result)
    monotone = bool(report.value_bits <= before + tol)
    record = report_record(report)
    record["operation"] = {
        "kind": plan.kind,
        "before_bits": before,
        "after_bits": report.value_bits,
        "monotone": monotone,
        "steps": [{"name": name, "checks": flags} for name, flags in op.checks],
    }
    if not monotone:
        _err(f"I increased under a validated operation: {before:.10f} → {report.value_bits:.10f}")
    _emit(record, args.json_out, _manifest(args, config, s=s.basis, t=t.basis, state=rho, plan=doc))
    return 0 if monotone else 1


def cmd_entropy(args, config: Config) -> int:
    from .entropy import algebra_entropy, asymmetry, rel_entropy, sandwiched_renyi, vn_entropy
    from .reports import SCHEMA

    rho = _state(args.state)
    manifest = _manifest(args, config, state=rho)
    record = {"schema": SCHEMA, "type": "entropy", "vn_bits": vn_entropy(rho).bits}
    if args.algebra:
        n = _algebra(args.algebra)
        manifest.add_input("algebra", n.basis)
        record["algebra_bits"] = algebra_entropy(n, rho).bits
        value = asymmetry(n, rho, args.alpha, restarts=config.restarts, seed=config.seed)
        record["asymmetry_bits"] = value.bits if value.finite else "inf"
        record["asymmetry_exact"] = value.exact
    if args.sigma:
        sigma = _state(args.sigma)
        manifest.add_input("sigma", sigma)
        value = rel_entropy(rho, sigma) if args.alpha == 1.0 else sandwiched_renyi(rho, sigma, args.alpha)
        record["divergence_bits"] = value.bits if value.finite else "inf"
        record["alpha"] = args.alpha
    _emit(record, args.json_out, manifest)
    return 0


def cmd_ucr(args, config: Config) -> int:
    from .reports import ucr_record
    from .ucr import coherence_ucr, maassen_uffink_general, memory_ucr, overlap_ucr

    rho = _state(args.state)
    manifest = _manifest(args, config, state=rho)
    tol = config.tolerances()
    if args.relation == "maassen_uffink":
        dims = [int(v) for v in args.dims.split(",")] if args.dims else [rho.shape[0], 1, 1]
        s, t = _algebra(args.s), _algebra(args.t)
        manifest.add_input("s", s.basis)
        manifest.add_input("t", t.basis)
        report = maassen_uffink_general(s, t, rho, dims, tol=tol["mu"])
    else:
        x, z = _basis(args.x), _basis(args.z)
        manifest.add_input("x", x)
        manifest.add_input("z", z)
        d = x.shape[0]
        if args.relation == "memory":
            report = memory_ucr(d, rho, x, z, tol=tol["ucr"])
        elif args.relation == "overlap":
            report = overlap_ucr(d, rho, x, z, tol=tol["ucr"])
        else:
            report = coherence_ucr(x, z, rho, tol=tol["ucr"])
    _emit(ucr_record(report), args.json_out, manifest)
    return 0 if report.passed else 1


def cmd_measure(args, config: Config) -> int:
    from .algebra import join
    from .measures import iconv_estimate, iext_estimate, isq_estimate
    from .reports import estimate_record
    from .squares import commuting_square

    s, t = _algebra(args.s), _algebra(args.t)
    rho = _state(args.state)
    restarts = args.restarts if args.restarts is not None else config.restarts
    seed = args.seed if args.seed is not None else config.seed
    if args.kind == "isq":
        ext_dim = args.ext_dim if args.ext_dim is not None else config.ext_dim
        est = isq_estimate(s, t, rho, ext_dim=ext_dim, restarts=restarts, seed=seed, maxfev=config.maxfev)
    elif args.kind == "iconv":
        est = iconv_estimate(s, t, rho, k=args.k, restarts=restarts, seed=seed, maxfev=config.maxfev)
    else:
        square = commuting_square(s, t, join(s, t))
        est = iext_estimate([square], rho, ext_budget=args.ext_dim or 2, restarts=restarts, seed=seed)
    label = f"{GREEN}exact{RESET}" if est.exact else f"{YELLOW}upper bound{RESET}"
    _note(f"{args.kind} = {est.value_bits:.10f} bits ({label}{DIM})")
    _emit(estimate_record(est), args.json_out, _manifest(args, config, s=s.basis, t=t.basis, state=rho))
    return 0


def cmd_scan(args, config: Config) -> int:
    from .errors import InputError
    from .reports import RunManifest, SCHEMA, write_ndjson
    from .scan import run_scan

    try:
        dims = [int(v) for v in args.dims.split(",") if v.strip()]
    except ValueError as e:
        raise InputError(f"--dims must be comma-separated integers, got {args.dims!r}") from e
    samples = args.samples if args.samples is not None else config.samples
    seed = args.seed if args.seed is not None else config.seed
    tol = config.tolerance
    records, summary = run_scan(args.suite, dims, samples, seed=seed, workers=config.workers, tol=tol)

    out = Path(args.out or Path(config.output_dir) / args.suite)
    lines = [{"schema": SCHEMA, **r} for r in records] + [{"schema": SCHEMA, **summary.to_dict()}]
    path = write_ndjson(out / "records.ndjson", lines)
    manifest = RunManifest(
        command=" ".join(["scan", args.suite]),
        config={**config.to_dict(), "dims": dims, "samples": samples, "seed": seed},
        outputs=[str(path)],
    )
    manifest.add_input("dims", dims)
    manifest.write(out)

    color = GREEN if summary.passed else RED
    print(f"{BOLD}{args.suite}{RESET}: {summary.samples} instance(s), "
          f"{color}{summary.failures} failure(s){RESET}, {summary.errors} error(s), "
          f"min margin {summary.min_margin:.3e}")
    print(f"{DIM}records: {path}{RESET}")
    return 0 if summary.passed else 1


def cmd_demo(args, config: Config) -> int:
    from .errors import InputError
    from .reports import transcript_record
    from .scenarios import DEMOS, converse_demo, epr_ucr_demo

    seed = args.seed if args.seed is not None else config.seed
    if args.name == "epr-ucr":
        transcript = epr_ucr_demo(seed=seed)
    elif args.name == "converse":
        transcript = converse_demo(seed=seed, budget=config.converse_budget)
    else:
        raise InputError(f"Unknown demo: {args.name}. Valid: {', '.join(DEMOS)}")
    for step in transcript.steps:
        mark = f"{GREEN}ok{RESET}" if step.passed else f"{RED}FAIL{RESET}"
        _note(f"  {step.name:<18} {mark}")
    _emit(transcript_record(transcript), args.json_out, _manifest(args, config))
    return 0 if transcript.passed else 1


_HANDLERS = {
    "check-square": cmd_check_square,
    "cmi": cmd_cmi,
    "entropy": cmd_entropy,
    "ucr": cmd_ucr,
    "measure": cmd_measure,
    "scan": cmd_scan,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnlab",
        description="Subalgebra entropies, commuting squares and non-classicality measures.",
    )
    parser.add_argument("--version", action="version", version=f"vnlab {__version__}")
    parser.add_argument("--config", "-c", help="Path to config file")
    parser.add_argument("--tolerance", type=float, help="Override every check tolerance")
    parser.add_argument("--verbose", "-v", action="store_true", help="Show debug logs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--json-out", help="Also write the JSON record to this path")
        return p

    p = add("check-square", "Classify S, T inside an ambient algebra")
    p.add_argument("--s", required=True, help="Algebra name, inline JSON or file")
    p.add_argument("--t", required=True)
    p.add_argument("--within", help="Ambient algebra (default: full matrix algebra)")

    p = add("cmi", "Generalized conditional mutual information I(S:T ⊂ M)")
    p.add_argument("--s", required=True)
    p.add_argument("--t", required=True)
    p.add_argument("--within")
    p.add_argument("--state", required=True, help="Density matrix or {\"vector\": ...}")
    p.add_argument("--recovery", action="store_true", help="Attach the recovery-gap certificate")
    p.add_argument("--method", choices=("universal", "petz"), default="universal")
    p.add_argument("--plan", help="S- or T-operation plan (JSON/YAML); reports I before and after it")

    p = add("entropy", "Von Neumann, algebra and relative entropies")
    p.add_argument("--state", required=True)
    p.add_argument("--algebra", help="Also report H(N) and the asymmetry D^N")
    p.add_argument("--sigma", help="Second state for the relative entropy")
    p.add_argument("--alpha", type=float, default=1.0, help="Rényi order (1 = relative entropy)")

    p = add("ucr", "Check an entropic uncertainty relation")
    p.add_argument("--relation", choices=("memory", "coherence", "maassen_uffink", "overlap"), default="memory")
    p.add_argument("--state", required=True)
    p.add_argument("--x", default="mub:2:0", help="First basis (mub:p:k or matrix)")
    p.add_argument("--z", default="mub:2:1", help="Second basis")
    p.add_argument("--s", help="S for maassen_uffink")
    p.add_argument("--t", help="T for maassen_uffink")
    p.add_argument("--dims", help="|A|,|B|,|C| for maassen_uffink")

    p = add("measure", "Estimate I_sq, I_conv or I_ext")
    p.add_argument("--kind", choices=("isq", "iconv", "iext"), required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--s", required=True)
    p.add_argument("--t", required=True)
    p.add_argument("--ext-dim", type=int, help="Extension dimension (isq) or budget (iext)")
    p.add_argument("--k", type=int, help="Decomposition length for iconv")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)

    p = add("scan", "Run a randomized property suite")
    p.add_argument("--suite", required=True, choices=("ssa", "ucr", "mono", "duality", "recovery"))
    p.add_argument("--dims", default="2,3,4", help="Comma-separated ambient dimensions")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="Output directory (default: <output_dir>/<suite>)")

    p = add("demo", "Run a scenario")
    p.add_argument("--name", required=True, help="epr-ucr or converse")
    p.add_argument("--seed", type=int)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )

    from .errors import InputError, VnlabError

    try:
        config = Config.load(args.config).with_tolerance(args.tolerance)
    except (FileNotFoundError, ValueError) as e:
        _err(str(e))
        return InputError.exit_code
    log.debug(f"effective tolerances: {json.dumps(config.tolerances())}")

    try:
        return _HANDLERS[args.command](args, config)
    except VnlabError as e:
        _err(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        print(f"\n{DIM}Interrupted.{RESET}", file=sys.stderr)
        return 130


def main(argv: Optional[List[str]] = None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
