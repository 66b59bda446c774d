"""Command line interface: ``tfv <command>``.

Exit codes: 0 success/clean, 1 bad input or I/O error, 2 capacity exceeded,
3 failed components found, 4 manipulation detected or quote rejected.
"""

from __future__ import annotations

import argparse
import json
import random
import shutil
import sys
from pathlib import Path
from typing import List, Optional

from . import cost
from .attest import load_secret, loopback_session
from .builder import build_tree, capacity, plan_forest
from .digest import HashAlgorithm, chain, from_hex, to_hex
from .manifest import ManifestError, load_manifest
from .registers import RegisterError, TreeFullError
from .sml import (
    SmlError,
    SmlRecord,
    describe,
    format_path,
    hexdump,
    locate,
    parse_path,
    path_to_position,
    read_sml,
    serialize,
    write_schedule,
    write_sml,
)
from .validate import Outcome, ShapeMismatchError, ValidationReport, build_reference, diagnostic_validate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAPACITY = 2
EXIT_FAILURES = 3
EXIT_TAMPERED = 4


class CliError(Exception):
    pass


def _root_sidecar(sml_path: Path) -> Path:
    return sml_path.with_name(sml_path.name + ".root")


def _auto_depth(count: int, arity: int) -> int:
    d = 1
    while arity**d < count:
        d += 1
    return d


def _depth_arg(text: str):
    if text == "auto":
        return text
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("depth must be >= 1")
    return value


def _report_exit(report: ValidationReport) -> int:
    return {
        Outcome.CLEAN: EXIT_OK,
        Outcome.FAILURES_FOUND: EXIT_FAILURES,
        Outcome.TAMPERED: EXIT_TAMPERED,
        Outcome.TAMPERED_AND_FAILURES: EXIT_TAMPERED,
    }[report.outcome]


def _print_report(report: ValidationReport, fmt: str) -> None:
    if fmt == "json":
        print(report.to_json())
        return
    d = report.to_dict()
    print(f"outcome: {d['outcome']}")
    print(f"failed components: {', '.join(d['failed_components']) or '-'}")
    print(f"exceptions: {', '.join(p or 'root' for p in d['exceptions']) or '-'}")
    print(f"hash ops: {d['hash_op_count']}  comparisons: {d['comparison_count']}"
          f"  sweep comparisons: {d['sweep_comparison_count']}")


def cmd_build(args) -> int:
    alg = HashAlgorithm.parse(args.hash)
    manifest = load_manifest(args.manifest)
    if not len(manifest):
        raise CliError("manifest has no entries")
    leaves = manifest.digests(alg)
    depth = _auto_depth(len(leaves), args.arity) if args.depth == "auto" else args.depth
    if len(leaves) > args.arity**depth and not args.linear_fallback:
        print(
            f"error: {len(leaves)} entries exceed capacity {args.arity ** depth} "
            f"of a depth-{depth} tree (use --linear-fallback)",
            file=sys.stderr,
        )
        return EXIT_CAPACITY
    builder = build_tree(
        leaves, depth, args.arity, linear_fallback=args.linear_fallback,
        hash_alg=alg, strict_tpm=args.strict_tpm,
    )
    out = Path(args.out)
    write_sml(out, builder.sml)
    register = builder.bank.pcr_read(builder.root)
    _root_sidecar(out).write_text(register.hex() + "\n")
    print(register.hex())
    return EXIT_OK


def _claimed_root(args, sml) -> bytes:
    if args.root:
        return from_hex(args.root, sml.hash_alg)
    path = Path(args.root_file) if args.root_file else _root_sidecar(Path(args.sml))
    if path.exists():
        return from_hex(path.read_text().strip(), sml.hash_alg)
    print("warning: no register value given, trusting the log's own root", file=sys.stderr)
    return chain((r.digest for r in sml.fallback_records), sml.root, sml.hash_alg)


def cmd_validate(args) -> int:
    sml = read_sml(args.sml)
    if args.reference_manifest:
        manifest = load_manifest(args.reference_manifest)
        leaves = manifest.digests(sml.hash_alg)
        names = manifest.ids
    else:
        other = read_sml(args.reference_sml)
        leaves, names = other.leaves, None
    if len(leaves) > sml.arity**sml.depth:
        leaves = leaves[: sml.arity**sml.depth]
        names = names[: len(leaves)] if names else None
    ref = build_reference(
        leaves, sml.depth, sml.arity, sml.hash_alg, args.strict_tpm, names
    )
    report = diagnostic_validate(
        sml, _claimed_root(args, sml), ref, sweep=not args.no_sweep, forensic=args.forensic
    )
    _print_report(report, args.format)
    return _report_exit(report)


def _record_index(sml, args) -> int:
    if args.record is not None:
        index = args.record - 1
    else:
        schedule = write_schedule(sml.leaf_count, sml.depth, sml.arity)
        if args.leaf is not None:
            pos = (sml.depth, args.leaf)
        else:
            pos = path_to_position(parse_path(args.path, sml.arity), sml.arity)
        if pos not in schedule:
            raise CliError(f"no log record at {args.leaf if args.leaf is not None else args.path}")
        index = schedule.index(pos)
    if not 0 <= index < len(sml.records):
        raise CliError(f"record {index + 1} out of range 1..{len(sml.records)}")
    return index


def cmd_inject(args) -> int:
    sml = read_sml(args.sml)
    index = _record_index(sml, args)
    old = sml.records[index]
    if args.mode == "set":
        if args.value is None:
            raise CliError("--mode set needs --value")
        value = from_hex(args.value, sml.hash_alg)
    else:
        rng = random.Random(args.seed)
        value = rng.randbytes(sml.hash_alg.output_length)
    if value is None and old.kind.value == "leaf":
        raise CliError("a leaf record cannot be set to nil")
    sml.records[index] = SmlRecord(value, old.kind)
    out = Path(args.out)
    write_sml(out, sml)
    sidecar = _root_sidecar(Path(args.sml))
    if sidecar.exists() and sidecar != _root_sidecar(out):
        shutil.copyfile(sidecar, _root_sidecar(out))
    print(f"record {index + 1}: {to_hex(old.digest)} -> {to_hex(value)}")
    return EXIT_OK


def cmd_capacity(args) -> int:
    print(capacity(args.registers, args.arity))
    if args.plan:
        plan = plan_forest(args.registers, args.arity)
        print("depths:", " ".join(map(str, plan.depths)))
        print("fallback register:", plan.fallback_register)
    return EXIT_OK


def _depth_list(text: str) -> List[int]:
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def cmd_cost(args) -> int:
    params = cost.CostParams.from_lambda(args.lam)
    rows = cost.emit_cost_table(_depth_list(args.depths), cost.f_grid(args.f_step), params)
    text = cost.rows_to_csv(rows)
    if args.csv and args.csv != "-":
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.breakeven:
        for d in _depth_list(args.depths):
            print(f"breakeven d={d} lambda={args.lam}: {cost.breakeven_fraction(d, args.lam):.4f}",
                  file=sys.stderr)
    return EXIT_OK


def cmd_locate(args) -> int:
    if args.sml:
        sml = read_sml(args.sml)
        depth, arity = sml.depth, sml.arity
    elif args.depth:
        depth, arity = args.depth, args.arity
    else:
        raise CliError("give --sml or --depth")
    path = locate(depth, args.index, arity)
    print(format_path(path, arity) or "root")
    return EXIT_OK


def cmd_simulate(args) -> int:
    k = cost.choices_for_fraction(args.depth, args.fraction)
    result = cost.monte_carlo_bad_inner(args.depth, k, args.trials, args.seed)
    print(json.dumps({
        "d": args.depth,
        "f": args.fraction,
        "k": k,
        "trials": args.trials,
        "seed": args.seed,
        "mean": result.mean,
        "stderr": result.stderr,
        "expected": cost.expected_bad_inner(args.depth, args.fraction),
    }))
    return EXIT_OK


def cmd_dump(args) -> int:
    if args.hex:
        print(hexdump(serialize(read_sml(args.sml))))
    else:
        print(describe(read_sml(args.sml)))
    return EXIT_OK


def cmd_attest(args) -> int:
    alg = HashAlgorithm.parse(args.hash)
    secret = load_secret(args.secret_file)
    measured = load_manifest(args.manifest)
    reference = load_manifest(args.reference_manifest)
    leaves = measured.digests(alg)
    depth = _auto_depth(len(leaves), args.arity) if args.depth == "auto" else args.depth
    builder = build_tree(leaves, depth, args.arity, hash_alg=alg)
    ref = build_reference(reference.digests(alg), depth, args.arity, alg, names=reference.ids)
    outcome = loopback_session(builder.bank, builder.sml, secret, ref)
    if not outcome.accepted:
        print(f"quote rejected: {outcome.rejection}")
        return EXIT_TAMPERED
    _print_report(outcome.report, args.format)
    return _report_exit(outcome.report)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfv", description="Tree-formed verification data tool.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="form a tree-formed SML from a manifest")
    p.add_argument("manifest")
    p.add_argument("--depth", type=_depth_arg, default="auto")
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--hash", default="sha1", choices=["sha1", "sha256"])
    p.add_argument("--out", required=True)
    p.add_argument("--linear-fallback", action="store_true",
                   help="chain entries beyond capacity linearly into the root register")
    p.add_argument("--strict-tpm", action="store_true",
                   help="reset registers to zero, giving (0◇x)◇y inner nodes")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("validate", help="diagnostically validate an SML")
    p.add_argument("sml")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--reference-manifest")
    ref.add_argument("--reference-sml")
    p.add_argument("--root", help="claimed root register value (hex)")
    p.add_argument("--root-file", help="file holding the root register value (default: <sml>.root)")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--strict-tpm", action="store_true")
    p.add_argument("--no-sweep", action="store_true",
                   help="skip the comparison sweep of subtrees with good roots")
    p.add_argument("--forensic", action="store_true",
                   help="keep comparing inside excepted subtrees (results carry no trust)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("inject", help="overwrite one SML record without fixing ancestors")
    p.add_argument("sml")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--leaf", type=int)
    target.add_argument("--path", help="edge path such as LRL, or 'root'")
    target.add_argument("--record", type=int, help="1-based record number")
    p.add_argument("--mode", choices=["random", "set"], default="random")
    p.add_argument("--value", help="hex digest (or nil) for --mode set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("capacity", help="leaf capacity of r registers")
    p.add_argument("registers", type=int)
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--plan", action="store_true")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("cost", help="validation cost table as CSV")
    p.add_argument("--depths", default="16", help="comma list or lo:hi range")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="c/h cost ratio")
    p.add_argument("--f-step", type=float, default=0.05)
    p.add_argument("--csv", help="output path (default stdout)")
    p.add_argument("--breakeven", action="store_true")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("locate", help="edge path of the K-th full-tree SML entry")
    p.add_argument("index", type=int)
    p.add_argument("--sml")
    p.add_argument("--depth", type=int)
    p.add_argument("--arity", type=int, default=2)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("simulate", help="Monte Carlo count of bad inner nodes")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dump", help="list SML records")
    p.add_argument("sml")
    p.add_argument("--hex", action="store_true", help="raw hex dump of the file")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("attest", help="loopback quote exchange between prover and verifier")
    p.add_argument("--manifest", required=True, help="components as measured on the platform")
    p.add_argument("--reference-manifest", required=True)
    p.add_argument("--secret-file", required=True)
    p.add_argument("--depth", type=_depth_arg, default="auto")
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--hash", default="sha1", choices=["sha1", "sha256"])
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.set_defaults(func=cmd_attest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ManifestError, SmlError, ShapeMismatchError, RegisterError,
            CliError, ValueError) as exc:
        if isinstance(exc, TreeFullError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CAPACITY
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
