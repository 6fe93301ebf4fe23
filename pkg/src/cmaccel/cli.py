"""``cmaccel`` command line: compile, run, inspect, oracle-check.

Exit codes: 0 success, 2 usage or file error, 3 compile infeasible, 4 simulation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import tensorio
from .depsm import compute_S, oracle_S
from .errors import CompileError, SimulationError
from .lower import bundle_to_json, compile_model, load_bundle
from .nnmodel import load_model
from .partition import partition
from .placemap import load_hw
from .relspec import EnumerationTooLarge, enumeration_caps, relation_from_dict, to_text
from .simcm import Simulator

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPILE = 3
EXIT_SIM = 4

log = logging.getLogger("cmaccel")


class UsageError(Exception):
    pass


def _read(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p.read_bytes()


def cmd_compile(args) -> int:
    model_src, hw_src = _read(args.model), _read(args.hw)
    try:
        hw = load_hw(hw_src)
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(f"bad hardware description {args.hw}: {e}") from e
    g = load_model(model_src)
    with enumeration_caps(points=args.enum_cap):
        bundle = compile_model(g, hw, oracle=not args.no_oracle, workers=args.workers)
    Path(args.out).write_text(bundle_to_json(bundle))
    print(f"wrote {args.out}: {len(bundle['cores'])} core configs")
    return EXIT_OK


def cmd_run(args) -> int:
    bundle_src, x_src = _read(args.bundle), _read(args.input)
    bundle = load_bundle(bundle_src)
    sim = Simulator(bundle, trace=args.trace is not None, rows_per_cycle=args.rows_per_cycle)
    try:
        x = tensorio.loads(x_src)
        frames = tensorio.as_frames(x, sim.in_shape)
    except ValueError as e:
        raise UsageError(str(e)) from e
    try:
        outputs, stats, trace = sim.run(frames, args.cycle_limit)
    finally:
        if args.trace is not None:
            Path(args.trace).write_text("".join(line + "\n" for line in sim.trace))
    single = x.shape == sim.in_shape
    tensorio.save(args.output, outputs[0] if single else np.stack(outputs), "int32")
    if args.stats:
        Path(args.stats).write_text(json.dumps(stats.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"{len(outputs)} frame(s) in {stats.total_cycles} cycles; wrote {args.output}")
    return EXIT_OK


def _core_of_partition(bundle: dict, pid: int) -> dict:
    for c in bundle["cores"]:
        if c["partition"] == pid:
            return c
    valid = sorted(c["partition"] for c in bundle["cores"])
    raise UsageError(f"unknown partition id {pid}; valid ids: {valid}")


def _inspect_bundle(bundle: dict, args) -> None:
    if args.partitions:
        for p in bundle["plan"]["partitions"]:
            print(f"partition {p['id']}: conv={p['conv']} members={p['members']}")
        for e in bundle["plan"]["edges"]:
            print(f"edge {e['source']} -> {e['dest']}: {e['objects']}")
    if args.mapping:
        for pid, cid in bundle["mapping"]["partitions"].items():
            print(f"partition {pid} -> core {cid}")
        for e in bundle["mapping"]["edges"]:
            print(f"edge {e['edge'][0]}->{e['edge'][1]} on link {e['link'][0]}->{e['link'][1]}")
    if args.relations:
        print(f"gcu writes {bundle['gcu']['input']['object']}: {bundle['gcu']['input']['write_relation']}")
        for c in bundle["cores"]:
            print(f"partition {c['partition']} (core {c['core']}):")
            for obj, txt in sorted(c["debug"]["reads"].items()):
                print(f"  read  {obj}: {txt}")
            for obj, txt in sorted(c["debug"]["writes"].items()):
                print(f"  write {obj}: {txt}")
            for obj, txt in sorted(c["debug"]["S"].items()):
                print(f"  S     {obj}: {txt}")
            print(f"  gather {c['gather']['object']}: {to_text(relation_from_dict(c['gather']['relation']))}")
    if args.state_machine is not None:
        c = _core_of_partition(bundle, args.state_machine)
        lcu = c["lcu"]
        print(f"partition {c['partition']} (core {c['core']}) reader space {lcu['reader_space']['name']}")
        print(f"rule: {lcu['rule']}")
        for t in lcu["objects"]:
            print(f"object {t['object']} written by {t['writer']}, initial={t['initial']}, "
                  f"{len(t['entries'])} entries")
            for o, j in t["entries"]:
                print(f"  {t['object']}{o} -> {j}")


def cmd_inspect(args) -> int:
    if args.bundle:
        _inspect_bundle(load_bundle(_read(args.bundle)), args)
        return EXIT_OK
    g = load_model(_read(args.model))
    if args.state_machine is not None or args.mapping:
        raise UsageError("--state-machine and --mapping need a compiled bundle (--bundle)")
    plan = partition(g)
    if args.partitions:
        for p in plan.partitions:
            print(f"partition {p.id}: conv={p.conv} members={list(p.members)}")
        for e in plan.edges:
            print(f"edge {e.source} -> {e.dest}: {list(e.objects)}")
    if args.relations:
        from .accessrel import partition_accesses

        for s in partition_accesses(g, plan):
            print(f"{s.partition} {s.direction} {s.object}: {to_text(s.relation)}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .zoo import random_dependency_case

    rng = np.random.default_rng(args.seed)
    bad = 0
    for i in range(args.cases):
        W1, R2, desc = random_dependency_case(rng)
        ok = compute_S(W1, R2).S == oracle_S(W1, R2)
        bad += not ok
        if not ok or args.verbose:
            print(f"case {i}: {'ok' if ok else 'MISMATCH'} {json.dumps(desc, sort_keys=True)}")
    print(f"{args.cases - bad}/{args.cases} cases agree")
    return EXIT_OK if bad == 0 else EXIT_COMPILE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmaccel", description="Compiler and simulator for a computational-memory accelerator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("compile", help="compile a model for a hardware description")
    c.add_argument("--model", required=True)
    c.add_argument("--hw", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--no-oracle", action="store_true", help="skip the writer-replay check of every S relation")
    c.add_argument("--enum-cap", type=int, default=None, help="maximum points per enumerated set")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="simulate a compiled bundle")
    r.add_argument("--bundle", required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--output", required=True)
    r.add_argument("--trace")
    r.add_argument("--stats")
    r.add_argument("--cycle-limit", type=int, default=None)
    r.add_argument("--rows-per-cycle", type=int, default=1)
    r.set_defaults(func=cmd_run)

    i = sub.add_parser("inspect", help="print partitions, mapping, relations or LCU tables")
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundle")
    src.add_argument("--model")
    what = i.add_mutually_exclusive_group(required=True)
    what.add_argument("--partitions", action="store_true")
    what.add_argument("--relations", action="store_true")
    what.add_argument("--mapping", action="store_true")
    what.add_argument("--state-machine", type=int, metavar="ID")
    i.set_defaults(func=cmd_inspect)

    o = sub.add_parser("oracle-check", help="compare the relation pipeline against writer replay")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--cases", type=int, default=100)
    o.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CompileError, EnumerationTooLarge) as e:
        print(f"compile error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
