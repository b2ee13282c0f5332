"""Command-line entry point.

Exit codes: 0 completed (replay: identical), 2 protocol abort, 1 configuration
or input error (replay: mismatch).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bits import BitString
from .errors import CertirandError
from .params import load_constants, param_table, g_iter
from .rng import stream
from .transcript import dumps

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2


def _seed_args(p):
    p.add_argument("--seed", help="seed as hex (MSB first)")
    p.add_argument("--seed-bits", type=int, help="seed length; with no --seed, a referee seed is drawn from --run-seed")
    p.add_argument("--run-seed", default="0", help="root of all simulator randomness (default 0)")


def _common(p):
    p.add_argument("--consts", help="constants file (default: $CERTIRAND_CONSTS or built-in test constants)")
    p.add_argument("--json", action="store_true", help="print the machine-readable report")


def _seed(args) -> BitString:
    if args.seed is not None:
        return BitString.from_hex(args.seed, args.seed_bits)
    if args.seed_bits is None:
        raise CertirandError("give --seed or --seed-bits")
    return BitString.random(args.seed_bits, stream(args.run_seed, "referee-seed"))


def _strategies(args):
    from .devices import parse_strategy_file
    if getattr(args, "strategies", None):
        path = Path(args.strategies)
        text = path.read_text()
        return parse_strategy_file(text, path.parent), text
    return None, ""


def _farm(args):
    from .orchestrator import DeviceFarm
    strat, _ = _strategies(args)
    return DeviceFarm(strat, run_seed=args.run_seed, fresh_devices=getattr(args, "fresh_devices", False))


def cmd_run_infinite(args) -> int:
    from .orchestrator import format_plan, infinite_expansion, report, write_run_dir
    consts = load_constants(args.consts)
    seed = _seed(args)
    farm = _farm(args)
    state = infinite_expansion(farm, seed, args.rounds, consts, lambda_reps=args.lambda_reps)
    if state.cause.startswith("infeasible"):
        print(format_plan(state.preflight), file=sys.stderr)
        print(f"error: {state.cause}", file=sys.stderr)
        return EXIT_CONFIG
    text, rep = report(state)
    if args.out:
        write_run_dir(state, args.out, farm.describe())
    print(dumps(rep) if args.json else text, end="" if not args.json else "\n")
    return EXIT_ABORT if state.halted else EXIT_OK


def _single(args, kind) -> int:
    from .orchestrator import write_single_run
    from .protocol_ruv import run_ruv
    from .protocol_vv import run_vv
    consts = load_constants(args.consts)
    seed = _seed(args)
    farm = _farm(args)
    cl = farm.clusters[args.cluster]
    fn = run_vv if kind == "vv" else run_ruv
    run = fn(cl[f"{kind}_a"], cl[f"{kind}_b"], seed, consts)
    if args.out:
        write_single_run(kind, run, consts, args.out, farm.describe())
    summ = run.transcript.summary
    if args.json:
        print(dumps(summ))
    else:
        for k in sorted(summ):
            print(f"{k}: {summ[k]}")
    return EXIT_ABORT if run.aborted else EXIT_OK


def cmd_extract(args) -> int:
    from .extractor import extract, solve_spec
    hexin = args.input if args.input is not None else "".join(Path(args.source).read_text().split())
    x = BitString.from_hex(hexin, args.input_bits)
    y = BitString.from_hex(args.seed, args.seed_bits)
    spec = solve_spec(len(x), args.r, args.eps, args.one_bit)
    if spec.d > len(y):
        raise CertirandError(f"extractor needs a {spec.d}-bit seed, got {len(y)}")
    z = extract(x, y[: spec.d], spec)
    if args.json:
        print(dumps({"output_hex": z.to_hex(), "output_bits": len(z), "spec": spec.as_dict()}))
    else:
        print(z.to_hex())
    return EXIT_OK


def cmd_params(args) -> int:
    from .orchestrator import format_plan, preflight
    consts = load_constants(args.consts)
    table = param_table(args.s, consts)
    chain = g_iter(args.k, args.s, consts, realized=True)
    plan = preflight(args.s, args.k, consts)
    if args.json:
        print(dumps({"params": table, "chain": [st.__dict__ for st in chain.stages],
                     "preflight": [st.__dict__ for st in plan], "constants": consts.as_dict()}))
    else:
        for k, v in table.items():
            print(f"{k}: {v}")
        print(format_plan(plan))
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    from .lemmas import CHECKS, format_suite, parse_dims, run_suite
    if args.matrix:
        from .infotheory import entropies, load_matrix
        rho = load_matrix(Path(args.matrix))
        labs = rho.labels
        print(f"dims: {rho.dims}")
        if len(labs) >= 2:
            e = entropies(rho, labs[0], labs[1:])
            for k, v in e.items():
                print(f"{k}: {v}")
        return EXIT_OK
    seed = int(args.seed, 16) if args.seed else 0
    names = args.only.split(",") if args.only else None
    if names and any(n not in CHECKS for n in names):
        raise CertirandError(f"unknown lemma; choose from {', '.join(CHECKS)}")
    res = run_suite(args.trials, seed, parse_dims(args.dims), names)
    print(format_suite(res))
    return EXIT_OK if all(r.passed for r in res) else EXIT_CONFIG


def cmd_replay(args) -> int:
    from .orchestrator import replay
    res = replay(args.dir)
    print(res.summary_text, end="")
    if res.identical:
        print("replay: identical")
        return EXIT_OK
    for m in res.mismatches:
        print(f"mismatch: {m}", file=sys.stderr)
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="certirand", description="Device-independent randomness expansion simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run-infinite", help="iterate cluster expansion k times")
    _seed_args(p)
    _common(p)
    p.add_argument("--rounds", "-k", type=int, required=True, help="number of iterations k")
    p.add_argument("--strategies", help="strategy file (default: all ideal)")
    p.add_argument("--out", help="write a replayable run directory")
    p.add_argument("--fresh-devices", action="store_true", help="new device instances every iteration")
    p.add_argument("--lambda-reps", type=int, default=None, help="shadow runs per iteration for the pass-rate estimate")
    p.set_defaults(fn=cmd_run_infinite)

    for kind in ("vv", "ruv"):
        p = sub.add_parser(f"run-{kind}", help=f"one {kind.upper()} run on cluster devices")
        _seed_args(p)
        _common(p)
        p.add_argument("--strategies")
        p.add_argument("--cluster", type=int, choices=(0, 1), default=0)
        p.add_argument("--out")
        p.set_defaults(fn=lambda a, k=kind: _single(a, k))

    p = sub.add_parser("extract", help="run the extractor on a hex input")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="source as hex")
    src.add_argument("--source", help="file holding the source as hex; whitespace ignored")
    p.add_argument("--input-bits", "--n", dest="input_bits", type=int, help="source length n in bits")
    p.add_argument("--seed", required=True)
    p.add_argument("--seed-bits", type=int)
    p.add_argument("--r", type=int, required=True, help="output length")
    p.add_argument("--eps", "--epsilon", dest="eps", type=float, default=0.01)
    p.add_argument("--one-bit", default="parity_of_selected", choices=("parity_of_selected", "rs_hadamard"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("params", help="parameter table and chain for a seed length")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--k", type=int, default=1)
    _common(p)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("verify-lemmas", help="randomized lemma suite")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--dims", default="2x2x2")
    p.add_argument("--seed", help="hex seed of the suite")
    p.add_argument("--only", help="comma-separated lemma names")
    p.add_argument("--matrix", help="analyse one matrix file instead")
    p.set_defaults(fn=cmd_verify_lemmas)

    p = sub.add_parser("replay", help="recompute a persisted run and compare")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CertirandError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
