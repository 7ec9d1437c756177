"""Command-line front end.

Structured results go to stdout as JSON; human-readable summaries go to
stderr.  Exit codes: 0 success/realizable, 1 unrealizable, 2 malformed
input, 3 internal disagreement between algorithm variants.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field

from .closure import compute_closure
from .corpus import BENCHMARKS, benchmark_text
from .events import MalformedInstance, load_instance_file, validate_instance
from .explore import explore
from .fuzz import run_differential
from .oracle import CapExceeded, oracle_realizable, oracle_rf_classes
from .program import ProgramError, parse_program
from .pso import naive_verify_pso, verify_pso
from .tso import SearchStats, naive_verify_tso, verify_tso

EXIT_OK, EXIT_UNREALIZABLE, EXIT_MALFORMED, EXIT_DISAGREE = 0, 1, 2, 3


@dataclass
class RunReport:
    """Self-contained record of one CLI invocation."""

    command: list[str]
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _verifier(effective: str, algo: str):
    if effective == "tso":
        return verify_tso if algo == "fast" else naive_verify_tso
    return verify_pso if algo == "fast" else naive_verify_pso


def _run_one(inst, algo: str, use_closure: bool):
    stats = SearchStats()
    clo = compute_closure(inst) if use_closure else None
    if use_closure and clo is None:
        stats.algo = f"{algo}+closure"
        return None, stats
    fn = _verifier(inst.effective, algo)
    witness = fn(inst, closure=clo, stats=stats)
    return witness, stats


def cmd_verify(args) -> int:
    try:
        inst = load_instance_file(args.input, args.model)
        issues = validate_instance(inst)
        if issues:
            for i in issues:
                _say(f"invalid instance: {i.code}: {i.message} {list(i.events)}")
            return EXIT_MALFORMED
    except (MalformedInstance, OSError, json.JSONDecodeError) as exc:
        _say(f"cannot load instance: {exc}")
        return EXIT_MALFORMED

    combos = ([(a, c) for a in ("fast", "naive") for c in (True, False)]
              if args.all_algos else [(args.algo, args.closure == "on")])
    verdicts = {}
    witness = None
    stats_out = {}
    for algo, use_clo in combos:
        t0 = time.monotonic()
        w, stats = _run_one(inst, algo, use_clo)
        label = f"{algo}/closure-{'on' if use_clo else 'off'}"
        verdicts[label] = w is not None
        stats_out[label] = {"visited": stats.visited,
                            "extensions": stats.extensions,
                            "done_insertions": stats.done_insertions,
                            "ms": round((time.monotonic() - t0) * 1000, 3)}
        if w is not None and witness is None:
            witness = w
    if args.stats:
        print(json.dumps(stats_out, indent=1, sort_keys=True), file=sys.stderr)
    if len(set(verdicts.values())) > 1:
        _say(f"verdict disagreement: {verdicts}")
        return EXIT_DISAGREE
    if witness is None:
        print("UNREALIZABLE")
        return EXIT_UNREALIZABLE
    _emit({"model": args.model or inst.model, "verdict": "realizable",
           "witness": inst.labels(witness.order())})
    return EXIT_OK


def cmd_explore(args) -> int:
    try:
        with open(args.program, "r", encoding="utf-8") as fh:
            prog = parse_program(fh.read(), name=args.program)
    except (ProgramError, OSError) as exc:
        _say(f"cannot load program: {exc}")
        return EXIT_MALFORMED
    t0 = time.monotonic()
    stats, classes = explore(prog, args.model,
                             collect_classes=args.dump_classes is not None)
    out = {"model": args.model, "program": args.program,
           "classes_explored": stats.classes_explored,
           "maximal_traces": stats.maximal_traces,
           "witness_calls": stats.witness_calls,
           "witness_failures": stats.witness_failures}
    if args.stats:
        out["ms"] = round((time.monotonic() - t0) * 1000, 3)
    if args.dump_classes is not None:
        dump = [{"events": [list(k) for k in c.events],
                 "rf": [[list(r), list(s)] for r, s in c.rf]}
                for c in classes]
        with open(args.dump_classes, "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=1)
    _emit(out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if (args.input is None) == (args.program is None):
        _say("oracle needs exactly one of --input or --program")
        return EXIT_MALFORMED
    try:
        if args.input:
            inst = load_instance_file(args.input, args.model)
            ok, wit = oracle_realizable(inst, cap=args.cap)
            _emit({"model": args.model or inst.model,
                   "verdict": "realizable" if ok else "unrealizable",
                   "witness": inst.labels(wit.order()) if ok else None})
            return EXIT_OK if ok else EXIT_UNREALIZABLE
        with open(args.program, "r", encoding="utf-8") as fh:
            prog = parse_program(fh.read(), name=args.program)
        classes, traces = oracle_rf_classes(prog, args.model or "tso")
        out = {"model": args.model or "tso", "maximal_traces": traces}
        if args.count_classes:
            out["classes"] = len(classes)
        _emit(out)
        return EXIT_OK
    except (MalformedInstance, ProgramError, OSError) as exc:
        _say(f"oracle: {exc}")
        return EXIT_MALFORMED
    except CapExceeded as exc:
        _say(f"oracle cap exceeded: {exc}")
        return EXIT_MALFORMED


def cmd_fuzz(args) -> int:
    report = RunReport(command=sys.argv[1:], seed=args.seed,
                       inputs={"count": args.count, "n_max": args.n_max,
                               "k_max": args.k_max, "d_max": args.d_max,
                               "models": args.models.split(","),
                               "cross_bias": args.cross_bias,
                               "oracle": args.with_oracle})
    t0 = time.monotonic()
    result = run_differential(
        count=args.count, seed=args.seed, models=tuple(args.models.split(",")),
        n_max=args.n_max, k_max=args.k_max, d_max=args.d_max,
        cross_bias=args.cross_bias, with_oracle=args.with_oracle,
        atomics=args.atomics, jobs=args.jobs)
    report.counters = {
        "realizable": result.realizable,
        "unrealizable": result.unrealizable,
        "unrealizable_fraction": round(
            result.unrealizable / max(result.realizable + result.unrealizable, 1), 4),
        "disagreements": len(result.disagreements),
        "closure_unsound": result.closure_unsound,
        "closure_witness_violations": result.closure_witness_violations,
        "monotonicity_violations": result.monotonicity_violations,
        "fmap_bound_violations": result.fmap_bound_violations,
        "done_bound_violations": result.done_bound_violations,
        "witness_invalid": result.witness_invalid,
        "tso_realizable_but_not_pso": result.tso_not_pso,
    }
    report.verdicts = {f"{i}:{m}": v for (i, m), v in sorted(result.verdicts.items())}
    if args.timings:
        report.timings_ms = {"total": round((time.monotonic() - t0) * 1000, 3)}
    if result.repro and args.out_dir:
        import pathlib

        out = pathlib.Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for j, blob in enumerate(result.repro):
            (out / f"disagreement_{j}.json").write_text(json.dumps(blob, indent=1))
        _say(f"wrote {len(result.repro)} repro instances to {out}")
    _emit(asdict(report))
    _say(f"{args.count} instances per model; "
         f"{report.counters['disagreements']} disagreements")
    return EXIT_OK if result.clean else EXIT_DISAGREE


def cmd_gen_bench(args) -> int:
    try:
        text = benchmark_text(args.name, args.unroll)
    except ValueError as exc:
        _say(str(exc))
        return EXIT_MALFORMED
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import write_report

    summary = write_report(args.out_dir, sample=args.sample, seed=args.seed)
    _emit(summary)
    _say(f"report written to {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rfcheck",
        description="reads-from consistency checking and stateless "
                    "exploration for store-buffer memory models")
    sub = p.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("verify", help="decide realizability of an instance")
    v.add_argument("--model", choices=("sc", "tso", "pso"))
    v.add_argument("--input", required=True)
    v.add_argument("--closure", choices=("on", "off"), default="on")
    v.add_argument("--algo", choices=("fast", "naive"), default="fast")
    v.add_argument("--all-algos", action="store_true",
                   help="run every algorithm/closure combination and "
                        "fail on any disagreement")
    v.add_argument("--stats", action="store_true")
    v.set_defaults(fn=cmd_verify)

    e = sub.add_parser("explore", help="enumerate reads-from classes of a program")
    e.add_argument("--program", required=True)
    e.add_argument("--model", choices=("sc", "tso", "pso"), required=True)
    e.add_argument("--dump-classes", metavar="OUT.json")
    e.add_argument("--stats", action="store_true")
    e.set_defaults(fn=cmd_explore)

    o = sub.add_parser("oracle", help="exhaustive ground truth (small inputs)")
    o.add_argument("--input")
    o.add_argument("--program")
    o.add_argument("--model", choices=("sc", "tso", "pso"))
    o.add_argument("--count-classes", action="store_true")
    o.add_argument("--cap", type=int, default=14)
    o.set_defaults(fn=cmd_oracle)

    f = sub.add_parser("fuzz", help="differential test on random instances")
    f.add_argument("--count", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--n-max", type=int, default=10)
    f.add_argument("--k-max", type=int, default=3)
    f.add_argument("--d-max", type=int, default=3)
    f.add_argument("--cross-bias", type=float, default=0.3,
                   help="fraction of reads steered to cross-thread sources")
    f.add_argument("--atomics", type=float, default=0.0,
                   help="probability of emitting an atomic read-write block")
    f.add_argument("--models", default="tso,pso")
    f.add_argument("--with-oracle", action=argparse.BooleanOptionalAction,
                   default=True)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--out-dir", help="where to dump disagreement repros")
    f.add_argument("--timings", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="include wall-clock timings (off for byte-stable output)")
    f.set_defaults(fn=cmd_fuzz)

    g = sub.add_parser("gen-bench", help="emit a corpus program")
    g.add_argument("--name", required=True, choices=BENCHMARKS)
    g.add_argument("--unroll", type=int, default=1)
    g.add_argument("-o", "--output")
    g.set_defaults(fn=cmd_gen_bench)

    r = sub.add_parser("report", help="desk-scale tables and figures")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--sample", type=int, default=120)
    r.add_argument("--seed", type=int, default=7)
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
