"""Command-line entry point: ``threadrefine <command> ...``.

Exit codes: 0 match / true / race-free, 1 mismatch / false / racy,
2 usage or input error, 3 search budget exhausted.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import BudgetExceeded, RefineError
from .lang import parse_file
from .matcher import check, check_n, check_trace_pair
from .state_traces import format_state_trace, format_transition_trace
from .trace import EventTrace, parse_trace, read_trace

EXIT_OK = 0
EXIT_FALSE = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


def _err(msg):
    print(f"threadrefine: {msg}", file=sys.stderr)


def _domain(text):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad domain {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty domain")
    return vals


def _read_init(path):
    """Initial state from ``init x 0`` lines or ``x=0`` lines."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    init = {}
    plain = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            k, _, v = line.partition("=")
            init[k.strip()] = int(v)
        else:
            plain.append(line)
    if plain:
        init.update(parse_trace("\n".join(plain)).explicit_init)
    return init


def _with_init(t: EventTrace, init):
    merged = dict(init)
    merged.update(t.explicit_init)
    return EventTrace(t.events, merged)


def cmd_check_traces(args):
    tp, t = read_trace(args.transformed), read_trace(args.original)
    if args.init:
        init = _read_init(args.init)
        tp, t = _with_init(tp, init), _with_init(t, init)
    rep = check_trace_pair(tp, t, mode="nested" if args.nested else "non-nested")
    if args.json:
        print(rep.to_json())
    else:
        print(rep.verdict)
        if not rep.ok:
            w = rep.witness
            line = f"  constraint {rep.constraint} ({rep.label}) at tuple {w.index}"
            if w.location is not None:
                line += f", location {w.location}"
            if w.values is not None:
                line += f", values {w.values[0]} vs {w.values[1]}"
            print(line)
    return EXIT_OK if rep.ok else EXIT_FALSE


def cmd_check_threads(args):
    tp, t = parse_file(args.transformed), parse_file(args.original)
    fn = check_n if args.nested else check
    res = fn(tp, t, domain=args.domain, budget=args.budget)
    if args.json:
        print(json.dumps(res.to_dict(), sort_keys=True))
    else:
        print("true" if res.verdict else "false")
        print(f"  explored {res.stats.get('nodes', 0)} nodes", file=sys.stderr)
        if not res.verdict:
            rep = res.report
            print(f"  constraint {rep.constraint} ({rep.label}) at {rep.witness.index}"
                  + (f", location {rep.witness.location}" if rep.witness.location else ""))
            fmt = format_transition_trace if args.nested else format_state_trace
            tprime, torig = res.counterexample
            print("certificate:")
            print("  transformed trace:")
            print(_indent(fmt(tprime), 4))
            print("  original trace:")
            print(_indent(fmt(torig), 4))
    return EXIT_OK if res.verdict else EXIT_FALSE


def _indent(text, n):
    pad = " " * n
    return "\n".join(pad + line for line in text.splitlines())


def cmd_race_scan(args):
    from .semantics import Program, all_states, find_adjacent_race, find_hb_race

    threads = []
    for i, path in enumerate(args.programs):
        t = parse_file(path)
        if not t.name or t.name == "T":
            t = type(t)(f"T{i}", t.decls, t.body)
        threads.append(t)
    prog = Program(threads)
    s0s = list(all_states(prog.locations, args.domain))
    finder = find_hb_race if args.detector == "hb" else find_adjacent_race
    res = finder(prog, s0s, args.max_steps)
    if not res.racy:
        print(f"race-free ({res.explored} configurations)")
        return EXIT_OK
    i, j = res.pair
    w = res.witness
    print(f"racy: steps {i} and {j} on {w.loc(j)}")
    print(f"initial state: {dict(w.initial)}")
    sys.stdout.write(w.interleaving_log())
    return EXIT_FALSE


def cmd_gen(args):
    cfgs = _load_configs(args)
    index = harness.write_corpus(cfgs, args.out)
    print(f"wrote {len(index)} pairs to {args.out}")
    return EXIT_OK


def cmd_bench(args):
    cfgs = _load_configs(args)
    if args.jobs > 1 or args.verdicts_only:
        rows = harness.run_verdicts(cfgs, args.jobs)
        bad = 0
        for label, i, n, locks, verdict, truth in rows:
            bad += verdict != truth
            print(json.dumps({"bin": label, "pair": i, "len": n, "locks": locks,
                              "verdict": verdict, "truth": truth}, sort_keys=True))
        print(f"{len(rows)} pairs, {bad} disagreements", file=sys.stderr)
        return EXIT_OK if bad == 0 else EXIT_FALSE

    def progress(r):
        print(json.dumps({"bin": r.bin, "pair": r.pair_id, "len": r.len, "locks": r.locks,
                          "state_us": round(r.state_us, 3),
                          "oracle_us": None if r.oracle_us is None else round(r.oracle_us, 3),
                          "verdict": r.verdict, "truth": r.truth}, sort_keys=True))

    records, summary = harness.run_bench(cfgs, out=args.out, repeats=args.repeats, with_oracle=args.oracle,
                                         oracle_budget=args.oracle_budget, progress=progress)
    print(json.dumps({"summary": summary}, sort_keys=True), file=sys.stderr)
    bad = sum(r.verdict != r.truth for r in records)
    return EXIT_OK if bad == 0 else EXIT_FALSE


def _load_configs(args):
    with open(args.config, encoding="utf-8") as f:
        return harness.parse_config(f.read())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="threadrefine", description="State-based refinement checks for threads.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-traces", help="match two event traces (transformed first)")
    s.add_argument("transformed")
    s.add_argument("original")
    s.add_argument("--nested", action="store_true", help="use the nested-lock constraints")
    s.add_argument("--json", action="store_true", help="print a JSON report")
    s.add_argument("--init", metavar="FILE", help="shared initial state for both traces")
    s.set_defaults(fn=cmd_check_traces)

    s = sub.add_parser("check-threads", help="decide check(T', T) for two thread programs")
    s.add_argument("transformed")
    s.add_argument("original")
    s.add_argument("--nested", action="store_true")
    s.add_argument("--domain", type=_domain, default=(0, 1, 2), help="value domain, e.g. 0,1,2")
    s.add_argument("--budget", type=int, default=2_000_000, help="node budget")
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_check_threads)

    s = sub.add_parser("race-scan", help="look for a data race in the parallel composition")
    s.add_argument("programs", nargs="+")
    s.add_argument("--detector", choices=("hb", "adjacent"), default="adjacent")
    s.add_argument("--max-steps", type=int, default=10_000)
    s.add_argument("--domain", type=_domain, default=(0, 1, 2), help="initial values tried for every location")
    s.set_defaults(fn=cmd_race_scan)

    s = sub.add_parser("gen", help="write a generated trace-pair corpus")
    s.add_argument("config", help="key=value configuration file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_gen)

    s = sub.add_parser("bench", help="time the matchers on a generated corpus")
    s.add_argument("config", help="key=value configuration file")
    s.add_argument("--out", help="CSV output (a .manifest.json sidecar is written next to it)")
    s.add_argument("--oracle", action="store_true", help="also time the event-based search")
    s.add_argument("--oracle-budget", type=int, default=1_000_000)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--jobs", type=int, default=1, help="parallel verdict-only run")
    s.add_argument("--verdicts-only", action="store_true")
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.fn(args)
    except BudgetExceeded as e:
        _err(f"budget exceeded: {e}")
        return EXIT_BUDGET
    except (RefineError, OSError, ValueError, KeyError) as e:
        _err(str(e))
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
