"""
Command-line front end.

Exit codes: 0 every check passed, 1 a check failed (the report is still
printed), 2 usage or input error, 3 a budget was exceeded.
"""

from __future__ import annotations

import argparse
import sys

from .automata import ProgramError, consistent, derive_spec
from .epistemics import CutNotInSystem, KnowledgeModel, distinguishing_cut, initial_cut
from .events import ConsistentCut, CutBudgetExceeded, EventModelError, cut_frontiers, validate
from .explorer import BudgetExceeded, ChannelModel, ExploreConfig, System, explore, run_fair
from .formats import (
    FormatError, dump_system, dumps_json, load_automaton, load_system, stp_verdict_to_json, write_trace,
)
from .logic import Always, Know, TermLogicError, Var
from .stp import X, StpError, StpScenario, build_stenning, scenario_config, verify_stp
from .syntax import ParseError, format_term, format_value, parse_formula, parse_value

OK, FAILED, USAGE, BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- options


def _channel(text: str) -> ChannelModel:
    try:
        return ChannelModel.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _bits_spec(text: str) -> int:
    tag, _, n = text.partition(":")
    if tag != "bits" or not n.isdigit():
        raise argparse.ArgumentTypeError(f"expected bits:N, got {text!r}")
    return int(n)


def _seeds(text: str) -> tuple:
    """`0..7` or `1,4,9`."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected A..B or a comma list of seeds, got {text!r}") from e


def _add_run_options(p: argparse.ArgumentParser, depth: int) -> None:
    p.add_argument("--depth", type=int, default=depth, help="bound on the number of events")
    p.add_argument("--window", type=int, default=4, help="fairness window W")
    p.add_argument("--channel", type=_channel, default=ChannelModel(), help="lossy|lossless[,reorder][,dup]")


def _add_cut_budget_note(p: argparse.ArgumentParser) -> None:
    p.epilog = "EW_BUDGET_CUTS caps the number of cuts enumerated per structure."


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="cutknow", description="Knowledge over consistent cuts of message-passing systems.")
    sub = top.add_subparsers(dest="verb", metavar="VERB")

    p = sub.add_parser("explore", help="enumerate the structures of an automaton and validate them")
    p.add_argument("automaton", help="automaton JSON file")
    _add_run_options(p, 8)
    p.add_argument("--input", action="append", default=[], metavar="VAR=VALUE", help="fix an input variable")
    p.add_argument("--max-structures", type=int, default=10**5)
    p.add_argument("--out", help="dump the system to this directory")

    p = sub.add_parser("check-consistent", help="check every structure of a dumped system against an automaton")
    p.add_argument("automaton")
    p.add_argument("--system", required=True, help="directory written by explore --out")
    p.add_argument("--horizon", type=int, help="fairness horizon (default: the depth the system was explored to)")

    p = sub.add_parser("check-spec", help="check a formula at every cut, or the derived axioms, over a system")
    p.add_argument("automaton")
    p.add_argument("--system", help="dumped system (default: explore the automaton)")
    p.add_argument("--formula", help="formula in prefix syntax; omitted means the derived axiom specification")
    _add_run_options(p, 8)
    _add_cut_budget_note(p)

    p = sub.add_parser("eval", help="evaluate a formula at one cut of a dumped system")
    p.add_argument("--system", required=True)
    p.add_argument("--cut", required=True, metavar="S:F1,F2", help="structure index and frontier vector")
    p.add_argument("--formula", required=True)
    p.add_argument("--witness", action="store_true", help="print a distinguishing cut for a false Know")
    p.add_argument("--expect", choices=("true", "false"), help="exit 1 unless the result matches")
    _add_cut_budget_note(p)

    stp = sub.add_parser("stp", help="the sequence transmission problem")
    stp_sub = stp.add_subparsers(dest="stp_verb", metavar="VERB")
    for name, helptext in (("run", "print one fair run as a trace"), ("verify", "check safety, liveness and the knowledge conditions")):
        q = stp_sub.add_parser(name, help=helptext)
        q.add_argument("--bits", type=int, default=2)
        q.add_argument("--inputs", type=_bits_spec, dest="bits_alias", metavar="bits:N", help="same as --bits N")
        _add_run_options(q, 12 if name == "verify" else 16)
        q.add_argument("--mutation", help="inject a known fault into the Stenning automaton")
        if name == "run":
            q.add_argument("--seed", type=int, default=0)
            q.add_argument("--input", metavar="BITS", help="the input sequence, e.g. 10 (default: all zeros)")
        else:
            q.add_argument("--seeds", type=_seeds, default=tuple(range(8)), help="fair-run seeds, A..B or a comma list")
            q.add_argument("--seed", type=int, help="a single fair-run seed")
            q.add_argument("--liveness-depth", type=int, default=16)
            q.add_argument("--implements-depth", type=int)
            q.add_argument("--json", action="store_true", help="print the JSON report instead of the table")
    return top


# ------------------------------------------------------------------- verbs


def _config(args, **extra) -> ExploreConfig:
    try:
        return ExploreConfig(depth=args.depth, window=args.window, channel=args.channel, **extra)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _inputs(pg, pairs: list) -> dict:
    out = {}
    for text in pairs:
        name, eq, value = text.partition("=")
        if not eq:
            raise UsageError(f"--input expects VAR=VALUE, got {text!r}")
        decl = pg.signature.variables.get(pg.signature.owner(name) or "", {}).get(name)
        if decl is None or not decl.input:
            raise UsageError(f"{name!r} is not an input variable")
        out[name] = (parse_value(value),)
    return out


def cmd_explore(args, out) -> int:
    pg = load_automaton(args.automaton)
    cfg = _config(args, inputs=_inputs(pg, args.input), max_structures=args.max_structures)
    system = explore(None, pg, cfg)
    bad = [(n, v) for n, es in enumerate(system) for v in validate(es)]
    print(f"structures {len(system)}", file=out)
    print(f"events {sum(len(es) for es in system)}", file=out)
    print(f"invalid {len({n for n, _ in bad})}", file=out)
    for n, v in bad[:10]:
        print(f"  structure {n}: {v}", file=out)
    if args.out:
        dump_system(system, args.out)
        print(f"written {args.out}", file=out)
    return FAILED if bad else OK


def cmd_check_consistent(args, out) -> int:
    pg = load_automaton(args.automaton)
    system = load_system(args.system, pg.signature)
    horizon = args.horizon
    if horizon is None and system.config is not None:
        horizon = system.config.depth
    failures = 0
    for n, es in enumerate(system):
        v = consistent(None, pg, es, horizon)
        if not v.ok:
            failures += 1
            print(f"structure {n}: {v.violations[0]}", file=out)
    print(f"consistent {len(system) - failures}/{len(system)}", file=out)
    return FAILED if failures else OK


def _system(args, pg) -> System:
    if args.system:
        return load_system(args.system, pg.signature)
    cfg = _config(args)
    system = explore(None, pg, cfg)
    system.config = cfg
    return system


def cmd_check_spec(args, out) -> int:
    pg = load_automaton(args.automaton)
    system = _system(args, pg)
    if args.formula is None:
        horizon = system.config.depth if system.config is not None else None
        spec = derive_spec(pg, None, horizon)
        bad = [n for n, es in enumerate(system) if not spec(es)]
        label = "derived axioms"
    else:
        f = parse_formula(args.formula)
        model = KnowledgeModel.of(system)
        bad = [n for n, es in enumerate(system) if not model.holds(initial_cut(es), Always(f))]
        label = args.formula
    print(f"{label}: {len(system) - len(bad)}/{len(system)} structures", file=out)
    if bad:
        print(f"first failure: structure {bad[0]}", file=out)
        print(write_trace(system.structures[bad[0]]), end="", file=out)
    return FAILED if bad else OK


def _parse_cut(system: System, text: str) -> ConsistentCut:
    s, colon, rest = text.partition(":")
    try:
        n = int(s)
        frontier = tuple(int(k) for k in rest.split(",")) if rest else ()
    except ValueError as e:
        raise UsageError(f"--cut expects S:F1,F2,..., got {text!r}") from e
    if not colon or not 0 <= n < len(system):
        raise UsageError(f"structure {s!r} is not in the system (0..{len(system) - 1})")
    es = system.structures[n]
    if len(frontier) != len(es.agents):
        raise UsageError(f"the frontier needs one entry per agent ({', '.join(es.agents)})")
    if frontier not in set(cut_frontiers(es)):
        raise CutNotInSystem(f"{list(frontier)} is not a consistent cut of structure {n}")
    return ConsistentCut(es, frontier)


def cmd_eval(args, out) -> int:
    system = load_system(args.system)
    f = parse_formula(args.formula)
    c = _parse_cut(system, args.cut)
    model = KnowledgeModel.of(system)
    value = model.holds(c, f)
    print("true" if value else "false", file=out)
    if args.witness and not value and type(f) is Know:
        w = distinguishing_cut(system, c, f)
        if w is not None:
            n = next(k for k, es in enumerate(system) if es is w.structure)
            print(f"witness {n}:{','.join(map(str, w.frontier))}", file=out)
            for st in w.global_state.states:
                print(f"  {st.agent} " + " ".join(f"({format_term(Var(k))} {format_value(v)})" for k, v in zip(st.names, st.values)), file=out)
    if args.expect is not None and (args.expect == "true") != value:
        return FAILED
    return OK


def _bits(args) -> int:
    return args.bits_alias if args.bits_alias is not None else args.bits


def cmd_stp_run(args, out) -> int:
    n = _bits(args)
    pg = build_stenning(n, args.mutation)
    x = tuple(0 for _ in range(n))
    if args.input is not None:
        if len(args.input) != n or set(args.input) - {"0", "1"}:
            raise UsageError(f"--input must be {n} binary digits")
        x = tuple(int(b) for b in args.input)
    cfg = _config(args, inputs={X: (x,)})
    print(write_trace(run_fair(None, pg, cfg, args.seed)), end="", file=out)
    return OK


def _row(name: str, ok: bool, detail: str = "") -> str:
    return f"{name:<28} {'pass' if ok else 'FAIL'}  {detail}".rstrip()


def verdict_table(report: dict) -> str:
    sc = report["scenario"]
    lines = [
        f"bits={sc['bits']} channel={sc['channel']} depth={sc['depth']} window={sc['window']} "
        f"liveness-depth={sc['liveness_depth']} seeds={len(sc['seeds'])}",
    ]
    s = report["safety"]
    lines.append(_row("safety", s["ok"], f"{s['states']} states" + ("" if s["complete"] else " (partial)")))
    for name, v in report["liveness"].items():
        lines.append(_row(f"liveness {name}", v["ok"], "; ".join(v["violations"])))
    for name in ("implements", "correspondence"):
        v = report[name]
        lines.append(_row(name, v["ok"], "; ".join(v["violations"])))
    for name, v in report["psi"].items():
        lines.append(_row(name, v["ok"], "; ".join(v["violations"])))
    lines.append(_row("overall", report["ok"]))
    return "\n".join(lines) + "\n"


def cmd_stp_verify(args, out) -> int:
    seeds = (args.seed,) if args.seed is not None else args.seeds
    try:
        sc = StpScenario(
            bits=_bits(args), channel=str(args.channel), depth=args.depth, window=args.window,
            seeds=seeds, liveness_depth=args.liveness_depth, implements_depth=args.implements_depth,
        )
        scenario_config(sc)
    except (StpError, ValueError) as e:
        raise UsageError(str(e)) from e
    if args.mutation:
        raise UsageError("verify checks the shipped automaton; use stp run --mutation to inspect a mutant")
    report = stp_verdict_to_json(verify_stp(sc))
    out.write(dumps_json(report) if args.json else verdict_table(report))
    if report["partial"]:
        return BUDGET
    return OK if report["ok"] else FAILED


VERBS = {
    "explore": cmd_explore,
    "check-consistent": cmd_check_consistent,
    "check-spec": cmd_check_spec,
    "eval": cmd_eval,
}


def main(argv: list | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else USAGE
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return USAGE
    if args.verb == "stp":
        if args.stp_verb is None:
            print("usage: cutknow stp {run,verify} ...", file=sys.stderr)
            return USAGE
        handler = cmd_stp_run if args.stp_verb == "run" else cmd_stp_verify
    else:
        handler = VERBS[args.verb]
    try:
        return handler(args, out)
    except (BudgetExceeded, CutBudgetExceeded) as e:
        print(f"budget exceeded: {e.args[0] if e.args else e}", file=sys.stderr)
        return BUDGET
    except (UsageError, FormatError, ParseError, CutNotInSystem, ProgramError, TermLogicError, EventModelError, StpError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    raise SystemExit(main())
