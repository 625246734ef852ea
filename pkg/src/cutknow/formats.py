"""
File formats: automata as JSON documents, event structures as line-based
traces, systems as directories of traces. docs/formats.md describes each.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
from pathlib import Path
from typing import Iterable

from .automata import Effect, Fairness, Frame, Initially, MessageAutomaton, Precondition, Verdict, make_automaton
from .events import Action, ConsistentCut, EventStructure, Link, Signature, VarDecl, from_steps, parse_kind
from .explorer import ChannelModel, ExploreConfig, System
from .logic import STANDARD, App, Atom, Interpretation, Var, free_vars, walk
from .syntax import (
    ParseError, format_formula, format_term, format_value, parse_formula, parse_term, read_sexprs, term_from_sexpr,
    value_from_sexpr,
)
from .stp import PsiWitness, StpScenario, StpVerdict
from .values import BOTTOM, GlobalState, values_equal


class FormatError(ParseError):
    """A malformed document; `field` names the offending place."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class UnknownSymbol(FormatError):
    def __init__(self, name: str, kind: str, known: Iterable[str], field: str | None = None):
        self.name = name
        self.suggestions = difflib.get_close_matches(name, sorted(known), n=3)
        hint = f"; did you mean {' or '.join(map(repr, self.suggestions))}?" if self.suggestions else ""
        super().__init__(f"unknown {kind} {name!r}{hint}", field)


# ---------------------------------------------------------------- automata


def signature_to_json(sig: Signature) -> dict:
    return {
        "agents": list(sig.agents),
        "links": [
            {"name": l.name, "source": l.source, "dest": l.dest, "type": l.message_type} for l in sig.links.values()
        ],
        "actions": [_action_json(a) for a in sig.actions.values()],
        "vars": {
            a: [_var_json(d) for d in sig.variables[a].values() if not sig.is_msg_var(d.name)] for a in sig.agents
        },
    }


def _action_json(a: Action) -> dict:
    out = {"name": a.name, "agent": a.agent}
    if a.type is not None:
        out["type"] = a.type
    return out


def _var_json(d: VarDecl) -> dict:
    out = {"name": d.name, "type": d.type}
    if d.input:
        out["input"] = True
    return out


def program_to_json(bp) -> dict:
    tb = type(bp)
    if tb is Initially:
        return {"program": "initially", "agent": bp.agent, "formula": format_formula(bp.formula)}
    if tb is Effect:
        return {
            "program": "effect", "agent": bp.agent, "kind": str(bp.kind), "var": bp.var, "term": format_term(bp.term),
        }
    if tb is Precondition:
        return {"program": "precondition", "agent": bp.agent, "action": bp.action, "formula": format_formula(bp.formula)}
    if tb is Fairness:
        return {"program": "fairness", "agent": bp.agent, "action": bp.action, "formula": format_formula(bp.formula)}
    if tb is Frame:
        return {"program": "frame", "agent": bp.agent, "kinds": [str(k) for k in bp.kinds], "var": bp.var}
    raise TypeError(f"not a basic program: {bp!r}")


def automaton_to_json(pg: MessageAutomaton) -> dict:
    doc = signature_to_json(pg.signature)
    doc["programs"] = [program_to_json(bp) for bp in pg.programs]
    return doc


def _get(doc: dict, key: str, field: str, kind=None):
    if not isinstance(doc, dict):
        raise FormatError("expected an object", field)
    if key not in doc:
        raise FormatError(f"missing {key!r}", field)
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise FormatError(f"{key!r} must be a {kind.__name__}", f"{field}.{key}")
    return value


def signature_from_json(doc: dict) -> Signature:
    agents = _get(doc, "agents", "$", list)
    links = []
    for n, l in enumerate(doc.get("links", [])):
        f = f"links[{n}]"
        links.append(Link(_get(l, "name", f, str), _get(l, "source", f, str), _get(l, "dest", f, str), l.get("type", "unit")))
        for end in ("source", "dest"):
            if l[end] not in agents:
                raise UnknownSymbol(l[end], "agent", agents, f"{f}.{end}")
    actions = []
    for n, a in enumerate(doc.get("actions", [])):
        f = f"actions[{n}]"
        agent = _get(a, "agent", f, str)
        if agent not in agents:
            raise UnknownSymbol(agent, "agent", agents, f"{f}.agent")
        actions.append(Action(_get(a, "name", f, str), agent, a.get("type")))
    variables = []
    vars_doc = doc.get("vars", {})
    if not isinstance(vars_doc, dict):
        raise FormatError("'vars' must map agents to variable lists", "vars")
    for agent, decls in vars_doc.items():
        if agent not in agents:
            raise UnknownSymbol(agent, "agent", agents, f"vars.{agent}")
        for n, d in enumerate(decls):
            f = f"vars.{agent}[{n}]"
            variables.append(VarDecl(_get(d, "name", f, str), agent, _get(d, "type", f, str), bool(d.get("input", False))))
    try:
        sig = Signature(agents, links, actions, variables)
    except ValueError as e:
        raise FormatError(str(e), "$") from e
    for d in variables:
        try:
            d.domain
        except ParseError as e:
            raise FormatError(str(e), f"vars.{d.agent}.{d.name}.type") from e
    return sig


def _parse(text, parser, field: str):
    if not isinstance(text, str):
        raise FormatError("expected a string in prefix syntax", field)
    try:
        return parser(text)
    except ParseError as e:
        raise FormatError(str(e), field) from e


def _check_symbols(x, sig: Signature, interp: Interpretation, field: str, constants: set) -> None:
    names = {n for a in sig.agents for n in sig.names(a)} | constants
    for y in walk(x):
        if type(y) is App and y.fn not in interp.functions:
            raise UnknownSymbol(y.fn, "function", interp.functions, field)
        if type(y) is Atom and y.pred not in interp.predicates:
            raise UnknownSymbol(y.pred, "predicate", interp.predicates, field)
    for v in sorted(free_vars(x)):
        if v not in names:
            raise UnknownSymbol(v, "variable", names, field)


def _defined_names(programs: list, sig: Signature) -> set:
    # Initially programs of the form (= c term) with c undeclared define c
    out = set()
    for p in programs:
        if isinstance(p, dict) and p.get("program") == "initially" and isinstance(p.get("formula"), str):
            try:
                exprs = read_sexprs(p["formula"])
            except ParseError:
                continue
            e = exprs[0] if exprs else None
            if isinstance(e, list) and len(e) == 3 and e[0] == "=" and isinstance(e[1], str):
                if sig.owner(e[1]) is None and not e[1].isdigit():
                    out.add(e[1])
    return out


def program_from_json(doc: dict, sig: Signature, field: str, interp: Interpretation, constants: set):
    tag = _get(doc, "program", field, str)
    agent = _get(doc, "agent", field, str)
    if agent not in sig.agents:
        raise UnknownSymbol(agent, "agent", sig.agents, f"{field}.agent")

    def formula():
        f = _parse(_get(doc, "formula", field), parse_formula, f"{field}.formula")
        _check_symbols(f, sig, interp, f"{field}.formula", constants)
        return f

    def action():
        name = _get(doc, "action", field, str)
        if name not in sig.actions:
            raise UnknownSymbol(name, "action", sig.actions, f"{field}.action")
        return name

    def var():
        name = _get(doc, "var", field, str)
        if sig.owner(name) is None:
            raise UnknownSymbol(name, "variable", [n for a in sig.agents for n in sig.names(a)], f"{field}.var")
        return name

    def kind(text, where):
        try:
            return parse_kind(text)
        except (ValueError, TypeError) as e:
            raise FormatError(str(e), where) from e

    if tag == "initially":
        return Initially(agent, formula())
    if tag == "effect":
        t = _parse(_get(doc, "term", field), parse_term, f"{field}.term")
        _check_symbols(t, sig, interp, f"{field}.term", constants)
        return Effect(agent, kind(_get(doc, "kind", field, str), f"{field}.kind"), var(), t)
    if tag == "precondition":
        return Precondition(agent, action(), formula())
    if tag == "fairness":
        return Fairness(agent, formula(), action())
    if tag == "frame":
        kinds = _get(doc, "kinds", field, list)
        return Frame(agent, tuple(kind(k, f"{field}.kinds[{n}]") for n, k in enumerate(kinds)), var())
    raise UnknownSymbol(tag, "program type", ("initially", "effect", "precondition", "fairness", "frame"), f"{field}.program")


def automaton_from_json(doc: dict, interp: Interpretation | None = None) -> MessageAutomaton:
    """A MessageAutomaton, or a KbAutomaton when some test mentions knowledge or time."""
    interp = interp or STANDARD
    sig = signature_from_json(doc)
    programs = doc.get("programs", [])
    if not isinstance(programs, list):
        raise FormatError("'programs' must be a list", "programs")
    constants = _defined_names(programs, sig)
    out = [program_from_json(p, sig, f"programs[{n}]", interp, constants) for n, p in enumerate(programs)]
    try:
        return make_automaton(sig, out)
    except ValueError as e:
        raise FormatError(str(e), "programs") from e


def load_json(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, line=e.lineno) from e


def load_automaton(path: str | Path, interp: Interpretation | None = None) -> MessageAutomaton:
    return automaton_from_json(load_json(path), interp)


def dumps_json(doc) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------------ traces


def _var_text(name: str) -> str:
    return format_term(Var(name))


def _pairs(st, prev, sig: Signature) -> str:
    parts = []
    for n, v in zip(st.names, st.values):
        if sig.is_msg_var(n):
            if v is not BOTTOM:
                parts.append(f"({_var_text(n)} {format_value(v)})")
        elif prev is None or not values_equal(v, prev[n]):
            parts.append(f"({_var_text(n)} {format_value(v)})")
    return " ".join(parts)


def write_trace(es: EventStructure) -> str:
    """
    One event per line, `idx agent kind value`, optionally followed by
    `; (var value) ...` for the variables the event sets. Initial states
    come first as `init agent (var value) ...`; the send map follows a
    `sends` line as `rcv-idx -> send-idx`.
    """
    sig = es.signature
    lines = []
    for a in sig.agents:
        init = " ".join(f"({n} {format_value(v)})" for n, v in zip(es.initstate[a].names, es.initstate[a].values)
                        if not sig.is_msg_var(n))
        lines.append(f"init {a} {init}".rstrip())
    lines.append("events")
    ids = sorted(es.events)
    renum = {eid: k for k, eid in enumerate(ids)}
    for eid in ids:
        e = es.events[eid]
        line = f"{renum[eid]} {e.agent} {e.kind} {format_value(e.value)}"
        changes = _pairs(es.after[eid], es.before[eid], sig)
        if changes:
            line += f" ; {changes}"
        lines.append(line)
    lines.append("sends")
    for eid in ids:
        if eid in es.send:
            lines.append(f"{renum[eid]} -> {renum[es.send[eid]]}")
    return "\n".join(lines) + "\n"


def _assignments(exprs: list, where: str, line: int) -> dict:
    out = {}
    for e in exprs:
        if not (isinstance(e, list) and len(e) == 2):
            raise FormatError("expected (variable value)", where, line)
        head = term_from_sexpr(e[0])
        if type(head) is not Var:
            raise FormatError(f"expected a variable name, got {e[0]!r}", where, line)
        out[head.name] = value_from_sexpr(e[1])
    return out


def read_trace(text: str, signature: Signature) -> EventStructure:
    init: dict = {}
    steps: list = []
    sends: dict = {}
    section = "init"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in ("events", "sends"):
            section = line
            continue
        try:
            if section == "init":
                tag, _, rest = line.partition(" ")
                agent, _, rest = rest.strip().partition(" ")
                if tag != "init" or agent not in signature.agents:
                    raise FormatError(f"expected `init <agent> (var value) ...`, got {line!r}", "init", lineno)
                init[agent] = _assignments(read_sexprs(rest), "init", lineno)
            elif section == "events":
                head, _, changes = line.partition(";")
                idx, agent, kind, rest = (head.split(None, 3) + [""] * 4)[:4]
                if not idx.isdigit() or int(idx) != len(steps):
                    raise FormatError(f"events must be numbered 0, 1, ... in order; got {idx!r}", "events", lineno)
                if agent not in signature.agents:
                    raise UnknownSymbol(agent, "agent", signature.agents, f"line {lineno}")
                vals = read_sexprs(rest)
                if len(vals) != 1:
                    raise FormatError("expected exactly one event value", "events", lineno)
                try:
                    k = parse_kind(kind)
                except ValueError as e:
                    raise FormatError(str(e), "events", lineno) from e
                steps.append([agent, k, value_from_sexpr(vals[0]), _assignments(read_sexprs(changes), "events", lineno), None])
            else:
                left, arrow, right = line.partition("->")
                if not arrow or not left.strip().isdigit() or not right.strip().isdigit():
                    raise FormatError(f"expected `rcv-idx -> send-idx`, got {line!r}", "sends", lineno)
                sends[int(left)] = int(right)
        except ParseError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(str(e), section, lineno) from e
    for rcv, snd in sends.items():
        if rcv >= len(steps):
            raise FormatError(f"receive {rcv} does not exist", "sends")
        steps[rcv][4] = snd
    try:
        return from_steps(signature, init, [tuple(s) for s in steps])
    except ValueError as e:
        raise FormatError(str(e), "init") from e


# ----------------------------------------------------------------- systems


def dump_system(sys: System, directory: str | Path) -> list:
    """
    Write signature.json, config.json (the exploration bound, when known)
    and one numbered .trace file per structure; returns the paths.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / "signature.json"]
    paths[0].write_text(dumps_json(signature_to_json(sys.signature)))
    if sys.config is not None:
        cfg = sys.config
        paths.append(d / "config.json")
        paths[1].write_text(dumps_json({"depth": cfg.depth, "window": cfg.window, "channel": str(cfg.channel)}))
    width = max(4, len(str(len(sys))))
    for n, es in enumerate(sys):
        p = d / f"{n:0{width}d}.trace"
        p.write_text(write_trace(es))
        paths.append(p)
    return paths


def load_system(directory: str | Path, signature: Signature | None = None) -> System:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d} is not a directory", "system")
    if signature is None:
        sig_path = d / "signature.json"
        if not sig_path.exists():
            raise FormatError(f"{sig_path} is missing", "system")
        signature = signature_from_json(load_json(sig_path))
    structures = []
    for p in sorted(d.glob("*.trace")):
        try:
            structures.append(read_trace(p.read_text(), signature))
        except FormatError as e:
            raise FormatError(f"{p.name}: {e}") from e
    cfg = None
    if (d / "config.json").exists():
        doc = load_json(d / "config.json")
        try:
            cfg = ExploreConfig(
                depth=_get(doc, "depth", "config", int), window=_get(doc, "window", "config", int),
                channel=ChannelModel.parse(_get(doc, "channel", "config", str)),
            )
        except ValueError as e:
            raise FormatError(str(e), "config") from e
    return System(signature, structures, config=cfg)



# ----------------------------------------------------------------- reports


def local_state_json(st) -> dict:
    return {n: format_value(v) for n, v in zip(st.names, st.values)}


def witness_to_json(w):
    """A JSON form of a verdict witness: cuts and structures carry their trace text."""
    if w is None:
        return None
    if isinstance(w, ConsistentCut):
        return {"cut": list(w.frontier), "trace": write_trace(w.structure)}
    if isinstance(w, EventStructure):
        return {"trace": write_trace(w)}
    if isinstance(w, GlobalState):
        return {"state": {st.agent: local_state_json(st) for st in w.states}}
    if isinstance(w, PsiWitness):
        return {**dataclasses.asdict(w), "text": str(w)}
    return {"text": str(w)}


def verdict_to_json(v: Verdict) -> dict:
    return {"ok": v.ok, "violations": [str(x) for x in v.violations], "witness": witness_to_json(v.witness)}


def schedule_to_json(schedule: list | None):
    if schedule is None:
        return None
    out = []
    for move, states in schedule:
        step = None if move is None else {"agent": move[0], "kind": str(move[1]), "value": format_value(move[2])}
        out.append({"move": step, "states": {st.agent: local_state_json(st) for st in states}})
    return out


def scenario_to_json(sc: StpScenario) -> dict:
    doc = dataclasses.asdict(sc)
    doc["seeds"] = list(sc.seeds)
    return doc


def scenario_from_json(doc: dict) -> StpScenario:
    if not isinstance(doc, dict):
        raise FormatError("expected an object", "scenario")
    names = {f.name for f in dataclasses.fields(StpScenario)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise UnknownSymbol(unknown[0], "scenario field", names, "scenario")
    doc = dict(doc)
    if "seeds" in doc:
        doc["seeds"] = tuple(doc["seeds"])
    try:
        return StpScenario(**doc)
    except (TypeError, ValueError) as e:
        raise FormatError(str(e), "scenario") from e


def stp_verdict_to_json(v: StpVerdict) -> dict:
    """Everything in the report is a function of the scenario, so the document is reproducible."""
    s = v.safety
    return {
        "scenario": scenario_to_json(v.scenario),
        "ok": v.ok,
        "partial": v.partial,
        "safety": {
            "ok": s.ok, "states": s.states, "depth": s.depth, "complete": s.complete,
            "counterexample": schedule_to_json(s.counterexample),
        },
        "liveness": {f"X({n})": verdict_to_json(x) for n, x in sorted(v.liveness.items())},
        "implements": verdict_to_json(v.implements),
        "correspondence": verdict_to_json(v.correspondence),
        "psi": {name: verdict_to_json(x) for name, x in v.psi.items()},
    }
