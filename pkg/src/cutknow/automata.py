"""
Message automata: the five basic program forms, composition, the
consistency check against an event structure, and the specifications each
basic program guarantees.

Effect terms and preconditions are evaluated at the state before the event
with `val` of the acting agent bound to the event's own value. This lets a
program refer to the value an action was taken with (for example
`x := x + snd(val)`).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .events import EventStructure, Kind, Local, Rcv, Signature, parse_kind
from .logic import (
    STANDARD, Eq, Evaluator, Interpretation, classify_i_formula, event_val_key, is_modal, msg_var,
)
from .syntax import format_formula, format_term, format_value
from .values import BOTTOM, GlobalState, LocalState, values_equal


class ProgramError(ValueError):
    pass


class NotLocalFormula(ProgramError):
    pass


# -------------------------------------------------------- basic programs


@dataclass(frozen=True)
class Initially:
    agent: str
    formula: object

    def describe(self) -> str:
        return f"@{self.agent} initially {format_formula(self.formula)}"


@dataclass(frozen=True)
class Effect:
    agent: str
    kind: Kind
    var: str
    term: object

    def describe(self) -> str:
        return f"@{self.agent} if kind={self.kind} then {self.var} := {format_term(self.term)}"


@dataclass(frozen=True)
class Precondition:
    agent: str
    action: str
    formula: object

    def describe(self) -> str:
        return f"@{self.agent} kind=local:{self.action} only if {format_formula(self.formula)}"


@dataclass(frozen=True)
class Fairness:
    agent: str
    formula: object
    action: str

    def describe(self) -> str:
        return f"@{self.agent} if necessarily {format_formula(self.formula)} then i.o. kind=local:{self.action}"


@dataclass(frozen=True)
class Frame:
    agent: str
    kinds: tuple
    var: str

    def describe(self) -> str:
        return f"@{self.agent} only [{', '.join(map(str, self.kinds))}] affect {self.var}"


BasicProgram = Initially | Effect | Precondition | Fairness | Frame


def program_formulas(bp) -> list:
    if type(bp) is Effect:
        return [bp.term]
    if type(bp) is Frame:
        return []
    return [bp.formula]


def check_program(sig: Signature, bp) -> None:
    """Raise ProgramError if bp does not fit the signature."""
    if bp.agent not in sig.agents:
        raise ProgramError(f"{bp.describe()}: unknown agent {bp.agent!r}")
    if type(bp) in (Effect, Frame):
        if sig.owner(bp.var) != bp.agent:
            raise ProgramError(f"{bp.describe()}: {bp.var} is not a variable of {bp.agent}")
    if type(bp) in (Precondition, Fairness):
        act = sig.actions.get(bp.action)
        if act is None or act.agent != bp.agent:
            raise ProgramError(f"{bp.describe()}: {bp.agent} has no action {bp.action!r}")
    kinds = [bp.kind] if type(bp) is Effect else list(bp.kinds) if type(bp) is Frame else []
    for k in kinds:
        if type(k) is Rcv:
            link = sig.links.get(k.link)
            if link is None or link.dest != bp.agent:
                raise ProgramError(f"{bp.describe()}: {bp.agent} does not receive on {k.link}")
        elif k.action not in sig.actions or sig.actions[k.action].agent != bp.agent:
            raise ProgramError(f"{bp.describe()}: {bp.agent} has no action {k.action!r}")


# -------------------------------------------------------------- automata


class MessageAutomaton:
    """A signature together with a multiset of basic programs."""

    def __init__(self, signature: Signature, programs: Iterable = ()):
        self.signature = signature
        self.programs = tuple(programs)
        for bp in self.programs:
            check_program(signature, bp)

    @property
    def is_kb(self) -> bool:
        return any(is_modal(x) for bp in self.programs for x in program_formulas(bp))

    def of_type(self, cls) -> list:
        return [bp for bp in self.programs if type(bp) is cls]

    def for_agent(self, agent: str) -> list:
        return [bp for bp in self.programs if bp.agent == agent]

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, MessageAutomaton)
            and self.signature == other.signature
            and Counter(self.programs) == Counter(other.programs)
        )

    def __hash__(self) -> int:
        return hash((self.signature, frozenset(Counter(self.programs).items())))

    def __len__(self) -> int:
        return len(self.programs)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({len(self.programs)} programs over {self.signature.agents})"

    def describe(self) -> str:
        return "\n".join(bp.describe() for bp in self.programs)


class KbAutomaton(MessageAutomaton):
    """An automaton whose tests and terms may mention Know/Always/Eventually."""


def make_automaton(signature: Signature, programs: Iterable = ()) -> MessageAutomaton:
    pg = MessageAutomaton(signature, programs)
    return KbAutomaton(signature, pg.programs) if pg.is_kb else pg


def compose(p1: MessageAutomaton, p2: MessageAutomaton) -> MessageAutomaton:
    """Multiset union of the programs over the merged signature."""
    sig = p1.signature.merge(p2.signature)
    return make_automaton(sig, p1.programs + p2.programs)


def compose_all(parts: Iterable[MessageAutomaton], signature: Signature | None = None) -> MessageAutomaton:
    parts = list(parts)
    out = MessageAutomaton(signature or (parts[0].signature if parts else Signature(())), ())
    for p in parts:
        out = compose(out, p)
    return out


# ------------------------------------------------------------- checking


@dataclass
class Verdict:
    ok: bool
    violations: list = field(default_factory=list)
    witness: object = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class ProgramViolation:
    program: str
    event: int | None
    detail: str

    def __str__(self) -> str:
        where = "initial state" if self.event is None else f"event {self.event}"
        return f"{self.program} violated at {where}: {self.detail}"


def _local_env(agent: str, value) -> dict:
    return {event_val_key(agent): value}


class LocalChecker:
    """Evaluates program formulas and terms at one agent's local state."""

    def __init__(self, sig: Signature, interp: Interpretation | None = None, evaluator: Evaluator | None = None):
        self.sig = sig
        self.interp = interp or STANDARD
        self.ev = evaluator or Evaluator(self.interp)

    def _gs(self, st: LocalState) -> GlobalState:
        return GlobalState.only(self.sig.agents, st)

    def holds(self, f, st: LocalState, event_value=None, bind: bool = False) -> bool:
        env = _local_env(st.agent, event_value) if bind else {}
        return self.ev.formula(f, env, self._gs(st), None)

    def value(self, t, st: LocalState, event_value) -> object:
        return self.ev.term(t, _local_env(st.agent, event_value), self._gs(st), None)

    def is_local(self, f, agent: str) -> bool:
        return classify_i_formula(f, agent, self.sig.names(agent), self.interp)

    def is_local_term(self, t, agent: str) -> bool:
        return classify_i_formula(Eq(t, t), agent, self.sig.names(agent), self.interp)


def fairness_holds(chk: LocalChecker, es: EventStructure, bp: Fairness, horizon: int | None = None) -> bool:
    """
    Finite reading of the fairness clause: the agent's last event has kind
    local(a) or leaves the formula false; with no events the formula is
    false initially. A structure that has reached the exploration horizon
    is still running and counts as pending.
    """
    if horizon is not None and len(es) >= horizon:
        return True
    lane = es.order[bp.agent]
    if not lane:
        return not chk.holds(bp.formula, es.initstate[bp.agent])
    last = lane[-1]
    if es.events[last].kind == Local(bp.action):
        return True
    return not chk.holds(bp.formula, es.after[last])


def check_basic(chk: LocalChecker, es: EventStructure, bp, horizon: int | None = None) -> list:
    """Violations of one basic program (empty when consistent)."""
    out: list = []
    desc = bp.describe()
    tb = type(bp)
    sig = es.signature
    if tb is Initially:
        if not chk.is_local(bp.formula, bp.agent):
            return [ProgramViolation(desc, None, f"not a {bp.agent}-formula")]
        if not chk.holds(bp.formula, es.initstate[bp.agent]):
            out.append(ProgramViolation(desc, None, "formula false at the initial state"))
        return out
    if tb is Effect:
        if not chk.is_local_term(bp.term, bp.agent):
            return [ProgramViolation(desc, None, f"not a {bp.agent}-term")]
        for eid in es.order[bp.agent]:
            e = es.events[eid]
            if e.kind != bp.kind:
                continue
            want = chk.value(bp.term, es.before[eid], e.value)
            got = es.after[eid][bp.var]
            if not values_equal(want, got):
                out.append(ProgramViolation(desc, eid, f"{bp.var} after is {format_value(got)}, expected {format_value(want)}"))
        return out
    if tb is Precondition:
        if not chk.is_local(bp.formula, bp.agent):
            return [ProgramViolation(desc, None, f"not a {bp.agent}-formula")]
        kind = Local(bp.action)
        for eid in es.order[bp.agent]:
            e = es.events[eid]
            if e.kind == kind and not chk.holds(bp.formula, es.before[eid], e.value, bind=True):
                out.append(ProgramViolation(desc, eid, "precondition false before the event"))
        return out
    if tb is Frame:
        is_msg = sig.is_msg_var(bp.var) is not None
        allowed = set(bp.kinds)
        for eid in es.order[bp.agent]:
            e = es.events[eid]
            if e.kind in allowed:
                continue
            after = es.after[eid][bp.var]
            if is_msg:
                if after is not BOTTOM:
                    out.append(ProgramViolation(desc, eid, f"{e.kind} sends on {sig.is_msg_var(bp.var)}"))
            elif not values_equal(after, es.before[eid][bp.var]):
                out.append(ProgramViolation(desc, eid, f"{e.kind} changes {bp.var}"))
        return out
    if tb is Fairness:
        if not chk.is_local(bp.formula, bp.agent):
            return [ProgramViolation(desc, None, f"not a {bp.agent}-formula")]
        if not fairness_holds(chk, es, bp, horizon):
            lane = es.order[bp.agent]
            out.append(ProgramViolation(desc, lane[-1] if lane else None, "formula still holds and the action never follows"))
        return out
    raise TypeError(f"not a basic program: {bp!r}")


def consistent(
    i: Interpretation | None,
    pg: MessageAutomaton,
    es: EventStructure,
    horizon: int | None = None,
    evaluator: Evaluator | None = None,
) -> Verdict:
    """Whether es is consistent with every member program of pg."""
    chk = LocalChecker(es.signature, i, evaluator)
    violations: list = []
    for bp in pg.programs:
        violations += check_basic(chk, es, bp, horizon)
    return Verdict(not violations, violations)


# -------------------------------------------------------- specifications


@dataclass
class Specification:
    """A predicate on event structures with a printable derivation tag."""

    predicate: Callable
    tag: str

    def __call__(self, es: EventStructure) -> bool:
        return bool(self.predicate(es))

    def __and__(self, other: Specification) -> Specification:
        return Specification(lambda es: self(es) and other(es), f"({self.tag}) & ({other.tag})")

    def implies(self, other: Specification) -> Specification:
        return Specification(lambda es: (not self(es)) or other(es), f"({self.tag}) => ({other.tag})")


TRUE_SPEC = Specification(lambda es: True, "true")


def _events_of(es: EventStructure, agent: str) -> list:
    return [es.events[eid] for eid in es.order[agent]]


def _later_or_equal(es: EventStructure, agent: str, eid: int) -> list:
    lane = es.order[agent]
    return list(lane[lane.index(eid):])


def axiom_spec(bp, i: Interpretation | None = None, horizon: int | None = None) -> Specification:
    """
    The specification guaranteed by a basic program, written directly as a
    quantification over events (Ax-init, Ax-cause, Ax-if, Ax-fair,
    Ax-affects and Ax-sends).
    """
    tb = type(bp)

    def chk(es: EventStructure) -> LocalChecker:
        return LocalChecker(es.signature, i)

    if tb is Initially:
        def pred(es):
            c = chk(es)
            return c.is_local(bp.formula, bp.agent) and c.holds(bp.formula, es.initstate[bp.agent])
        return Specification(pred, f"Ax-init[{bp.describe()}]")

    if tb is Effect:
        def pred(es):
            c = chk(es)
            if not c.is_local_term(bp.term, bp.agent):
                return False
            return all(
                values_equal(es.after[e.id][bp.var], c.value(bp.term, es.before[e.id], e.value))
                for e in _events_of(es, bp.agent)
                if e.kind == bp.kind
            )
        return Specification(pred, f"Ax-cause[{bp.describe()}]")

    if tb is Precondition:
        def pred(es):
            c = chk(es)
            if not c.is_local(bp.formula, bp.agent):
                return False
            return all(
                c.holds(bp.formula, es.before[e.id], e.value, bind=True)
                for e in _events_of(es, bp.agent)
                if e.kind == Local(bp.action)
            )
        return Specification(pred, f"Ax-if[{bp.describe()}]")

    if tb is Fairness:
        def pred(es):
            c = chk(es)
            if not c.is_local(bp.formula, bp.agent):
                return False
            if horizon is not None and len(es) >= horizon:
                return True
            evs = _events_of(es, bp.agent)
            if not evs:
                return not c.holds(bp.formula, es.initstate[bp.agent])
            return all(
                any(
                    es.events[x].kind == Local(bp.action) or not c.holds(bp.formula, es.after[x])
                    for x in _later_or_equal(es, bp.agent, e.id)
                )
                for e in evs
            )
        return Specification(pred, f"Ax-fair[{bp.describe()}]")

    if tb is Frame:
        def pred(es):
            is_msg = es.signature.is_msg_var(bp.var) is not None
            for e in _events_of(es, bp.agent):
                after = es.after[e.id][bp.var]
                changed = after is not BOTTOM if is_msg else not values_equal(after, es.before[e.id][bp.var])
                if changed and e.kind not in bp.kinds:
                    return False
            return True
        name = "Ax-sends" if bp.var.startswith("msg(") else "Ax-affects"
        return Specification(pred, f"{name}[{bp.describe()}]")

    raise TypeError(f"not a basic program: {bp!r}")


def derive_spec(pg: MessageAutomaton, i: Interpretation | None = None, horizon: int | None = None) -> Specification:
    """Conjunction of the member axiom specifications."""
    specs = [axiom_spec(bp, i, horizon) for bp in pg.programs]
    if not specs:
        return TRUE_SPEC

    def pred(es):
        return all(s(es) for s in specs)

    return Specification(pred, "Ax-sum[" + "; ".join(s.tag for s in specs) + "]")


def refine(spec: Specification, weaker: Specification, structures: Iterable[EventStructure]) -> Specification:
    """
    Ax-ref on a finite corpus: return `weaker` after checking that `spec`
    implies it on every given structure.
    """
    for es in structures:
        if spec(es) and not weaker(es):
            raise ProgramError(f"{spec.tag} does not imply {weaker.tag} on a supplied structure")
    return weaker


# ------------------------------------------------------- decomposition


@dataclass
class Report:
    ok: bool
    step1: bool
    step2: list
    composed: MessageAutomaton
    counterexamples: list
    structures: int
    note: str = "bounded check over explored structures, not a proof"

    def __bool__(self) -> bool:
        return self.ok


def verify_decomposition(
    goal: Specification,
    parts: list,
    depth: int,
    i: Interpretation | None = None,
    cfg=None,
    signature: Signature | None = None,
) -> Report:
    """
    Check the decomposition scheme at a bound: (1) the conjunction of the part
    specifications implies the goal on every explored structure of the
    composed automaton, (2) each part satisfies its own specification on its
    explored structures, (3) return the composed automaton.
    """
    from .explorer import ExploreConfig, explore

    autos = [pg for _, pg in parts]
    if signature is None and not autos:
        signature = Signature(())
    composed = compose_all(autos, signature)
    cfg = cfg or ExploreConfig(depth=depth)
    if cfg.depth != depth:
        cfg = cfg.replace(depth=depth)
    sys = explore(i, composed, cfg)
    counter: list = []
    for es in sys.structures:
        if all(spec(es) for spec, _ in parts) and not goal(es):
            counter.append(("step1", es))
            break
    step1 = not counter
    step2 = []
    for spec, pg in parts:
        ok = True
        for es in explore(i, pg, cfg.replace(signature=composed.signature)).structures:
            if not spec(es):
                counter.append(("step2:" + spec.tag, es))
                ok = False
                break
        step2.append(ok)
    return Report(step1 and all(step2), step1, step2, composed, counter, len(sys.structures))


# ------------------------------------------------------------ fair-pg


def build_fair_pg(
    signature: Signature,
    phi,
    t,
    link: str,
    action: str,
    interp: Interpretation | None = None,
    check_local: bool = True,
) -> MessageAutomaton:
    """
    The four programs of the fair sender: take `action` only if phi, have it
    send t on `link`, let only `action` send on `link`, and take it
    infinitely often while phi holds.
    """
    l = signature.links.get(link)
    if l is None:
        raise ProgramError(f"unknown link {link!r}")
    i = l.source
    local_vars = signature.names(i)
    if check_local and not classify_i_formula(phi, i, local_vars, interp):
        raise NotLocalFormula(f"{format_formula(phi)} is not a {i}-formula")
    if check_local and not classify_i_formula(Eq(t, t), i, local_vars, interp):
        raise NotLocalFormula(f"{format_term(t)} is not a {i}-term")
    programs = [
        Precondition(i, action, phi),
        Effect(i, Local(action), msg_var(link), t),
        Frame(i, (Local(action),), msg_var(link)),
        Fairness(i, phi, action),
    ]
    return make_automaton(signature, programs)


@dataclass
class FairVerdict:
    phi_holds_at_send: bool
    value_is_t: bool
    liveness: bool
    details: list = field(default_factory=list)

    @property
    def safety(self) -> bool:
        return self.phi_holds_at_send and self.value_is_t


def check_fair_spec(
    es: EventStructure,
    phi,
    t,
    link: str,
    window: int | None = None,
    i: Interpretation | None = None,
) -> FairVerdict:
    """
    The fair-delivery specification: every receive on `link` carries t and
    was sent while phi held (safety), and while phi holds a send on `link`
    is eventually received (liveness).

    On a finite structure the liveness conjunct is checked for the sender's
    events at or after which `window` consecutive sender events all send on
    the link, since that is what channel fairness constrains; other events
    are still pending. With window=None every event is checked.
    """
    sig = es.signature
    src = sig.links[link].source
    chk = LocalChecker(sig, i)
    details: list = []
    phi_ok = val_ok = True
    for e in es.receives_on(link):
        s = es.send[e.id]
        pre = es.before[s]
        sv = es.events[s].value
        if not chk.holds(phi, pre, sv, bind=True):
            phi_ok = False
            details.append(f"receive {e.id}: phi false before send {s}")
        want = chk.value(t, pre, sv)
        if not values_equal(want, e.value):
            val_ok = False
            details.append(f"receive {e.id}: value {format_value(e.value)} is not t={format_value(want)}")

    lane = es.order[src]
    sends = [k for k, eid in enumerate(lane) if es.after[eid][msg_var(link)] is not BOTTOM]
    received_from = {es.positions[es.send[e.id]][1] for e in es.receives_on(link)}
    live = True
    # latest position at which a run of `window` consecutive sends starts
    last_run = -1
    if window is not None:
        sending = set(sends)
        last_run = max((k for k in range(len(lane)) if all(k + j in sending for j in range(window))), default=-1)
    if not lane:
        if window is None and chk.holds(phi, es.initstate[src]):
            live = False
            details.append(f"{src} never acts although phi holds initially")
    else:
        for k in range(len(lane)):
            if window is not None and k > last_run:
                continue
            falsified = any(not chk.holds(phi, es.after[x]) for x in lane[k:])
            delivered = any(p >= k for p in received_from)
            if not (falsified or delivered):
                live = False
                details.append(f"{src} event {lane[k]}: phi persists and no later send is received")
                break
    return FairVerdict(phi_ok, val_ok, live, details)


def program_kinds_from_text(texts: Iterable[str]) -> tuple:
    return tuple(parse_kind(t) for t in texts)
