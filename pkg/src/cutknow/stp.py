"""
The sequence transmission problem: a sender S holds an input bit sequence X
and a receiver R writes a sequence Y that must always be a prefix of X and
eventually contain every bit.

Both the knowledge-based program and the standard (Stenning-style) program
are instances of one template parameterized by a predicate on indices:
phi~(m) says "index m is done". Each side sends while some index is not yet
done, and the message names the least such index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .automata import Effect, Frame, Initially, MessageAutomaton, Verdict, build_fair_pg, compose, make_automaton
from .epistemics import KnowledgeModel, check_represents, initial_cut
from .events import Action, ConsistentCut, EventStructure, Link, Rcv, Signature, VarDecl, cut_frontiers, project
from .explorer import (
    BudgetExceeded, ChannelModel, ExploreConfig, Stepper, System, explore, reachable_states, run_eager, run_fair,
)
from .logic import (
    App, And, Eq, Eventually, Exists, ForAll, IndexApply, Interpretation, Know, Least, Lit, Lt, Not, Or, PairT,
    ValConst, Var, substitute,
)
from .syntax import format_value
from .values import OMEGA, GlobalState


class StpError(ValueError):
    pass


class IndexOutOfRange(StpError):
    pass


@dataclass(frozen=True)
class StpScenario:
    bits: int = 2
    channel: str = "lossless"
    depth: int = 12
    window: int = 4
    link_sr: str = "l_SR"
    link_rs: str = "l_RS"
    action_s: str = "a_S"
    action_r: str = "a_R"
    seeds: tuple = tuple(range(8))
    liveness_depth: int = 16
    implements_depth: int | None = None

    def __post_init__(self):
        if self.bits < 1:
            raise StpError("the input must have at least one bit")
        if self.action_s == self.action_r:
            raise StpError("the sender and receiver actions must be distinct")
        if self.link_sr == self.link_rs:
            raise StpError("the two links must be distinct")


# ----------------------------------------------------------- signature

X, XS, XR, Y = "X", "x_S", "x_R", "Y"


def stp_signature(sc: StpScenario, with_counters: bool = True) -> Signature:
    """
    S holds the input X and R the output Y, plus the counters x_S and x_R.
    Without counters only X and the message variables remain: that is all
    the knowledge-based program mentions.
    """
    n = sc.bits
    variables = [VarDecl(X, "S", f"(bits {n})", input=True)]
    if with_counters:
        variables += [
            VarDecl(Y, "R", f"(bitseq {n})"),
            VarDecl(XS, "S", f"(index {n})"),
            VarDecl(XR, "R", f"(nat {n + 1})"),
        ]
    links = [
        Link(sc.link_sr, "S", "R", f"(pair (nat {n}) bit)"),
        Link(sc.link_rs, "R", "S", f"(nat {n})"),
    ]
    return Signature(("S", "R"), links, [Action(sc.action_s, "S"), Action(sc.action_r, "R")], variables)


# ------------------------------------------------------------ template

M = "m"


def kb_precondition(done, bits: int):
    """Some index below `bits` is not done although every earlier one is."""
    k, n = "k", "n"
    return Exists(
        n,
        And((ForAll(k, substitute(done, M, Var(k)), Var(n)), Not(substitute(done, M, Var(n))))),
        Lit(bits),
    )


def least_not_done(done, bits: int) -> Least:
    return Least("n", Lit(bits), Not(substitute(done, M, Var("n"))))


def knows_bit(agent: str, index) -> Or:
    """K_agent X(index), short for knowing X(index)=0 or knowing X(index)=1."""
    bit = IndexApply(Var(X), index)
    return Or((Know(agent, Eq(bit, Lit(0))), Know(agent, Eq(bit, Lit(1)))))


def kb_done_r():
    return knows_bit("R", Var(M))


def kb_done_s():
    return Know("S", knows_bit("R", Var(M)))


def counter_done(var: str):
    return Lt(Var(M), Var(var))


def _sender_message(c):
    return PairT(c, IndexApply(Var(X), c))


C_S, C_R = "c_S", "c_R"


def build_stp_kb(n_bits: int = 2, scenario: StpScenario | None = None) -> MessageAutomaton:
    """
    Knowledge-based program: S sends <c_S, X(c_S)> while some bit is not
    known by S to be known by R, R requests c_R while some bit is unknown to
    it. c_S and c_R are defined constants, each fixed by an Initially
    program `c = least n with the bit not done`.
    """
    sc = _scenario(n_bits, scenario)
    sig = stp_signature(sc, with_counters=False)
    done_s, done_r = kb_done_s(), kb_done_r()
    # c_S and c_R are local terms by their definitions, which the syntactic check cannot see
    sender = build_fair_pg(
        sig, kb_precondition(done_s, n_bits), _sender_message(Var(C_S)), sc.link_sr, sc.action_s, check_local=False
    )
    receiver = build_fair_pg(sig, kb_precondition(done_r, n_bits), Var(C_R), sc.link_rs, sc.action_r, check_local=False)
    definitions = make_automaton(sig, [
        Initially("S", Eq(Var(C_S), least_not_done(done_s, n_bits))),
        Initially("R", Eq(Var(C_R), least_not_done(done_r, n_bits))),
    ])
    return compose(compose(sender, receiver), definitions)


def _scenario(n_bits: int, scenario: StpScenario | None) -> StpScenario:
    if n_bits < 1:
        raise StpError("the input must have at least one bit")
    sc = scenario or StpScenario(bits=n_bits)
    if sc.bits != n_bits:
        sc = StpScenario(**{**sc.__dict__, "bits": n_bits})
    return sc


def _write_effects(sc: StpScenario, accept) -> list:
    val = ValConst("R")
    y_new = App("append", (Var(Y), App("snd", (val,))))
    return [Effect("R", Rcv(sc.link_sr), Y, App("ite", (accept, y_new, Var(Y))))]


# ------------------------------------------------------------ programs

MUTATIONS = (
    "skip-x_R-update",
    "decrement-x_R",
    "reset-x_S",
    "overshoot-x_S",
    "ignore-requests",
    "skip-bit-1",
)


def fair_senders(n_bits: int = 2, scenario: StpScenario | None = None) -> list:
    """(phi, t, link, action) of the two fair senders the Stenning automaton is built from: S first, then R."""
    sc = _scenario(n_bits, scenario)
    done_s, done_r = counter_done(XS), counter_done(XR)
    return [
        (kb_precondition(done_s, n_bits), _sender_message(least_not_done(done_s, n_bits)), sc.link_sr, sc.action_s),
        (kb_precondition(done_r, n_bits), least_not_done(done_r, n_bits), sc.link_rs, sc.action_r),
    ]


def build_stenning(n_bits: int = 2, mutation: str | None = None, scenario: StpScenario | None = None) -> MessageAutomaton:
    """
    Standard program: x_S counts the bits S knows R has, x_R the bits R has.
    S sends <c, X(c)> with c the least index not below x_S; R sends the
    request x_R; each side advances its counter on the expected message.
    """
    if mutation is not None and mutation not in MUTATIONS:
        raise StpError(f"unknown mutation {mutation!r}; expected one of {', '.join(MUTATIONS)}")
    sc = _scenario(n_bits, scenario)
    sig = stp_signature(sc)
    if mutation == "skip-bit-1" and n_bits < 2:
        raise StpError("skip-bit-1 needs at least two bits")
    (phi_s, t_s, _, _), (phi_r, t_r, _, _) = fair_senders(n_bits, sc)
    if mutation == "skip-bit-1":
        # S goes silent once bit 1 is the next one to send
        phi_s = And((phi_s, Not(Eq(least_not_done(counter_done(XS), n_bits), Lit(1)))))
    sender = build_fair_pg(sig, phi_s, t_s, sc.link_sr, sc.action_s)
    receiver = build_fair_pg(sig, phi_r, t_r, sc.link_rs, sc.action_r)

    val_s, val_r = ValConst("S"), ValConst("R")
    # a request for n shows R holds bits 0..n-1, whatever S knew before
    expected_req = App("le", (App("next", (Var(XS),)), val_s))
    x_s_new = App("ite", (expected_req, val_s, Var(XS)))
    if mutation == "reset-x_S":
        x_s_new = App("ite", (expected_req, val_s, Lit(OMEGA)))
    elif mutation == "overshoot-x_S":
        x_s_new = App("ite", (expected_req, App("succ", (val_s,)), Var(XS)))
    elif mutation == "ignore-requests":
        x_s_new = Var(XS)
    if mutation == "overshoot-x_S":
        # keep the counter inside its domain
        x_s_new = App("ite", (App("eq", (x_s_new, Lit(n_bits))), Lit(n_bits - 1), x_s_new))

    accept = App("eq", (App("fst", (val_r,)), Var(XR)))
    x_r_new = App("ite", (accept, App("succ", (Var(XR),)), Var(XR)))
    if mutation == "skip-x_R-update":
        x_r_new = Var(XR)
    elif mutation == "decrement-x_R":
        x_r_new = App("ite", (accept, App("succ", (Var(XR),)), App("-", (Var(XR), Lit(1)))))

    programs = [
        Initially("S", Eq(Var(XS), Lit(OMEGA))),
        Initially("R", And((Eq(Var(XR), Lit(0)), Eq(Var(Y), Lit(()))))),
        Effect("S", Rcv(sc.link_rs), XS, x_s_new),
        Effect("R", Rcv(sc.link_sr), XR, x_r_new),
        *_write_effects(sc, accept),
        Frame("S", (Rcv(sc.link_rs),), XS),
        Frame("R", (Rcv(sc.link_sr),), XR),
        Frame("R", (Rcv(sc.link_sr),), Y),
    ]
    return compose(compose(sender, receiver), make_automaton(sig, programs))


# --------------------------------------------------------------- safety


def _is_prefix(y, x) -> bool:
    return type(y) is tuple and len(y) <= len(x) and tuple(x[: len(y)]) == y


def _other_agents_state(states, agent):
    for st in states:
        if st.agent == agent:
            return st
    return None


def stp_spec_safety(es: EventStructure) -> Verdict:
    """At every cut Y is a prefix of X. The witness is the first failing cut."""
    x = es.initstate["S"][X]
    for f in cut_frontiers(es):
        y = es.global_state(f).local("R")[Y]
        if not _is_prefix(y, x):
            return Verdict(False, [f"Y={format_value(y)} is not a prefix of X={format_value(x)}"], ConsistentCut(es, f))
    return Verdict(True)


def prefix_invariant(states) -> bool:
    """Safety of one global state, for state-space search."""
    s, r = _other_agents_state(states, "S"), _other_agents_state(states, "R")
    return _is_prefix(r[Y], s[X])


@dataclass
class SafetyResult:
    ok: bool
    states: int
    depth: int
    counterexample: list | None = None
    complete: bool = True


def check_safety(pg: MessageAutomaton, cfg: ExploreConfig, i: Interpretation | None = None) -> SafetyResult:
    """Exhaustive search of every schedule and loss pattern within cfg.depth for a Y that is not a prefix of X."""
    space = reachable_states(i, pg, cfg, invariant=prefix_invariant)
    return SafetyResult(space.ok, space.states, space.frontier_depth, space.violation, space.complete)


# ------------------------------------------------------------- liveness


def bits_of(sig: Signature) -> int:
    return len(sig.decl(X).domain[0])


def stp_spec_kb(sys: System, n: int, interp: Interpretation | None = None) -> Verdict:
    """
    Every structure of sys eventually (within the structure) reaches a cut
    where R knows X(n). The witness of a miss is the structure's last cut.
    """
    sig = sys.signature
    if not 0 <= n < bits_of(sig):
        raise IndexOutOfRange(f"bit {n} is outside 0..{bits_of(sig) - 1}")
    goal = Eventually(knows_bit("R", Lit(n)))
    model = KnowledgeModel.of(sys, interp)
    for es in sys:
        if not model.holds(initial_cut(es), goal):
            last = ConsistentCut(es, es.full_frontier())
            return Verdict(False, [f"R does not learn X({n}) within {len(es)} events"], last)
    return Verdict(True)


def input_values(n_bits: int) -> list:
    return list(itertools.product((0, 1), repeat=n_bits))


def fair_system(pg: MessageAutomaton, cfg: ExploreConfig, seeds: Iterable[int], i: Interpretation | None = None) -> System:
    """One fair run per (input, seed); the union over every input of X."""
    sig = cfg.signature or pg.signature
    structures = []
    for x in input_values(bits_of(sig)):
        run_cfg = cfg.replace(inputs={**cfg.inputs, X: (x,)})
        for seed in seeds:
            structures.append(run_fair(i, pg, run_cfg, seed))
    return System(sig, structures, pg, cfg)


def eager_system(pg: MessageAutomaton, cfg: ExploreConfig, i: Interpretation | None = None) -> System:
    """The deterministic lossless round-robin run for every input of X."""
    sig = cfg.signature or pg.signature
    step = Stepper(i, pg, cfg)
    structures = [run_eager(i, pg, cfg, init) for init in step.initial_global()]
    return System(sig, structures, pg, cfg)


def message_depth(es: EventStructure) -> dict:
    """For each event, the most messages on any causal chain ending at it."""
    depth: dict = {}
    # every builder numbers events in a causal order
    for eid in sorted(es.events):
        prev = es.pred(eid)
        d = depth[prev] if prev is not None else 0
        if eid in es.send:
            d = max(d, depth[es.send[eid]] + 1)
        depth[eid] = d
    return depth


@dataclass
class BitDelivery:
    bit: int
    bound: int
    depths: list
    ok: bool


def lossless_bound(n_bits: int = 3, i: Interpretation | None = None) -> list:
    """
    Under the lossless round-robin schedule, the message depth of the first
    R event at which R knows X(n), for every input; bounded by 2(n+1)+1.
    """
    pg = build_stenning(n_bits)
    cfg = ExploreConfig(depth=8 * n_bits + 4, channel=ChannelModel.parse("lossless"))
    sys = eager_system(pg, cfg, i)
    model = KnowledgeModel.of(sys, i)
    out = []
    for n in range(n_bits):
        f = knows_bit("R", Lit(n))
        depths = []
        for es in sys:
            md = message_depth(es)
            hit = None
            for eid in es.order["R"]:
                st = es.after[eid]
                if model.evaluator.formula(f, {}, GlobalState.only(es.agents, st), None):
                    hit = md[eid]
                    break
            depths.append(hit)
        bound = 2 * (n + 1) + 1
        out.append(BitDelivery(n, bound, depths, all(d is not None and d <= bound for d in depths)))
    return out


# ------------------------------------------------------- correspondence


def check_correspondence(sys: System, i: Interpretation | None = None) -> Verdict:
    """
    At every cut of sys: K_R X(n) iff n < x_R, and K_S K_R X(n) iff n < x_S.
    sys must keep the counters (it is not projected).
    """
    model = KnowledgeModel.of(sys, i)
    ev = model.evaluator
    n_bits = bits_of(sys.signature)
    pairs = []
    for n in range(n_bits):
        pairs.append((f"K_R X({n}) <=> {n} < x_R", knows_bit("R", Lit(n)), Lt(Lit(n), Var(XR))))
        pairs.append((f"K_S K_R X({n}) <=> {n} < x_S", Know("S", knows_bit("R", Lit(n))), Lt(Lit(n), Var(XS))))
    for gs in model.points.values():
        for name, lhs, rhs in pairs:
            if ev.formula(lhs, {}, gs, None) != ev.formula(rhs, {}, gs, None):
                return Verdict(False, [f"{name} fails"], gs)
    return Verdict(True)


# ---------------------------------------------------------- psi conditions


def phi_tilde_s():
    return Lt(Var(M), Var(XS))


def phi_tilde_r():
    return Lt(Var(M), Var(XR))


@dataclass(frozen=True)
class PsiWitness:
    structure: int
    event: int
    agent: str
    kind: str
    index: int

    def __str__(self) -> str:
        return f"structure {self.structure}, event {self.event} ({self.agent} {self.kind}), m={self.index}"


PSI_CONDITIONS = (
    "Stable(phi_R)",
    "Stable(phi_S)",
    "Implies(phi_S,phi_R)",
    "Rcv(phi_S,phi_R,l_RS)",
    "Rcv(phi_R,phi_S,l_SR)",
    "Determinate",
)


def check_psi_conditions(sys: System, cfg=None, phi_s=None, phi_r=None, interp: Interpretation | None = None) -> dict:
    """
    The conditions under which the template solves the problem, checked on
    every event of every structure of sys, for every index m below N:

      Stable(phi_R), Stable(phi_S): true before an event of the agent means
        true after it.
      Implies(phi_S, phi_R): phi_S(m) before an S event means phi_R(m) after
        some R event of the structure. (Read on finite structures: with
        stability an R event in the causal past of the S event suffices.)
      Rcv(phi_S, phi_R, l_RS): when S receives from R, phi_S(n) holds after
        the receive if phi_R(k) held for every k <= n after the send.
      Rcv(phi_R, phi_S, l_SR): when R receives from S, phi_R(n) holds after
        the receive if n was the least index with phi_S false before the send.
      Determinate: always passes on a finite system (excluded middle holds
        of every evaluated test).
    """
    phi_s = phi_s or phi_tilde_s()
    phi_r = phi_r or phi_tilde_r()
    sig = sys.signature
    n_bits = bits_of(sig)
    links = _links_of(sig)
    model = KnowledgeModel.of(sys, interp)
    ev = model.evaluator
    memo: dict = {}

    def holds(f, st, m) -> bool:
        key = (id(f), st, m)
        hit = memo.get(key)
        if hit is None:
            hit = memo[key] = ev.formula(f, {M: m}, GlobalState.only(sig.agents, st), None)
        return hit

    def least_false(f, st):
        for m in range(n_bits):
            if not holds(f, st, m):
                return m
        return None

    found: dict = {name: None for name in PSI_CONDITIONS}

    def fail(name, n, es, eid, m):
        if found[name] is None:
            e = es.events[eid]
            found[name] = PsiWitness(n, eid, e.agent, str(e.kind), m)

    for n, es in enumerate(sys):
        for agent, f, name in (("R", phi_r, "Stable(phi_R)"), ("S", phi_s, "Stable(phi_S)")):
            for eid in es.order[agent]:
                for m in range(n_bits):
                    if holds(f, es.before[eid], m) and not holds(f, es.after[eid], m):
                        fail(name, n, es, eid, m)
        r_states = [es.after[eid] for eid in es.order["R"]]
        for eid in es.order["S"]:
            for m in range(n_bits):
                if holds(phi_s, es.before[eid], m) and not any(holds(phi_r, st, m) for st in r_states):
                    fail("Implies(phi_S,phi_R)", n, es, eid, m)
        for e in es.receives_on(links["RS"]):
            sent = es.after[es.send[e.id]]
            for m in range(n_bits):
                if all(holds(phi_r, sent, k) for k in range(m + 1)) and not holds(phi_s, es.after[e.id], m):
                    fail("Rcv(phi_S,phi_R,l_RS)", n, es, e.id, m)
        for e in es.receives_on(links["SR"]):
            m = least_false(phi_s, es.before[es.send[e.id]])
            if m is not None and not holds(phi_r, es.after[e.id], m):
                fail("Rcv(phi_R,phi_S,l_SR)", n, es, e.id, m)
    out = {}
    for name in PSI_CONDITIONS:
        if name == "Determinate":
            out[name] = Verdict(True, ["holds on every finite system: each test is two-valued"])
        elif found[name] is None:
            out[name] = Verdict(True)
        else:
            out[name] = Verdict(False, [f"{name} fails at {found[name]}"], found[name])
    return out


def _links_of(sig: Signature) -> dict:
    sr = [l.name for l in sig.links.values() if l.source == "S" and l.dest == "R"]
    rs = [l.name for l in sig.links.values() if l.source == "R" and l.dest == "S"]
    if len(sr) != 1 or len(rs) != 1:
        raise StpError("expected exactly one link each way between S and R")
    return {"SR": sr[0], "RS": rs[0]}


# -------------------------------------------------------------- verify


@dataclass
class StpVerdict:
    scenario: StpScenario
    safety: SafetyResult
    liveness: dict
    implements: Verdict
    correspondence: Verdict
    psi: dict
    partial: bool = False

    @property
    def ok(self) -> bool:
        return (
            self.safety.ok
            and all(v.ok for v in self.liveness.values())
            and self.implements.ok
            and self.correspondence.ok
            and all(v.ok for v in self.psi.values())
        )


def scenario_config(sc: StpScenario, depth: int | None = None) -> ExploreConfig:
    return ExploreConfig(depth=sc.depth if depth is None else depth, window=sc.window, channel=ChannelModel.parse(sc.channel))


def structure_depth(sc: StpScenario) -> int:
    """Depth used for the structure-level checks: exhaustive structures grow fast on lossy or reordering links."""
    if sc.implements_depth is not None:
        return sc.implements_depth
    ch = ChannelModel.parse(sc.channel)
    return sc.depth if not (ch.lossy or ch.reorder or ch.dup) else min(sc.depth, 8)


def verify_stp(sc: StpScenario, i: Interpretation | None = None) -> StpVerdict:
    """
    Safety over every schedule to sc.depth, liveness of every bit over the
    fair runs (every input, every seed) to sc.liveness_depth, the implements
    check against the knowledge-based program, the knowledge/counter
    correspondence and the psi conditions on the explored system.
    """
    pg = build_stenning(sc.bits, scenario=sc)
    kb = build_stp_kb(sc.bits, scenario=sc)
    safety = check_safety(pg, scenario_config(sc), i)
    fair = fair_system(pg, scenario_config(sc, sc.liveness_depth), sc.seeds, i)
    liveness = {n: stp_spec_kb(fair, n, i) for n in range(sc.bits)}
    cfg = scenario_config(sc, structure_depth(sc))
    partial = not safety.complete
    try:
        full = explore(i, pg, cfg)
    except BudgetExceeded:
        none = Verdict(False, ["exploration budget reached"])
        return StpVerdict(sc, safety, liveness, none, none, {k: none for k in PSI_CONDITIONS}, True)
    try:
        implements = check_represents(i, _hidden(full, kb), kb, cfg)
    except BudgetExceeded:
        implements, partial = Verdict(False, ["exploration budget reached"]), True
    return StpVerdict(
        sc, safety, liveness, implements, check_correspondence(full, i), check_psi_conditions(full, cfg, interp=i),
        partial or full.partial,
    )


def _hidden(full: System, kb: MessageAutomaton) -> System:
    cache: dict = {}
    sig = kb.signature
    return System(sig, [project(es, sig, cache) for es in full], kb, full.config, full.partial)
