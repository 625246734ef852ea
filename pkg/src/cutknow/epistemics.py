"""
Knowledge and time over the consistent cuts of a system.

Know(i, p) holds at a cut when p holds at every cut, of every structure in
the system, where agent i has the same local state. Always and Eventually
range over the cuts that extend the current one in the same structure, up
to the end of the (finite) structure.

Knowledge-based automata are given meaning relative to a system: each
epistemic test is replaced by a table from the acting agent's local state to
its value over that system (`instantiate`), and a system represents the
automaton when exploring the tabulated automaton gives the system back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .automata import (
    Effect, Fairness, Frame, Initially, MessageAutomaton, Precondition, ProgramError, Verdict,
    axiom_spec, make_automaton,
)
from .events import Action, ConsistentCut, EventStructure, Signature, VarDecl, canonical_key, cut_frontiers, project
from .explorer import ExploreConfig, System, explore
from .logic import (
    CC, CUT_VAR, CUTS, LS, SUCCEEDS, SYSTEM_VAR, Always, And, App, Atom, AtCut, Eq, Evaluator, Eventually, Exists,
    ForAll, Implies, IndexApply, Interpretation, Know, Least, Lit, Lt, ModalOperatorPresent, Not, Or, PairT,
    Tabulated, TabulatedTerm, Var, ValConst, classify_i_formula, free_vars, is_modal, is_temporal, substitute, walk,
)
from .values import OMEGA, GlobalState, LocalState, value_sort_key


class CutNotInSystem(ValueError):
    pass


class UnresolvableConstant(ValueError):
    pass


# ------------------------------------------------------------------ model


class KnowledgeModel:
    """
    Index of a system's cuts for knowledge queries.

    Distinct global states ("points") are stored once; `by_local` maps
    (agent, local state) to the points where the agent is in that state.
    Knowledge results are memoized on (agent, local state, formula, the
    values of the formula's free variables).
    """

    def __init__(self, system: System | Iterable[EventStructure], interp: Interpretation | None = None):
        self.structures = list(system)
        self.signature = system.signature if isinstance(system, System) else None
        self.interp = interp
        self.points: dict = {}
        self.by_local: dict = {}
        self._where_of = {id(es): n for n, es in enumerate(self.structures)}
        self._by_key: dict | None = None
        self._frontiers: dict = {}
        self._occurrences: dict | None = None
        self._memo: dict = {}
        self._free: dict = {}
        for n, es in enumerate(self.structures):
            agents = es.agents
            for f in self.frontiers(n):
                key = tuple(es.state_at(a, k) for a, k in zip(agents, f))
                if key in self.points:
                    continue
                self.points[key] = GlobalState(agents, key)
                for a, st in zip(agents, key):
                    self.by_local.setdefault((a, st), []).append(key)
        self.evaluator = KnowledgeEvaluator(self)

    @classmethod
    def of(cls, system: System, interp: Interpretation | None = None) -> KnowledgeModel:
        """The model of `system`, built once and cached on the system object."""
        cached = getattr(system, "_knowledge", None)
        if cached is not None and cached.interp is interp:
            return cached
        model = cls(system, interp)
        try:
            system._knowledge = model
        except AttributeError:
            pass
        return model

    def frontiers(self, n: int) -> list:
        hit = self._frontiers.get(n)
        if hit is None:
            hit = self._frontiers[n] = cut_frontiers(self.structures[n])
        return hit

    def locate(self, cut: ConsistentCut) -> int:
        """Index of the cut's structure in the system."""
        n = self._where_of.get(id(cut.structure))
        if n is None:
            if self._by_key is None:
                self._by_key = {}
                for k, es in enumerate(self.structures):
                    self._by_key.setdefault(canonical_key(es), k)
            n = self._by_key.get(canonical_key(cut.structure))
        if n is None or not self.structures[n].is_cut(cut.frontier):
            raise CutNotInSystem(f"{cut!r} is not a cut of a structure in the system")
        return n

    def occurrences(self, agent: str, st: LocalState) -> list:
        """Every (structure index, frontier) whose agent-local state is st."""
        if self._occurrences is None:
            occ: dict = {}
            for n, es in enumerate(self.structures):
                for f in self.frontiers(n):
                    for a, k in zip(es.agents, f):
                        occ.setdefault((a, es.state_at(a, k)), []).append((n, f))
            self._occurrences = occ
        return self._occurrences.get((agent, st), [])

    def later(self, where: tuple) -> list:
        """The cuts of the same structure that extend `where`, itself included."""
        n, f = where
        return [(n, g) for g in self.frontiers(n) if all(x <= y for x, y in zip(f, g))]

    def state(self, where: tuple) -> GlobalState:
        n, f = where
        return self.structures[n].global_state(f)

    def free(self, f) -> frozenset:
        hit = self._free.get(f)
        if hit is None:
            hit = self._free[f] = free_vars(f)
        return hit

    def holds(self, cut: ConsistentCut, f, env: dict | None = None) -> bool:
        where = (self.locate(cut), cut.frontier)
        return self.evaluator.formula(f, dict(env or {}), self.state(where), where)

    def value(self, cut: ConsistentCut, t, env: dict | None = None):
        where = (self.locate(cut), cut.frontier)
        return self.evaluator.term(t, dict(env or {}), self.state(where), where)


def _env_key(model: KnowledgeModel, f, env: dict) -> tuple:
    names = model.free(f)
    return tuple(sorted((n, value_sort_key(env[n])) for n in names if n in env))


def _drop_event_values(env: dict) -> dict:
    # the value of an event being checked is not part of any other cut
    return {k: v for k, v in env.items() if not k.startswith("%val:")}


class KnowledgeEvaluator(Evaluator):
    """
    Evaluator for Know/Always/Eventually. `where` is (structure index,
    frontier), or None when only a global state is known; knowledge needs
    only the state, the temporal operators need the position.

    The reserved symbols that `translate` introduces are interpreted too, so
    a translated formula can be evaluated directly: cut variables hold
    positions, `%cuts` ranges over every position of the system.
    """

    def __init__(self, model: KnowledgeModel):
        super().__init__(model.interp)
        self.model = model
        self._positions: list | None = None

    def positions(self) -> list:
        if self._positions is None:
            m = self.model
            self._positions = [(n, f) for n in range(len(m.structures)) for f in m.frontiers(n)]
        return self._positions

    def term(self, t, env, s, where=None):
        if type(t) is Var:
            if t.name == SYSTEM_VAR:
                return None
            if t.name == CUT_VAR and t.name not in env:
                return where
        if type(t) is App and t.fn in (LS, CUTS):
            if t.fn == CUTS:
                return self.positions()
            pos = self.term(t.args[0], env, s, where)
            agent = self.term(t.args[1], env, s, where)
            return self.model.state(pos).local(agent)
        return super().term(t, env, s, where)

    def formula(self, f, env, s, where=None):
        if type(f) is Atom and f.pred in (CC, SUCCEEDS):
            if f.pred == CC:
                return True
            later = self.term(f.args[0], env, s, where)
            earlier = self.term(f.args[1], env, s, where)
            return later[0] == earlier[0] and all(x >= y for x, y in zip(later[1], earlier[1]))
        return super().formula(f, env, s, where)

    def modal(self, f, env, s, where):
        tf = type(f)
        m = self.model
        if tf is Know:
            st = s.local(f.agent)
            env = _drop_event_values(env)
            key = (f.agent, st, f, _env_key(m, f, env))
            hit = m._memo.get(key)
            if hit is not None:
                return hit
            if is_temporal(f.body):
                result = all(
                    self.formula(f.body, env, m.state(pos), pos) for pos in m.occurrences(f.agent, st)
                )
            else:
                result = all(
                    self.formula(f.body, env, m.points[p], None) for p in m.by_local.get((f.agent, st), ())
                )
            m._memo[key] = result
            return result
        if tf is Always or tf is Eventually:
            if where is None:
                raise ModalOperatorPresent(f"{tf.__name__} needs a cut of a structure, not just a state")
            want = tf is Eventually
            for pos in m.later(where):
                if self.formula(f.body, env, m.state(pos), pos) == want:
                    return want
            return not want
        if tf is AtCut:
            pos = env[f.var]
            # the body is read at pos, so pos becomes the current cut
            return self.formula(f.body, {**env, CUT_VAR: pos}, m.state(pos), pos)
        return super().modal(f, env, s, where)


def eval_know(sys: System, c: ConsistentCut, f, env: dict | None = None, interp: Interpretation | None = None) -> bool:
    """Truth of f (modal or not) at cut c of sys."""
    return KnowledgeModel.of(sys, interp).holds(c, f, env)


def initial_cut(es: EventStructure) -> ConsistentCut:
    return ConsistentCut(es, tuple(0 for _ in es.agents))


def distinguishing_cut(sys: System, c: ConsistentCut, f: Know, interp: Interpretation | None = None):
    """For a false Know(i, p) at c: a cut the agent cannot tell from c where p fails."""
    m = KnowledgeModel.of(sys, interp)
    st = c.local(f.agent)
    for n, es in enumerate(m.structures):
        for fr in m.frontiers(n):
            if es.state_at(f.agent, fr[es.agents.index(f.agent)]) != st:
                continue
            if not m.evaluator.formula(f.body, {}, es.global_state(fr), (n, fr)):
                return ConsistentCut(es, fr)
    return None


# ------------------------------------------------------- defined constants


def resolve_defined_constant(
    sys: System, c: ConsistentCut, psi, bound: int, var: str = "n", interp: Interpretation | None = None
):
    """Least n < bound at which psi(n) fails at c (psi has `var` free); OMEGA if psi holds throughout."""
    m = KnowledgeModel.of(sys, interp)
    for n in range(bound):
        if not m.holds(c, psi, {var: n}):
            return n
    return OMEGA


def defined_constants(kb: MessageAutomaton) -> dict:
    """
    Names fixed by an Initially program of the form `name = term` where
    name is not a variable of the signature: name -> (agent, term).
    """
    out = {}
    for bp in kb.programs:
        if type(bp) is Initially and type(bp.formula) is Eq and type(bp.formula.left) is Var:
            name = bp.formula.left.name
            if kb.signature.owner(name) is None:
                out[name] = (bp.agent, bp.formula.right)
    return out


def _is_definition(bp, constants: dict) -> bool:
    return type(bp) is Initially and type(bp.formula) is Eq and type(bp.formula.left) is Var and (
        bp.formula.left.name in constants
    )


def _expand(x, constants: dict):
    for name, (_, term) in constants.items():
        x = substitute(x, name, term)
    return x


# ---------------------------------------------------------- instantiation


class _VacuousKnowledge(Evaluator):
    """Evaluates at a local state no cut of the system has: every Know is true."""

    def modal(self, f, env, s, where):
        if type(f) is Know:
            return True
        raise ModalOperatorPresent(f"{type(f).__name__} cannot be tabulated on a local state")


def _closed(x, sig: Signature) -> bool:
    """No quantifier-bound variable of an enclosing formula and no val occur free in x."""
    names = {n for a in sig.agents for n in sig.names(a)}
    return free_vars(x) <= names and not any(type(y) is ValConst for y in walk(x))


def _rebuild(x, go: Callable):
    tx = type(x)
    if tx in (Var, ValConst, Lit, Tabulated, TabulatedTerm):
        return x
    if tx is App:
        return App(x.fn, tuple(go(a) for a in x.args))
    if tx is Atom:
        return Atom(x.pred, tuple(go(a) for a in x.args))
    if tx in (PairT, Eq, Lt, Implies):
        return tx(go(x.left), go(x.right))
    if tx is IndexApply:
        return IndexApply(go(x.seq), go(x.index))
    if tx is Least:
        return Least(x.var, go(x.bound), go(x.body))
    if tx is Not:
        return Not(go(x.body))
    if tx is And or tx is Or:
        return tx(tuple(go(p) for p in x.parts))
    if tx is ForAll or tx is Exists:
        return tx(x.var, go(x.body), None if x.bound is None else go(x.bound))
    raise ProgramError(f"cannot tabulate {tx.__name__} under a bound variable or val")


class _Tabulator:
    """Replaces maximal closed epistemic parts of an agent's tests by tables over a system."""

    def __init__(self, model: KnowledgeModel, sig: Signature, interp: Interpretation | None):
        self.model = model
        self.sig = sig
        self.interp = interp
        self.vacuous = _VacuousKnowledge(interp)
        self.states: dict = {}
        for key, gs in model.points.items():
            for a, st in zip(gs.agents, key):
                self.states.setdefault((a, st), gs)

    def __call__(self, x, agent: str, is_term: bool):
        if not is_modal(x):
            return x
        if _closed(x, self.sig):
            return self.table(x, agent, is_term)
        if type(x) in (Know, Always, Eventually):
            raise ProgramError(f"cannot tabulate a {type(x).__name__} that uses val or a bound variable")
        return _rebuild(x, lambda y: self(y, agent, _is_term(y)))

    def table(self, x, agent: str, is_term: bool):
        test = Eq(x, x) if is_term else x
        if not classify_i_formula(test, agent, self.sig.names(agent), self.interp):
            raise ProgramError(f"test is not determined by {agent}'s local state")
        ev = self.model.evaluator
        table = {}
        for (a, st), gs in self.states.items():
            if a != agent:
                continue
            table[st] = ev.term(x, {}, gs, None) if is_term else ev.formula(x, {}, gs, None)
        vac = self.vacuous
        if is_term:
            return TabulatedTerm(agent, x, table, lambda s, x=x: vac.term(x, {}, s, None))
        return Tabulated(agent, x, table, lambda s, x=x: vac.formula(x, {}, s, None))


_FORMULA_TYPES = (Atom, Eq, Lt, Not, And, Or, Implies, ForAll, Exists, Know, Always, Eventually, AtCut, Tabulated)


def _is_term(x) -> bool:
    return not isinstance(x, _FORMULA_TYPES)


def instantiate(
    sys: System, kb: MessageAutomaton, interp: Interpretation | None = None, signature: Signature | None = None
) -> MessageAutomaton:
    """
    The standard automaton obtained by reading every epistemic test and term
    of kb over sys. Tables are keyed on the acting agent's local state; a
    local state that no cut of sys has reads every Know as true.
    """
    sig = signature or kb.signature
    constants = defined_constants(kb)
    model = KnowledgeModel.of(sys, interp)
    tab = _Tabulator(model, sig, interp)
    out = []
    for bp in kb.programs:
        if _is_definition(bp, constants):
            continue
        tb = type(bp)
        if tb is Effect:
            out.append(Effect(bp.agent, bp.kind, bp.var, tab(_expand(bp.term, constants), bp.agent, True)))
        elif tb is Frame:
            out.append(bp)
        else:
            f = tab(_expand(bp.formula, constants), bp.agent, False)
            if tb is Initially:
                out.append(Initially(bp.agent, f))
            elif tb is Precondition:
                out.append(Precondition(bp.agent, bp.action, f))
            elif tb is Fairness:
                out.append(Fairness(bp.agent, f, bp.action))
    for name, (agent, term) in constants.items():
        if any(type(y) is Var and y.name == name for bp in out for y in _program_nodes(bp)):
            raise UnresolvableConstant(f"defined constant {name!r} of {agent} was left unresolved")
    pg = MessageAutomaton(kb.signature, out)
    if pg.is_kb:
        raise ProgramError("instantiation left an epistemic test behind")
    return pg


def _program_nodes(bp) -> Iterable:
    if type(bp) is Effect:
        return walk(bp.term)
    if type(bp) is Frame:
        return ()
    return walk(bp.formula)


# ------------------------------------------------------------ fixed points


def _diff_witness(have: dict, want: dict):
    missing = sorted(set(want) - set(have), key=repr)
    extra = sorted(set(have) - set(want), key=repr)
    if extra:
        return ("generated but not in the system", have[extra[0]])
    if missing:
        return ("in the system but not generated", want[missing[0]])
    return None


def check_represents(
    i: Interpretation | None, sys: System, kb: MessageAutomaton, cfg: ExploreConfig | None = None
) -> Verdict:
    """
    Does sys represent kb: exploring kb with its tests read over sys gives
    exactly sys (as a set of structures up to event ids, at cfg's bound)?
    """
    cfg = cfg or sys.config or ExploreConfig()
    sig = kb.signature
    pg = instantiate(sys, kb, i)
    again = explore(i, pg, cfg.replace(signature=sig))
    want = {canonical_key(es): es for es in sys}
    have = {canonical_key(es): es for es in again}
    if want.keys() == have.keys():
        return Verdict(True, [], None)
    w = _diff_witness(have, want)
    detail = f"{len(have)} structures generated, {len(want)} in the system"
    if again.partial:
        detail += " (exploration budget reached)"
    return Verdict(False, [f"{w[0]}: {detail}"], w[1])


def check_implements(
    i: Interpretation | None, pg: MessageAutomaton, kb: MessageAutomaton, cfg: ExploreConfig | None = None
) -> Verdict:
    """
    Does pg implement kb: the system of pg, with the variables kb does not
    declare hidden, represents kb? The witness on failure is a structure in
    one set but not the other.
    """
    cfg = cfg or ExploreConfig()
    full = explore(i, pg, cfg)
    sig = kb.signature
    cache: dict = {}
    hidden = System(sig, [project(es, sig, cache) for es in full], kb, cfg, full.partial)
    return check_represents(i, hidden, kb, cfg)


# ------------------------------------------------------ kb specifications


@dataclass(frozen=True)
class KbSpecification:
    """A predicate on systems with a printable derivation tag."""

    predicate: Callable
    tag: str

    def __call__(self, sys: System) -> bool:
        return bool(self.predicate(sys))


_KB_TAGS = {
    Initially: "Ax-initK",
    Effect: "Ax-causeK",
    Precondition: "Ax-ifK",
    Fairness: "Ax-fairK",
    Frame: "Ax-affectsK",
}


def kb_axiom_spec(
    bp, i: Interpretation | None = None, horizon: int | None = None, context: MessageAutomaton | None = None
) -> KbSpecification:
    """
    The system-level form of a basic program's axiom: the standard axiom,
    with the program's epistemic tests read over the system, holds for every
    structure of the system.

    `context` supplies the definitions of any defined constants bp mentions.
    A definition itself only names a term, so its axiom holds trivially.
    """
    tag = _KB_TAGS[type(bp)]
    if type(bp) is Frame and bp.var.startswith("msg("):
        tag = "Ax-sendsK"
    definitions = [] if context is None else [
        d for d in context.programs if _is_definition(d, defined_constants(context))
    ]

    def pred(sys: System) -> bool:
        structures = list(sys)
        if not structures or bp in definitions:
            return True
        sig = sys.signature if isinstance(sys, System) else structures[0].signature
        kb = make_automaton(sig, [bp, *definitions])
        modal = is_any_modal(bp) or bool(definitions)
        standard = instantiate(sys, kb, i).programs[0] if modal else bp
        spec = axiom_spec(standard, i, horizon)
        return all(spec(es) for es in structures)

    return KbSpecification(pred, tag)


def is_any_modal(bp) -> bool:
    if type(bp) is Effect:
        return is_modal(bp.term)
    if type(bp) is Frame:
        return False
    return is_modal(bp.formula)


# ---------------------------------------------- non-compositional example


def two_constant_signature(domain: int = 3) -> Signature:
    """Agents 1 and 2, each with one action t_i and one variable x_i over 0..domain-1."""
    return Signature(
        ("1", "2"),
        [],
        [Action("t1", "1"), Action("t2", "2")],
        [VarDecl("x1", "1", f"(nat {domain})"), VarDecl("x2", "2", f"(nat {domain})")],
    )


def constant_program(agent: str, domain: int = 3) -> MessageAutomaton:
    """Agent `agent` keeps x_agent equal to its own number; nothing is said about the other agent."""
    sig = two_constant_signature(domain)
    var = f"x{agent}"
    return MessageAutomaton(sig, [Initially(agent, Eq(Var(var), Lit(int(agent)))), Frame(agent, (), var)])


def never_knows_other(agent: str) -> object:
    """Always, agent does not know that the other agent's variable holds the other agent's number."""
    other = "2" if agent == "1" else "1"
    return Always(Not(Know(agent, Eq(Var(f"x{other}"), Lit(int(other))))))
