"""
Terms, formulas and their evaluation at global states.

The language has the usual connectives, bounded quantifiers, equality and
order, plus three modal operators (Know, Always, Eventually). Non-modal
formulas are evaluated here; modal ones are handled by the epistemics module,
which extends `Evaluator`.

`translate` removes modal operators by rewriting them into quantification
over cut-valued variables, using two reserved variables for the ambient
system and the current cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from typing import Any, Callable, Iterable, Mapping

from .values import BOTTOM, OMEGA, GlobalState, Pair, Value, is_nat, values_equal


class TermLogicError(Exception):
    pass


class UndeclaredSymbol(TermLogicError):
    pass


class UnboundVariable(TermLogicError):
    pass


class TypeMismatch(TermLogicError):
    pass


class ModalOperatorPresent(TermLogicError):
    pass


class UnboundedQuantifier(TermLogicError):
    pass


# ---------------------------------------------------------------- terms


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class ValConst:
    """The per-agent `val` symbol: the value of the event being processed."""

    agent: str


@dataclass(frozen=True, slots=True)
class Lit:
    value: Any


@dataclass(frozen=True, slots=True)
class App:
    fn: str
    args: tuple = ()


@dataclass(frozen=True, slots=True)
class PairT:
    left: Any
    right: Any


@dataclass(frozen=True, slots=True)
class IndexApply:
    seq: Any
    index: Any


@dataclass(frozen=True, slots=True)
class Least:
    """Least n < bound such that body holds; OMEGA if there is none."""

    var: str
    bound: Any
    body: Any


@dataclass(frozen=True, slots=True)
class TabulatedTerm:
    """A term replaced by a lookup on one agent's local state (see epistemics.instantiate)."""

    agent: str
    term: Any
    table: Mapping = field(compare=False, hash=False, repr=False)
    fallback: Callable = field(compare=False, hash=False, repr=False)


Term = Var | ValConst | Lit | App | PairT | IndexApply | Least | TabulatedTerm


# ------------------------------------------------------------- formulas


@dataclass(frozen=True, slots=True)
class Atom:
    pred: str
    args: tuple = ()


@dataclass(frozen=True, slots=True)
class Eq:
    left: Any
    right: Any


@dataclass(frozen=True, slots=True)
class Lt:
    left: Any
    right: Any


@dataclass(frozen=True, slots=True)
class Not:
    body: Any


@dataclass(frozen=True, slots=True)
class And:
    parts: tuple = ()


@dataclass(frozen=True, slots=True)
class Or:
    parts: tuple = ()


@dataclass(frozen=True, slots=True)
class Implies:
    left: Any
    right: Any


@dataclass(frozen=True, slots=True)
class ForAll:
    """
    Universal quantifier. `bound` is a term: a Nat n makes the variable range
    over 0..n-1, any other finite collection is iterated directly. Without a
    bound the range comes from the interpretation.
    """

    var: str
    body: Any
    bound: Any = None


@dataclass(frozen=True, slots=True)
class Exists:
    var: str
    body: Any
    bound: Any = None


@dataclass(frozen=True, slots=True)
class Know:
    agent: str
    body: Any


@dataclass(frozen=True, slots=True)
class Always:
    body: Any


@dataclass(frozen=True, slots=True)
class Eventually:
    body: Any


@dataclass(frozen=True, slots=True)
class AtCut:
    """Evaluate body at the cut held by variable `var` (produced by translate)."""

    var: str
    body: Any


@dataclass(frozen=True, slots=True)
class Tabulated:
    """A test replaced by a lookup on one agent's local state."""

    agent: str
    formula: Any
    table: Mapping = field(compare=False, hash=False, repr=False)
    fallback: Callable = field(compare=False, hash=False, repr=False)


TRUE = And(())
FALSE = Or(())

Formula = Atom | Eq | Lt | Not | And | Or | Implies | ForAll | Exists | Know | Always | Eventually | AtCut | Tabulated

MODAL = (Know, Always, Eventually)
TEMPORAL = (Always, Eventually)


def conj(*parts) -> And:
    return And(tuple(parts))


def disj(*parts) -> Or:
    return Or(tuple(parts))


def event_val_key(agent: str) -> str:
    """Valuation key that overrides val_agent with the value of the event being checked."""
    return f"%val:{agent}"


def msg_var(link: str) -> str:
    """Name of the variable holding the message last sent on `link`."""
    return f"msg({link})"


# --------------------------------------------------------- interpretation


@dataclass
class Symbol:
    meaning: Callable
    arity: int | None = None
    rigid: bool = True


@dataclass
class Interpretation:
    """
    Meanings for function and predicate symbols. A nonrigid meaning receives
    the global state as its first argument. `ranges` declares finite ranges
    for otherwise unbounded quantified variables.
    """

    functions: dict = field(default_factory=dict)
    predicates: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    domain: frozenset = frozenset({"Nat", "Bool", "Bit", "Bottom", "Pair", "Seq", "AgentId", "Omega"})

    def extended(self, functions: Mapping | None = None, predicates: Mapping | None = None, ranges: Mapping | None = None) -> Interpretation:
        return Interpretation(
            {**self.functions, **(functions or {})},
            {**self.predicates, **(predicates or {})},
            {**self.ranges, **(ranges or {})},
            self.domain,
        )

    def is_rigid(self, name: str) -> bool:
        sym = self.functions.get(name) or self.predicates.get(name)
        return sym is not None and sym.rigid


def _nat(v: Value, what: str) -> int:
    if not is_nat(v):
        raise TypeMismatch(f"{what} expects a Nat, got {v!r}")
    return v


def _seq(v: Value, what: str) -> tuple:
    if type(v) is not tuple:
        raise TypeMismatch(f"{what} expects a Seq, got {v!r}")
    return v


def _pair(v: Value, what: str) -> Pair:
    if type(v) is not Pair:
        raise TypeMismatch(f"{what} expects a Pair, got {v!r}")
    return v


def _bool(v: Value, what: str) -> bool:
    if type(v) is not bool:
        raise TypeMismatch(f"{what} expects a Bool, got {v!r}")
    return v


def _next(v: Value) -> int:
    # OMEGA stands for "before index 0"
    return 0 if v is OMEGA else _nat(v, "next") + 1


def _le(a: Value, b: Value) -> bool:
    return is_nat(a) and is_nat(b) and a <= b


def _is_prefix(a: Value, b: Value) -> bool:
    a, b = _seq(a, "prefix"), _seq(b, "prefix")
    return len(a) <= len(b) and all(values_equal(x, y) for x, y in zip(a, b))


def standard_interpretation() -> Interpretation:
    f = {
        "+": Symbol(lambda a, b: _nat(a, "+") + _nat(b, "+"), 2),
        "-": Symbol(lambda a, b: max(0, _nat(a, "-") - _nat(b, "-")), 2),
        "succ": Symbol(lambda a: _nat(a, "succ") + 1, 1),
        "next": Symbol(_next, 1),
        "fst": Symbol(lambda p: _pair(p, "fst").first, 1),
        "snd": Symbol(lambda p: _pair(p, "snd").second, 1),
        "len": Symbol(lambda s: len(_seq(s, "len")), 1),
        "append": Symbol(lambda s, v: _seq(s, "append") + (v,), 2),
        "seq": Symbol(lambda *xs: tuple(xs), None),
        "ite": Symbol(lambda c, a, b: a if _bool(c, "ite") else b, 3),
        "eq": Symbol(values_equal, 2),
        "le": Symbol(_le, 2),
        "lt": Symbol(lambda a, b: is_nat(a) and is_nat(b) and a < b, 2),
        "not": Symbol(lambda c: not _bool(c, "not"), 1),
        "flip": Symbol(lambda b: 1 - _nat(b, "flip") if b in (0, 1) else b, 1),
    }
    p = {
        "<=": Symbol(_le, 2),
        ">=": Symbol(lambda a, b: _le(b, a), 2),
        "prefix": Symbol(_is_prefix, 2),
        "bottom?": Symbol(lambda v: v is BOTTOM, 1),
        "omega?": Symbol(lambda v: v is OMEGA, 1),
    }
    return Interpretation(f, p)


STANDARD = standard_interpretation()


# ----------------------------------------------------------- evaluation


Valuation = Mapping[str, Value]


class Evaluator:
    """
    Evaluates terms and non-modal formulas at a global state.

    Subclasses override `modal` to give meaning to Know/Always/Eventually.
    `where` is an opaque position handed through to `modal` (the epistemics
    evaluator uses it to locate the current cut).
    """

    def __init__(self, interp: Interpretation | None = None):
        self.interp = interp or STANDARD

    # terms

    def term(self, t, env: Valuation, s: GlobalState, where=None) -> Value:
        tt = type(t)
        if tt is Var:
            name = t.name
            if name in env:
                return env[name]
            owner = s.owner_of(name) if s is not None else None
            if owner is None:
                raise UnboundVariable(f"variable {name!r} has no value here")
            return owner[name]
        if tt is Lit:
            return t.value
        if tt is ValConst:
            key = event_val_key(t.agent)
            if key in env:
                return env[key]
            st = s.local(t.agent) if s is not None else None
            if st is None:
                raise UnboundVariable(f"val of {t.agent!r} has no value here")
            return st.val
        if tt is App:
            sym = self.interp.functions.get(t.fn)
            if sym is None:
                raise UndeclaredSymbol(f"function symbol {t.fn!r}")
            args = [self.term(a, env, s, where) for a in t.args]
            if sym.arity is not None and len(args) != sym.arity:
                raise TypeMismatch(f"{t.fn} takes {sym.arity} arguments, got {len(args)}")
            return sym.meaning(*args) if sym.rigid else sym.meaning(s, *args)
        if tt is PairT:
            return Pair(self.term(t.left, env, s, where), self.term(t.right, env, s, where))
        if tt is IndexApply:
            seq = self.term(t.seq, env, s, where)
            idx = self.term(t.index, env, s, where)
            if type(seq) is not tuple:
                raise TypeMismatch(f"cannot index {seq!r}")
            if idx is OMEGA or idx is BOTTOM:
                return BOTTOM
            idx = _nat(idx, "index")
            # indexing past the end yields the null value
            return seq[idx] if idx < len(seq) else BOTTOM
        if tt is Least:
            bound = self.term(t.bound, env, s, where)
            inner = dict(env)
            for n in range(_nat(bound, "least")):
                inner[t.var] = n
                if self.formula(t.body, inner, s, where):
                    return n
            return OMEGA
        if tt is TabulatedTerm:
            st = s.local(t.agent)
            try:
                return t.table[st]
            except KeyError:
                return t.fallback(s)
        raise TypeError(f"not a term: {t!r}")

    # formulas

    def formula(self, f, env: Valuation, s: GlobalState, where=None) -> bool:
        tf = type(f)
        if tf is Eq:
            return values_equal(self.term(f.left, env, s, where), self.term(f.right, env, s, where))
        if tf is Lt:
            a = self.term(f.left, env, s, where)
            b = self.term(f.right, env, s, where)
            if a is OMEGA or b is OMEGA or a is BOTTOM or b is BOTTOM:
                # OMEGA is below nothing and above nothing
                return False
            return _nat(a, "<") < _nat(b, "<")
        if tf is And:
            return all(self.formula(p, env, s, where) for p in f.parts)
        if tf is Or:
            return any(self.formula(p, env, s, where) for p in f.parts)
        if tf is Not:
            return not self.formula(f.body, env, s, where)
        if tf is Implies:
            return (not self.formula(f.left, env, s, where)) or self.formula(f.right, env, s, where)
        if tf is ForAll or tf is Exists:
            want = tf is Exists
            inner = dict(env)
            for v in self.quantifier_range(f, env, s, where):
                inner[f.var] = v
                if self.formula(f.body, inner, s, where) == want:
                    return want
            return not want
        if tf is Atom:
            sym = self.interp.predicates.get(f.pred)
            if sym is None:
                raise UndeclaredSymbol(f"predicate symbol {f.pred!r}")
            args = [self.term(a, env, s, where) for a in f.args]
            if sym.arity is not None and len(args) != sym.arity:
                raise TypeMismatch(f"{f.pred} takes {sym.arity} arguments, got {len(args)}")
            return bool(sym.meaning(*args) if sym.rigid else sym.meaning(s, *args))
        if tf is Tabulated:
            st = s.local(f.agent)
            try:
                return f.table[st]
            except KeyError:
                return f.fallback(s)
        if tf in MODAL or tf is AtCut:
            return self.modal(f, env, s, where)
        raise TypeError(f"not a formula: {f!r}")

    def quantifier_range(self, f, env, s, where) -> Iterable:
        if f.bound is not None:
            bound = self.term(f.bound, env, s, where)
            if is_nat(bound):
                return range(bound)
            if isinstance(bound, (tuple, list, frozenset, set)):
                return bound
            raise TypeMismatch(f"quantifier bound {bound!r} is not a Nat or a finite collection")
        if f.var in self.interp.ranges:
            return self.interp.ranges[f.var]
        raise UnboundedQuantifier(f"variable {f.var!r} has no declared range and no bound")

    def modal(self, f, env, s, where) -> bool:
        raise ModalOperatorPresent(f"{type(f).__name__} cannot be evaluated at a single state")


def eval_term(i: Interpretation, v: Valuation, s: GlobalState, t) -> Value:
    return Evaluator(i).term(t, v, s)


def eval_formula_nonmodal(i: Interpretation, v: Valuation, s: GlobalState, f) -> bool:
    if is_modal(f):
        raise ModalOperatorPresent("formula contains Know/Always/Eventually")
    return Evaluator(i).formula(f, v, s)


# ------------------------------------------------------------ structure


def children(x) -> tuple:
    """Immediate sub-terms and sub-formulas."""
    tx = type(x)
    if tx in (Var, ValConst, Lit):
        return ()
    if tx is App or tx is Atom:
        return x.args
    if tx in (PairT,):
        return (x.left, x.right)
    if tx is IndexApply:
        return (x.seq, x.index)
    if tx is Least:
        return (x.bound, x.body)
    if tx in (Eq, Lt, Implies):
        return (x.left, x.right)
    if tx is Not:
        return (x.body,)
    if tx is And or tx is Or:
        return x.parts
    if tx is ForAll or tx is Exists:
        return (x.body,) if x.bound is None else (x.bound, x.body)
    if tx in (Know, Always, Eventually, AtCut):
        return (x.body,)
    if tx is Tabulated:
        return ()
    if tx is TabulatedTerm:
        return ()
    raise TypeError(f"not a term or formula: {x!r}")


def walk(x) -> Iterable:
    yield x
    for c in children(x):
        yield from walk(c)


def is_modal(x) -> bool:
    return any(type(y) in MODAL for y in walk(x))


def is_temporal(x) -> bool:
    return any(type(y) in TEMPORAL or type(y) is AtCut for y in walk(x))


def modal_depth(x) -> int:
    inner = max((modal_depth(c) for c in children(x)), default=0)
    return inner + 1 if type(x) in MODAL else inner


def free_vars(x, bound: frozenset = frozenset()) -> frozenset:
    """Variables not bound by a quantifier or least-operator (includes local variable names)."""
    tx = type(x)
    if tx is Var:
        return frozenset() if x.name in bound else frozenset({x.name})
    if tx is ForAll or tx is Exists:
        out = free_vars(x.body, bound | {x.var})
        if x.bound is not None:
            out |= free_vars(x.bound, bound)
        return out
    if tx is Least:
        return free_vars(x.bound, bound) | free_vars(x.body, bound | {x.var})
    if tx is AtCut:
        return free_vars(x.body, bound) | ({x.var} - bound)
    out = frozenset()
    for c in children(x):
        out |= free_vars(c, bound)
    return out


def bound_vars(x) -> frozenset:
    return frozenset(y.var for y in walk(x) if type(y) in (ForAll, Exists, Least))


def substitute(x, name: str, replacement):
    """Replace free occurrences of Var(name) by the term `replacement`."""
    tx = type(x)
    if tx is Var:
        return replacement if x.name == name else x
    if tx in (ValConst, Lit, Tabulated, TabulatedTerm):
        return x
    if tx is App:
        return App(x.fn, tuple(substitute(a, name, replacement) for a in x.args))
    if tx is Atom:
        return Atom(x.pred, tuple(substitute(a, name, replacement) for a in x.args))
    if tx is PairT:
        return PairT(substitute(x.left, name, replacement), substitute(x.right, name, replacement))
    if tx is IndexApply:
        return IndexApply(substitute(x.seq, name, replacement), substitute(x.index, name, replacement))
    if tx is Least:
        bound = substitute(x.bound, name, replacement)
        return Least(x.var, bound, x.body if x.var == name else substitute(x.body, name, replacement))
    if tx in (Eq, Lt, Implies):
        return tx(substitute(x.left, name, replacement), substitute(x.right, name, replacement))
    if tx is Not:
        return Not(substitute(x.body, name, replacement))
    if tx is And or tx is Or:
        return tx(tuple(substitute(p, name, replacement) for p in x.parts))
    if tx is ForAll or tx is Exists:
        bound = None if x.bound is None else substitute(x.bound, name, replacement)
        body = x.body if x.var == name else substitute(x.body, name, replacement)
        return tx(x.var, body, bound)
    if tx is Know:
        return Know(x.agent, substitute(x.body, name, replacement))
    if tx in (Always, Eventually):
        return tx(substitute(x.body, name, replacement))
    if tx is AtCut:
        return AtCut(x.var, substitute(x.body, name, replacement))
    raise TypeError(f"not a term or formula: {x!r}")


def map_formulas(x, fn: Callable):
    """Rebuild x bottom-up, applying fn to every node after its children."""
    tx = type(x)
    if tx in (Var, ValConst, Lit, Tabulated, TabulatedTerm):
        return fn(x)
    if tx is App or tx is Atom:
        return fn(tx(x.fn if tx is App else x.pred, tuple(map_formulas(a, fn) for a in x.args)))
    if tx in (PairT, Eq, Lt, Implies):
        return fn(tx(map_formulas(x.left, fn), map_formulas(x.right, fn)))
    if tx is IndexApply:
        return fn(IndexApply(map_formulas(x.seq, fn), map_formulas(x.index, fn)))
    if tx is Least:
        return fn(Least(x.var, map_formulas(x.bound, fn), map_formulas(x.body, fn)))
    if tx is Not:
        return fn(Not(map_formulas(x.body, fn)))
    if tx is And or tx is Or:
        return fn(tx(tuple(map_formulas(p, fn) for p in x.parts)))
    if tx is ForAll or tx is Exists:
        bound = None if x.bound is None else map_formulas(x.bound, fn)
        return fn(tx(x.var, map_formulas(x.body, fn), bound))
    if tx is Know:
        return fn(Know(x.agent, map_formulas(x.body, fn)))
    if tx in (Always, Eventually):
        return fn(tx(map_formulas(x.body, fn)))
    if tx is AtCut:
        return fn(AtCut(x.var, map_formulas(x.body, fn)))
    raise TypeError(f"not a term or formula: {x!r}")


# ------------------------------------------------------------ translation

SYSTEM_VAR = "%sys"
CUT_VAR = "%cut"

# symbols the translation introduces; the epistemics module interprets them
CC = "%consistent-cut"
LS = "%local-state"
CUTS = "%cuts"
SUCCEEDS = "%succeeds"


def translate(f):
    """
    Rewrite a formula into an equivalent one without modal operators.

    Know(i, p) becomes a quantification over all cuts of the system whose
    i-local state equals that of the current cut; Always/Eventually quantify
    over the cuts that extend the current one in the same structure.
    """
    fresh = count(1)

    def go(x):
        tx = type(x)
        if not is_modal(x):
            return x
        if tx is Not:
            return Not(go(x.body))
        if tx is And or tx is Or:
            return tx(tuple(go(p) for p in x.parts))
        if tx is Implies:
            return Implies(go(x.left), go(x.right))
        if tx is ForAll or tx is Exists:
            return tx(x.var, go(x.body), x.bound)
        if tx is Know:
            c = f"%c{next(fresh)}"
            same_view = Eq(App(LS, (Var(c), Lit(x.agent))), App(LS, (Var(CUT_VAR), Lit(x.agent))))
            guard = And((Atom(CC, (Var(SYSTEM_VAR), Var(c))), same_view))
            return ForAll(c, Implies(guard, AtCut(c, go(x.body))), App(CUTS, (Var(SYSTEM_VAR),)))
        if tx is Always:
            c = f"%c{next(fresh)}"
            later = Atom(SUCCEEDS, (Var(c), Var(CUT_VAR)))
            return ForAll(c, Implies(later, AtCut(c, go(x.body))), App(CUTS, (Var(SYSTEM_VAR),)))
        if tx is Eventually:
            c = f"%c{next(fresh)}"
            later = Atom(SUCCEEDS, (Var(c), Var(CUT_VAR)))
            return Exists(c, And((later, AtCut(c, go(x.body)))), App(CUTS, (Var(SYSTEM_VAR),)))
        # modal sub-terms (a least-operator over a modal body) are left to the
        # evaluator; translation only rewrites formula structure
        return x

    return go(f)


# ---------------------------------------------------------- i-formulas


def classify_i_formula(f, agent: str, local_vars: Iterable[str], interp: Interpretation | None = None) -> bool:
    """
    Conservative syntactic test that f depends only on `agent`'s local state.

    Accepts Boolean combinations (and bounded quantifications) of
    Know(agent, ...) subformulas and atoms built from rigid symbols, the
    agent's own variables, bound variables and `val` of the agent.
    """
    interp = interp or STANDARD
    mine = frozenset(local_vars)

    def term_ok(t, bound) -> bool:
        tt = type(t)
        if tt is Var:
            return t.name in bound or t.name in mine
        if tt is Lit:
            return True
        if tt is ValConst:
            return t.agent == agent
        if tt is App:
            return interp.is_rigid(t.fn) and all(term_ok(a, bound) for a in t.args)
        if tt is PairT:
            return term_ok(t.left, bound) and term_ok(t.right, bound)
        if tt is IndexApply:
            return term_ok(t.seq, bound) and term_ok(t.index, bound)
        if tt is Least:
            return term_ok(t.bound, bound) and form_ok(t.body, bound | {t.var})
        if tt is TabulatedTerm:
            return t.agent == agent
        return False

    def form_ok(x, bound) -> bool:
        tx = type(x)
        if tx is Know:
            return x.agent == agent
        if tx is Tabulated:
            return x.agent == agent
        if tx in (Eq, Lt):
            return term_ok(x.left, bound) and term_ok(x.right, bound)
        if tx is Atom:
            return interp.is_rigid(x.pred) and all(term_ok(a, bound) for a in x.args)
        if tx is Not:
            return form_ok(x.body, bound)
        if tx is And or tx is Or:
            return all(form_ok(p, bound) for p in x.parts)
        if tx is Implies:
            return form_ok(x.left, bound) and form_ok(x.right, bound)
        if tx is ForAll or tx is Exists:
            inner = bound | {x.var}
            return (x.bound is None or term_ok(x.bound, bound)) and form_ok(x.body, inner)
        return False

    return form_ok(f, frozenset())
