"""
Parenthesized prefix syntax for values, terms, formulas and variable types.

    (K S (K R (= (idx X n) 1)))
    (and p (not q))
    (forall k (< k 3) (= (idx X k) (idx Y k)))
    (least n 2 (not (K R (= (idx X n) 0))))

The full grammar is in docs/formats.md.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .logic import (
    FALSE, TRUE, And, App, Atom, AtCut, Eq, Eventually, Exists, ForAll, Implies, IndexApply, Know, Least, Lit,
    Lt, Not, Or, PairT, Tabulated, TabulatedTerm, ValConst, Var, Always,
)
from .values import BOTTOM, OMEGA, Pair


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")

@dataclass(frozen=True)
class _Tok:
    text: str
    pos: int


def read_sexpr(text: str):
    """Parse one S-expression; atoms remain strings."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty expression", 0, text)
    expr, k = _read(tokens, 0, text)
    if k != len(tokens):
        raise ParseError(f"unexpected trailing input {tokens[k].text!r}", tokens[k].pos, text)
    return expr


def read_sexprs(text: str) -> list:
    """Parse a whitespace-separated sequence of S-expressions."""
    tokens = _tokenize(text)
    out = []
    k = 0
    while k < len(tokens):
        expr, k = _read(tokens, k, text)
        out.append(expr)
    return out


def _tokenize(text: str) -> list:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError("unreadable input", pos, text)
        if m.end() == pos:
            break
        start = m.start(m.lastindex) if m.lastindex else pos
        out.append(_Tok(m.group(m.lastindex), start))
        pos = m.end()
    return out


def _read(tokens: list, k: int, text: str):
    if k >= len(tokens):
        raise ParseError("unexpected end of input", len(text), text)
    tok = tokens[k]
    if tok.text == "(":
        items = []
        k += 1
        while True:
            if k >= len(tokens):
                raise ParseError("missing ')'", tok.pos, text)
            if tokens[k].text == ")":
                return items, k + 1
            item, k = _read(tokens, k, text)
            items.append(item)
    if tok.text == ")":
        raise ParseError("unexpected ')'", tok.pos, text)
    return tok.text, k + 1


def _is_int(tok: str) -> bool:
    return tok.isdigit()


# ----------------------------------------------------------------- values


def value_from_sexpr(e):
    if isinstance(e, str):
        if _is_int(e):
            return int(e)
        if e == "true":
            return True
        if e == "false":
            return False
        if e in ("bot", "⊥"):
            return BOTTOM
        if e in ("omega", "Ω"):
            return OMEGA
        return e
    if not e:
        raise ParseError("empty list is not a value")
    head, *rest = e
    if head == "pair" and len(rest) == 2:
        return Pair(value_from_sexpr(rest[0]), value_from_sexpr(rest[1]))
    if head == "seq":
        return tuple(value_from_sexpr(x) for x in rest)
    raise ParseError(f"not a value: ({head} ...)")


def parse_value(text: str):
    return value_from_sexpr(read_sexpr(text))


def format_value(v) -> str:
    if v is BOTTOM:
        return "bot"
    if v is OMEGA:
        return "omega"
    if type(v) is bool:
        return "true" if v else "false"
    if type(v) is int:
        return str(v)
    if type(v) is str:
        return v
    if type(v) is Pair:
        return f"(pair {format_value(v.first)} {format_value(v.second)})"
    if type(v) is tuple:
        return "(seq" + "".join(" " + format_value(x) for x in v) + ")"
    raise TypeError(f"cannot format value {v!r}")


# ------------------------------------------------------------------ terms

_MSG = re.compile(r"^msg\((.+)\)$")


def term_from_sexpr(e):
    if isinstance(e, str):
        if _is_int(e):
            return Lit(int(e))
        if e in ("true", "false", "bot", "omega", "⊥", "Ω"):
            return Lit(value_from_sexpr(e))
        return Var(e)
    if not e:
        raise ParseError("empty term")
    head, *rest = e
    if not isinstance(head, str):
        raise ParseError("term head must be a symbol")
    if head == "val" and len(rest) == 1:
        return ValConst(rest[0])
    if head == "msg" and len(rest) == 1:
        return Var(f"msg({rest[0]})")
    if head == "pair" and len(rest) == 2:
        return PairT(term_from_sexpr(rest[0]), term_from_sexpr(rest[1]))
    if head == "idx" and len(rest) == 2:
        return IndexApply(term_from_sexpr(rest[0]), term_from_sexpr(rest[1]))
    if head == "least" and len(rest) == 3:
        return Least(_name(rest[0]), term_from_sexpr(rest[1]), formula_from_sexpr(rest[2]))
    if head == "lit" and len(rest) == 1:
        return Lit(value_from_sexpr(rest[0]))
    if head == "seq":
        args = tuple(term_from_sexpr(x) for x in rest)
        if all(type(a) is Lit for a in args):
            return Lit(tuple(a.value for a in args))
        return App("seq", args)
    return App(head, tuple(term_from_sexpr(x) for x in rest))


def _name(e) -> str:
    if not isinstance(e, str) or _is_int(e):
        raise ParseError(f"expected a variable name, got {e!r}")
    return e


def parse_term(text: str):
    return term_from_sexpr(read_sexpr(text))


def format_term(t) -> str:
    tt = type(t)
    if tt is Var:
        m = _MSG.match(t.name)
        return f"(msg {m.group(1)})" if m else t.name
    if tt is Lit:
        return format_value(t.value) if type(t.value) is not str else f"(lit {t.value})"
    if tt is ValConst:
        return f"(val {t.agent})"
    if tt is App:
        return "(" + " ".join([t.fn, *map(format_term, t.args)]) + ")"
    if tt is PairT:
        return f"(pair {format_term(t.left)} {format_term(t.right)})"
    if tt is IndexApply:
        return f"(idx {format_term(t.seq)} {format_term(t.index)})"
    if tt is Least:
        return f"(least {t.var} {format_term(t.bound)} {format_formula(t.body)})"
    if tt is TabulatedTerm:
        return f"(tabulated {t.agent} {format_term(t.term)})"
    raise TypeError(f"not a term: {t!r}")


# --------------------------------------------------------------- formulas

_BINARY = {"=": Eq, "<": Lt}


def formula_from_sexpr(e):
    if isinstance(e, str):
        if e == "true":
            return TRUE
        if e == "false":
            return FALSE
        return Atom(e, ())
    if not e:
        raise ParseError("empty formula")
    head, *rest = e
    if not isinstance(head, str):
        raise ParseError("formula head must be a symbol")
    if head in _BINARY and len(rest) == 2:
        return _BINARY[head](term_from_sexpr(rest[0]), term_from_sexpr(rest[1]))
    if head == ">" and len(rest) == 2:
        return Lt(term_from_sexpr(rest[1]), term_from_sexpr(rest[0]))
    if head == "not" and len(rest) == 1:
        return Not(formula_from_sexpr(rest[0]))
    if head == "and":
        return And(tuple(formula_from_sexpr(x) for x in rest))
    if head == "or":
        return Or(tuple(formula_from_sexpr(x) for x in rest))
    if head in ("implies", "=>") and len(rest) == 2:
        return Implies(formula_from_sexpr(rest[0]), formula_from_sexpr(rest[1]))
    if head in ("forall", "exists"):
        q = ForAll if head == "forall" else Exists
        if len(rest) == 2:
            return q(_name(rest[0]), formula_from_sexpr(rest[1]))
        if len(rest) == 3:
            var = _name(rest[0])
            guard = rest[1]
            if not (isinstance(guard, list) and len(guard) == 3 and guard[0] == "<" and guard[1] == var):
                raise ParseError(f"bounded {head} needs a guard of the form (< {var} t)")
            return q(var, formula_from_sexpr(rest[2]), term_from_sexpr(guard[2]))
        raise ParseError(f"malformed {head}")
    if head == "K" and len(rest) == 2:
        return Know(_name(rest[0]), formula_from_sexpr(rest[1]))
    if head == "always" and len(rest) == 1:
        return Always(formula_from_sexpr(rest[0]))
    if head == "eventually" and len(rest) == 1:
        return Eventually(formula_from_sexpr(rest[0]))
    return Atom(head, tuple(term_from_sexpr(x) for x in rest))


def parse_formula(text: str):
    return formula_from_sexpr(read_sexpr(text))


def format_formula(f) -> str:
    tf = type(f)
    if tf is Eq:
        return f"(= {format_term(f.left)} {format_term(f.right)})"
    if tf is Lt:
        return f"(< {format_term(f.left)} {format_term(f.right)})"
    if tf is Not:
        return f"(not {format_formula(f.body)})"
    if tf is And:
        return "true" if not f.parts else "(and" + "".join(" " + format_formula(p) for p in f.parts) + ")"
    if tf is Or:
        return "false" if not f.parts else "(or" + "".join(" " + format_formula(p) for p in f.parts) + ")"
    if tf is Implies:
        return f"(implies {format_formula(f.left)} {format_formula(f.right)})"
    if tf is ForAll or tf is Exists:
        head = "forall" if tf is ForAll else "exists"
        if f.bound is None:
            return f"({head} {f.var} {format_formula(f.body)})"
        return f"({head} {f.var} (< {f.var} {format_term(f.bound)}) {format_formula(f.body)})"
    if tf is Know:
        return f"(K {f.agent} {format_formula(f.body)})"
    if tf is Always:
        return f"(always {format_formula(f.body)})"
    if tf is Eventually:
        return f"(eventually {format_formula(f.body)})"
    if tf is Atom:
        if not f.args:
            return f.pred
        return "(" + " ".join([f.pred, *map(format_term, f.args)]) + ")"
    if tf is AtCut:
        return f"(at {f.var} {format_formula(f.body)})"
    if tf is Tabulated:
        return f"(tabulated {f.agent} {format_formula(f.formula)})"
    raise TypeError(f"not a formula: {f!r}")


# ------------------------------------------------------------------ types


def type_domain(text: str) -> tuple:
    """
    Finite value domain of a variable type.

        bit | bool | unit | (nat K) | (index K) | (bits N) | (bitseq N)
        (pair T U) | (maybe T) | (enum v ...)
    """
    return _domain(read_sexpr(text))


def _domain(e) -> tuple:
    if isinstance(e, str):
        if e == "bit":
            return (0, 1)
        if e == "bool":
            return (False, True)
        if e == "unit":
            return (BOTTOM,)
        raise ParseError(f"unknown type {e!r}")
    if not e or not isinstance(e[0], str):
        raise ParseError("malformed type")
    head, *rest = e
    if head == "nat" and len(rest) == 1 and _is_int(rest[0]):
        return tuple(range(int(rest[0])))
    if head == "index" and len(rest) == 1 and _is_int(rest[0]):
        return (OMEGA, *range(int(rest[0])))
    if head == "bits" and len(rest) == 1 and _is_int(rest[0]):
        return tuple(itertools.product((0, 1), repeat=int(rest[0])))
    if head == "bitseq" and len(rest) == 1 and _is_int(rest[0]):
        n = int(rest[0])
        return tuple(s for k in range(n + 1) for s in itertools.product((0, 1), repeat=k))
    if head == "pair" and len(rest) == 2:
        return tuple(Pair(a, b) for a in _domain(rest[0]) for b in _domain(rest[1]))
    if head == "maybe" and len(rest) == 1:
        return (BOTTOM, *(v for v in _domain(rest[0]) if v is not BOTTOM))
    if head == "enum":
        return tuple(value_from_sexpr(x) for x in rest)
    raise ParseError(f"unknown type ({head} ...)")
