"""
Values and states.

Values are plain Python objects:

  * Nat     -> int (non-negative, never bool)
  * Bool    -> bool
  * Bit     -> int 0 or 1
  * Bottom  -> the BOTTOM singleton (the null message)
  * Omega   -> the OMEGA singleton ("no index exists")
  * Pair    -> Pair(first, second)
  * Seq     -> tuple
  * AgentId -> str

Equality between values is structural and tag-aware, so True never equals 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Iterable, Mapping


class _Marker:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    def __reduce__(self):
        return (_marker, (self._name,))


BOTTOM = _Marker("BOTTOM")
OMEGA = _Marker("OMEGA")


def _marker(name: str) -> _Marker:
    return BOTTOM if name == "BOTTOM" else OMEGA


@dataclass(frozen=True, slots=True)
class Pair:
    first: Any
    second: Any

    def __repr__(self) -> str:
        return f"<{self.first!r}, {self.second!r}>"


Value = Any


def is_nat(v: Value) -> bool:
    return type(v) is int and v >= 0


def values_equal(a: Value, b: Value) -> bool:
    """Structural equality that keeps Bool and Nat apart."""
    if type(a) is not type(b):
        return False
    if type(a) is tuple:
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if type(a) is Pair:
        return values_equal(a.first, b.first) and values_equal(a.second, b.second)
    return a == b


def value_sort_key(v: Value) -> tuple:
    """Total order on values, used only to make outputs deterministic."""
    if v is BOTTOM:
        return (0,)
    if v is OMEGA:
        return (1,)
    if type(v) is bool:
        return (2, v)
    if type(v) is int:
        return (3, v)
    if type(v) is str:
        return (4, v)
    if type(v) is Pair:
        return (5, value_sort_key(v.first), value_sort_key(v.second))
    if type(v) is tuple:
        return (6, len(v), tuple(value_sort_key(x) for x in v))
    return (7, repr(v))


@lru_cache(maxsize=None)
def _index_of(names: tuple) -> dict:
    return {name: k for k, name in enumerate(names)}


class LocalState:
    """
    One agent's local state: its declared variables, the val slot and the
    history of its own events (a tuple of (kind, value) entries).

    Instances are immutable and hash in O(1) after construction.
    """

    __slots__ = ("agent", "names", "values", "val", "history", "_hash")

    def __init__(self, agent: str, names: tuple, values: tuple, val: Value = BOTTOM, history: tuple = ()):
        self.agent = agent
        self.names = names
        self.values = values
        self.val = val
        self.history = history
        self._hash = hash((agent, names, values, _val_hash(val), history))

    def __getitem__(self, name: str) -> Value:
        if name == "val":
            return self.val
        if name == "history":
            return self.history
        return self.values[_index_of(self.names)[name]]

    def get(self, name: str, default: Value = None) -> Value:
        try:
            return self[name]
        except KeyError:
            return default

    def __contains__(self, name: str) -> bool:
        return name in _index_of(self.names) or name in ("val", "history")

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def replace(self, values: tuple | None = None, val: Value = None, history: tuple | None = None, *, set_val: bool = False) -> LocalState:
        return LocalState(
            self.agent,
            self.names,
            self.values if values is None else values,
            val if set_val else self.val,
            self.history if history is None else history,
        )

    def with_val(self, val: Value) -> LocalState:
        return LocalState(self.agent, self.names, self.values, val, self.history)

    def update(self, changes: Mapping[str, Value]) -> LocalState:
        index = _index_of(self.names)
        values = list(self.values)
        for name, v in changes.items():
            values[index[name]] = v
        return LocalState(self.agent, self.names, tuple(values), self.val, self.history)

    def project(self, names: tuple) -> LocalState:
        index = _index_of(self.names)
        return LocalState(self.agent, names, tuple(self.values[index[n]] for n in names), self.val, self.history)

    def forget_history(self) -> LocalState:
        return LocalState(self.agent, self.names, self.values, self.val, ())

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, LocalState) or self._hash != other._hash:
            return False
        return (
            self.agent == other.agent
            and self.names == other.names
            and self.values == other.values
            and all(type(a) is type(b) for a, b in zip(self.values, other.values))
            and values_equal(self.val, other.val)
            and self.history == other.history
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"{n}={v!r}" for n, v in zip(self.names, self.values))
        return f"LocalState({self.agent}: {body}; val={self.val!r}; |history|={len(self.history)})"


def _val_hash(v: Value) -> int:
    return hash((type(v) is bool, v))


class GlobalState:
    """
    A tuple of local states, one per agent (in signature order).

    A slot may be None when only one agent's state is meaningful, which is
    how local tests (preconditions, fairness formulas) are evaluated.
    """

    __slots__ = ("agents", "states", "_hash")

    def __init__(self, agents: tuple, states: tuple):
        self.agents = agents
        self.states = states
        self._hash = hash(states)

    @classmethod
    def only(cls, agents: tuple, state: LocalState) -> GlobalState:
        return cls(agents, tuple(state if a == state.agent else None for a in agents))

    def local(self, agent: str) -> LocalState | None:
        try:
            return self.states[self.agents.index(agent)]
        except ValueError:
            raise KeyError(agent) from None

    def owner_of(self, name: str) -> LocalState | None:
        for st in self.states:
            if st is not None and name in _index_of(st.names):
                return st
        return None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GlobalState) and self._hash == other._hash and self.states == other.states

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"GlobalState({', '.join(map(repr, self.states))})"


def sorted_values(values: Iterable[Value]) -> list:
    return sorted(values, key=value_sort_key)
