"""
Event structures: per-agent event sequences, a send map from receives to
sends, and the local states before and after every event.

A consistent cut is represented by its frontier, one prefix length per
agent; a frontier is a cut exactly when every receive inside it has its
send inside it too.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from .logic import msg_var
from .syntax import format_value, type_domain
from .values import BOTTOM, GlobalState, LocalState, Value, values_equal


class EventModelError(Exception):
    pass


class CycleDetected(EventModelError):
    def __init__(self, cycle: list):
        self.cycle = cycle
        super().__init__(f"causal cycle through events {cycle}")


class CutBudgetExceeded(EventModelError):
    pass


class DifferentStructures(EventModelError):
    pass


class SignatureClash(EventModelError):
    pass


# ------------------------------------------------------------------ kinds


@dataclass(frozen=True, slots=True)
class Rcv:
    link: str

    def __str__(self) -> str:
        return f"rcv:{self.link}"


@dataclass(frozen=True, slots=True)
class Local:
    action: str

    def __str__(self) -> str:
        return f"local:{self.action}"


Kind = Rcv | Local


def parse_kind(text: str) -> Kind:
    tag, _, name = text.partition(":")
    if not name:
        raise ValueError(f"kind {text!r} must look like rcv:<link> or local:<action>")
    if tag == "rcv":
        return Rcv(name)
    if tag == "local":
        return Local(name)
    raise ValueError(f"unknown kind tag {tag!r} in {text!r}")


# -------------------------------------------------------------- signature


@dataclass(frozen=True)
class Link:
    name: str
    source: str
    dest: str
    message_type: str = "unit"

    @cached_property
    def domain(self) -> tuple:
        return tuple(v for v in type_domain(self.message_type) if v is not BOTTOM)


@dataclass(frozen=True)
class Action:
    """A local action; only `agent` performs it. Events of the action carry values of `type`."""

    name: str
    agent: str
    type: str | None = None

    @cached_property
    def domain(self) -> tuple:
        return (BOTTOM,) if self.type is None else type_domain(self.type)


@dataclass(frozen=True)
class VarDecl:
    name: str
    agent: str
    type: str
    input: bool = False

    @cached_property
    def domain(self) -> tuple:
        return type_domain(self.type)


class Signature:
    """
    Agents, links, actions and per-agent variables.

    Every link contributes a variable msg(link) owned by its source agent,
    whose domain is the link's message type plus BOTTOM.
    """

    def __init__(
        self,
        agents: Iterable[str],
        links: Iterable[Link] = (),
        actions: Iterable[Action] = (),
        variables: Iterable[VarDecl] = (),
    ):
        self.agents = tuple(agents)
        if len(set(self.agents)) != len(self.agents):
            raise SignatureClash("duplicate agent names")
        self.links = {l.name: l for l in links}
        self.actions: dict[str, Action] = {}
        for act in actions:
            if act.agent not in self.agents:
                raise SignatureClash(f"action {act.name} belongs to unknown agent {act.agent!r}")
            if act.name in self.actions and self.actions[act.name] != act:
                raise SignatureClash(f"action {act.name} declared twice")
            self.actions[act.name] = act
        self.variables: dict[str, dict[str, VarDecl]] = {a: {} for a in self.agents}
        for d in variables:
            self._add(d)
        for l in self.links.values():
            for end in (l.source, l.dest):
                if end not in self.variables:
                    raise SignatureClash(f"link {l.name} names unknown agent {end!r}")
            self._add(VarDecl(msg_var(l.name), l.source, f"(maybe {l.message_type})"))
        self._names = {a: tuple(self.variables[a]) for a in self.agents}
        self._owner = {n: a for a in self.agents for n in self.variables[a]}

    def _add(self, d: VarDecl) -> None:
        if d.agent not in self.variables:
            raise SignatureClash(f"variable {d.name} declared for unknown agent {d.agent!r}")
        for a, decls in self.variables.items():
            if d.name in decls and (a != d.agent or decls[d.name].type != d.type or decls[d.name].input != d.input):
                raise SignatureClash(f"variable {d.name} declared twice with different owner or type")
        self.variables[d.agent][d.name] = d

    def names(self, agent: str) -> tuple:
        return self._names[agent]

    def owner(self, var: str) -> str | None:
        return self._owner.get(var)

    def decl(self, var: str) -> VarDecl:
        return self.variables[self._owner[var]][var]

    def action_domain(self, action: str) -> tuple:
        return self.actions[action].domain

    def actions_of(self, agent: str) -> list:
        return [a for a in self.actions.values() if a.agent == agent]

    def kinds(self, agent: str) -> list:
        out: list = [Local(a.name) for a in self.actions_of(agent)]
        out += [Rcv(l.name) for l in self.links.values() if l.dest == agent]
        return out

    def is_msg_var(self, var: str) -> str | None:
        for l in self.links.values():
            if msg_var(l.name) == var:
                return l.name
        return None

    def merge(self, other: Signature) -> Signature:
        if self == other:
            return self
        agents = list(self.agents) + [a for a in other.agents if a not in self.agents]
        links = dict(self.links)
        for name, l in other.links.items():
            if name in links and links[name] != l:
                raise SignatureClash(f"link {name} declared differently")
            links[name] = l
        actions = dict(self.actions)
        for name, act in other.actions.items():
            if name in actions and actions[name] != act:
                raise SignatureClash(f"action {name} declared with a different owner or value type")
            actions[name] = act
        decls = [d for a in self.agents for d in self.variables[a].values() if not self.is_msg_var(d.name)]
        for a in other.agents:
            for d in other.variables[a].values():
                if other.is_msg_var(d.name):
                    continue
                if d.name in self._owner:
                    mine = self.decl(d.name)
                    if (mine.agent, mine.type, mine.input) != (d.agent, d.type, d.input):
                        raise SignatureClash(f"variable {d.name} declared differently")
                    continue
                decls.append(d)
        return Signature(agents, links.values(), actions.values(), decls)

    def user_variables(self) -> list:
        return [d for a in self.agents for d in self.variables[a].values() if not self.is_msg_var(d.name)]

    def _key(self) -> tuple:
        return (
            self.agents,
            tuple(sorted((l.name, l.source, l.dest, l.message_type) for l in self.links.values())),
            tuple(sorted((a.name, a.agent, a.type or "") for a in self.actions.values())),
            tuple(sorted((d.agent, d.name, d.type, d.input) for d in self.user_variables())),
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Signature) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Signature(agents={self.agents}, links={list(self.links)}, actions={list(self.actions)})"


# ------------------------------------------------------------- structures


@dataclass(frozen=True, slots=True)
class Event:
    id: int
    agent: str
    kind: Kind
    value: Value


@dataclass(frozen=True)
class Violation:
    axiom: str
    events: tuple
    detail: str

    def __str__(self) -> str:
        return f"{self.axiom} at {list(self.events)}: {self.detail}"


class EventStructure:
    """
    A finite event structure.

    `order[a]` lists agent a's event ids in local order; `send` maps every
    receive id to the id of its send; `before`/`after` give the local state
    of the event's agent around the event.
    """

    def __init__(
        self,
        signature: Signature,
        initstate: Mapping[str, LocalState],
        order: Mapping[str, tuple],
        events: Mapping[int, Event],
        before: Mapping[int, LocalState],
        after: Mapping[int, LocalState],
        send: Mapping[int, int],
    ):
        self.signature = signature
        self.initstate = dict(initstate)
        self.order = {a: tuple(order.get(a, ())) for a in signature.agents}
        self.events = dict(events)
        self.before = dict(before)
        self.after = dict(after)
        self.send = dict(send)

    @property
    def agents(self) -> tuple:
        return self.signature.agents

    def __len__(self) -> int:
        return len(self.events)

    def lane(self, agent: str) -> list:
        return [self.events[k] for k in self.order[agent]]

    @cached_property
    def positions(self) -> dict:
        return {eid: (a, k) for a in self.agents for k, eid in enumerate(self.order[a])}

    def state_at(self, agent: str, k: int) -> LocalState:
        """Agent's local state after its first k events."""
        return self.initstate[agent] if k == 0 else self.after[self.order[agent][k - 1]]

    def pre_context(self, eid: int) -> LocalState:
        """State before the event, with val set to the event's own value."""
        return self.before[eid].with_val(self.events[eid].value)

    def pred(self, eid: int) -> int | None:
        a, k = self.positions[eid]
        return self.order[a][k - 1] if k > 0 else None

    def is_send_on(self, eid: int, link: str) -> bool:
        l = self.signature.links[link]
        e = self.events[eid]
        return e.agent == l.source and self.after[eid][msg_var(link)] is not BOTTOM

    def receives_on(self, link: str) -> list:
        return [e for e in self.events.values() if e.kind == Rcv(link)]

    @cached_property
    def _needs(self) -> dict:
        # _needs[a][k][j]: how many events of agent j the first k events of a require
        idx = {a: n for n, a in enumerate(self.agents)}
        out = {}
        pos = self.positions
        for a in self.agents:
            cur = [0] * len(self.agents)
            rows = [tuple(cur)]
            for eid in self.order[a]:
                cur[idx[a]] += 1
                if eid in self.send:
                    sa, sk = pos[self.send[eid]]
                    cur[idx[sa]] = max(cur[idx[sa]], sk + 1)
                rows.append(tuple(cur))
            out[a] = rows
        return out

    def is_cut(self, frontier: tuple) -> bool:
        for a, k in zip(self.agents, frontier):
            need = self._needs[a][k]
            if any(n > f for n, f in zip(need, frontier)):
                return False
        return True

    def global_state(self, frontier: tuple) -> GlobalState:
        return GlobalState(self.agents, tuple(self.state_at(a, k) for a, k in zip(self.agents, frontier)))

    def full_frontier(self) -> tuple:
        return tuple(len(self.order[a]) for a in self.agents)

    def __repr__(self) -> str:
        return f"EventStructure({len(self.events)} events over {self.agents})"


def history_entry(e: Event) -> tuple:
    return (e.kind, e.value)


def assemble(signature: Signature, initstate: Mapping[str, LocalState], lanes: Mapping[str, list]) -> EventStructure:
    """
    Build a structure from per-agent lanes of (kind, value, after_state, source)
    where source is (agent, position) of the send for receives and None
    otherwise. Ids follow a canonical linearization of the causal order.
    """
    agents = signature.agents
    lengths = {a: len(lanes.get(a, ())) for a in agents}
    nxt = {a: 0 for a in agents}
    ids: dict = {}
    order: list = []
    total = sum(lengths.values())
    while len(order) < total:
        progressed = False
        for a in agents:
            k = nxt[a]
            if k >= lengths[a]:
                continue
            src = lanes[a][k][3]
            if src is not None and (src[0], src[1]) not in ids:
                continue
            ids[(a, k)] = len(order)
            order.append((a, k))
            nxt[a] += 1
            progressed = True
            break
        if not progressed:
            raise CycleDetected([f"{a}#{nxt[a]}" for a in agents if nxt[a] < lengths[a]])
    events, before, after, send = {}, {}, {}, {}
    per_agent = {a: [] for a in agents}
    for a in agents:
        prev = initstate[a]
        for k, (kind, value, st, src) in enumerate(lanes.get(a, ())):
            eid = ids[(a, k)]
            events[eid] = Event(eid, a, kind, value)
            before[eid] = prev
            after[eid] = st
            if src is not None:
                send[eid] = ids[(src[0], src[1])]
            per_agent[a].append(eid)
            prev = st
    return EventStructure(signature, initstate, per_agent, events, before, after, send)


def initial_state(signature: Signature, agent: str, values: Mapping[str, Value] | None = None) -> LocalState:
    """Local state with the given variable values; msg variables default to BOTTOM."""
    values = dict(values or {})
    names = signature.names(agent)
    missing = [n for n in names if n not in values and not signature.is_msg_var(n)]
    if missing:
        raise ValueError(f"initial values missing for {agent}: {missing}")
    unknown = set(values) - set(names)
    if unknown:
        raise ValueError(f"unknown variables for {agent}: {sorted(unknown)}")
    return LocalState(agent, names, tuple(values.get(n, BOTTOM) for n in names))


def from_steps(signature: Signature, init: Mapping[str, Mapping[str, Value]], steps: list) -> EventStructure:
    """
    Build a structure from a global list of steps
    (agent, kind, value, changes, send_step) where `changes` maps variables
    to their new values and send_step is the index of the matching send for
    receives. msg variables return to BOTTOM unless the step sets them.
    Event ids are the step indices.
    """
    states = {a: initial_state(signature, a, init.get(a, {})) for a in signature.agents}
    initstate = dict(states)
    events, before, after, send = {}, {}, {}, {}
    order = {a: [] for a in signature.agents}
    for eid, step in enumerate(steps):
        agent, kind, value, changes, src = (list(step) + [None, None])[:5]
        kind = parse_kind(kind) if isinstance(kind, str) else kind
        prev = states[agent]
        upd = {n: BOTTOM for n in prev.names if signature.is_msg_var(n)}
        upd.update(changes or {})
        st = prev.update(upd)
        st = LocalState(agent, st.names, st.values, value, prev.history + ((kind, value),))
        events[eid] = Event(eid, agent, kind, value)
        before[eid] = prev
        after[eid] = st
        if src is not None:
            send[eid] = src
        order[agent].append(eid)
        states[agent] = st
    return EventStructure(signature, initstate, order, events, before, after, send)


# ------------------------------------------------------------- validation


def validate(es: EventStructure) -> list:
    """All violations of the event-structure axioms; empty means valid."""
    out: list = []
    sig = es.signature
    seen: dict = {}
    for a in sig.agents:
        for eid in es.order[a]:
            if eid in seen:
                out.append(Violation("TotalOrder", (eid,), f"event listed for both {seen[eid]} and {a}"))
            seen[eid] = a
            e = es.events.get(eid)
            if e is None:
                out.append(Violation("TotalOrder", (eid,), "listed event does not exist"))
            elif e.agent != a:
                out.append(Violation("TotalOrder", (eid,), f"event of {e.agent} listed in {a}'s order"))
    for eid, e in es.events.items():
        if eid not in seen:
            out.append(Violation("TotalOrder", (eid,), "event missing from its agent's order"))
        if eid not in es.before or eid not in es.after:
            out.append(Violation("FrameBetween", (eid,), "state before/after missing"))
    if out:
        return out

    for eid, e in es.events.items():
        if type(e.kind) is Rcv:
            link = sig.links.get(e.kind.link)
            if link is None:
                out.append(Violation("RcvValue", (eid,), f"unknown link {e.kind.link}"))
                continue
            if e.agent != link.dest:
                out.append(Violation("RcvValue", (eid,), f"receive on {link.name} at {e.agent}, not {link.dest}"))
            src = es.send.get(eid)
            if src is None or src not in es.events:
                out.append(Violation("RcvValue", (eid,), "receive without a send"))
                continue
            if es.events[src].agent != link.source:
                out.append(Violation("RcvValue", (eid, src), f"send is not by {link.source}"))
                continue
            sent = es.after[src][msg_var(link.name)]
            if sent is BOTTOM or not values_equal(sent, e.value):
                out.append(
                    Violation("RcvValue", (eid, src), f"received {format_value(e.value)} but msg after send is {format_value(sent)}")
                )
        elif eid in es.send:
            out.append(Violation("RcvValue", (eid,), "send map entry for a non-receive"))
        elif e.kind.action not in sig.actions or sig.actions[e.kind.action].agent != e.agent:
            out.append(Violation("TotalOrder", (eid,), f"{e.agent} has no action {e.kind.action}"))

    for a in sig.agents:
        lane = es.order[a]
        if lane and es.before[lane[0]] != es.initstate[a]:
            out.append(Violation("First", (lane[0],), "state before the first event differs from initstate"))
        for k, eid in enumerate(lane):
            st, prev = es.after[eid], es.before[eid]
            e = es.events[eid]
            if st.history != prev.history + (history_entry(e),):
                out.append(Violation("PredAdjacent", (eid,), "history does not grow by exactly this event"))
            if not values_equal(st.val, e.value):
                out.append(Violation("PredAdjacent", (eid,), "val after the event differs from its value"))
            if k > 0 and es.after[lane[k - 1]] != prev:
                out.append(Violation("FrameBetween", (lane[k - 1], eid), "state changed between adjacent events"))
            if st.names != sig.names(a):
                out.append(Violation("FrameBetween", (eid,), "state does not match the agent's variables"))

    try:
        causal_order(es)
    except CycleDetected as exc:
        out.append(Violation("WellFounded", tuple(exc.cycle), "causal order has a cycle"))
    return out


def _edges(es: EventStructure) -> dict:
    succ: dict = {eid: [] for eid in es.events}
    for a in es.agents:
        lane = es.order[a]
        for x, y in zip(lane, lane[1:]):
            succ[x].append(y)
    for r, s in es.send.items():
        if s in succ:
            succ[s].append(r)
    return succ


def causal_order(es: EventStructure) -> frozenset:
    """Transitive closure of local order and send-to-receive edges."""
    succ = _edges(es)
    color: dict = {}
    topo: list = []
    for root in sorted(succ):
        if root in color:
            continue
        stack = [(root, iter(succ[root]))]
        color[root] = 1
        path = [root]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = 2
                topo.append(node)
                continue
            c = color.get(nxt)
            if c == 1:
                raise CycleDetected(path[path.index(nxt):] + [nxt])
            if c is None:
                color[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(succ[nxt])))
    below: dict = {}
    for node in topo:
        acc = set()
        for y in succ[node]:
            acc.add(y)
            acc |= below[y]
        below[node] = acc
    return frozenset((x, y) for x, ys in below.items() for y in ys)


# -------------------------------------------------------------------- cuts


def cut_budget() -> int:
    return int(os.environ.get("EW_BUDGET_CUTS", 10**6))


class ConsistentCut:
    __slots__ = ("structure", "frontier")

    def __init__(self, structure: EventStructure, frontier: tuple):
        self.structure = structure
        self.frontier = tuple(frontier)

    @property
    def events(self) -> frozenset:
        es = self.structure
        return frozenset(eid for a, k in zip(es.agents, self.frontier) for eid in es.order[a][:k])

    @property
    def global_state(self) -> GlobalState:
        return self.structure.global_state(self.frontier)

    def local(self, agent: str) -> LocalState:
        es = self.structure
        return es.state_at(agent, self.frontier[es.agents.index(agent)])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConsistentCut) and self.structure is other.structure and self.frontier == other.frontier

    def __hash__(self) -> int:
        return hash((id(self.structure), self.frontier))

    def __repr__(self) -> str:
        return f"ConsistentCut({list(self.frontier)})"


def cut_frontiers(es: EventStructure, cap: int | None = None) -> list:
    """
    Frontiers of all consistent cuts in lexicographic order. Agents are
    assigned in turn; what agent j's first k events require only grows with
    k, so each agent's admissible counts form a run that starts at the
    largest requirement of the agents already placed.
    """
    cap = cut_budget() if cap is None else cap
    agents = es.agents
    needs = [es._needs[a] for a in agents]
    sizes = [len(es.order[a]) for a in agents]
    m = len(agents)
    out: list = []
    frontier = [0] * m

    def place(j: int) -> None:
        if j == m:
            out.append(tuple(frontier))
            if len(out) > cap:
                raise CutBudgetExceeded(f"more than {cap} cuts")
            return
        lo = max((needs[b][frontier[b]][j] for b in range(j)), default=0)
        rows = needs[j]
        for k in range(lo, sizes[j] + 1):
            row = rows[k]
            if any(row[b] > frontier[b] for b in range(j)):
                break
            # requirements on agents not yet placed are checked when they are
            frontier[j] = k
            place(j + 1)
        frontier[j] = 0

    place(0)
    return out


def enumerate_cuts(es: EventStructure, cap: int | None = None) -> list:
    """All consistent cuts, in lexicographic frontier order."""
    return [ConsistentCut(es, f) for f in cut_frontiers(es, cap)]


def cut_order(c1: ConsistentCut, c2: ConsistentCut) -> str:
    if c1.structure is not c2.structure:
        raise DifferentStructures("cuts of different structures are not ordered")
    le = all(x <= y for x, y in zip(c1.frontier, c2.frontier))
    ge = all(x >= y for x, y in zip(c1.frontier, c2.frontier))
    if le and ge:
        return "equals"
    if le:
        return "precedes"
    if ge:
        return "succeeds"
    return "incomparable"


def local_equiv(c1: ConsistentCut, c2: ConsistentCut, agent: str) -> bool:
    return c1.local(agent) == c2.local(agent)


# -------------------------------------------------------------- identity


def canonical_key(es: EventStructure) -> tuple:
    """A key equal for two structures exactly when they differ only in event ids."""
    pos = es.positions
    lanes = []
    for a in es.agents:
        lane = []
        for eid in es.order[a]:
            e = es.events[eid]
            src = pos[es.send[eid]] if eid in es.send else None
            lane.append((e.kind, e.value, es.after[eid], src))
        lanes.append((es.initstate[a], tuple(lane)))
    return tuple(lanes)


def project(es: EventStructure, signature: Signature, cache: dict | None = None) -> EventStructure:
    """
    Hide the variables that `signature` does not declare. Passing the same
    `cache` across calls makes equal inputs share one projected state object.
    """
    names = {a: signature.names(a) for a in signature.agents}
    cache = {} if cache is None else cache

    def pr(st: LocalState) -> LocalState:
        hit = cache.get(st)
        if hit is None:
            hit = cache[st] = st.project(names[st.agent])
        return hit

    return EventStructure(
        signature,
        {a: pr(es.initstate[a]) for a in signature.agents},
        es.order,
        es.events,
        {k: pr(v) for k, v in es.before.items()},
        {k: pr(v) for k, v in es.after.items()},
        es.send,
    )
