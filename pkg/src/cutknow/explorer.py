"""
Bounded semantics of an automaton: every event structure with at most D
events that the automaton allows under a channel model, plus single fair
runs for simulation.

Exploration is an exact filter. The universe at bound D is fixed by the
signature and the configuration: initial values range over the variable
domains, action values over the action domains, every after-state value
over its variable's domain, and receives follow the channel model. A
structure is emitted exactly when it is consistent with the automaton, so
exploring over one signature makes composition an intersection. Programs
only prune the search early: effects fix a value, frames keep one,
preconditions block an action and Initially programs filter initial states.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Mapping

from .automata import (
    Effect, Fairness, Frame, Initially, LocalChecker, MessageAutomaton, Precondition, ProgramError,
)
from .events import Event, EventStructure, Local, Rcv, Signature, assemble, canonical_key
from .logic import Interpretation, msg_var
from .values import BOTTOM, LocalState, value_sort_key, values_equal


class BudgetExceeded(Exception):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ChannelModel:
    lossy: bool = False
    reorder: bool = False
    dup: bool = False

    @classmethod
    def parse(cls, text: str) -> ChannelModel:
        """Parse `lossy|lossless[,reorder][,dup]`."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts or parts[0] not in ("lossy", "lossless"):
            raise ValueError(f"channel must start with lossy or lossless, got {text!r}")
        extra = set(parts[1:])
        unknown = extra - {"reorder", "dup"}
        if unknown:
            raise ValueError(f"unknown channel flags {sorted(unknown)}")
        return cls(parts[0] == "lossy", "reorder" in extra, "dup" in extra)

    def __str__(self) -> str:
        out = ["lossy" if self.lossy else "lossless"]
        if self.reorder:
            out.append("reorder")
        if self.dup:
            out.append("dup")
        return ",".join(out)

    def next_positions(self, sends: list, delivered: list) -> list:
        """
        Source-lane positions deliverable next, given the positions of all
        sends on the link and of the sends received so far (in order).
        """
        if self.reorder:
            if self.dup:
                return list(sends)
            taken = set(delivered)
            return [p for p in sends if p not in taken]
        last = delivered[-1] if delivered else -1
        later = [p for p in sends if p > last]
        out = [last] if self.dup and last >= 0 else []
        if self.lossy:
            out += later
        elif later:
            out.append(later[0])
        return out


@dataclass(frozen=True)
class ExploreConfig:
    depth: int = 12
    window: int = 4
    channel: ChannelModel = ChannelModel()
    links: Mapping = field(default_factory=dict)
    inputs: Mapping = field(default_factory=dict)
    max_structures: int = 10**5
    max_states: int = 2 * 10**6
    signature: Signature | None = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    def model(self, link: str) -> ChannelModel:
        return self.links.get(link, self.channel)

    def replace(self, **changes) -> ExploreConfig:
        return replace(self, **changes)


@dataclass
class System:
    """A finite set of event structures over one signature."""

    signature: Signature
    structures: list
    automaton: MessageAutomaton | None = None
    config: ExploreConfig | None = None
    partial: bool = False

    def __len__(self) -> int:
        return len(self.structures)

    def __iter__(self):
        return iter(self.structures)

    def keys(self) -> set:
        return {canonical_key(es) for es in self.structures}


# --------------------------------------------------------------- stepping


class Stepper:
    """Per-agent transition function derived from the automaton's programs."""

    def __init__(self, i: Interpretation | None, pg: MessageAutomaton, cfg: ExploreConfig):
        if pg.is_kb:
            raise ProgramError("knowledge-based automata must be instantiated over a system before exploring")
        sig = cfg.signature or pg.signature
        if cfg.signature is not None and sig.merge(pg.signature) != sig:
            raise ProgramError("the exploration signature does not cover the automaton's signature")
        self.sig = sig
        self.pg = pg
        self.cfg = cfg
        self.chk = LocalChecker(sig, i)
        self.effects: dict = {}
        self.frames: dict = {}
        self.pre: dict = {}
        for bp in pg.programs:
            if type(bp) is Effect:
                self.effects.setdefault((bp.agent, bp.kind, bp.var), []).append(bp.term)
            elif type(bp) is Frame:
                self.frames.setdefault((bp.agent, bp.var), []).append(set(bp.kinds))
            elif type(bp) is Precondition:
                self.pre.setdefault((bp.agent, bp.action), []).append(bp.formula)
        self.fairness = [bp for bp in pg.programs if type(bp) is Fairness]
        self.local_ok = all(
            self.chk.is_local(bp.formula, bp.agent) for bp in pg.programs if type(bp) in (Initially, Precondition, Fairness)
        ) and all(self.chk.is_local_term(bp.term, bp.agent) for bp in pg.programs if type(bp) is Effect)
        self._memo: dict = {}
        self.actions = {a: [(act.name, v) for act in sig.actions_of(a) for v in act.domain] for a in sig.agents}
        self.inbound = {a: [l for l in sig.links.values() if l.dest == a] for a in sig.agents}

    def initial_states(self, agent: str) -> list:
        sig = self.sig
        names = sig.names(agent)
        options = []
        for n in names:
            if sig.is_msg_var(n):
                options.append((BOTTOM,))
            elif n in self.cfg.inputs:
                options.append(tuple(self.cfg.inputs[n]))
            else:
                options.append(sig.decl(n).domain)
        inits = [bp.formula for bp in self.pg.programs if type(bp) is Initially and bp.agent == agent]
        out = []
        for values in product(*options):
            st = LocalState(agent, names, tuple(values))
            if all(self.chk.holds(f, st) for f in inits):
                out.append(st)
        return out

    def initial_global(self) -> list:
        if not self.local_ok:
            return []
        per = [self.initial_states(a) for a in self.sig.agents]
        return [dict(zip(self.sig.agents, combo)) for combo in product(*per)]

    def enabled(self, st: LocalState, action: str, value) -> bool:
        return all(self.chk.holds(f, st, value, bind=True) for f in self.pre.get((st.agent, action), ()))

    def after_states(self, st: LocalState, kind, value) -> list:
        """Every after-state the programs allow for an event of `kind` with `value`."""
        key = (st, kind, value_sort_key(value))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        sig = self.sig
        agent = st.agent
        options = []
        for n, cur in zip(st.names, st.values):
            decl = sig.decl(n)
            is_msg = sig.is_msg_var(n) is not None
            framed = any(kind not in allowed for allowed in self.frames.get((agent, n), ()))
            terms = self.effects.get((agent, kind, n))
            if decl.input:
                cands = (cur,)
            elif terms:
                vals = [self.chk.value(t, st, value) for t in terms]
                v0 = vals[0]
                if any(not values_equal(v0, v) for v in vals[1:]):
                    cands = ()
                else:
                    cands = (v0,)
            elif framed:
                cands = (BOTTOM,) if is_msg else (cur,)
            else:
                cands = decl.domain
            if framed and cands:
                keep = BOTTOM if is_msg else cur
                cands = tuple(c for c in cands if values_equal(c, keep))
            if decl.input and terms:
                vals = [self.chk.value(t, st, value) for t in terms]
                cands = tuple(c for c in cands if all(values_equal(c, v) for v in vals))
            if not cands:
                self._memo[key] = []
                return []
            options.append(cands)
        hist = st.history + ((kind, value),)
        out = [LocalState(agent, st.names, tuple(vals), value, hist) for vals in product(*options)]
        self._memo[key] = out
        return out

    def fair_at_end(self, lasts: Mapping, total: int, horizon: int | None) -> bool:
        """Fairness programs under the finite reading; `lasts[a]` is (kind or None, state)."""
        if horizon is not None and total >= horizon:
            return True
        for bp in self.fairness:
            kind, st = lasts[bp.agent]
            if kind == Local(bp.action):
                continue
            if self.chk.holds(bp.formula, st):
                return False
        return True


# -------------------------------------------------------------- structures


class _Node:
    __slots__ = ("states", "lanes", "total")

    def __init__(self, states: tuple, lanes: tuple, total: int):
        self.states = states
        self.lanes = lanes
        self.total = total


def _link_positions(sig: Signature, lanes: tuple, index: dict, link) -> tuple:
    src = lanes[index[link.source]]
    mv = msg_var(link.name)
    k = sig.names(link.source).index(mv)
    sends = [p for p, entry in enumerate(src) if entry[2].values[k] is not BOTTOM]
    rcv = Rcv(link.name)
    delivered = [entry[3][1] for entry in lanes[index[link.dest]] if entry[0] == rcv]
    return sends, delivered


def explore(i: Interpretation | None, pg: MessageAutomaton, cfg: ExploreConfig | None = None) -> System:
    """All structures with at most cfg.depth events consistent with pg."""
    cfg = cfg or ExploreConfig()
    step = Stepper(i, pg, cfg)
    sig = step.sig
    agents = sig.agents
    index = {a: n for n, a in enumerate(agents)}
    depth = cfg.depth
    found: list = []
    seen: set = set()

    def emit(init: dict, node: _Node) -> None:
        lasts = {a: ((node.lanes[n][-1][0] if node.lanes[n] else None), node.states[n]) for n, a in enumerate(agents)}
        if not step.fair_at_end(lasts, node.total, depth):
            return
        lanes = {a: [(k, v, st, src) for k, v, st, src in node.lanes[n]] for n, a in enumerate(agents)}
        found.append(assemble(sig, init, lanes))
        if len(found) > cfg.max_structures:
            raise BudgetExceeded(
                f"more than {cfg.max_structures} structures",
                System(sig, found[:-1], pg, cfg, partial=True),
            )

    for init in step.initial_global():
        root = _Node(tuple(init[a] for a in agents), tuple(() for _ in agents), 0)
        init_key = tuple(init[a].values for a in agents)
        stack = [root]
        while stack:
            node = stack.pop()
            key = (init_key, node.lanes)
            if key in seen:
                continue
            seen.add(key)
            emit(init, node)
            if node.total >= depth:
                continue
            children = []
            for n, a in enumerate(agents):
                st = node.states[n]
                moves = [(Local(act), v, None) for act, v in step.actions[a] if step.enabled(st, act, v)]
                for link in step.inbound[a]:
                    model = cfg.model(link.name)
                    sends, delivered = _link_positions(sig, node.lanes, index, link)
                    src_lane = node.lanes[index[link.source]]
                    k = sig.names(link.source).index(msg_var(link.name))
                    for p in model.next_positions(sends, delivered):
                        moves.append((Rcv(link.name), src_lane[p][2].values[k], (link.source, p)))
                for kind, v, src in moves:
                    for after in step.after_states(st, kind, v):
                        lanes = list(node.lanes)
                        lanes[n] = lanes[n] + ((kind, v, after, src),)
                        states = list(node.states)
                        states[n] = after
                        children.append(_Node(tuple(states), tuple(lanes), node.total + 1))
            stack.extend(reversed(children))
    return System(sig, found, pg, cfg)


# ---------------------------------------------------------------- states


class _Channel:
    """State-mode abstraction of one link: in-flight values and the last delivered one."""

    __slots__ = ()

    @staticmethod
    def empty() -> tuple:
        return ((), None)

    @staticmethod
    def send(ch: tuple, value, model: ChannelModel) -> tuple:
        queue, head = ch
        queue = queue + (value,)
        if model.reorder:
            if model.dup:
                queue = tuple({value_sort_key(v): v for v in queue}.values())
            queue = tuple(sorted(queue, key=value_sort_key))
        return (queue, head)

    @staticmethod
    def deliveries(ch: tuple, model: ChannelModel) -> list:
        """(value, next channel state) for every allowed delivery."""
        queue, head = ch
        out = []
        if model.reorder:
            done = set()
            for j, v in enumerate(queue):
                if value_sort_key(v) in done:
                    continue
                done.add(value_sort_key(v))
                rest = queue if model.dup else queue[:j] + queue[j + 1:]
                out.append((v, (rest, head)))
            return out
        if model.dup and head is not None:
            out.append((head[0], ch))
        upto = len(queue) if model.lossy else min(1, len(queue))
        for j in range(upto):
            out.append((queue[j], (queue[j + 1:], (queue[j],) if model.dup else None)))
        return out


@dataclass
class StateSpace:
    states: int
    frontier_depth: int
    violation: list | None = None
    complete: bool = True

    @property
    def ok(self) -> bool:
        return self.violation is None


def reachable_states(
    i: Interpretation | None,
    pg: MessageAutomaton,
    cfg: ExploreConfig,
    invariant=None,
    keep_history: bool = False,
) -> StateSpace:
    """
    Breadth-first search over global states (local states plus channel
    contents) reachable within cfg.depth events. `invariant(states)` is
    called on every reached tuple of local states; the first failure is
    returned as the schedule that reaches it.
    """
    step = Stepper(i, pg, cfg)
    sig = step.sig
    agents = sig.agents
    links = list(sig.links.values())
    lidx = {l.name: n for n, l in enumerate(links)}
    mk = {l.name: sig.names(l.source).index(msg_var(l.name)) for l in links}
    parent: dict = {}
    queue: deque = deque()

    def norm(st: LocalState) -> LocalState:
        return st if keep_history else st.forget_history()

    for init in step.initial_global():
        key = (tuple(init[a] for a in agents), tuple(_Channel.empty() for _ in links))
        if key not in parent:
            parent[key] = None
            queue.append((key, 0))
    last_depth = 0
    while queue:
        key, d = queue.popleft()
        last_depth = d
        states, chans = key
        if invariant is not None and not invariant(states):
            return StateSpace(len(parent), d, _trace_back(parent, key))
        if d >= cfg.depth:
            continue
        for n, a in enumerate(agents):
            st = states[n]
            moves = [(Local(act), v, None) for act, v in step.actions[a] if step.enabled(st, act, v)]
            for link in step.inbound[a]:
                model = cfg.model(link.name)
                for v, nch in _Channel.deliveries(chans[lidx[link.name]], model):
                    moves.append((Rcv(link.name), v, (link.name, nch)))
            for kind, v, rc in moves:
                for after in step.after_states(st, kind, v):
                    ch = list(chans)
                    if rc is not None:
                        ch[lidx[rc[0]]] = rc[1]
                    for l in links:
                        if l.source == a:
                            sent = after.values[mk[l.name]]
                            if sent is not BOTTOM:
                                ch[lidx[l.name]] = _Channel.send(ch[lidx[l.name]], sent, cfg.model(l.name))
                    ns = list(states)
                    ns[n] = norm(after)
                    nkey = (tuple(ns), tuple(ch))
                    if nkey not in parent:
                        parent[nkey] = (key, (a, kind, v))
                        if len(parent) > cfg.max_states:
                            raise BudgetExceeded(f"more than {cfg.max_states} states", StateSpace(len(parent), d, None, False))
                        queue.append((nkey, d + 1))
    return StateSpace(len(parent), last_depth)


def _trace_back(parent: dict, key) -> list:
    out = []
    while parent[key] is not None:
        prev, move = parent[key]
        out.append((move, key[0]))
        key = prev
    out.append((None, key[0]))
    return list(reversed(out))


# -------------------------------------------------------------- fair runs


class _Run:
    """Mutable bookkeeping for a single simulated run."""

    def __init__(self, sig: Signature, init: Mapping[str, LocalState]):
        self.sig = sig
        self.states = dict(init)
        self.init = dict(init)
        self.lanes = {a: [] for a in sig.agents}
        self.positions: list = []
        # per link: list of (source position, value, delivered flag, dropped flag, run step)
        self.sent = {l: [] for l in sig.links}

    @property
    def total(self) -> int:
        return len(self.positions)

    def do(self, agent: str, kind, value, after: LocalState, src=None) -> None:
        self.lanes[agent].append((kind, value, after, src))
        self.positions.append((agent, len(self.lanes[agent]) - 1))
        self.states[agent] = after
        for l in self.sig.links.values():
            if l.source == agent and after[msg_var(l.name)] is not BOTTOM:
                self.sent[l.name].append([len(self.lanes[agent]) - 1, after[msg_var(l.name)], False, False, self.total - 1])

    def structure(self) -> EventStructure:
        ids = {pos: n for n, pos in enumerate(self.positions)}
        events, before, after, send = {}, {}, {}, {}
        order = {a: [] for a in self.sig.agents}
        for a in self.sig.agents:
            prev = self.init[a]
            for k, (kind, value, st, src) in enumerate(self.lanes[a]):
                eid = ids[(a, k)]
                events[eid] = Event(eid, a, kind, value)
                before[eid] = prev
                after[eid] = st
                if src is not None:
                    send[eid] = ids[src]
                order[a].append(eid)
                prev = st
        return EventStructure(self.sig, self.init, order, events, before, after, send)


def _deliverable(run: _Run, link, model: ChannelModel) -> list:
    entries = run.sent[link.name]
    rcv = Rcv(link.name)
    order = [entry[3][1] for entry in run.lanes[link.dest] if entry[0] == rcv]
    allowed = set(model.next_positions([e[0] for e in entries if not e[3]], order))
    return [e for e in entries if e[0] in allowed]


def _unserved_run(run: _Run, link) -> int:
    """Trailing consecutive sends on `link` none of which (nor anything later) was delivered."""
    entries = run.sent[link.name]
    served = max((e[0] for e in entries if e[2]), default=-1)
    mv = msg_var(link.name)
    count = 0
    lane = run.lanes[link.source]
    for k in range(len(lane) - 1, served, -1):
        if lane[k][2][mv] is BOTTOM:
            break
        count += 1
    return count


def _oldest_unserved(run: _Run, link) -> int | None:
    """Run step of the oldest send on `link` with no delivery of it or of a later send."""
    entries = run.sent[link.name]
    served = max((e[0] for e in entries if e[2]), default=-1)
    return min((e[4] for e in entries if e[0] > served), default=None)


def run_fair(
    i: Interpretation | None,
    pg: MessageAutomaton,
    cfg: ExploreConfig,
    seed: int,
    initial: Mapping[str, LocalState] | None = None,
) -> EventStructure:
    """
    One run of at most cfg.depth events under a randomized scheduler that
    enforces the fairness window W: an action enabled for W consecutive steps
    is taken, a link with messages in flight and no delivery for W steps
    delivers its newest message, so does a link where some send has gone W
    steps without itself or a later send being delivered, and a sender never makes W consecutive
    sends on a link without one of them (or a later one) being delivered.
    """
    rng = random.Random(seed)
    step = Stepper(i, pg, cfg)
    sig = step.sig
    w = cfg.window
    if initial is None:
        inits = step.initial_global()
        if not inits:
            raise ProgramError("no initial state satisfies the Initially programs")
        initial = inits[rng.randrange(len(inits))]
    run = _Run(sig, initial)
    enabled_for = {(a, act, v): 0 for a in sig.agents for act, v in step.actions[a]}
    idle = {l: 0 for l in sig.links}

    def local_moves() -> list:
        out = []
        for a in sig.agents:
            st = run.states[a]
            for act, v in step.actions[a]:
                if step.enabled(st, act, v) and step.after_states(st, Local(act), v):
                    out.append((a, act, v))
        return out

    def deliver(link, entry) -> bool:
        options = step.after_states(run.states[link.dest], Rcv(link.name), entry[1])
        if not options:
            return False
        after = options[rng.randrange(len(options))]
        entry[2] = True
        if not cfg.model(link.name).reorder:
            for e in run.sent[link.name]:
                if e[0] < entry[0] and not e[2]:
                    e[3] = True
        run.do(link.dest, Rcv(link.name), entry[1], after, (link.source, entry[0]))
        for other in sig.links:
            idle[other] = 0 if other == link.name else idle[other] + 1
        return True

    def newest(link):
        cands = _deliverable(run, link, cfg.model(link.name))
        return max(cands, key=lambda e: e[0]) if cands else None

    while run.total < cfg.depth:
        lm = local_moves()
        live = set(lm)
        for k in enabled_for:
            enabled_for[k] = enabled_for[k] + 1 if k in live else 0
        move = None
        for l in sig.links.values():
            e = newest(l)
            since = _oldest_unserved(run, l)
            stale = since is not None and run.total - since >= w
            if e is not None and (idle[l.name] >= w or stale):
                move = ("rcv", l, e)
                break
        if move is None:
            forced = [k for k in lm if enabled_for[k] >= w]
            if forced:
                move = ("act",) + forced[0]
        if move is None:
            choices = [("act",) + k for k in lm]
            for l in sig.links.values():
                for e in _deliverable(run, l, cfg.model(l.name)):
                    choices.append(("rcv", l, e))
            if not choices:
                break
            move = choices[rng.randrange(len(choices))]
        if move[0] == "rcv":
            if not deliver(move[1], move[2]):
                break
            continue
        _, a, act, v = move
        st = run.states[a]
        options = step.after_states(st, Local(act), v)
        after = options[rng.randrange(len(options))]
        sends = [l for l in sig.links.values() if l.source == a and after[msg_var(l.name)] is not BOTTOM]
        blocked = [l for l in sends if _unserved_run(run, l) >= w - 1 and newest(l) is not None]
        if blocked:
            if not deliver(blocked[0], newest(blocked[0])):
                break
            continue
        run.do(a, Local(act), v, after)
        enabled_for[(a, act, v)] = 0
        for l in sig.links:
            idle[l] += 1
        _maybe_drop(run, rng, cfg)
    return run.structure()


def _maybe_drop(run: _Run, rng: random.Random, cfg: ExploreConfig) -> None:
    # lossy links lose older in-flight messages; the newest one always survives
    for name, entries in run.sent.items():
        if not cfg.model(name).lossy:
            continue
        live = [e for e in entries if not e[2] and not e[3]]
        for e in live[:-1]:
            if rng.random() < 0.5:
                e[3] = True


def run_eager(
    i: Interpretation | None,
    pg: MessageAutomaton,
    cfg: ExploreConfig,
    initial: Mapping[str, LocalState],
) -> EventStructure:
    """
    Deterministic lossless round-robin schedule: on its turn each agent first
    receives everything addressed to it (oldest first), then takes its first
    enabled action.
    """
    step = Stepper(i, pg, cfg)
    sig = step.sig
    run = _Run(sig, initial)
    while run.total < cfg.depth:
        progressed = False
        for a in sig.agents:
            for link in step.inbound[a]:
                for entry in run.sent[link.name]:
                    if entry[2] or run.total >= cfg.depth:
                        continue
                    options = step.after_states(run.states[a], Rcv(link.name), entry[1])
                    if not options:
                        continue
                    entry[2] = True
                    run.do(a, Rcv(link.name), entry[1], options[0], (link.source, entry[0]))
                    progressed = True
            if run.total >= cfg.depth:
                break
            st = run.states[a]
            for act, v in step.actions[a]:
                if step.enabled(st, act, v):
                    options = step.after_states(st, Local(act), v)
                    if options:
                        run.do(a, Local(act), v, options[0])
                        progressed = True
                        break
        if not progressed:
            break
    return run.structure()


# ------------------------------------------------------------- fairsend


def check_fairsend(es: EventStructure, link: str, w: int) -> bool:
    """
    Finite form of channel fairness: no w consecutive events of the source
    that all send on `link` without a receive whose send is in or after the
    window.
    """
    l = es.signature.links[link]
    lane = es.order[l.source]
    mv = msg_var(link)
    received = {es.positions[es.send[e.id]][1] for e in es.receives_on(link)}
    run = 0
    for k, eid in enumerate(lane):
        if es.after[eid][mv] is BOTTOM:
            run = 0
            continue
        run += 1
        if run >= w:
            start = k - w + 1
            if not any(p >= start for p in received):
                return False
    return True
