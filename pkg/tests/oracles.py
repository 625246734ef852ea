"""Brute-force reference implementations the fast code is checked against."""

from __future__ import annotations

import itertools

from cutknow.logic import And, Always, Eventually, Evaluator, Exists, ForAll, Implies, Know, Lit, Not, Or, is_modal


def brute_frontiers(es) -> list:
    """Every frontier vector whose event set is closed under the send map, by enumeration."""
    out = []
    for f in itertools.product(*(range(len(es.order[a]) + 1) for a in es.agents)):
        taken = {eid for a, k in zip(es.agents, f) for eid in es.order[a][:k]}
        if all(es.send[r] in taken for r in taken if r in es.send):
            out.append(f)
    return out


def brute_causal(es) -> set:
    """Transitive closure by repeated squaring of the edge relation."""
    rel = set()
    for a in es.agents:
        lane = es.order[a]
        rel |= {(x, y) for i, x in enumerate(lane) for y in lane[i + 1:]}
    rel |= {(s, r) for r, s in es.send.items()}
    while True:
        more = {(x, z) for x, y in rel for y2, z in rel if y == y2} - rel
        if not more:
            return rel
        rel |= more


class NaiveKnowledge:
    """
    Knowledge and time by their definitions: K_i p holds at a cut when p
    holds at every cut of every structure where agent i's local state is the
    same; the temporal operators range over the extensions of the cut in
    its own structure. No index over local states is built.
    """

    def __init__(self, structures):
        self.structures = list(structures)
        self.cuts = [(n, f) for n, es in enumerate(self.structures) for f in brute_frontiers(es)]
        self.base = Evaluator()
        self._seen: dict = {}

    def state(self, where):
        n, f = where
        return self.structures[n].global_state(f)

    def holds(self, where, f, env=None) -> bool:
        env = dict(env or {})
        # remembering answers keeps nested K affordable; it does not change them
        key = (where, f, tuple(sorted(env.items())))
        if key not in self._seen:
            self._seen[key] = self._holds(where, f, env)
        return self._seen[key]

    def _holds(self, where, f, env) -> bool:
        if not is_modal(f):
            return self.base.formula(f, env, self.state(where))
        tf = type(f)
        if tf is Not:
            return not self.holds(where, f.body, env)
        if tf is And:
            return all(self.holds(where, p, env) for p in f.parts)
        if tf is Or:
            return any(self.holds(where, p, env) for p in f.parts)
        if tf is Implies:
            return (not self.holds(where, f.left, env)) or self.holds(where, f.right, env)
        if tf is ForAll or tf is Exists:
            assert type(f.bound) is Lit
            results = (self.holds(where, f.body, {**env, f.var: v}) for v in range(f.bound.value))
            return all(results) if tf is ForAll else any(results)
        if tf is Know:
            mine = self.state(where).local(f.agent)
            return all(
                self.holds(other, f.body, env) for other in self.cuts if self.state(other).local(f.agent) == mine
            )
        if tf is Always or tf is Eventually:
            n, fr = where
            later = [(m, g) for m, g in self.cuts if m == n and all(x <= y for x, y in zip(fr, g))]
            results = (self.holds(w, f.body, env) for w in later)
            return all(results) if tf is Always else any(results)
        raise TypeError(f"oracle cannot evaluate {f!r}")


def random_formula(rng, atoms: list, agents: list, depth: int, size: int = 3):
    """A random formula over `atoms` with modal depth at most `depth`."""
    if size <= 0 or rng.random() < 0.25:
        return rng.choice(atoms)
    ops = ["not", "and", "or", "implies"] + (["K", "K", "always", "eventually"] if depth > 0 else [])
    op = rng.choice(ops)
    if op == "not":
        return Not(random_formula(rng, atoms, agents, depth, size - 1))
    if op in ("and", "or"):
        parts = tuple(random_formula(rng, atoms, agents, depth, size - 1) for _ in range(2))
        return And(parts) if op == "and" else Or(parts)
    if op == "implies":
        return Implies(random_formula(rng, atoms, agents, depth, size - 1), random_formula(rng, atoms, agents, depth, size - 1))
    body = random_formula(rng, atoms, agents, depth - 1, size - 1)
    if op == "K":
        return Know(rng.choice(agents), body)
    return Always(body) if op == "always" else Eventually(body)
