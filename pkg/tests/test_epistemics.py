from __future__ import annotations

import random

import pytest
from corpus import constant_program, echo, relay
from oracles import NaiveKnowledge, random_formula

from cutknow.automata import Initially, Precondition, compose, make_automaton
from cutknow.epistemics import (
    CutNotInSystem, KnowledgeModel, UnresolvableConstant, check_implements, check_represents, defined_constants,
    distinguishing_cut, eval_know, initial_cut, instantiate, kb_axiom_spec, never_knows_other,
    resolve_defined_constant, two_constant_signature,
)
from cutknow.events import ConsistentCut, cut_frontiers, project
from cutknow.explorer import ExploreConfig, System, explore
from cutknow.logic import (
    Always, Eq, Eventually, Know, Lit, Lt, Not, Tabulated, Var, is_modal, translate, CUT_VAR, SYSTEM_VAR,
)
from cutknow.stp import build_stenning, build_stp_kb
from cutknow.syntax import parse_formula
from cutknow.values import OMEGA


def stenning_system(bits=1, depth=4):
    return explore(None, build_stenning(bits), ExploreConfig(depth=depth))


STP_ATOMS = [parse_formula(t) for t in (
    "(= (idx X 0) 1)", "(= (idx X 0) 0)", "(< 0 x_R)", "(< 0 x_S)", "(= Y (seq 1))",
    "(bottom? (msg l_SR))", "(= x_R 0)",
)]
ECHO_ATOMS = [parse_formula(t) for t in ("(= v 1)", "(= seen 1)", "(bottom? seen)", "(= back 0)", "(bottom? (msg ab))")]


def all_cuts(system):
    return [ConsistentCut(es, f) for es in system for f in cut_frontiers(es)]


@pytest.mark.parametrize(
    "system, atoms, agents",
    [
        (lambda: stenning_system(1, 4), STP_ATOMS, ["S", "R"]),
        (lambda: explore(None, echo(), ExploreConfig(depth=4)), ECHO_ATOMS, ["A", "B"]),
    ],
    ids=["stenning-1", "echo"],
)
def test_knowledge_agrees_with_the_definition(system, atoms, agents):
    sys = system()
    naive = NaiveKnowledge(sys)
    model = KnowledgeModel.of(sys)
    rng = random.Random(7)
    for _ in range(40):
        f = random_formula(rng, atoms, agents, 3, 4)
        for where in naive.cuts:
            cut = ConsistentCut(sys.structures[where[0]], where[1])
            assert model.holds(cut, f) == naive.holds(where, f), f


def test_translated_formulas_evaluate_the_same():
    sys = stenning_system(1, 4)
    model = KnowledgeModel.of(sys)
    rng = random.Random(3)
    for _ in range(25):
        f = random_formula(rng, STP_ATOMS, ["S", "R"], 2, 4)
        g = translate(f)
        assert not is_modal(g)
        for c in all_cuts(sys):
            env = {SYSTEM_VAR: None, CUT_VAR: (model.locate(c), c.frontier)}
            assert model.holds(c, f) == model.holds(c, g, env)


def test_receiver_does_not_know_a_bit_before_any_delivery():
    sys = stenning_system(1, 4)
    f = Know("R", Eq(parse_formula("(= (idx X 0) 1)").left, Lit(1)))
    for es in sys:
        assert not eval_know(sys, initial_cut(es), f)
    learned = [c for c in all_cuts(sys) if c.local("R")["x_R"] == 1 and c.local("R")["Y"] == (1,)]
    assert learned and all(eval_know(sys, c, f) for c in learned)


def test_knowledge_implies_truth_and_introspection():
    sys = stenning_system(1, 4)
    p = parse_formula("(= (idx X 0) 1)")
    for c in all_cuts(sys):
        if eval_know(sys, c, Know("R", p)):
            assert eval_know(sys, c, p)
            assert eval_know(sys, c, Know("R", Know("R", p)))


def test_cut_from_elsewhere_is_rejected():
    sys = stenning_system(1, 3)
    other = stenning_system(2, 3)
    with pytest.raises(CutNotInSystem):
        eval_know(sys, initial_cut(other.structures[0]), Know("R", Eq(Lit(1), Lit(1))))


def test_distinguishing_cut_witnesses_ignorance():
    sys = stenning_system(1, 4)
    f = Know("R", parse_formula("(= (idx X 0) 1)"))
    c = initial_cut(sys.structures[0])
    w = distinguishing_cut(sys, c, f)
    assert w is not None
    assert w.local("R") == c.local("R")
    assert not eval_know(sys, w, f.body)


def test_constant_programs_lose_ignorance_when_composed():
    depth = 2
    pg1, pg2 = constant_program("1"), constant_program("2")
    both = compose(pg1, pg2)
    for agent, pg in (("1", pg1), ("2", pg2)):
        sys = explore(None, pg, ExploreConfig(depth=depth))
        assert all(eval_know(sys, initial_cut(es), never_knows_other(agent)) for es in sys)
    sys = explore(None, both, ExploreConfig(depth=depth))
    for c in all_cuts(sys):
        assert eval_know(sys, c, Know("1", Eq(Var("x2"), Lit(2))))
        assert eval_know(sys, c, Know("2", Eq(Var("x1"), Lit(1))))
    assert not any(eval_know(sys, initial_cut(es), never_knows_other(a)) for es in sys for a in ("1", "2"))
    assert two_constant_signature().agents == ("1", "2")


def test_temporal_operators_range_over_extensions():
    sys = stenning_system(1, 4)
    learned = Eq(Var("x_R"), Lit(1))
    for es in sys:
        c = initial_cut(es)
        full = ConsistentCut(es, es.full_frontier())
        cuts = [ConsistentCut(es, f) for f in cut_frontiers(es)]
        assert eval_know(sys, c, Eventually(learned)) == any(eval_know(sys, d, learned) for d in cuts)
        assert eval_know(sys, c, Always(Not(learned))) == (not any(eval_know(sys, d, learned) for d in cuts))
        # the full cut has no proper extension
        assert eval_know(sys, full, Eventually(learned)) == eval_know(sys, full, learned)


def test_defined_constant_resolution():
    sys = stenning_system(1, 4)
    psi = Know("R", parse_formula("(= (idx X n) 1)"))
    for c in all_cuts(sys):
        n = resolve_defined_constant(sys, c, Not(psi), 1)
        assert n == (OMEGA if not eval_know(sys, c, psi, {"n": 0}) else 0)


def test_instantiation_reads_knowledge_over_the_system():
    kb = build_stp_kb(1)
    assert set(defined_constants(kb)) == {"c_S", "c_R"}
    sys = explore(None, build_stenning(1), ExploreConfig(depth=4))
    hidden = System(kb.signature, [project(es, kb.signature) for es in sys])
    pg = instantiate(hidden, kb)
    assert not pg.is_kb
    assert any(isinstance(y, Tabulated) for bp in pg.programs if type(bp) is Precondition for y in [bp.formula])
    assert len(pg.programs) == len(kb.programs) - 2


def test_self_referential_constants_are_reported():
    sig = two_constant_signature()
    # d is defined in terms of itself, so substitution cannot eliminate it
    kb = make_automaton(sig, [
        Initially("1", Eq(Var("d"), Var("d"))),
        Precondition("1", "t1", Lt(Var("d"), Lit(2))),
    ])
    sys = explore(None, constant_program("1"), ExploreConfig(depth=1))
    with pytest.raises(UnresolvableConstant):
        instantiate(sys, kb)


def test_implements_holds_for_stenning_and_fails_for_a_mutant():
    kb = build_stp_kb(1)
    cfg = ExploreConfig(depth=6)
    assert check_implements(None, build_stenning(1), kb, cfg).ok
    bad = check_implements(None, build_stenning(1, "skip-x_R-update"), kb, cfg)
    assert not bad.ok and bad.witness is not None
    assert "structures generated" in bad.violations[0]


def test_represents_is_false_for_a_different_system():
    kb = build_stp_kb(1)
    sys = explore(None, build_stenning(1), ExploreConfig(depth=6))
    hidden = System(kb.signature, [project(es, kb.signature) for es in sys])
    assert check_represents(None, hidden, kb, ExploreConfig(depth=6)).ok
    fewer = System(kb.signature, hidden.structures[1:])
    assert not check_represents(None, fewer, kb, ExploreConfig(depth=6)).ok


def test_knowledge_based_axioms_hold_on_a_representing_system():
    kb = build_stp_kb(1)
    sys = explore(None, build_stenning(1), ExploreConfig(depth=5))
    hidden = System(kb.signature, [project(es, kb.signature) for es in sys])
    tags = set()
    for bp in kb.programs:
        spec = kb_axiom_spec(bp, horizon=5, context=kb)
        tags.add(spec.tag)
        assert spec(hidden), spec.tag
    assert {"Ax-ifK", "Ax-causeK", "Ax-fairK", "Ax-sendsK", "Ax-initK"} <= tags


def test_relay_output_is_known_to_the_last_agent_only_after_delivery():
    sys = explore(None, relay(), ExploreConfig(depth=5, inputs={"v": (0, 1)}))
    knows = Know("C", Eq(Var("v"), Lit(1)))
    for c in all_cuts(sys):
        assert eval_know(sys, c, knows) == (c.local("C")["out"] == 1)
