from __future__ import annotations

import pytest

from cutknow.events import validate
from cutknow.explorer import ChannelModel, ExploreConfig, explore
from cutknow.stp import (
    MUTATIONS, PSI_CONDITIONS, XR, XS, Y, IndexOutOfRange, PsiWitness, StpError, StpScenario, build_stenning,
    build_stp_kb, check_correspondence, check_psi_conditions, check_safety, eager_system, fair_system,
    lossless_bound, message_depth, stp_spec_kb, stp_spec_safety, verify_stp,
)

# the conditions each mutant is expected to break
MUTANT_PSI = {
    "skip-x_R-update": {"Rcv(phi_R,phi_S,l_SR)"},
    "decrement-x_R": {"Stable(phi_R)", "Rcv(phi_R,phi_S,l_SR)"},
    "reset-x_S": {"Stable(phi_S)", "Rcv(phi_S,phi_R,l_RS)"},
    "overshoot-x_S": {"Implies(phi_S,phi_R)", "Rcv(phi_R,phi_S,l_SR)"},
    "ignore-requests": {"Rcv(phi_S,phi_R,l_RS)"},
}


def witness_site(name: str) -> tuple:
    """(agent, kind prefix) of the event a failed condition must point at."""
    if name.startswith("Rcv("):
        link = name.rstrip(")").split(",")[-1]
        return ("R" if link == "l_SR" else "S"), f"rcv:{link}"
    if name == "Stable(phi_R)":
        return "R", ""
    return "S", ""


@pytest.fixture(scope="module")
def explored():
    cache = {}

    def get(mutation=None, depth=8):
        key = (mutation, depth)
        if key not in cache:
            cfg = ExploreConfig(depth=depth)
            cache[key] = (explore(None, build_stenning(2, mutation), cfg), cfg)
        return cache[key]

    return get


def test_scenario_rejects_degenerate_shapes():
    with pytest.raises(StpError):
        StpScenario(bits=0)
    with pytest.raises(StpError):
        StpScenario(action_s="a", action_r="a")
    with pytest.raises(StpError):
        StpScenario(link_sr="l", link_rs="l")
    with pytest.raises(StpError):
        build_stenning(1, "skip-bit-1")


def test_the_program_and_its_knowledge_based_form_share_a_signature_minus_counters():
    pg, kb = build_stenning(2), build_stp_kb(2)
    assert not pg.is_kb and kb.is_kb
    names = set(kb.signature.names("S")) | set(kb.signature.names("R"))
    assert XS not in names and XR not in names
    assert names < set(pg.signature.names("S")) | set(pg.signature.names("R"))


def test_safety_holds_on_lossy_reordering_links():
    cfg = ExploreConfig(depth=10, channel=ChannelModel(lossy=True, reorder=True, dup=True))
    result = check_safety(build_stenning(2), cfg)
    assert result.ok and result.complete and result.states > 0


@pytest.mark.parametrize("mutation", ["skip-x_R-update", "decrement-x_R"])
def test_safety_catches_receivers_that_write_the_wrong_slot(mutation):
    result = check_safety(build_stenning(2, mutation), ExploreConfig(depth=8))
    assert not result.ok
    last = result.counterexample[-1][1]
    assert any(Y in st.names for st in last)


def test_structure_level_safety_agrees_with_state_search(explored):
    system, _ = explored()
    assert all(stp_spec_safety(es).ok and validate(es) == [] for es in system)
    bad, _ = explored("skip-x_R-update")
    misses = [stp_spec_safety(es) for es in bad]
    assert any(not v.ok for v in misses)
    assert all(v.witness is not None for v in misses if not v.ok)


def test_correspondence_holds_only_for_the_correct_program(explored):
    system, _ = explored()
    assert check_correspondence(system).ok
    for mutation in MUTANT_PSI:
        assert not check_correspondence(explored(mutation)[0]).ok, mutation


def test_psi_conditions_hold_for_the_correct_program(explored):
    system, cfg = explored()
    verdicts = check_psi_conditions(system, cfg)
    assert set(verdicts) == set(PSI_CONDITIONS)
    assert all(v.ok for v in verdicts.values())


@pytest.mark.parametrize("mutation", sorted(MUTANT_PSI))
def test_each_mutant_breaks_its_psi_conditions(explored, mutation):
    expected = MUTANT_PSI[mutation]
    system, cfg = explored(mutation)
    verdicts = check_psi_conditions(system, cfg)
    failed = {name for name, v in verdicts.items() if not v.ok}
    assert failed == expected
    for name in failed:
        w = verdicts[name].witness
        assert isinstance(w, PsiWitness)
        agent, kind = witness_site(name)
        assert w.agent == agent and w.kind.startswith(kind), (name, str(w))
        es = system.structures[w.structure]
        assert w.event in es.events and es.events[w.event].agent == w.agent


def test_a_sender_that_stops_early_never_delivers_the_later_bit():
    cfg = ExploreConfig(depth=16, window=4)
    fair = fair_system(build_stenning(2, "skip-bit-1"), cfg, range(4))
    assert stp_spec_kb(fair, 0).ok
    miss = stp_spec_kb(fair, 1)
    assert not miss.ok and "X(1)" in miss.violations[0]


def test_fair_runs_deliver_every_bit_when_long_enough():
    fair = fair_system(build_stenning(2), ExploreConfig(depth=16, window=4), range(4))
    assert len(fair) == 4 * 4
    assert all(stp_spec_kb(fair, n).ok for n in range(2))
    with pytest.raises(IndexOutOfRange):
        stp_spec_kb(fair, 2)


def test_eager_runs_cover_every_input():
    system = eager_system(build_stenning(2), ExploreConfig(depth=12))
    assert sorted(es.initstate["S"]["X"] for es in system) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for es in system:
        assert es.state_at("R", len(es.order["R"]))[Y] == es.initstate["S"]["X"]


def test_message_depth_counts_hops_on_the_longest_chain():
    (es, *_) = eager_system(build_stenning(1), ExploreConfig(depth=4))
    md = message_depth(es)
    first_s, first_r = es.order["S"][0], es.order["R"][0]
    assert md[first_s] == 0
    assert md[first_r] == (1 if first_r in es.send else 0)


def test_lossless_bit_delivery_stays_within_the_round_trip_bound():
    report = lossless_bound(3)
    assert [b.bound for b in report] == [3, 5, 7]
    for b in report:
        assert b.ok and len(b.depths) == 8
        assert all(d == 2 * b.bit + 1 for d in b.depths)


def test_verify_combines_every_check():
    sc = StpScenario(bits=1, depth=8, seeds=(0, 1, 2), liveness_depth=12)
    verdict = verify_stp(sc)
    assert verdict.ok and not verdict.partial
    assert set(verdict.liveness) == {0}
    assert verdict.safety.complete and verdict.implements.ok


def test_every_mutation_builds_a_standard_program():
    for mutation in MUTATIONS:
        pg = build_stenning(2, mutation)
        assert not pg.is_kb
    with pytest.raises(StpError):
        build_stenning(2, "no-such-mutation")
