from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path

import pytest

from cutknow.automata import consistent
from cutknow.events import canonical_key, validate
from cutknow.explorer import ChannelModel, ExploreConfig, System, explore
from cutknow.formats import (
    FormatError, UnknownSymbol, automaton_from_json, automaton_to_json, dump_system, dumps_json, load_system,
    read_trace, scenario_from_json, scenario_to_json, signature_from_json, signature_to_json, stp_verdict_to_json,
    write_trace,
)
from cutknow.stp import StpScenario, build_stenning, build_stp_kb, verify_stp
from cutknow.syntax import ParseError

DOC = Path(__file__).resolve().parent.parent / "docs" / "formats.md"


def doc_examples() -> dict:
    text = DOC.read_text()
    return dict(re.findall(r"<!-- example: ([\w-]+) -->\n```\w+\n(.*?)```", text, re.S))


def shipped(name: str) -> dict:
    return json.loads(resources.files("cutknow").joinpath(f"data/{name}").read_text())


def test_shipped_automata_match_the_builders():
    assert shipped("stenning.json") == automaton_to_json(build_stenning(2))
    assert shipped("stp_kb.json") == automaton_to_json(build_stp_kb(2))
    assert automaton_from_json(shipped("stenning.json")) == build_stenning(2)
    assert automaton_from_json(shipped("stp_kb.json")).is_kb


@pytest.mark.parametrize("mutation", [None, "reset-x_S", "ignore-requests"])
def test_automaton_json_round_trips(mutation):
    pg = build_stenning(2, mutation)
    doc = automaton_to_json(pg)
    assert automaton_from_json(json.loads(dumps_json(doc))) == pg
    assert dumps_json(doc) == dumps_json(automaton_to_json(automaton_from_json(doc)))


def test_signature_json_round_trips():
    sig = build_stenning(1).signature
    assert signature_from_json(signature_to_json(sig)) == sig


def test_json_text_is_deterministic():
    text = dumps_json({"b": [1, 2], "a": {"d": None, "c": True}})
    assert text == '{\n  "a": {\n    "c": true,\n    "d": null\n  },\n  "b": [\n    1,\n    2\n  ]\n}\n'


def broken(path: list, value):
    doc = automaton_to_json(build_stenning(1))
    target = doc
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    return doc


@pytest.mark.parametrize(
    "path, value, field, suggestion",
    [
        (["programs", 0, "agent"], "SS", "programs[0].agent", "S"),
        (["programs", 0, "formula"], "(< x_Q 1)", "programs[0].formula", "x_S"),
        (["programs", 0, "action"], "a_T", "programs[0].action", "a_S"),
        (["programs", 8, "program"], "initialy", "programs[8].program", "initially"),
        (["links", 0, "dest"], "Q", "links[0].dest", None),
    ],
)
def test_unknown_names_are_reported_with_suggestions(path, value, field, suggestion):
    doc = broken(path, value)
    with pytest.raises(UnknownSymbol) as info:
        automaton_from_json(doc)
    assert info.value.field == field
    if suggestion is not None:
        assert suggestion in info.value.suggestions
        assert "did you mean" in str(info.value)


def test_unknown_functions_are_reported():
    doc = broken(["programs", 0, "formula"], "(= (suc x_S) 1)")
    with pytest.raises(UnknownSymbol) as info:
        automaton_from_json(doc)
    assert "succ" in info.value.suggestions


def test_malformed_fields_name_their_place():
    with pytest.raises(FormatError) as info:
        automaton_from_json(broken(["programs", 0, "formula"], "(< x_S"))
    assert info.value.field == "programs[0].formula"
    assert isinstance(info.value, ParseError)
    with pytest.raises(FormatError) as info:
        automaton_from_json(broken(["vars", "S", 0, "type"], "(bits many)"))
    assert "vars.S" in str(info.value)
    with pytest.raises(FormatError):
        automaton_from_json({"links": []})


def test_defined_constants_need_no_declaration():
    doc = automaton_to_json(build_stp_kb(1))
    assert automaton_from_json(doc) == build_stp_kb(1)


def test_traces_round_trip_on_lossy_reordering_systems():
    pg = build_stenning(1)
    system = explore(None, pg, ExploreConfig(depth=6, channel=ChannelModel(lossy=True, reorder=True)))
    for es in system:
        back = read_trace(write_trace(es), pg.signature)
        assert canonical_key(back) == canonical_key(es)
        assert write_trace(back) == write_trace(es)


@pytest.mark.parametrize(
    "edit, line",
    [
        (lambda t: t.replace("1 B rcv", "7 B rcv"), 6),
        (lambda t: t.replace("0 A local", "0 Q local"), 5),
        (lambda t: t.replace("1 -> 0", "1 => 0"), 8),
        (lambda t: t.replace("(got 1)", "(got 1"), 6),
        (lambda t: t.replace("local:go", "jump:go"), 5),
    ],
)
def test_malformed_traces_name_the_line(edit, line):
    ex = doc_examples()
    pg = automaton_from_json(json.loads(ex["automaton"]))
    bad = edit(ex["trace"])
    with pytest.raises(FormatError) as info:
        read_trace(bad, pg.signature)
    assert f"line {line}" in str(info.value)


def test_documented_examples_are_valid():
    ex = doc_examples()
    assert set(ex) == {"automaton", "trace", "report-keys"}
    pg = automaton_from_json(json.loads(ex["automaton"]))
    es = read_trace(ex["trace"], pg.signature)
    assert validate(es) == [] and consistent(None, pg, es).ok
    explored = {write_trace(x) for x in explore(None, pg, ExploreConfig(depth=2))}
    assert write_trace(es) in explored


def test_documented_report_keys_match_the_report():
    keys = set(json.loads(doc_examples()["report-keys"]))
    verdict = verify_stp(StpScenario(bits=1, depth=4, seeds=(0,), liveness_depth=8))
    assert set(stp_verdict_to_json(verdict)) == keys


def test_system_directories_round_trip(tmp_path):
    pg = build_stenning(1)
    cfg = ExploreConfig(depth=5, window=3)
    system = explore(None, pg, cfg)
    paths = dump_system(system, tmp_path)
    assert paths[0].name == "signature.json" and paths[1].name == "config.json"
    back = load_system(tmp_path)
    assert back.keys() == system.keys()
    assert back.config.depth == 5 and back.config.window == 3


def test_system_directories_without_config(tmp_path):
    pg = build_stenning(1)
    system = explore(None, pg, ExploreConfig(depth=3))
    dump_system(System(system.signature, system.structures), tmp_path)
    assert load_system(tmp_path).config is None
    with pytest.raises(FormatError):
        load_system(tmp_path / "missing")


def test_scenarios_round_trip_and_reject_unknown_fields():
    sc = StpScenario(bits=3, channel="lossy", seeds=(1, 2))
    assert scenario_from_json(json.loads(dumps_json(scenario_to_json(sc)))) == sc
    with pytest.raises(UnknownSymbol) as info:
        scenario_from_json({"bitz": 2})
    assert "bits" in info.value.suggestions
    with pytest.raises(FormatError):
        scenario_from_json({"bits": 0})
