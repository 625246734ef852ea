from __future__ import annotations

import io
import json
import subprocess
import sys
from importlib import resources

import pytest

from cutknow.cli import main

STENNING = str(resources.files("cutknow").joinpath("data/stenning.json"))


def run(*argv) -> tuple:
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def dumped(tmp_path_factory):
    d = tmp_path_factory.mktemp("system")
    code, text = run("explore", STENNING, "--depth", "6", "--out", str(d))
    assert code == 0, text
    return d, text


def test_no_arguments_is_a_usage_error():
    assert run()[0] == 2
    assert run("stp")[0] == 2
    assert run("frobnicate")[0] == 2
    assert run("--help")[0] == 0


def test_explore_reports_counts_and_dumps(dumped):
    d, text = dumped
    lines = dict(line.split(" ", 1) for line in text.splitlines() if " " in line)
    assert int(lines["structures"]) > 0 and lines["invalid"] == "0"
    assert (d / "signature.json").exists() and (d / "config.json").exists()
    assert len(list(d.glob("*.trace"))) == int(lines["structures"])


def test_explore_accepts_fixed_inputs():
    code, text = run("explore", STENNING, "--depth", "4", "--input", "X=(seq 1 0)")
    assert code == 0
    code, _ = run("explore", STENNING, "--input", "x_S=0")
    assert code == 2


def test_check_consistent_and_check_spec_pass_on_an_explored_system(dumped):
    d, _ = dumped
    code, text = run("check-consistent", STENNING, "--system", str(d))
    assert code == 0 and "consistent" in text
    code, text = run("check-spec", STENNING, "--system", str(d))
    assert code == 0 and "derived axioms" in text
    code, _ = run("check-spec", STENNING, "--system", str(d), "--formula", "(prefix Y X)")
    assert code == 0


def test_check_spec_reports_a_failing_formula(dumped):
    d, _ = dumped
    code, text = run("check-spec", STENNING, "--system", str(d), "--formula", "(= x_R 0)")
    assert code == 1
    assert "first failure" in text and "events" in text


def test_check_consistent_fails_against_a_mutant(dumped, tmp_path):
    d, _ = dumped
    doc = json.loads(open(STENNING).read())
    effect = next(p for p in doc["programs"] if p["program"] == "effect" and p["var"] == "x_R")
    effect["term"] = "x_R"
    mutant = tmp_path / "mutant.json"
    mutant.write_text(json.dumps(doc))
    code, text = run("check-consistent", str(mutant), "--system", str(d))
    assert code == 1 and "structure" in text


def test_eval_prints_truth_and_a_witness(dumped):
    d, _ = dumped
    f = "(K R (= (idx X 0) 1))"
    code, text = run("eval", "--system", str(d), "--cut", "0:0,0", "--formula", f, "--witness")
    assert code == 0
    assert text.splitlines()[0] == "false"
    assert any(line.startswith("witness ") for line in text.splitlines())
    assert run("eval", "--system", str(d), "--cut", "0:0,0", "--formula", f, "--expect", "true")[0] == 1
    assert run("eval", "--system", str(d), "--cut", "0:0,0", "--formula", f, "--expect", "false")[0] == 0


@pytest.mark.parametrize("cut", ["0:9,9", "0:1", "x:0,0", "99999:0,0"])
def test_eval_rejects_bad_cuts(dumped, cut):
    d, _ = dumped
    assert run("eval", "--system", str(d), "--cut", cut, "--formula", "true")[0] == 2


def test_malformed_inputs_are_usage_errors(dumped, tmp_path):
    d, _ = dumped
    assert run("eval", "--system", str(d), "--cut", "0:0,0", "--formula", "(and")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("explore", str(bad))[0] == 2
    assert run("explore", str(tmp_path / "missing.json"))[0] == 2
    assert run("explore", STENNING, "--channel", "psychic")[0] == 2
    assert run("stp", "verify", "--bits", "0")[0] == 2


def test_structure_budget_exits_3():
    assert run("explore", STENNING, "--depth", "8", "--max-structures", "3")[0] == 3


def test_cut_budget_exits_3(dumped, monkeypatch):
    d, _ = dumped
    monkeypatch.setenv("EW_BUDGET_CUTS", "1")
    assert run("check-spec", STENNING, "--system", str(d), "--formula", "(prefix Y X)")[0] == 3


def test_stp_run_prints_a_reproducible_trace():
    a = run("stp", "run", "--bits", "2", "--input", "10", "--seed", "3", "--channel", "lossy,reorder")
    b = run("stp", "run", "--inputs", "bits:2", "--input", "10", "--seed", "3", "--channel", "lossy,reorder")
    assert a[0] == 0 and a == b
    assert a[1].startswith("init S (X (seq 1 0))")
    assert run("stp", "run", "--bits", "2", "--input", "1")[0] == 2


def test_stp_verify_table_and_json():
    args = ["stp", "verify", "--bits", "1", "--depth", "6", "--seeds", "0..2", "--liveness-depth", "12"]
    code, table = run(*args)
    assert code == 0
    assert table.splitlines()[-1].split()[:2] == ["overall", "pass"]
    code, text = run(*args, "--json")
    report = json.loads(text)
    assert code == 0 and report["ok"] and report["scenario"]["seeds"] == [0, 1, 2]
    assert text == run(*args, "--json")[1]


def test_stp_verify_exits_1_when_a_bit_is_not_delivered_in_time():
    code, table = run("stp", "verify", "--bits", "2", "--depth", "6", "--seed", "0", "--liveness-depth", "4")
    assert code == 1
    assert any(line.startswith("liveness X(1)") and "FAIL" in line for line in table.splitlines())


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "cutknow"], capture_output=True, text=True)
    assert done.returncode == 2 and "usage" in done.stderr
