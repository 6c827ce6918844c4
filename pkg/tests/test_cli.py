from __future__ import annotations

import json
import os
import subprocess
import sys
from dataclasses import replace
from fractions import Fraction as F

import pytest

from surfgerm.cli import (
    EXIT_FIELD,
    EXIT_INPUT,
    EXIT_INVARIANT,
    EXIT_OK,
    SEED_ENV,
    branches_to_json,
    corpus,
    d5_generic_branches,
    d5_graph,
    d5_resolved_graph,
    main,
    run_verify,
    two_branch_family,
)


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def d5_poly(tmp_path):
    return write(tmp_path / "d5.json", [[2, 1, 1], [0, 4, 1]])


# --- branches --------------------------------------------------------------------

def test_branches_d5(capsys, d5_poly):
    code, out, _ = run(capsys, "branches", d5_poly)
    assert code == EXIT_OK
    assert len(json.loads(out)["branches"]) == 2


@pytest.mark.parametrize("terms,count", [([[0, 2, 1], [3, 0, -1]], 1), ([[0, 1, 1]], 1)], ids=["cusp", "line"])
def test_branches_small(capsys, tmp_path, terms, count):
    code, out, _ = run(capsys, "branches", write(tmp_path / "f.json", terms))
    assert code == EXIT_OK and len(json.loads(out)["branches"]) == count


def test_branches_sqrt2_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "branches", write(tmp_path / "f.json", [[0, 2, 1], [2, 0, -2]]))
    assert code == EXIT_FIELD and "cyclotomic" in err


def test_branches_not_squarefree(capsys, tmp_path):
    code, _, _ = run(capsys, "branches", write(tmp_path / "f.json", [[0, 2, 1], [1, 1, -2], [2, 0, 1]]))
    assert code == EXIT_INPUT


def test_branches_genericize_pipeline(capsys, d5_poly, tmp_path):
    code, out, _ = run(capsys, "branches", "--genericize", d5_poly)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert "polynomial" in doc
    kinds = [b["ramification"] for b in doc["branches"]]
    assert sorted(kinds) == [1, 2]
    bfile = write(tmp_path / "b.json", doc)
    rates = write(tmp_path / "r.json", {str(i): ("5/2" if n > 1 else "2") for i, n in enumerate(kinds)})
    code, out, _ = run(capsys, "carrousel", bfile, "--mode", "complete", "--polar-rates", rates)
    assert code == EXIT_OK
    # same seed, same coordinates
    assert run(capsys, "branches", "--genericize", d5_poly)[1] == json.dumps(doc, indent=2) + "\n"


def test_raw_d5_branches_are_not_generic(capsys, d5_poly, tmp_path):
    _, out, _ = run(capsys, "branches", d5_poly)
    assert run(capsys, "carrousel", write(tmp_path / "b.json", json.loads(out)))[0] == EXIT_INPUT


def test_missing_file(capsys, tmp_path):
    assert run(capsys, "branches", str(tmp_path / "nope.json"))[0] == EXIT_INPUT


def test_malformed_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(capsys, "branches", str(p))[0] == EXIT_INPUT


def test_usage_error_is_bad_input(capsys):
    assert run(capsys, "carrousel")[0] == EXIT_INPUT
    assert run(capsys, "no-such-command")[0] == EXIT_INPUT


# --- polar rates ------------------------------------------------------------------

def _rates(out):
    return sorted(F(r["s"]) for r in json.loads(out)["reports"])


def test_polar_rates_d5(capsys, d5_poly):
    code, out, _ = run(capsys, "polar-rates", d5_poly)
    assert code == EXIT_OK and _rates(out) == [F(2), F(5, 2)]


def test_polar_rates_a1(capsys, tmp_path):
    code, out, _ = run(capsys, "polar-rates", write(tmp_path / "a1.json", [[1, 1, 1]]))
    assert code == EXIT_OK and _rates(out) == [1, 1]


def test_polar_rates_cusp_single_report(capsys, tmp_path):
    code, out, _ = run(capsys, "polar-rates", write(tmp_path / "c.json", [[0, 2, 1], [3, 0, -1]]))
    assert code == EXIT_OK and _rates(out) == [F(3, 2)]


def test_polar_rates_jobs_identical(capsys, d5_poly):
    _, serial, _ = run(capsys, "polar-rates", d5_poly)
    _, parallel, _ = run(capsys, "--jobs", "2", "polar-rates", d5_poly)
    assert serial == parallel


# --- carrousel and contacts -----------------------------------------------------------

@pytest.fixture
def two_branch_file(tmp_path):
    return write(tmp_path / "two.json", branches_to_json(two_branch_family()))


@pytest.fixture
def d5_branch_file(tmp_path):
    return write(tmp_path / "d5b.json", branches_to_json(d5_generic_branches()))


def test_carrousel_plain(capsys, two_branch_file, tmp_path):
    svg, dot, png = tmp_path / "t.svg", tmp_path / "t.dot", tmp_path / "t.png"
    code, out, _ = run(capsys, "carrousel", two_branch_file, "--svg", str(svg), "--dot", str(dot), "--png", str(png))
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["mode"] == "plain" and doc["tree"]["kind"] == "CONE"
    assert svg.read_text().count("<circle") == dot.read_text().count("[label=")
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_carrousel_complete_d5(capsys, d5_branch_file, tmp_path):
    bs = d5_generic_branches()
    rates = write(tmp_path / "r.json", {str(i): ("5/2" if b.ramification > 1 else "2") for i, b in enumerate(bs)})
    code, out, _ = run(capsys, "carrousel", d5_branch_file, "--mode", "complete", "--polar-rates", rates)
    assert code == EXIT_OK
    tree = json.loads(out)["tree"]

    def wedges(node):
        own = 1 if "is_delta_wedge" in node["flags"] else 0
        return own + sum(wedges(c) for c in node["children"])

    assert wedges(tree) == 3


def test_carrousel_complete_needs_rates(capsys, d5_branch_file):
    assert run(capsys, "carrousel", d5_branch_file, "--mode", "complete")[0] == EXIT_INPUT


def test_carrousel_empty(capsys, tmp_path):
    code, out, _ = run(capsys, "carrousel", write(tmp_path / "e.json", {"branches": []}))
    assert code == EXIT_OK
    assert json.loads(out)["tree"]["children"] == []


def test_contacts(capsys, d5_branch_file):
    code, out, _ = run(capsys, "contacts", d5_branch_file)
    assert code == EXIT_OK and json.loads(out)["size"] == 3
    code, out, _ = run(capsys, "contacts", d5_branch_file, "--reconstruct")
    assert code == EXIT_OK and json.loads(out)["tree"]["kind"] == "CONE"


# --- resolution ------------------------------------------------------------------------

def test_resolution_d5(capsys, tmp_path):
    g = write(tmp_path / "g.json", d5_graph().to_json())
    code, out, _ = run(capsys, "resolution", g, "--mult")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["multiplicity"] == 2 and list(doc["cycle"].values()) == [1, 2, 2, 1, 1]
    code, out, _ = run(capsys, "resolution", g, "--solve", "h")
    assert list(json.loads(out)["cycle"].values()) == [1, 2, 2, 1, 1]


def test_resolution_spec_file_format(capsys, tmp_path):
    g = write(tmp_path / "g.json", {"vertices": [{"euler": -2, "genus": 0}] * 5,
                                    "edges": [[0, 1], [1, 2], [2, 3], [4, 1]], "arrows": {"h": {"2": 1}}})
    code, out, _ = run(capsys, "resolution", g, "--mult")
    assert code == EXIT_OK and json.loads(out)["multiplicity"] == 2


def test_resolution_classify_and_decompose(capsys, tmp_path):
    g = write(tmp_path / "g.json", d5_resolved_graph().to_json())
    rates = write(tmp_path / "r.json", {"v1": "3/2", "v2": "3/2", "v3": "1", "v4": "2", "v5": "3/2", "v6": "5/2"})
    dot = tmp_path / "g.dot"
    code, out, _ = run(capsys, "resolution", g, "--classify", "--decompose", rates, "--dot", str(dot))
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["classification"]["p_nodes"] == ["v4", "v6"]
    assert len(doc["pieces"]) == 7
    assert "q=5/2" in dot.read_text()


def test_resolution_not_negative_definite(capsys, tmp_path):
    g = write(tmp_path / "g.json", {"vertices": [{"euler": -1}, {"euler": -1}], "edges": [[0, 1]]})
    assert run(capsys, "resolution", g, "--mult")[0] == EXIT_INPUT


def test_resolution_non_integral_is_invariant_violation(capsys, tmp_path):
    g = write(tmp_path / "g.json", d5_graph().to_json())
    g2 = json.loads(open(g).read())
    g2["arrows"] = {"h": {"0": 1}}
    assert run(capsys, "resolution", write(tmp_path / "g2.json", g2), "--mult")[0] == EXIT_INVARIANT


# --- verify ------------------------------------------------------------------------------

def test_verify_list(capsys):
    code, out, _ = run(capsys, "verify", "--list")
    assert code == EXIT_OK
    names = [line.split("\t")[0] for line in out.splitlines()]
    assert names == [c.name for c in corpus()]


def test_verify_single_case(capsys):
    code, out, _ = run(capsys, "verify", "--case", "probe-round-trip")
    assert code == EXIT_OK
    assert out.splitlines()[-1] == "summary: 1/1 passed (seed=0)"


def test_verify_unknown_case(capsys):
    assert run(capsys, "verify", "--case", "nope")[0] == EXIT_INPUT


def test_verify_corrupted_fixture_is_named():
    case = next(c for c in corpus() if c.name == "d5-hyperplane-cycle")
    bad = replace(case, expected={"cycle": (1, 2, 2, 1, 2), "multiplicity": 2})
    text, ok = run_verify(0, [bad])
    assert not ok
    assert text.startswith("FAIL [ 2] d5-hyperplane-cycle: mismatch")


def test_env_seed_overrides_flag(capsys, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "7")
    code, out, _ = run(capsys, "--seed", "3", "verify", "--case", "probe-round-trip")
    assert code == EXIT_OK and "(seed=7)" in out
    monkeypatch.setenv(SEED_ENV, "seven")
    assert run(capsys, "verify", "--case", "probe-round-trip")[0] == EXIT_INPUT


def test_verify_jobs_identical():
    cases = [c for c in corpus() if c.name in ("hurwitz-counts", "probe-round-trip", "d5-polar-rates")]
    assert run_verify(5, cases, jobs=1) == run_verify(5, cases, jobs=2)


def test_output_flag(capsys, tmp_path, d5_poly):
    out = tmp_path / "out.json"
    assert run(capsys, "-o", str(out), "branches", d5_poly)[0] == EXIT_OK
    assert len(json.loads(out.read_text())["branches"]) == 2


def test_module_entry_point(d5_poly):
    env = dict(os.environ)
    env.pop(SEED_ENV, None)
    r = subprocess.run([sys.executable, "-m", "surfgerm", "polar-rates", d5_poly],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0
    assert sorted(F(x["s"]) for x in json.loads(r.stdout)["reports"]) == [F(2), F(5, 2)]
