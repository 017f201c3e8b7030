"""End-to-end tests of the command line interface, run in-process."""

import contextlib
import io
import json
import os
from pathlib import Path

import pytest

from jacobisigma import algebroid as alg
from jacobisigma.cli import main, parse_structure, _algebroid_dev

ROOT = Path(__file__).resolve().parents[1]
KW = dict(tol=1e-9, trials=64, seed=0x1AC0B1)


def fixture(rel):
    return str(ROOT / rel)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


# ------------------------------------------------------------------ check


def test_check_contact_passes():
    code, out, err = run("check", fixture("structures/contact-k1.ini"))
    assert code == 0, out + err
    assert "PASS" in out
    assert "jacobi" in out


def test_check_almost_poisson_fails_with_witness():
    code, out, err = run("check", fixture("structures/almost-poisson.ini"))
    assert code == 1, out + err
    assert "FAIL" in out
    lines = [l for l in out.splitlines() if "witness" in l]
    assert lines, out


def test_check_atlas_passes():
    code, out, err = run("check", fixture("structures/moebius-atlas.ini"))
    assert code == 0, out + err


def test_check_handwritten_table_is_not_lie():
    code, out, err = run("check", fixture("structures/a10-algebroid.ini"))
    assert code == 1, out + err
    assert any("lie" in l for l in out.splitlines())


def test_check_bad_inputs_exit_2(tmp_path):
    code, out, err = run("check", str(tmp_path / "nope.ini"))
    assert code == 2
    assert err.strip()
    empty = tmp_path / "empty.ini"
    empty.write_text("")
    code, out, err = run("check", str(empty))
    assert code == 2
    assert err.strip()


# ----------------------------------------------------------------- derive


def test_derive_chain_and_round_trips(tmp_path):
    cp = str(tmp_path / "contact-poisson.ini")
    rep = str(tmp_path / "derive.json")
    code, out, err = run("derive", fixture("structures/contact-k1.ini"),
                         "--what", "poissonize", "-o", cp, "--json", rep)
    assert code == 0, out + err
    data = json.loads(Path(rep).read_text())
    assert data["ok"] is True
    assert data["checks"]["round_trip"]["ok"] is True
    assert data["checks"]["poisson_bracket"]["ok"] is True
    assert data["checks"]["homogeneity_degree_-1"]["ok"] is True

    # the emitted file parses and passes its own check
    code, out, err = run("check", cp)
    assert code == 0, out + err

    cl = str(tmp_path / "contact-lift.ini")
    code, out, err = run("derive", cp, "--what", "lift", "-o", cl)
    assert code == 0, out + err

    apl = str(tmp_path / "ap-lift.ini")
    code, out, err = run("derive", fixture("structures/almost-poisson.ini"),
                         "--what", "lift", "-o", apl)
    assert code == 0, out + err

    a10 = str(tmp_path / "a10-derived.ini")
    rep2 = str(tmp_path / "alg.json")
    code, out, err = run("derive", apl, "--what", "algebroid", "-o", a10,
                         "--json", rep2)
    assert code == 0, out + err
    data2 = json.loads(Path(rep2).read_text())
    assert data2["checks"]["round_trip"]["ok"] is True
    # the extracted table is informational here: it is not a Lie algebroid
    assert data2["checks"]["lie"]["is_lie"] is False

    # derived table agrees with the handwritten fixture up to generator names
    _, A1 = parse_structure(a10)
    _, A2 = parse_structure(fixture("structures/a10-algebroid.ini"))
    ren = dict(zip(A1.generators, A2.generators))
    A1r = alg.AlgebroidStructure.build(
        A1.base, A2.generators,
        {ren[g]: row for g, row in A1.anchor.items()},
        {(ren[a], ren[b]): {ren[k]: v for k, v in row.items()}
         for (a, b), row in A1.c.items()})
    assert _algebroid_dev(A1r, A2, KW) <= 1e-12


def test_derive_rejects_wrong_kind():
    code, out, err = run("derive", fixture("structures/almost-poisson.ini"),
                         "--what", "poissonize")
    assert code == 2
    assert err.strip()
    code, out, err = run("derive", fixture("structures/contact-k1.ini"),
                         "--what", "algebroid")
    assert code == 2


# ----------------------------------------------------------------- verify


def test_verify_reduced_null_solution():
    code, out, err = run("verify", fixture("structures/moebius.ini"),
                         fixture("fields/moebius-null.ini"))
    assert code == 0, out + err
    assert "d0phi_constraint" in out


def test_verify_contact_solution():
    code, out, err = run("verify", fixture("structures/contact-k1.ini"),
                         fixture("fields/contact-k1-solution.ini"))
    assert code == 0, out + err


def test_verify_with_grid_adds_discrete_norms():
    code, out, err = run("verify", fixture("structures/contact-k1.ini"),
                         fixture("fields/contact-k1-solution.ini"),
                         "--grid", "33x33")
    assert code == 0, out + err
    assert "el_residual_grid" in out


def test_verify_morphism_against_algebroid():
    code, out, err = run("verify", fixture("structures/a10-algebroid.ini"),
                         fixture("fields/family1.ini"))
    assert code == 0, out + err


def test_verify_rejections():
    code, out, err = run("verify", fixture("structures/moebius-atlas.ini"),
                         fixture("fields/moebius-null.ini"))
    assert code == 2
    code, out, err = run("verify", fixture("structures/contact-k1.ini"),
                         fixture("fields/contact-k1-solution.ini"),
                         "--grid", "bogus")
    assert code == 2


def test_verify_wrong_variant_fails():
    code, out, err = run("verify", fixture("structures/contact-k1.ini"),
                         fixture("fields/contact-k1-solution.ini"),
                         "--variant", "reduced")
    assert code == 1, out + err


# ---------------------------------------------------------------- example


@pytest.mark.parametrize("name", ["contact-k", "moebius",
                                  "almost-poisson-family1",
                                  "almost-poisson-family2", "ex1-groupoid"])
def test_examples_pass(name):
    code, out, err = run("example", name)
    assert code == 0, out + err
    assert "PASS" in out


def test_example_holonomy_demo():
    code, out, err = run("example", "contact-k")
    assert code == 0
    assert any("holonomy" in l for l in out.splitlines())


def test_example_unknown_name():
    code, out, err = run("example", "wat")
    assert code == 2
    assert err.strip()


# ------------------------------------------------------------ reports


def test_json_reports_are_deterministic(tmp_path):
    j1, j2 = str(tmp_path / "r1.json"), str(tmp_path / "r2.json")
    assert run("example", "contact-k", "--json", j1, "--seed", "7")[0] == 0
    assert run("example", "contact-k", "--json", j2, "--seed", "7")[0] == 0
    b1 = Path(j1).read_bytes()
    b2 = Path(j2).read_bytes()
    assert b1 == b2
    rep = json.loads(b1)
    assert rep["ok"] is True
    assert rep["settings"]["seed"] == 7
    # timing lives in the rendered text only, never in the report
    assert "seconds" not in json.dumps(rep)


def test_json_written_even_on_failure(tmp_path):
    j = str(tmp_path / "fail.json")
    code, out, err = run("check", fixture("structures/almost-poisson.ini"),
                         "--json", j)
    assert code == 1
    rep = json.loads(Path(j).read_text())
    assert rep["ok"] is False
    assert rep["command"] == "check"


def test_text_report_carries_settings_line():
    code, out, err = run("check", fixture("structures/contact-k1.ini"),
                         "--seed", "11", "--trials", "32")
    assert code == 0
    tail = out.strip().splitlines()[-1]
    assert "seed=11" in tail and "trials=32" in tail and " s)" in tail
