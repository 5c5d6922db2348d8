import json
import subprocess
import sys

import pytest

from bridgekit import io
from bridgekit.cli import main
from bridgekit.fixtures import random_chain, random_reciprocal


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return json.loads(path.read_text())


def test_fixture_list_and_export(workdir, capsys):
    assert run("fixture", "list") == 0
    names = json.loads(capsys.readouterr().out)["fixtures"]
    assert {"figure2", "figure3", "schrodinger_instance", "brodinger_instance"} <= set(names)
    assert run("fixture", "export", "--fixture-name", "nope") == 2


def test_solve_decompose_check_pipeline(workdir):
    assert run("fixture", "export", "--fixture-name", "schrodinger_instance", "--seed", 3,
               "--output", "p.json") == 0
    assert run("solve", "--input", "p.json", "--output", "s.json", "--quiet") == 0
    sol = read(workdir / "s.json")
    assert sol["converged"] and sol["kind"] == "solution"
    assert run("decompose", "--input", "s.json", "--output", "d.json") == 0
    assert io.decode_number(read(workdir / "d.json")["reconstruction_residual"]) <= 1e-9
    assert run("check", "--property", "markov", "--input", "s.json", "--output", "c.json") == 0
    assert read(workdir / "c.json")["holds"] is True


def test_solve_is_byte_identical(workdir):
    run("fixture", "export", "--fixture-name", "brodinger_instance", "--output", "p.json")
    run("solve", "--input", "p.json", "--output", "a.json", "--quiet")
    run("solve", "--input", "p.json", "--output", "b.json", "--quiet")
    assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
    assert run("solve", "--input", "p.json", "--lambda", "1/2", "--output", "c.json", "--quiet") == 0


def test_streams_cycles_to_stderr(workdir, capsys):
    run("fixture", "export", "--fixture-name", "schrodinger_instance", "--output", "p.json")
    run("solve", "--input", "p.json", "--output", "s.json")
    lines = [json.loads(x) for x in capsys.readouterr().err.splitlines()]
    assert lines and lines[0]["cycle"] == 1


@pytest.mark.parametrize("name", ["figure2", "figure3"])
def test_decompose_counterexamples_exit_1(workdir, name):
    run("fixture", "export", "--fixture-name", name, "--output", "f.json")
    assert run("decompose", "--input", "f.json", "--output", "r.json") == 1
    rep = read(workdir / "r.json")
    assert rep["feasible"] is False and rep["certificate_valid"] is True


def test_check_exit_codes(workdir):
    io.write_json("m.json", io.measure_to_json(random_chain(0, 2, 4)))
    io.write_json("q.json", io.measure_to_json(random_reciprocal(0, 2, 4)))
    assert run("check", "--property", "markov", "--input", "m.json", "--output", "o.json") == 0
    assert run("check", "--property", "markov", "--input", "q.json", "--output", "o.json") == 1
    assert run("check", "--property", "reciprocal", "--input", "q.json", "--output", "o.json") == 0
    run("fixture", "export", "--fixture-name", "figure3", "--output", "f3.json")
    assert run("check", "--property", "irreducible", "--input", "f3.json", "--output", "o.json") == 1
    assert read(workdir / "o.json")["witness"]["time_indices"]


def test_input_errors_exit_2(workdir, capsys):
    (workdir / "bad.json").write_text('{"kind": "problem"}')
    assert run("solve", "--input", "bad.json") == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ParseError"
    assert run("solve", "--input", "missing.json") == 2
    assert run("solve") == 2
    assert run("solve", "--input", "bad.json", "--tol", "-1") == 2


def test_infeasible_exits_1_with_witness(workdir):
    from bridgekit import Constraint, ProblemSpec
    from .conftest import chain

    k = [[1.0, 0.0], [0.0, 1.0]]
    spec = ProblemSpec(chain([0.5, 0.5], [k]), (Constraint(0, [0.7, 0.3]), Constraint(1, [0.3, 0.7])))
    io.write_json("p.json", io.problem_to_json(spec))
    assert run("solve", "--input", "p.json", "--output", "o.json") == 1
    assert read(workdir / "o.json")["error"] == "InfeasibleProblem"


def test_size_guard(workdir, monkeypatch):
    io.write_json("m.json", io.measure_to_json(random_chain(0, 3, 6)))
    assert run("check", "--property", "markov", "--input", "m.json", "--size-guard", 10) == 2
    monkeypatch.setenv("BRIDGEKIT_SIZE_GUARD", "10")
    assert run("check", "--property", "markov", "--input", "m.json") == 2


def test_oracle_cross_check(workdir):
    run("fixture", "export", "--fixture-name", "schrodinger_instance", "--output", "p.json")
    assert run("oracle", "--input", "p.json", "--output", "o.json") == 0
    assert read(workdir / "o.json")["cross_check"]["agree"] is True


def test_module_entry_point(workdir):
    out = subprocess.run([sys.executable, "-m", "bridgekit.cli", "fixture", "list"],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0 and "figure2" in out.stdout
