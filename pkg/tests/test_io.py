import json
import math

import numpy as np
import pytest

from bridgekit import io, solve
from bridgekit.errors import ParseError
from bridgekit.fixtures import figure2_fixture, random_brodinger_spec, random_chain, random_schrodinger_spec


def roundtrip(doc):
    return io.decode(json.loads(io.dumps(doc)))


def test_numbers():
    assert io.encode_number(-math.inf) == "-inf" and io.decode_number("inf") == math.inf
    assert io.encode_number(0.1) == 0.1
    with pytest.raises(ValueError):
        io.encode_number(float("nan"))
    a = np.array([[0.1, -np.inf], [1 / 3, 2.0]])
    np.testing.assert_array_equal(io.decode_array(io.encode_array(a)), a)


def test_floats_survive_bitwise():
    M = random_chain(11, 3, 4)
    back = roundtrip(io.measure_to_json(M))
    np.testing.assert_array_equal(back.init, M.init)
    for k0, k1 in zip(back.kernels, M.kernels):
        np.testing.assert_array_equal(k0, k1)
    D = M.to_dense()
    np.testing.assert_array_equal(roundtrip(io.measure_to_json(D)).weights, D.weights)
    assert roundtrip(io.measure_to_json(D)).grid == D.grid


@pytest.mark.parametrize("make", [lambda: random_schrodinger_spec(0, 3, 4, 2),
                                  lambda: random_brodinger_spec(0, 2, 4, 1)])
def test_problem_and_solution_roundtrip(make):
    spec = make()
    back = roundtrip(io.problem_to_json(spec))
    assert back.indices == spec.indices and back.has_endpoint == spec.has_endpoint
    sol = solve(spec)
    doc = io.solution_to_json(sol)
    again = roundtrip(doc)
    np.testing.assert_array_equal(again.P.weights, sol.P.weights)
    assert io.dumps(io.solution_to_json(again)) == io.dumps(doc)


def test_fixture_roundtrip():
    fx = figure2_fixture()
    back = roundtrip(io.fixture_to_json(fx))
    np.testing.assert_array_equal(back.a, fx.a)
    assert back.R.space.labels == fx.R.space.labels and back.u_idx == 2


def test_schema_errors_point_at_field():
    doc = io.problem_to_json(random_schrodinger_spec(0, 2, 3, 1))
    doc["constraints"][0]["index"] = -1
    with pytest.raises(ParseError, match="constraints/0/index"):
        io.decode(doc)
    with pytest.raises(ParseError):
        io.decode({"no": "kind"})
    with pytest.raises(ParseError):
        io.decode({"kind": "report"})


def test_semantic_errors_become_parse_errors():
    doc = io.measure_to_json(random_chain(0, 2, 3).to_dense())
    doc["shape"] = [2, 2]
    with pytest.raises(ParseError):
        io.decode(doc)
    doc = io.measure_to_json(random_chain(0, 2, 3))
    doc["kernels"][0][0] = [0.9, 0.9]
    with pytest.raises(ParseError):
        io.decode(doc)


def test_atomic_write(tmp_path):
    path = tmp_path / "out.json"
    io.write_json(str(path), {"kind": "report", "x": 1})
    assert io.read_json(str(path)) == {"kind": "report", "x": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]
    with pytest.raises(ParseError):
        io.read_json(str(tmp_path / "missing.json"))
