"""JSON documents for measures, problems, solutions and reports.

Numbers are plain JSON floats (Python's shortest round-trip repr), ``-inf``
is the string ``"-inf"`` and grid times are exact fractions such as
``"1/4"``. Every document carries a ``kind`` and is validated against the
matching schema in :data:`SCHEMAS` before it is decoded.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from fractions import Fraction

import jsonschema
import numpy as np

from .additive import Potentials
from .errors import BridgekitError, ParseError
from .measure import DensePathMeasure, MarkovPathMeasure, StateSpace, TimeGrid

_number = {"oneOf": [{"type": "number"}, {"enum": ["-inf", "inf"]}]}
_vector = {"type": "array", "items": _number}
_matrix = {"type": "array", "items": _vector}
_state_space = {"type": "object", "required": ["labels"],
                "properties": {"labels": {"type": "array", "items": {"type": "string"}, "minItems": 1}}}
_time_grid = {"type": "object", "required": ["times"],
              "properties": {"times": {"type": "array", "items": {"type": "string"}, "minItems": 2}}}
_dense = {"type": "object", "required": ["kind", "state_space", "time_grid", "shape", "weights"],
          "properties": {"kind": {"const": "dense_measure"}, "state_space": _state_space,
                         "time_grid": _time_grid,
                         "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                         "weights": _vector}}
_markov = {"type": "object", "required": ["kind", "state_space", "time_grid", "init", "kernels"],
           "properties": {"kind": {"const": "markov_measure"}, "state_space": _state_space,
                          "time_grid": _time_grid, "init": _vector,
                          "kernels": {"type": "array", "items": _matrix}}}
_measure = {"oneOf": [_dense, _markov]}
_problem = {"type": "object", "required": ["kind", "reference", "constraints"],
            "properties": {
                "kind": {"const": "problem"}, "reference": _measure,
                "constraints": {"type": "array", "items": {
                    "type": "object", "required": ["index", "target"],
                    "properties": {"index": {"type": "integer", "minimum": 0}, "target": _vector}}},
                "endpoint": {"oneOf": [{"type": "null"}, _matrix]}}}
_potentials = {"type": "object", "required": ["kind", "times", "f"],
               "properties": {"kind": {"const": "potentials"},
                              "times": {"type": "array", "items": {"type": "integer"}},
                              "f": _matrix, "eta": {"oneOf": [{"type": "null"}, _matrix]},
                              "log_scale": _number}}
_solution = {"type": "object",
             "required": ["kind", "problem", "P", "potentials", "iterations", "residual",
                          "converged", "objective"],
             "properties": {"kind": {"const": "solution"}, "problem": _problem, "P": _dense,
                            "potentials": _potentials, "iterations": {"type": "integer"},
                            "residual": _number, "converged": {"type": "boolean"},
                            "objective": _number, "history": {"type": "array"}}}
_tensor = {"type": "object", "required": ["shape", "values"],
           "properties": {"shape": {"type": "array", "items": {"type": "integer"}}, "values": _vector}}
_fixture = {"type": "object", "required": ["kind", "name", "R", "f", "a", "b", "s_idx", "u_idx", "t_idx"],
            "properties": {"kind": {"const": "counterexample"}, "name": {"type": "string"},
                           "R": _dense, "f": _matrix, "a": _tensor, "b": _tensor,
                           "s_idx": {"type": "integer"}, "u_idx": {"type": "integer"},
                           "t_idx": {"type": "integer"}, "expected": {"type": "string"}}}
_report = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}}

SCHEMAS = {
    "dense_measure": _dense,
    "markov_measure": _markov,
    "problem": _problem,
    "potentials": _potentials,
    "solution": _solution,
    "counterexample": _fixture,
    "report": _report,
}


# --------------------------------------------------------------------------- scalars


def encode_number(x):
    x = float(x)
    if math.isnan(x):
        raise ValueError("NaN cannot be serialized")
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def decode_number(x):
    if x == "-inf":
        return -math.inf
    if x == "inf":
        return math.inf
    return float(x)


def encode_array(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return encode_number(a)
    return [encode_array(v) for v in a]


def decode_array(v):
    if isinstance(v, list):
        return np.array([decode_array(x) for x in v], dtype=float)
    return decode_number(v)


def _tensor_doc(a):
    a = np.asarray(a, float)
    return {"shape": list(a.shape), "values": encode_array(a.ravel())}


def _tensor_from(doc):
    return decode_array(doc["values"]).reshape(doc["shape"])


# --------------------------------------------------------------------------- measures


def state_space_to_json(space):
    return {"labels": list(space.labels)}


def time_grid_to_json(grid):
    return {"times": [str(Fraction(t)) for t in grid.times]}


def measure_to_json(m):
    base = {"state_space": state_space_to_json(m.space), "time_grid": time_grid_to_json(m.grid)}
    if isinstance(m, DensePathMeasure):
        return {"kind": "dense_measure", **base, "shape": list(m.weights.shape),
                "weights": encode_array(m.weights.ravel())}
    if isinstance(m, MarkovPathMeasure):
        return {"kind": "markov_measure", **base, "init": encode_array(m.init),
                "kernels": [encode_array(k) for k in m.kernels]}
    raise TypeError(f"cannot serialize {type(m).__name__}")


def measure_from_json(doc):
    space = StateSpace(tuple(doc["state_space"]["labels"]))
    grid = TimeGrid(tuple(Fraction(t) for t in doc["time_grid"]["times"]))
    if doc["kind"] == "dense_measure":
        w = decode_array(doc["weights"])
        if int(np.prod(doc["shape"])) != w.size:
            raise ParseError("weights do not match the declared shape")
        return DensePathMeasure(space, grid, w.reshape(doc["shape"]))
    return MarkovPathMeasure(space, grid, decode_array(doc["init"]),
                             tuple(decode_array(k) for k in doc["kernels"]))


# --------------------------------------------------------------------------- problems and results


def problem_to_json(spec):
    return {"kind": "problem", "reference": measure_to_json(spec.reference),
            "constraints": [{"index": c.index, "target": encode_array(c.target)}
                            for c in spec.constraints],
            "endpoint": None if spec.endpoint is None else encode_array(spec.endpoint)}


def problem_from_json(doc):
    from .solvers import Constraint, ProblemSpec

    ref = measure_from_json(doc["reference"])
    cons = tuple(Constraint(int(c["index"]), decode_array(c["target"])) for c in doc["constraints"])
    pi = doc.get("endpoint")
    return ProblemSpec(ref, cons, None if pi is None else decode_array(pi))


def potentials_to_json(pot):
    return {"kind": "potentials", "times": [int(t) for t in pot.times],
            "f": [encode_array(v) for v in pot.f],
            "eta": None if pot.eta is None else encode_array(pot.eta),
            "log_scale": encode_number(pot.log_scale)}


def potentials_from_json(doc):
    eta = doc.get("eta")
    return Potentials([int(t) for t in doc["times"]], [decode_array(v) for v in doc["f"]],
                      None if eta is None else decode_array(eta),
                      decode_number(doc.get("log_scale", 0.0)))


def _history(records):
    return [{k: (encode_number(v) if isinstance(v, float) else v) for k, v in r.items()} for r in records]


def solution_to_json(sol):
    return {"kind": "solution", "problem": problem_to_json(sol.problem), "P": measure_to_json(sol.P),
            "potentials": potentials_to_json(sol.potentials), "iterations": int(sol.iterations),
            "residual": encode_number(sol.residual), "converged": bool(sol.converged),
            "objective": encode_number(sol.objective), "history": _history(sol.history)}


def solution_from_json(doc):
    from .solvers import Solution

    history = [{k: (decode_number(v) if isinstance(v, str) else v) for k, v in r.items()}
               for r in doc.get("history", [])]
    return Solution(measure_from_json(doc["P"]), potentials_from_json(doc["potentials"]),
                    int(doc["iterations"]), decode_number(doc["residual"]), bool(doc["converged"]),
                    decode_number(doc["objective"]), history, problem_from_json(doc["problem"]))


def fixture_to_json(fx):
    return {"kind": "counterexample", "name": fx.name, "R": measure_to_json(fx.R),
            "f": encode_array(fx.f), "a": _tensor_doc(fx.a), "b": _tensor_doc(fx.b),
            "s_idx": fx.s_idx, "u_idx": fx.u_idx, "t_idx": fx.t_idx, "expected": fx.expected}


def fixture_from_json(doc):
    from .fixtures import CounterexampleFixture

    return CounterexampleFixture(doc["name"], measure_from_json(doc["R"]), decode_array(doc["f"]),
                                 _tensor_from(doc["a"]), _tensor_from(doc["b"]),
                                 int(doc["s_idx"]), int(doc["u_idx"]), int(doc["t_idx"]),
                                 doc.get("expected", "SumDecomposeInfeasible"))


_DECODERS = {
    "dense_measure": measure_from_json,
    "markov_measure": measure_from_json,
    "problem": problem_from_json,
    "potentials": potentials_from_json,
    "solution": solution_from_json,
    "counterexample": fixture_from_json,
}


def validate(doc, kind=None):
    """Raise :class:`ParseError` unless ``doc`` matches the schema of its ``kind``."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParseError("document must be an object with a 'kind' field")
    kind = kind or doc["kind"]
    schema = SCHEMAS.get(kind, _report)
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise ParseError(f"{kind} document invalid at '{where}': {exc.message}") from None
    return doc


def decode(doc):
    """Validate and turn a document into the matching object."""
    validate(doc)
    kind = doc["kind"]
    if kind not in _DECODERS:
        raise ParseError(f"no decoder for documents of kind {kind!r}")
    try:
        return _DECODERS[kind](doc)
    except BridgekitError as exc:
        raise ParseError(str(exc), witness=exc.witness) from exc
    except (ValueError, TypeError, KeyError, ZeroDivisionError) as exc:
        raise ParseError(f"{kind} document rejected: {exc}") from exc


def dumps(doc):
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def load(path):
    return decode(read_json(path))


def write_json(path, doc):
    """Write atomically: a temporary file in the target directory, then rename."""
    text = dumps(doc)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bridgekit-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
