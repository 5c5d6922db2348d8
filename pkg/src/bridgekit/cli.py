"""``bridgekit`` command line: solve, check, decompose, fixture, oracle.

Exit codes: 0 success (or the checked property holds), 1 infeasible or the
property fails, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import io
from .additive import (
    decompose_to_potentials,
    reconstruction_error,
    sum_decompose,
    verify_certificate,
)
from .errors import BridgekitError, ParseError
from .fixtures import (
    FIXTURES,
    random_brodinger_spec,
    random_chain,
    random_reciprocal,
    random_schrodinger_spec,
)
from .measure import DensePathMeasure, MarkovPathMeasure, marginal_array, total_variation
from .oracle import ORACLE_SIZE_GUARD, oracle_minimize
from .solvers import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    solve,
    solve_brodinger_via_folding,
)
from .structure import is_irreducible, is_markov, is_reciprocal

GENERATED = {
    "random_chain": lambda seed: random_chain(seed, 3, 4),
    "random_reciprocal": lambda seed: random_reciprocal(seed, 3, 4),
    "schrodinger_instance": lambda seed: random_schrodinger_spec(seed, 3, 4, 2),
    "brodinger_instance": lambda seed: random_brodinger_spec(seed, 3, 4, 1),
}
OBJECTIVE_AGREEMENT = 1e-8
TV_AGREEMENT = 1e-6


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    size_guard: int | None = None
    property: str | None = None
    mode: str | None = None
    lam: str | None = None
    fixture_name: str | None = None
    action: str | None = None
    quiet: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ParseError("--tol must be positive")
        if self.max_iter < 1:
            raise ParseError("--max-iter must be at least 1")
        if self.size_guard is not None and self.size_guard < 1:
            raise ParseError("--size-guard must be positive")


def build_parser():
    p = argparse.ArgumentParser(prog="bridgekit", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input JSON document")
    common.add_argument("--output", help="report path (stdout when omitted)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--size-guard", type=int, default=None,
                        help="cell limit for densifying (and for the oracle)")
    common.add_argument("--quiet", action="store_true", help="no per-cycle records on stderr")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="Schrödinger or Brödinger solve")
    s.add_argument("--lambda", dest="lam", help="solve a Brödinger problem through the fold at this lambda")
    c = sub.add_parser("check", parents=[common], help="structural check of a measure")
    c.add_argument("--property", required=True, choices=["markov", "reciprocal", "irreducible"])
    c.add_argument("--mode", choices=["markov_pairs", "reciprocal_triples"], default="markov_pairs")
    sub.add_parser("decompose", parents=[common],
                   help="potentials of a solution, or sum decomposition of a counterexample")
    f = sub.add_parser("fixture", parents=[common], help="list or export named instances")
    f.add_argument("action", choices=["list", "export"])
    f.add_argument("--fixture-name")
    sub.add_parser("oracle", parents=[common], help="brute-force minimizer and cross-check")
    return p


def _emit(cfg, doc):
    io.validate(doc)
    if cfg.output:
        io.write_json(cfg.output, doc)
    else:
        sys.stdout.write(io.dumps(doc))


def _need_input(cfg):
    if not cfg.input:
        raise ParseError(f"{cfg.command} needs --input")
    return io.load(cfg.input)


def _limit(cfg):
    return cfg.size_guard


def _streamer(cfg):
    if cfg.quiet:
        return None

    def emit(record):
        sys.stderr.write(json.dumps({k: io.encode_number(v) if isinstance(v, float) else v
                                     for k, v in record.items()}) + "\n")

    return emit


def cmd_solve(cfg):
    from .solvers import ProblemSpec

    spec = _need_input(cfg)
    if not isinstance(spec, ProblemSpec):
        raise ParseError("solve needs a problem document")
    if cfg.lam is not None:
        if not spec.has_endpoint:
            raise ParseError("--lambda only applies to problems with an endpoint law")
        sol = solve_brodinger_via_folding(spec, cfg.lam, cfg.tol, cfg.max_iter, _streamer(cfg), _limit(cfg))
    else:
        sol = solve(spec, cfg.tol, cfg.max_iter, _streamer(cfg), _limit(cfg))
    _emit(cfg, io.solution_to_json(sol))
    return 0 if sol.converged else 1


def _measure_of(obj, cfg):
    from .fixtures import CounterexampleFixture
    from .solvers import ProblemSpec, Solution

    if isinstance(obj, MarkovPathMeasure):
        return obj.to_dense(_limit(cfg))
    if isinstance(obj, DensePathMeasure):
        return obj
    if isinstance(obj, ProblemSpec):
        return obj.dense_reference(_limit(cfg))
    if isinstance(obj, Solution):
        return obj.P
    if isinstance(obj, CounterexampleFixture):
        return obj.R
    raise ParseError("input holds no path measure")


def cmd_check(cfg):
    Q = _measure_of(_need_input(cfg), cfg)
    if cfg.property == "markov":
        rep = is_markov(Q)
    elif cfg.property == "reciprocal":
        rep = is_reciprocal(Q)
    else:
        rep = is_irreducible(Q, cfg.mode or "markov_pairs")
    _emit(cfg, {"kind": "structure_report", **rep.to_dict()})
    return 0 if rep.holds else 1


def cmd_decompose(cfg):
    from .fixtures import CounterexampleFixture
    from .solvers import Solution

    obj = _need_input(cfg)
    if isinstance(obj, CounterexampleFixture):
        res = sum_decompose(obj.f, obj.R, obj.s_idx, obj.u_idx, obj.t_idx, obj.a, obj.b)
        support = marginal_array(obj.R.weights, [obj.s_idx, obj.t_idx]) > 0
        if res.feasible:
            _emit(cfg, {"kind": "sum_decomposition", "feasible": True, "pivot": res.pivot,
                        "f_s": io.encode_array(res.f_s), "f_t": io.encode_array(res.f_t),
                        "residual": io.encode_number(res.residual)})
            return 0
        _emit(cfg, {"kind": "sum_decomposition", "feasible": False, "reason": res.reason,
                    "cycle": res.cycle, "alternating_sum": io.encode_number(res.alternating_sum),
                    "certificate_valid": verify_certificate(obj.f, support, res)})
        return 1
    if isinstance(obj, Solution):
        spec = obj.problem
        R = spec.dense_reference(_limit(cfg))
        pot = decompose_to_potentials(obj.P, R, spec.indices, endpoint=spec.has_endpoint)
        worst, cell = reconstruction_error(pot, obj.P, R)
        _emit(cfg, {"kind": "decomposition", "potentials": io.potentials_to_json(pot),
                    "reconstruction_residual": io.encode_number(worst), "worst_path": cell})
        return 0
    raise ParseError("decompose needs a solution or a counterexample document")


def cmd_fixture(cfg):
    names = sorted(FIXTURES) + sorted(GENERATED)
    if cfg.action == "list":
        _emit(cfg, {"kind": "fixture_list", "fixtures": names})
        return 0
    name = cfg.fixture_name
    if name in FIXTURES:
        doc = io.fixture_to_json(FIXTURES[name]())
    elif name in GENERATED:
        obj = GENERATED[name](cfg.seed)
        doc = io.problem_to_json(obj) if hasattr(obj, "constraints") else io.measure_to_json(obj)
    else:
        raise ParseError(f"unknown fixture {name!r}; choose from {', '.join(names)}")
    _emit(cfg, doc)
    return 0


def cmd_oracle(cfg):
    from .solvers import ProblemSpec

    spec = _need_input(cfg)
    if not isinstance(spec, ProblemSpec):
        raise ParseError("oracle needs a problem document")
    limit = cfg.size_guard or ORACLE_SIZE_GUARD
    res = oracle_minimize(spec, limit=limit)
    sol = solve(spec, cfg.tol, cfg.max_iter, None, cfg.size_guard)
    diff = abs(sol.objective - res.objective)
    tv = total_variation(sol.P, res.P)
    agree = diff <= OBJECTIVE_AGREEMENT and tv <= TV_AGREEMENT
    _emit(cfg, {"kind": "oracle_report", "P": io.measure_to_json(res.P),
                "objective": io.encode_number(res.objective), "newton_iterations": res.iterations,
                "kkt_residual": io.encode_number(res.kkt_residual),
                "cross_check": {"solver_objective": io.encode_number(sol.objective),
                                "objective_difference": io.encode_number(diff),
                                "total_variation": io.encode_number(tv),
                                "solver_converged": sol.converged, "agree": agree}})
    return 0 if agree else 1


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "decompose": cmd_decompose,
            "fixture": cmd_fixture, "oracle": cmd_oracle}


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.command](cfg)
    except BridgekitError as exc:
        doc = {"kind": "error", "error": type(exc).__name__, "message": str(exc),
               "witness": exc.witness, "exit_code": exc.exit_code}
        sys.stderr.write(json.dumps(doc, default=_plain) + "\n")
        if exc.exit_code == 1 and cfg.output:
            io.write_json(cfg.output, json.loads(json.dumps(doc, default=_plain)))
        return exc.exit_code


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(command=args.command, input=args.input, output=args.output, tol=args.tol,
                        max_iter=args.max_iter, seed=args.seed, size_guard=args.size_guard,
                        property=getattr(args, "property", None), mode=getattr(args, "mode", None),
                        lam=getattr(args, "lam", None), fixture_name=getattr(args, "fixture_name", None),
                        action=getattr(args, "action", None), quiet=args.quiet)
    except ParseError as exc:
        sys.stderr.write(f"bridgekit: {exc}\n")
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
