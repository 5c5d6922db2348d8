import math

import numpy as np
import pytest
from scipy.special import logsumexp

from bridgekit import (
    Constraint,
    ProblemSpec,
    check_feasibility,
    is_markov,
    is_reciprocal,
    relative_entropy,
    solve_brodinger,
    solve_brodinger_via_folding,
    solve_schrodinger,
    total_variation,
)
from bridgekit.errors import IncompatibleValues, InfeasibleProblem, NotMarkov, PreconditionFailed
from bridgekit.fixtures import random_brodinger_spec, random_chain, random_reciprocal, random_schrodinger_spec
from bridgekit.measure import marginal_array
from bridgekit.solvers import default_lambda, ipfp, solve

from .conftest import chain, dense
from .oracles import hall_feasible

# closed form of the 2x2 Sinkhorn problem below: p11 = (sqrt(7) - 2) / 10
SINKHORN_P11 = 0.06457513110645907


def test_sinkhorn_closed_form():
    r = np.array([[1.0, 2.0], [3.0, 1.0]]) / 7
    spec = ProblemSpec(dense(r), (Constraint(0, [0.5, 0.5]), Constraint(1, [0.3, 0.7])))
    sol = solve_schrodinger(spec, tol=1e-13)
    assert sol.converged
    assert sol.P.weights[0, 0] == pytest.approx(SINKHORN_P11, abs=1e-12)
    assert SINKHORN_P11 == pytest.approx((math.sqrt(7) - 2) / 10, abs=1e-16)


def test_no_constraint_returns_reference():
    R = random_chain(0, 2, 3).to_dense()
    sol = solve_schrodinger(ProblemSpec(R, ()))
    np.testing.assert_allclose(sol.P.weights, R.weights)
    assert sol.objective == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_schrodinger_solution_properties(seed):
    spec = random_schrodinger_spec(seed, 3, 4, 1 + seed % 3, zero_rate=0.2)
    sol = solve_schrodinger(spec)
    assert sol.converged and sol.residual <= 1e-10
    for c in spec.constraints:
        np.testing.assert_allclose(marginal_array(sol.P.weights, [c.index]), c.target, atol=1e-10)
    assert is_markov(sol.P, 1e-9)
    R = spec.dense_reference()
    assert sol.objective == pytest.approx(relative_entropy(sol.P, R), abs=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_ipfp_dual_ascent_and_distance_to_optimum(seed):
    spec = random_schrodinger_spec(seed, 3, 5, 3)
    R = spec.dense_reference()
    iterates = []
    blocks = [((c.index,), c.target) for c in spec.constraints]
    logr = np.log(R.weights)
    for k in range(1, 8):
        logq, *_ = ipfp(logr, blocks, tol=0.0, max_iter=k)
        iterates.append(np.exp(logq))
    sol = solve_schrodinger(spec, tol=1e-13)
    dual = [h["dual"] for h in sol.history]
    assert all(b >= a - 1e-12 for a, b in zip(dual, dual[1:]))
    # the iterates approach the optimum in relative entropy
    gaps = [relative_entropy(sol.P, q / q.sum()) for q in iterates]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert dual[-1] == pytest.approx(sol.objective, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_each_block_update_is_exact(seed):
    spec = random_schrodinger_spec(seed, 3, 4, 3)
    R = spec.dense_reference()
    logq = np.log(R.weights)
    for cycle in range(3):
        for c in spec.constraints:
            logq, *_ = ipfp(logq, [((c.index,), c.target)], tol=0.0, max_iter=1)
            m = np.exp(logsumexp(logq, axis=tuple(a for a in range(spec.K) if a != c.index)))
            assert np.abs(m - c.target).max() <= 1e-12


def test_streaming_callback_and_max_iter():
    spec = random_schrodinger_spec(1, 3, 5, 3)
    seen = []
    sol = solve_schrodinger(spec, tol=1e-30, max_iter=3, callback=seen.append)
    assert not sol.converged and sol.iterations == 3
    assert [r["cycle"] for r in seen] == [1, 2, 3]
    assert set(seen[0]) == {"cycle", "residual", "objective", "dual"}


def test_determinism():
    spec = random_schrodinger_spec(7, 3, 5, 3)
    a, b = solve(spec), solve(spec)
    assert np.array_equal(a.P.weights, b.P.weights) and a.history == b.history


# --------------------------------------------------------------------------- feasibility


def test_infeasible_support_and_flow_witness():
    k = [[1.0, 0.0], [0.0, 1.0]]
    R = chain([0.5, 0.5], [k, k])
    spec = ProblemSpec(R, (Constraint(0, [0.7, 0.3]), Constraint(2, [0.3, 0.7])))
    feas = check_feasibility(spec)
    assert not feas and feas.method == "flow"
    assert feas.witness["hall_set"] == [0]
    with pytest.raises(InfeasibleProblem):
        solve_schrodinger(spec)
    R2 = chain([1.0, 0.0], [[[0.5, 0.5], [0.5, 0.5]]])
    spec2 = ProblemSpec(R2, (Constraint(0, [0.5, 0.5]),))
    assert check_feasibility(spec2).witness["state"] == 1


@pytest.mark.parametrize("seed", range(25))
def test_flow_feasibility_matches_hall(seed):
    rng = np.random.default_rng(seed)
    R = random_chain(seed, 3, 3, 0.5)
    mu0, mu2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    r = R.to_dense().weights
    allowed = marginal_array(r, [0, 2]) > 0
    spec = ProblemSpec(R, (Constraint(0, mu0), Constraint(2, mu2)))
    assert bool(check_feasibility(spec)) == hall_feasible(mu0, mu2, allowed)


def test_lp_feasibility_with_endpoint():
    R = random_reciprocal(0, 2, 3)
    pi = np.array([[0.5, 0.0], [0.0, 0.5]])
    ok = ProblemSpec(R, (Constraint(1, [0.4, 0.6]),), pi)
    assert check_feasibility(ok).method == "lp" and check_feasibility(ok)
    w = R.weights.copy()
    w[:, 1, :] = 0.0
    bad = ProblemSpec(R.with_weights(w / w.sum()), (Constraint(1, [0.5, 0.5]),), pi)
    assert not check_feasibility(bad)


def test_problem_validation():
    R = random_chain(0, 2, 3)
    with pytest.raises(IncompatibleValues):
        ProblemSpec(R, (Constraint(0, [0.5, 0.5]), Constraint(0, [0.5, 0.5])))
    with pytest.raises(IncompatibleValues):
        ProblemSpec(R, (Constraint(5, [0.5, 0.5]),))
    with pytest.raises(IncompatibleValues):
        ProblemSpec(R, (Constraint(0, [0.9, 0.1]),), np.full((2, 2), 0.25))
    spec = ProblemSpec(R, ((2, [0.5, 0.5]), (0, [0.5, 0.5])))
    assert spec.indices == [0, 2]


def test_solver_preconditions():
    Q = random_reciprocal(0, 2, 4)
    with pytest.raises(NotMarkov):
        solve_schrodinger(ProblemSpec(Q, (Constraint(1, [0.5, 0.5]),)))
    spec = random_brodinger_spec(0, 2, 4)
    with pytest.raises(PreconditionFailed):
        solve_schrodinger(spec)
    with pytest.raises(PreconditionFailed):
        solve_brodinger(spec.without_endpoint())
    from bridgekit.fixtures import perturbed_non_reciprocal
    bad = ProblemSpec(perturbed_non_reciprocal(0, 2, 4), spec.constraints, spec.endpoint)
    with pytest.raises(PreconditionFailed):
        solve_brodinger(bad)


# --------------------------------------------------------------------------- Brödinger


@pytest.mark.parametrize("seed", range(4))
def test_brodinger_routes_agree(seed):
    spec = random_brodinger_spec(seed, 3, 4, 1 + seed % 2)
    direct = solve_brodinger(spec)
    folded = solve_brodinger_via_folding(spec)
    assert direct.converged and folded.converged
    assert total_variation(direct.P, folded.P) <= 1e-9
    assert is_reciprocal(direct.P, 1e-9)
    np.testing.assert_allclose(marginal_array(direct.P.weights, [0, 3]), spec.endpoint, atol=1e-10)
    assert folded.lam == default_lambda(spec)
