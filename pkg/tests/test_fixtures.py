import numpy as np
import pytest

from bridgekit import figure2_fixture, figure3_fixture, is_irreducible, is_markov, is_reciprocal
from bridgekit.additive import check_sum_premise
from bridgekit.fixtures import (
    FIXTURES,
    perturbed_non_reciprocal,
    random_brodinger_spec,
    random_chain,
    random_markov_pair,
    random_reciprocal,
    random_schrodinger_spec,
)
from bridgekit.measure import marginal_array
from bridgekit.solvers import check_feasibility


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_counterexample_premise_holds(name):
    fx = FIXTURES[name]()
    seg = marginal_array(fx.R.weights, list(range(fx.s_idx, fx.t_idx + 1)))
    assert len(check_sum_premise(fx.f, seg, fx.a, fx.b, fx.u_idx - fx.s_idx)) == 0
    assert fx.R.weights.sum() == pytest.approx(1.0)


def test_figure2_layout():
    fx = figure2_fixture()
    assert fx.R.space.labels == ("x1", "x2", "a1", "ahat", "a2", "m", "z1", "z2")
    assert np.count_nonzero(fx.R.weights) == 4
    assert (fx.s_idx, fx.u_idx, fx.t_idx) == (0, 2, 3)


def test_figure3_markov_reducible():
    R = figure3_fixture().R
    assert is_markov(R) and not is_irreducible(R)


def test_generators_are_deterministic_and_seeded():
    a, b = random_chain(3, 3, 4), random_chain(3, 3, 4)
    assert np.array_equal(a.to_dense().weights, b.to_dense().weights)
    assert not np.array_equal(a.init, random_chain(4, 3, 4).init)
    assert np.array_equal(random_reciprocal(2, 2, 4).weights, random_reciprocal(2, 2, 4).weights)


def test_generated_classes():
    assert is_reciprocal(random_reciprocal(0, 3, 4))
    assert not is_reciprocal(perturbed_non_reciprocal(0, 3, 4))
    P, R = random_markov_pair(0, 3, 4, 0.3)
    assert np.all((P.to_dense().weights > 0) <= (R.to_dense().weights > 0))
    assert check_feasibility(random_schrodinger_spec(0, 3, 4, 3, 0.3))
    spec = random_brodinger_spec(0, 3, 4, 2)
    assert check_feasibility(spec) and all(0 < t < 3 for t in spec.indices)


def test_generator_argument_checks():
    with pytest.raises(ValueError):
        random_chain(0, 1, 3)
    with pytest.raises(ValueError):
        random_reciprocal(0, 2, 2)
