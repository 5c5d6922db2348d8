import itertools
import math

import numpy as np
import pytest

from bridgekit import (
    Content,
    content_from_closed,
    decompose_to_potentials,
    density_measurability_check,
    extract_additive_functional,
    figure2_fixture,
    figure3_fixture,
    is_markov,
    localize_functional,
    measure_from_functional,
    solve_schrodinger,
    sum_decompose,
)
from bridgekit.additive import (
    Infeasible,
    Potentials,
    functional_from_segments,
    gauge_fix,
    reconstruction_error,
    split_on_support,
    verify_certificate,
)
from bridgekit.errors import (
    IncompatibleValues,
    NotAbsolutelyContinuous,
    NotIrreducible,
    NotMarkov,
    PremiseViolated,
    ReconstructionFailed,
)
from bridgekit.fixtures import (
    planted_sum_instance,
    random_chain,
    random_markov_pair,
    random_reciprocal,
    random_schrodinger_spec,
)
from bridgekit.measure import marginal_array

from .conftest import chain
from .oracles import lstsq_split, naive_segment_density


def point_content(masses, n, K):
    """Content with point masses ``masses[t](x)`` and nothing in between."""
    def value(k, l):
        out = np.zeros((1,) * K)
        for t, m in masses.items():
            if k <= t <= l:
                shape = [1] * K
                shape[t] = n
                out = out + np.reshape(m, shape)
        return out
    return content_from_closed(value, 2, K)


def test_open_and_half_open_values():
    c = point_content({0: [1.0, 2.0], 1: [10.0, 20.0], 2: [100.0, 200.0]}, 2, 3)
    path = (1, 0, 1)
    assert c.value(0, 2)[path] == 212.0
    assert c.open_value(0, 2)[path] == 10.0
    assert c.value(0, 2, True, False)[path] == 12.0
    assert c.value(0, 2, False, True)[path] == 210.0
    assert c.value(1, 1, False, True)[path] == 0.0
    assert c.union_value([(0, 1, True, False), (1, 2, True, True)])[path] == 212.0
    with pytest.raises(ValueError):
        c.union_value([(0, 1, True, True), (1, 2, True, True)])


def test_open_value_under_negative_infinity():
    c = point_content({0: [-np.inf, 0.0], 1: [1.0, 1.0]}, 2, 2)
    assert c.open_value(0, 1)[0, 0] == 0.0
    assert c.value(0, 1)[0, 0] == -np.inf
    assert not c.quadruple_violations()


def test_quadruple_rule_enforced():
    vals = {(k, l): np.zeros((1, 1, 1)) for k in range(3) for l in range(k, 3)}
    vals[(0, 2)] = np.ones((1, 1, 1))
    with pytest.raises(IncompatibleValues) as exc:
        content_from_closed(vals, 2, 3)
    assert exc.value.witness["quadruple"][0] == 0
    assert isinstance(content_from_closed({k: v * 0 for k, v in vals.items()}, 2, 3), Content)


@pytest.mark.parametrize("seed", range(8))
def test_extracted_functional_is_additive_and_measurable(seed):
    P, R = random_markov_pair(seed, 2 + seed % 2, 4, zero_rate=0.3)
    p, r = P.to_dense().weights, R.to_dense().weights
    A = extract_additive_functional(p, r)
    assert A.content.quadruple_violations(r > 0) == []
    assert A.measurability_violations() == []
    back = measure_from_functional(A, R.to_dense())
    np.testing.assert_allclose(back.weights, p, atol=1e-14)
    assert is_markov(back, 1e-9)


def test_segment_values_match_loops():
    P, R = random_markov_pair(5, 2, 4)
    p, r = P.to_dense().weights, R.to_dense().weights
    A = extract_additive_functional(p, r)
    for path in itertools.product(range(2), repeat=4):
        for k, l in [(0, 0), (1, 2), (0, 3), (2, 3)]:
            want = math.log(naive_segment_density(p, r, k, l, path))
            assert A.value(k, l)[path] == pytest.approx(want, abs=1e-12)


def test_extraction_preconditions():
    R = random_reciprocal(0, 2, 4)
    with pytest.raises(NotMarkov):
        extract_additive_functional(R, R)
    k = [[0.5, 0.5], [0.5, 0.5]]
    P = chain([1.0, 0.0], [k, k])
    Rm = chain([0.0, 1.0], [k, k])
    with pytest.raises(NotAbsolutelyContinuous):
        extract_additive_functional(P.to_dense(), Rm.to_dense())


def test_functional_from_segments_roundtrip():
    n, K = 2, 3
    m = {0: np.array([0.1, 0.2]), 1: np.array([0.0, 0.5]), 2: np.array([1.0, -1.0])}
    segs = {}
    for k in range(K):
        for l in range(k, K):
            seg = np.zeros((n,) * (l - k + 1))
            for t in range(k, l + 1):
                shape = [1] * (l - k + 1)
                shape[t - k] = n
                seg = seg + m[t].reshape(shape)
            segs[(k, l)] = seg
    A = functional_from_segments(segs, n, K)
    assert A.total()[1, 1, 0] == pytest.approx(0.2 + 0.5 + 1.0)


# --------------------------------------------------------------------------- sum decomposition


@pytest.mark.parametrize("make", [figure2_fixture, figure3_fixture])
def test_counterexamples_infeasible_with_certificate(make):
    fx = make()
    res = sum_decompose(fx.f, fx.R, fx.s_idx, fx.u_idx, fx.t_idx, fx.a, fx.b)
    assert isinstance(res, Infeasible) and not res.feasible
    support = marginal_array(fx.R.weights, [fx.s_idx, fx.t_idx]) > 0
    assert verify_certificate(fx.f, support, res)
    assert lstsq_split(fx.f, support) > 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_planted_sums(seed):
    R, f, a, b, s, u, t = planted_sum_instance(seed, 3, 4)
    res = sum_decompose(f, R, s, u, t, a, b)
    assert res.feasible and res.pivot is not None
    support = marginal_array(R.weights, [s, t]) > 0
    recon = res.f_s[:, None] + res.f_t[None, :]
    assert np.abs(recon - f)[support].max() <= 1e-10
    R, f, a, b, s, u, t = planted_sum_instance(seed, 3, 4, violate=True)
    res = sum_decompose(f, R, s, u, t, a, b)
    assert not res.feasible
    assert verify_certificate(f, marginal_array(R.weights, [s, t]) > 0, res)


def test_premise_checked():
    R, f, a, b, s, u, t = planted_sum_instance(0, 3, 4)
    with pytest.raises(PremiseViolated):
        sum_decompose(f + 1.0, R, s, u, t, a, b)
    with pytest.raises(ValueError):
        sum_decompose(f, R, 2, 1, 3, a, b)


def test_callables_accepted():
    R, f, a, b, s, u, t = planted_sum_instance(1, 2, 3)
    res = sum_decompose(lambda x, z: f[x, z], R, s, u, t, lambda *i: a[i], lambda *i: b[i])
    assert res.feasible


@pytest.mark.parametrize("seed", range(30))
def test_split_on_support_agrees_with_least_squares(seed):
    rng = np.random.default_rng(seed)
    rows, cols = 3, 4
    support = rng.random((rows, cols)) < 0.6
    if seed % 2:
        f = rng.normal(size=rows)[:, None] + rng.normal(size=cols)[None, :]
    else:
        f = rng.normal(size=(rows, cols))
    res = split_on_support(f, support)
    additive = lstsq_split(f, support) <= 1e-9
    assert res.feasible == additive
    if res.feasible:
        assert np.all(np.abs(res.f_s[:, None] + res.f_t[None, :] - f)[support] <= 1e-10)
    else:
        assert verify_certificate(f, support, res)


def test_long_cycle_certificate():
    # a 6-cycle with no 4-cycle inside: only the spanning-tree route can find it
    support = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], bool)
    f = np.zeros((3, 3))
    f[2, 0] = 1.0
    res = split_on_support(f, support)
    assert not res.feasible and len(res.cycle) == 6
    assert verify_certificate(f, support, res)
    assert abs(res.alternating_sum) == pytest.approx(1.0)


def test_negative_infinity_rows():
    support = np.ones((2, 2), bool)
    f = np.array([[-np.inf, -np.inf], [0.0, 1.0]])
    res = split_on_support(f, support)
    assert res.feasible and res.f_s[0] == -np.inf
    f[0, 1] = 0.0
    res = split_on_support(f, support)
    assert not res.feasible and res.reason == "neg_inf"
    assert verify_certificate(f, support, res)


# --------------------------------------------------------------------------- localization and potentials


def solved(seed, n=3, K=5, m=3):
    spec = random_schrodinger_spec(seed, n, K, m)
    return spec, solve_schrodinger(spec)


@pytest.mark.parametrize("seed", range(4))
def test_localized_functional_lives_on_constrained_times(seed):
    spec, sol = solved(seed)
    R = spec.dense_reference()
    A = extract_additive_functional(sol.P, R)
    T = spec.indices
    L = localize_functional(A, sol.P, R, T)
    on = R.weights > 0
    assert np.allclose(L.total()[on], A.total()[on], atol=1e-9)
    for k in range(spec.K):
        for l in range(k, spec.K):
            if not any(k <= t <= l for t in T):
                assert np.all(L.value(k, l) == 0.0)


def test_localization_needs_irreducibility():
    fx = figure3_fixture()
    with pytest.raises(NotIrreducible):
        decompose_to_potentials(fx.R, fx.R, [1])


@pytest.mark.parametrize("seed", range(4))
def test_potentials_reconstruct_and_are_gauged(seed):
    spec, sol = solved(seed)
    R = spec.dense_reference()
    pot = decompose_to_potentials(sol.P, R, spec.indices)
    worst, _ = reconstruction_error(pot, sol.P, R)
    assert worst <= 1e-9
    for t, ft in list(zip(pot.times, pot.f))[:-1]:
        mu = marginal_array(sol.P.weights, [t])
        live = mu > 0
        assert abs(np.sum(mu[live] * ft[live])) <= 1e-9


def test_reconstruction_failure_reported():
    spec, sol = solved(0)
    R = spec.dense_reference()
    P = random_chain(99, 3, 5).to_dense()
    with pytest.raises(ReconstructionFailed):
        decompose_to_potentials(P, R, [spec.indices[0]])


def test_gauge_fix_keeps_density():
    pot = Potentials([0, 2], [np.array([1.0, 3.0]), np.array([0.5, -0.5])], None, 0.25)
    g = gauge_fix(pot, [np.array([0.5, 0.5]), np.array([0.2, 0.8])])
    np.testing.assert_allclose(g.log_density(2, 3), pot.log_density(2, 3))
    assert g.f[0].tolist() == [-1.0, 1.0] and g.log_scale == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_measurability_positive_and_negative(seed):
    spec, sol = solved(seed)
    R = spec.dense_reference()
    rep = density_measurability_check(sol.P, R, spec.indices)
    assert rep and rep.conditional_laws_agree and rep.pushforward_matches
    other = [t for t in range(spec.K) if t not in spec.indices][:1]
    rep = density_measurability_check(sol.P, R, other)
    assert not rep.holds and not rep.conditional_laws_agree
    a, b = rep.witness["paths"]
    d = sol.P.weights / R.weights
    assert a[other[0]] == b[other[0]] and d[tuple(a)] != pytest.approx(d[tuple(b)], rel=1e-10)
