"""Named counterexamples and seeded instance generators."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .measure import DensePathMeasure, MarkovPathMeasure, StateSpace, TimeGrid, marginal_array
from .solvers import Constraint, ProblemSpec

SUM_DECOMPOSE_INFEASIBLE = "SumDecomposeInfeasible"


@dataclass(frozen=True, eq=False)
class CounterexampleFixture:
    """``f(X_s, X_t) = a(X_{[s..u]}) + b(X_{[u..t]})`` on the support of ``R``, yet ``f`` is not a sum."""

    name: str
    R: DensePathMeasure
    f: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s_idx: int
    u_idx: int
    t_idx: int
    expected: str = SUM_DECOMPOSE_INFEASIBLE


def figure2_fixture() -> CounterexampleFixture:
    """Four equally likely paths through one shared mid state ``m``.

    Beginnings ``(x1, a1, m)``, ``(x1, ahat, m)``, ``(x2, a2, m)``; endings
    ``(m, z1)``, ``(m, z2)``. The time-1/4 coordinate is what tells ``ahat``
    apart from ``a1``.
    """
    labels = ("x1", "x2", "a1", "ahat", "a2", "m", "z1", "z2")
    space = StateSpace(labels)
    grid = TimeGrid((Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)))
    ix = space.index
    paths = [("x1", "a1", "m", "z2"), ("x1", "ahat", "m", "z1"),
             ("x2", "a2", "m", "z1"), ("x2", "a2", "m", "z2")]
    n = space.n
    w = np.zeros((n,) * 4)
    for p in paths:
        w[tuple(ix(s) for s in p)] = 0.25
    f = np.zeros((n, n))
    f[ix("x1"), ix("z1")] = 1.0
    a = np.zeros((n,) * 3)
    a[ix("x1"), ix("ahat"), ix("m")] = 1.0
    b = np.zeros((n, n))
    return CounterexampleFixture("figure2", DensePathMeasure(space, grid, w), f, a, b, 0, 2, 3)


def figure3_markov() -> MarkovPathMeasure:
    """Two starts, two mids, three ends; ``m1`` only reaches ``z1`` and ``m2`` only ``z2, z3``."""
    labels = ("x1", "x2", "m1", "m2", "z1", "z2", "z3")
    space = StateSpace(labels)
    ix = space.index
    n = space.n
    init = np.zeros(n)
    init[[ix("x1"), ix("x2")]] = 0.5
    k0 = np.zeros((n, n))
    for x in ("x1", "x2"):
        k0[ix(x), [ix("m1"), ix("m2")]] = 0.5
    k1 = np.zeros((n, n))
    k1[ix("m1"), ix("z1")] = 1.0
    k1[ix("m2"), [ix("z2"), ix("z3")]] = 0.5
    grid = TimeGrid((Fraction(0), Fraction(1, 2), Fraction(1)))
    return MarkovPathMeasure(space, grid, init, (k0, k1))


def figure3_fixture() -> CounterexampleFixture:
    """Markov but reducible; the endpoint table ``f_ij = a(alpha_i) + b(beta_j)`` admits no split."""
    M = figure3_markov()
    ix = M.space.index
    n = M.n
    a = np.zeros((n, n))
    for (x, m), v in {("x1", "m1"): 1.0, ("x1", "m2"): 0.0,
                      ("x2", "m1"): 1.0, ("x2", "m2"): 1.0}.items():
        a[ix(x), ix(m)] = v
    b = np.zeros((n, n))
    for (m, z), v in {("m1", "z1"): 1.0, ("m2", "z2"): 2.0, ("m2", "z3"): 3.0}.items():
        b[ix(m), ix(z)] = v
    f = np.zeros((n, n))
    table = {("x1", "z1"): 2, ("x1", "z2"): 2, ("x1", "z3"): 3,
             ("x2", "z1"): 2, ("x2", "z2"): 3, ("x2", "z3"): 4}
    for (x, z), v in table.items():
        f[ix(x), ix(z)] = v
    return CounterexampleFixture("figure3", M.to_dense(), f, a, b, 0, 1, 2)


FIXTURES = {"figure2": figure2_fixture, "figure3": figure3_fixture}


# --------------------------------------------------------------------------- generators


def _rng(seed, *stream):
    return np.random.default_rng([int(seed), *stream])


def _random_kernel(rng, n, zero_rate):
    ker = rng.uniform(0.1, 1.0, size=(n, n))
    if zero_rate > 0:
        drop = rng.random((n, n)) < zero_rate
        drop[np.arange(n), np.argmax(ker, axis=1)] = False  # keep every row alive
        ker[drop] = 0.0
    return ker / ker.sum(axis=1, keepdims=True)


def random_chain(seed, n, K, structural_zero_rate=0.0) -> MarkovPathMeasure:
    """Seeded Markov chain on ``n`` states and a uniform grid with ``K`` points.

    With ``structural_zero_rate = 0`` every kernel entry is positive.
    """
    if n < 2 or K < 2:
        raise ValueError("need n >= 2 and K >= 2")
    rng = _rng(seed, 0)
    init = rng.uniform(0.1, 1.0, size=n)
    init /= init.sum()
    kernels = tuple(_random_kernel(rng, n, structural_zero_rate) for _ in range(K - 1))
    return MarkovPathMeasure(StateSpace.range(n), TimeGrid.uniform(K), init, kernels)


def random_reciprocal(seed, n, K, g=None) -> DensePathMeasure:
    """Seeded chain reweighted by ``g(X_0, X_{K-1})`` and normalized (a mixture of its bridges)."""
    if n < 2 or K < 3:
        raise ValueError("need n >= 2 and K >= 3")
    base = random_chain(seed, n, K).to_dense()
    if g is None:
        g = _rng(seed, 1).uniform(0.1, 2.0, size=(n, n))
    g = np.asarray(g, float)
    w = base.weights * g.reshape((n,) + (1,) * (K - 2) + (n,))
    return base.with_weights(w / w.sum())


def perturbed_non_reciprocal(seed, n, K, eps=0.3) -> DensePathMeasure:
    """A reciprocal measure times a positive factor coupling an inside time to an outside one."""
    R = random_reciprocal(seed, n, K)
    h = 1.0 + eps * _rng(seed, 2).uniform(-1.0, 1.0, size=(n, n))
    # X_1 lies inside the window (0, K-2) and X_{K-1} outside it (needs K >= 4;
    # with three grid points every measure is reciprocal)
    k_in, k_out = 1, K - 1
    shape = [1] * K
    shape[k_in], shape[k_out] = n, n
    w = R.weights * h.reshape(shape)
    return R.with_weights(w / w.sum())


def random_markov_pair(seed, n, K, zero_rate=0.0):
    """Markov ``P << R``: ``P``'s kernels reweight ``R``'s on its support."""
    R = random_chain(seed, n, K, zero_rate)
    rng = _rng(seed, 3)
    init = R.init * rng.uniform(0.1, 1.0, size=n)
    kernels = []
    for ker in R.kernels:
        k = ker * rng.uniform(0.1, 1.0, size=(n, n))
        k /= k.sum(axis=1, keepdims=True)
        kernels.append(k)
    P = MarkovPathMeasure(R.space, R.grid, init / init.sum(), tuple(kernels))
    return P, R


def _pick_times(rng, K, size, interior=False):
    pool = np.arange(1, K - 1) if interior else np.arange(K)
    size = min(size, len(pool))
    return sorted(int(t) for t in rng.choice(pool, size=size, replace=False))


def random_schrodinger_spec(seed, n, K, n_constraints, zero_rate=0.0) -> ProblemSpec:
    """Feasible instance: targets are marginals of another chain on the reference's support."""
    rng = _rng(seed, 4)
    R = random_chain(seed, n, K, zero_rate)
    Q, _ = random_markov_pair(seed + 10_000, n, K)
    q = Q.to_dense().weights * (R.to_dense().weights > 0)
    q /= q.sum()
    T = _pick_times(rng, K, n_constraints)
    return ProblemSpec(R, tuple(Constraint(t, marginal_array(q, [t])) for t in T))


def random_brodinger_spec(seed, n, K, n_constraints=1) -> ProblemSpec:
    """Feasible instance on a reciprocal reference: targets read off a reweighted copy of it."""
    rng = _rng(seed, 5)
    R = random_reciprocal(seed, n, K)
    h = [rng.uniform(0.2, 2.0, size=n) for _ in range(K)]
    q = R.weights.copy()
    for k in range(K):
        q = q * h[k].reshape((1,) * k + (n,) + (1,) * (K - k - 1))
    q = q * rng.uniform(0.2, 2.0, size=(n, n)).reshape((n,) + (1,) * (K - 2) + (n,))
    q /= q.sum()
    T = _pick_times(rng, K, n_constraints, interior=True)
    return ProblemSpec(R, tuple(Constraint(t, marginal_array(q, [t])) for t in T),
                       marginal_array(q, [0, K - 1]))


def planted_sum_instance(seed, n, K, violate=False):
    """``(R, f, a, b, s, u, t)`` for :func:`~bridgekit.additive.sum_decompose`.

    Without ``violate`` the reference is an irreducible reciprocal measure and
    ``a = f_s(X_s) + c(X_u)``, ``b = f_t(X_t) - c(X_u)`` plus noise that
    cancels on every path. With ``violate`` the last kernel only links mid
    and end states of the same parity, ``f = g(x, parity z) + h(z)`` with a
    non-additive ``g``, and the premise still holds on the support.
    """
    rng = _rng(seed, 6)
    s, t = 0, K - 1
    u = int(rng.integers(1, K - 1))
    if not violate:
        R = random_reciprocal(seed, n, K)
        fs, ft, c = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
        f = fs[:, None] + ft[None, :]
        a = np.zeros((n,) * (u - s + 1)) + fs.reshape((n,) + (1,) * (u - s))
        a = a + c.reshape((1,) * (u - s) + (n,))
        b = np.zeros((n,) * (t - u + 1)) - c.reshape((n,) + (1,) * (t - u))
        b = b + ft.reshape((1,) * (t - u) + (n,))
        return R, f, a, b, s, u, t
    u = K - 2
    M = random_chain(seed, n, K)
    parity = np.arange(n) % 2
    last = M.kernels[-1] * (parity[:, None] == parity[None, :])
    last = last / last.sum(axis=1, keepdims=True)
    R = MarkovPathMeasure(M.space, M.grid, M.init, M.kernels[:-1] + (last,)).to_dense()
    g = rng.normal(size=(n, 2))
    g[0, 0] += 1.0 + abs(g[0, 1] + g[1, 0] - g[1, 1] - g[0, 0])
    h = rng.normal(size=n)
    f = g[:, parity] + h[None, :]
    a = np.zeros((n,) * (u - s + 1)) + g[:, parity].reshape((n,) + (1,) * (u - s - 1) + (n,))
    b = np.zeros((n, n)) + h[None, :]
    return R, f, a, b, s, u, t
