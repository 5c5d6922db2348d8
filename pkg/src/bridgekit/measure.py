"""Finite path measures, marginals, disintegration and relative entropy.

Everything lives on a finite state space observed on a finite time grid, so a
path measure is just a nonnegative tensor with one axis per grid time. The
dense tensor is the ground truth; :class:`MarkovPathMeasure` is a compact
description that can always be materialized with :func:`markov_to_dense`.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    BadCoords,
    NotAbsolutelyContinuous,
    NotProbability,
    ShapeMismatch,
    SizeGuard,
)

#: weights below this are treated as exact zeros on ingestion
SNAP = 1e-15
#: tolerance on the total mass of anything called a probability
PROB_TOL = 1e-10
#: row-sum tolerance for Markov kernels read from decimal input
KERNEL_TOL = 1e-9

DEFAULT_SIZE_GUARD = 1 << 22


def size_guard(limit=None):
    """Resolve the cell limit: explicit argument, then ``BRIDGEKIT_SIZE_GUARD``."""
    if limit is not None:
        return int(limit)
    env = os.environ.get("BRIDGEKIT_SIZE_GUARD")
    if env:
        return int(env)
    return DEFAULT_SIZE_GUARD


def _ingest(weights, what="weights"):
    arr = np.array(weights, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    if np.any(arr < -SNAP):
        raise ValueError(f"{what} must be nonnegative")
    arr[arr < SNAP] = 0.0
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    labels: tuple
    base: "StateSpace | None" = field(default=None, compare=False)

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ValueError("state space needs at least one state")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be distinct")

    @property
    def n(self):
        return len(self.labels)

    def index(self, label):
        return self.labels.index(str(label))

    @classmethod
    def paired(cls, base):
        """The product space X x X used for folded paths, labelled ``a|b``."""
        labels = tuple(f"{a}|{b}" for a in base.labels for b in base.labels)
        return cls(labels, base=base)

    @classmethod
    def range(cls, n, prefix="s"):
        return cls(tuple(f"{prefix}{i}" for i in range(n)))


@dataclass(frozen=True)
class TimeGrid:
    times: tuple

    def __post_init__(self):
        times = tuple(Fraction(t).limit_denominator(10**12) if isinstance(t, float) else Fraction(t)
                      for t in self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 2:
            raise ValueError("time grid needs at least two times")
        if times[0] != 0 or times[-1] != 1:
            raise ValueError("time grid must start at 0 and end at 1")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("time grid must be strictly increasing")

    @property
    def K(self):
        return len(self.times)

    @classmethod
    def uniform(cls, K):
        return cls(tuple(Fraction(k, K - 1) for k in range(K)))


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Nonnegative weights on a finite product of coordinates (one tensor axis each)."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _ingest(self.weights))

    @property
    def shape(self):
        return self.weights.shape

    @property
    def ndim(self):
        return self.weights.ndim

    @property
    def mass(self):
        return float(self.weights.sum())

    @property
    def support(self):
        return self.weights > 0

    def is_probability(self, tol=PROB_TOL):
        return abs(self.mass - 1.0) <= tol

    def normalized(self):
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a zero measure")
        return FiniteMeasure(self.weights / m)

    def marginal(self, coords):
        return marginal(self, coords)


@dataclass(frozen=True, eq=False)
class DensePathMeasure:
    space: StateSpace
    grid: TimeGrid
    weights: np.ndarray

    def __post_init__(self):
        w = _ingest(self.weights)
        expected = (self.space.n,) * self.grid.K
        if w.shape != expected:
            raise ShapeMismatch(f"weights shape {w.shape} does not match {expected}")
        object.__setattr__(self, "weights", w)

    @property
    def K(self):
        return self.grid.K

    @property
    def n(self):
        return self.space.n

    @property
    def mass(self):
        return float(self.weights.sum())

    @property
    def normalized(self):
        return abs(self.mass - 1.0) <= 1e-12

    @property
    def support(self):
        return self.weights > 0

    def as_finite(self):
        return FiniteMeasure(self.weights)

    def normalize(self):
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a zero measure")
        return self.with_weights(self.weights / m)

    def with_weights(self, weights):
        return DensePathMeasure(self.space, self.grid, weights)


@dataclass(frozen=True, eq=False)
class MarkovPathMeasure:
    """Initial weights plus one transition matrix per grid step.

    ``kernels[k][x, y]`` is the weight of moving to ``y`` at ``t_{k+1}`` given
    ``x`` at ``t_k``; each row is either all zero or sums to one. ``init`` may
    be unnormalized.
    """

    space: StateSpace
    grid: TimeGrid
    init: np.ndarray
    kernels: tuple

    def __post_init__(self):
        n, K = self.space.n, self.grid.K
        init = _ingest(self.init, "init")
        if init.shape != (n,):
            raise ShapeMismatch(f"init must have shape ({n},)")
        kernels = tuple(_ingest(k, "kernel") for k in self.kernels)
        if len(kernels) != K - 1:
            raise ShapeMismatch(f"need {K - 1} kernels, got {len(kernels)}")
        reach = init > 0
        for k, ker in enumerate(kernels):
            if ker.shape != (n, n):
                raise ShapeMismatch(f"kernel {k} must have shape ({n}, {n})")
            rows = ker.sum(axis=1)
            bad = (rows > 0) & (np.abs(rows - 1.0) > KERNEL_TOL)
            if np.any(bad):
                raise ValueError(f"kernel {k} row {int(np.argmax(bad))} is neither zero nor stochastic")
            dead = reach & (rows == 0)
            if np.any(dead):
                raise ValueError(
                    f"state {self.space.labels[int(np.argmax(dead))]} is reachable at step {k} "
                    "but has an empty kernel row")
            reach = (reach.astype(float) @ ker) > 0
        object.__setattr__(self, "init", init)
        object.__setattr__(self, "kernels", kernels)

    @property
    def K(self):
        return self.grid.K

    @property
    def n(self):
        return self.space.n

    def to_dense(self, limit=None):
        return markov_to_dense(self, limit)


def _weights(m):
    if isinstance(m, (DensePathMeasure, FiniteMeasure)):
        return m.weights
    return np.asarray(m, dtype=float)


def markov_to_dense(M: MarkovPathMeasure, limit=None) -> DensePathMeasure:
    """Materialize the law of the chain: ``w(path) = init(x_0) * prod_k kernel_k(x_k, x_{k+1})``."""
    cells = M.n ** M.K
    if cells > size_guard(limit):
        raise SizeGuard(f"{M.n}^{M.K} = {cells} cells exceeds the size guard {size_guard(limit)}")
    w = M.init.copy()
    for ker in M.kernels:
        w = w[..., None] * ker.reshape((1,) * (w.ndim - 1) + ker.shape)
    return DensePathMeasure(M.space, M.grid, w)


def _check_coords(coords, ndim):
    coords = [int(c) for c in coords]
    if len(set(coords)) != len(coords):
        raise BadCoords(f"duplicate coordinates in {coords}")
    for c in coords:
        if not 0 <= c < ndim:
            raise BadCoords(f"coordinate {c} out of range for {ndim} axes")
    return coords


def marginal_array(w, coords):
    """Sum out every axis not in ``coords``; result axes follow the order of ``coords``."""
    coords = _check_coords(coords, w.ndim)
    others = tuple(i for i in range(w.ndim) if i not in coords)
    out = w.sum(axis=others) if others else w
    kept = sorted(coords)
    return np.transpose(out, [kept.index(c) for c in coords])


def marginal(Q, coords) -> FiniteMeasure:
    return FiniteMeasure(marginal_array(_weights(Q), coords))


def disintegrate(q, phi_coords):
    """Split ``q`` along the coordinates ``phi_coords``.

    Returns ``(pushforward, kernel)`` where ``kernel[b]`` is the normalized
    restriction of ``q`` to the slice ``{phi = b}``, kept in the full shape of
    ``q`` so that ``q == sum_b pushforward(b) * kernel[b]`` cellwise. Only
    values ``b`` charged by the pushforward get a kernel.
    """
    w = _weights(q)
    phi_coords = _check_coords(phi_coords, w.ndim)
    push = marginal_array(w, phi_coords)
    kernel = {}
    for b in zip(*np.nonzero(push)):
        b = tuple(int(v) for v in b)
        index = [slice(None)] * w.ndim
        for c, v in zip(phi_coords, b):
            index[c] = v
        sliced = np.zeros_like(w)
        sliced[tuple(index)] = w[tuple(index)]
        kernel[b] = FiniteMeasure(sliced / push[b])
    return FiniteMeasure(push), kernel


def relative_entropy(P, R) -> float:
    """``H(P|R) = sum P log(P/R)`` in nats, with ``0 log 0 = 0``.

    ``R`` may carry any finite mass, in which case the value can be negative.
    Returns ``inf`` when ``P`` charges a cell that ``R`` does not.
    """
    p, r = _weights(P), _weights(R)
    if p.shape != r.shape:
        raise ShapeMismatch(f"shapes {p.shape} and {r.shape} differ")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise NotProbability(f"P has mass {p.sum()!r}")
    charged = p > 0
    if np.any(charged & (r <= 0)):
        return float("inf")
    pc, rc = p[charged], r[charged]
    return float(np.sum(pc * (np.log(pc) - np.log(rc))))


def total_variation(a, b) -> float:
    a, b = _weights(a), _weights(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return 0.5 * float(np.abs(a - b).sum())


def outer(*arrays):
    """Tensor product of weight arrays, axes concatenated in order."""
    out = np.ones(())
    for a in arrays:
        a = _weights(a)
        out = np.multiply.outer(out, a)
    return out


def abs_continuous(p, q) -> bool:
    """True iff every cell charged by ``p`` is charged by ``q``."""
    pw, qw = _weights(p), _weights(q)
    if pw.shape != qw.shape:
        raise ShapeMismatch(f"shapes {pw.shape} and {qw.shape} differ")
    return not bool(np.any((pw > 0) & (qw <= 0)))


def equivalent(p, q) -> bool:
    return abs_continuous(p, q) and abs_continuous(q, p)


@dataclass
class ConditioningReport:
    absolutely_continuous: bool
    via_conditioning: bool
    product_equivalent: bool
    slice_witnesses: list
    violations: list

    @property
    def ok(self):
        return not self.violations


def check_conditioning(p, q, phi_coords) -> ConditioningReport:
    """Exhaustively check the two absolute-continuity/conditioning facts.

    (a) ``p << q`` iff ``phi#p << phi#q`` and ``p^{phi=b} << q^{phi=b}`` for
    every ``b`` charged by ``phi#p``.

    (b) With ``Y = phi_coords`` and ``X`` the remaining coordinates: when
    ``q_X (x) q_Y`` and ``q`` are equivalent, every slice ``q_X^{Y=y}`` is
    equivalent to ``q_X``. ``slice_witnesses`` lists the ``y`` whose slice is
    not equivalent to ``q_X`` regardless of the hypothesis; they only count as
    violations when the hypothesis holds.
    """
    pw, qw = _weights(p), _weights(q)
    if pw.shape != qw.shape:
        raise ShapeMismatch(f"shapes {pw.shape} and {qw.shape} differ")
    phi_coords = _check_coords(phi_coords, qw.ndim)
    violations = []

    lhs = abs_continuous(pw, qw)
    p_push, p_kernel = disintegrate(pw, phi_coords)
    q_push, q_kernel = disintegrate(qw, phi_coords)
    rhs = abs_continuous(p_push, q_push)
    if rhs:
        for b, kp in p_kernel.items():
            if not abs_continuous(kp, q_kernel[b]):
                rhs = False
                break
    if lhs != rhs:
        violations.append({"part": "a", "lhs": lhs, "rhs": rhs})

    x_coords = [i for i in range(qw.ndim) if i not in phi_coords]
    q_x = marginal_array(qw, x_coords)
    q_y = marginal_array(qw, phi_coords)
    joint = marginal_array(qw, x_coords + phi_coords)
    product_equivalent = equivalent(outer(q_x, q_y), joint)
    witnesses = []
    for y in zip(*np.nonzero(q_y)):
        y = tuple(int(v) for v in y)
        slice_x = joint[(Ellipsis,) + y]
        if not equivalent(slice_x, q_x):
            witnesses.append(y)
    if product_equivalent:
        violations.extend({"part": "b", "y": y} for y in witnesses)
    return ConditioningReport(lhs, rhs, product_equivalent, witnesses, violations)


@dataclass
class SuperadditivityResult:
    lhs: float
    rhs: float
    gap: float
    is_product: bool


def superadditivity_check(pi, r1, r2) -> SuperadditivityResult:
    """Compare ``H(pi | r1 (x) r2)`` with ``H(pi_1|r1) + H(pi_2|r2)`` for a 2-axis ``pi``."""
    w = _weights(pi)
    a, b = _weights(r1), _weights(r2)
    if w.ndim != 2 or w.shape != (a.size, b.size):
        raise ShapeMismatch("pi must be a matrix matching r1 x r2")
    ref = np.multiply.outer(a, b)
    if not abs_continuous(w, ref):
        raise NotAbsolutelyContinuous("pi is not dominated by r1 (x) r2")
    lhs = relative_entropy(w, ref)
    p1, p2 = w.sum(axis=1), w.sum(axis=0)
    rhs = relative_entropy(p1, a) + relative_entropy(p2, b)
    is_product = total_variation(w, np.multiply.outer(p1, p2)) <= 1e-10
    return SuperadditivityResult(lhs, rhs, lhs - rhs, is_product)


def iter_paths(n, K):
    """All paths of length K over n states, in row-major order."""
    return itertools.product(range(n), repeat=K)


def broadcast_segment(values, K, start):
    """Broadcast a tensor over coordinates ``start..start+ndim-1`` to the full path shape."""
    values = np.asarray(values)
    return values.reshape((1,) * start + values.shape + (1,) * (K - start - values.ndim))


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


def validate_distribution(v: Sequence[float], n, what="distribution"):
    arr = _ingest(v, what)
    if arr.shape != (n,):
        raise ShapeMismatch(f"{what} must have {n} entries")
    if abs(arr.sum() - 1.0) > PROB_TOL:
        raise NotProbability(f"{what} sums to {arr.sum()!r}")
    return arr
