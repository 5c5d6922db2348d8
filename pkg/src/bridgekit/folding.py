"""Folding a path into a forward leg and a reversed backward leg.

For ``lam`` in (0, 1) the continuous fold sends ``w`` to
``tau -> (w(lam * tau), w(1 - (1 - lam) * tau))``. On a finite grid we keep
the folded times ``tau`` at which one of the two legs reaches a grid point and
hold each leg at the last grid point it reached (nothing is interpolated).
Every original index is visited by exactly one leg, except that the two legs
may meet on a shared index at the end, so the fold is injective.

Markov-ness of the folded measure at folded step ``j`` is exactly the
conditional independence of the inside and the outside of the window
``[fwd(j), bwd(j)]``; varying ``lam`` sweeps over every window.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BadFoldGrid, InconsistentSupport
from .measure import DensePathMeasure, StateSpace, TimeGrid, _weights, as_fraction


@dataclass(frozen=True)
class FoldParameters:
    lam: Fraction
    index_map: tuple  # ((fwd, bwd), ...) per folded index
    times: tuple  # folded grid, rescaled to [0, 1]

    @property
    def K(self):
        return len(self.index_map)

    def grid(self):
        return TimeGrid(self.times)

    def forward_position(self, index):
        """First folded index whose forward leg sits on original ``index`` (or None)."""
        for j, (f, _) in enumerate(self.index_map):
            if f == index:
                return j
        return None

    def backward_position(self, index):
        for j, (_, b) in enumerate(self.index_map):
            if b == index:
                return j
        return None

    def leg_of(self, index):
        """``(folded index, leg)`` carrying original ``index``, forward leg preferred."""
        j = self.forward_position(index)
        if j is not None:
            return j, 0
        j = self.backward_position(index)
        if j is None:
            raise BadFoldGrid(f"original index {index} is not covered")
        return j, 1


def fold_parameters(grid: TimeGrid, lam) -> FoldParameters:
    """Index map of the grid fold for a given ``lam``."""
    lam = as_fraction(lam)
    if not 0 < lam < 1:
        raise BadFoldGrid("lambda must lie strictly between 0 and 1")
    t = grid.times
    fwd_taus = {tk / lam for tk in t if tk <= lam}
    bwd_taus = {(1 - tk) / (1 - lam) for tk in t if tk >= lam}
    taus = sorted(fwd_taus | bwd_taus)

    def fwd(tau):
        return max(k for k, tk in enumerate(t) if tk <= lam * tau)

    def bwd(tau):
        return min(k for k, tk in enumerate(t) if tk >= 1 - (1 - lam) * tau)

    index_map = tuple((fwd(tau), bwd(tau)) for tau in taus)
    last = taus[-1]
    times = tuple(tau / last for tau in taus)
    params = FoldParameters(lam, index_map, times)
    validate_fold(params, grid.K)
    return params


def validate_fold(params: FoldParameters, K: int):
    """Legs start at (0, K-1), move one grid step at a time and cover every index once."""
    m = params.index_map
    if not m or tuple(m[0]) != (0, K - 1):
        raise BadFoldGrid("fold must start at the pair (0, K-1)")
    for (f0, b0), (f1, b1) in zip(m, m[1:]):
        if not (f1 - f0 in (0, 1) and b0 - b1 in (0, 1) and (f1, b1) != (f0, b0)):
            raise BadFoldGrid(f"illegal fold step {(f0, b0)} -> {(f1, b1)}")
    f_end, b_end = m[-1]
    if f_end > b_end:
        raise BadFoldGrid("legs cross: an index would be covered twice")
    if b_end - f_end > 1:
        raise BadFoldGrid(f"indices strictly between {f_end} and {b_end} are not covered")
    if len(params.times) != len(m):
        raise BadFoldGrid("folded grid and index map differ in length")


def admissible_lambdas(grid: TimeGrid):
    """One representative ``lam`` per distinct folded index map.

    For every window ``(k, l)`` the line from ``(0, 1)`` through an interior
    point of the grid cell ``[t_k, t_{k+1}) x (t_{l-1}, t_l]`` fixes a ``lam``
    whose fold passes through that window, so the returned family covers all
    windows.
    """
    t = grid.times
    K = grid.K
    seen = {}
    for k in range(K - 1):
        for l in range(k + 1, K):
            a = t[k] + (t[k + 1] - t[k]) / 3
            b = t[l] - (t[l] - t[l - 1]) / 3
            lam = a / (a + 1 - b)
            params = fold_parameters(grid, lam)
            seen.setdefault(params.index_map, lam)
    return sorted(seen.values())


def _fold_index(params: FoldParameters, n: int, K: int):
    """Flat folded index for every original path, in row-major path order."""
    paths = np.indices((n,) * K).reshape(K, -1)
    coords = [paths[f] * n + paths[b] for f, b in params.index_map]
    return np.ravel_multi_index(coords, (n * n,) * params.K)


def fold(Q: DensePathMeasure, params: FoldParameters) -> DensePathMeasure:
    """Pushforward of ``Q`` through the grid fold, on the paired state space."""
    validate_fold(params, Q.K)
    n = Q.n
    out = np.zeros((n * n) ** params.K)
    out[_fold_index(params, n, Q.K)] = Q.weights.ravel()
    space = StateSpace.paired(Q.space)
    return DensePathMeasure(space, params.grid(), out.reshape((n * n,) * params.K))


def unfold(Qf, params: FoldParameters, space: StateSpace, grid: TimeGrid) -> DensePathMeasure:
    """Inverse of :func:`fold` on its image; mass off the image raises."""
    validate_fold(params, grid.K)
    n, K = space.n, grid.K
    w = _weights(Qf).ravel()
    idx = _fold_index(params, n, K)
    on_image = w[idx]
    off = w.sum() - on_image.sum()
    if off > 1e-12 * max(1.0, w.sum()) or np.count_nonzero(w) > np.count_nonzero(on_image):
        raise InconsistentSupport("folded measure charges paths outside the image of the fold")
    return DensePathMeasure(space, grid, on_image.reshape((n,) * K))
