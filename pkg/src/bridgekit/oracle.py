"""Brute-force minimizer of ``H(P|R)`` over the whole path simplex.

Used only to cross-check the solvers, so it knows nothing about potentials or
Markov structure: every path is a free variable and the constraints are
linear equalities. The optimizer's support is the largest support any
feasible point can have, found by a few linear programs; Newton's method
with equality constraints then runs on that face from an interior start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleProblem, SizeGuard
from .measure import DensePathMeasure, relative_entropy
from .solvers import ProblemSpec, constraint_system

ORACLE_SIZE_GUARD = 4096
POSITIVE = 1e-9


@dataclass
class OracleResult:
    P: DensePathMeasure
    objective: float
    iterations: int
    kkt_residual: float
    support_size: int


def _support_lps(A, b, m):
    """Average of LP solutions whose union of supports is the maximal feasible support."""
    known = np.zeros(m, bool)
    points = []
    # variables (q, s): maximize sum of s over unknown cells, 0 <= s <= min(q, cap)
    cap = 1.0 / m
    while True:
        unknown = ~known
        c = np.concatenate([np.zeros(m), -unknown.astype(float)])
        A_eq = np.hstack([A, np.zeros((A.shape[0], m))])
        A_ub = np.hstack([-np.eye(m), np.eye(m)])
        bounds = [(0, None)] * m + [(0, cap if u else 0) for u in unknown]
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=b, bounds=bounds, method="highs")
        if res.status != 0:
            if not points:
                raise InfeasibleProblem("no probability on the reference's support meets the constraints")
            break
        q = np.clip(res.x[:m], 0.0, None)
        new = unknown & (q > POSITIVE)
        points.append(q)
        known |= q > POSITIVE
        if not new.any():
            break
    return known, np.mean(points, axis=0)


def oracle_minimize(spec: ProblemSpec, tol=1e-12, max_iter=200, limit=ORACLE_SIZE_GUARD) -> OracleResult:
    """Minimize ``H(P|R)`` subject to the problem's marginal and endpoint constraints."""
    n, K = spec.n, spec.K
    cells_total = n ** K
    if cells_total > limit:
        raise SizeGuard(f"{n}^{K} = {cells_total} paths exceeds the oracle size guard {limit}")
    R = spec.dense_reference(limit)
    r = R.weights.ravel()
    cells = np.flatnonzero(r > 0)
    A, b = constraint_system(spec, cells)
    support, start = _support_lps(A, b, len(cells))
    cells, A = cells[support], A[:, support]
    logr = np.log(r[cells])
    p = start[support]
    p = np.maximum(p, POSITIVE * 1e-3)

    it, kkt = 0, np.inf
    for it in range(1, max_iter + 1):
        g = np.log(p) - logr + 1.0
        rp = b - A @ p
        AP = A * p
        M = AP @ A.T
        nu = np.linalg.lstsq(M, -rp - AP @ g, rcond=None)[0]
        dp = -p * (g + A.T @ nu)
        dec = float(np.sum(dp * dp / p))
        t = 1.0
        neg = dp < 0
        if neg.any():
            t = min(1.0, 0.99 * float(np.min(-p[neg] / dp[neg])))

        def merit(q):
            return np.linalg.norm(b - A @ q)

        while t > 1e-12:
            q = p + t * dp
            if np.all(q > 0) and (merit(q) <= (1 - 0.1 * t) * merit(p) + 1e-14 or
                                  _obj(q, logr) <= _obj(p, logr) + 1e-15 * abs(_obj(p, logr)) + 1e-300):
                break
            t *= 0.5
        p = p + t * dp
        lam = np.log(p) - logr + 1.0 + A.T @ nu
        kkt = max(float(np.abs(lam).max()), float(np.abs(b - A @ p).max()))
        if dec < tol ** 2 and kkt < max(tol, 1e-10):
            break
    w = np.zeros(cells_total)
    w[cells] = p
    w /= w.sum()
    P = R.with_weights(w.reshape((n,) * K))
    return OracleResult(P, relative_entropy(P, R), it, kkt, int(len(cells)))


def _obj(q, logr):
    return float(np.sum(q * (np.log(q) - logr)))
