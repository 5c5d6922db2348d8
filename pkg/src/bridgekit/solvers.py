"""Entropy minimization under marginal constraints by iterative proportional fitting.

Every solver here runs the same log-domain engine: the iterate is
``log P = log R + sum_b phi_b`` where each block potential ``phi_b`` lives on a
small set of axes, and a block update matches that block's marginal exactly.
The Schrödinger problem has one block per constrained time; the Brödinger
problem adds a block on ``(X_0, X_{K-1})``; the folded route places blocks on
single legs of the folded path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .additive import Potentials, gauge_fix
from .errors import (
    IncompatibleValues,
    InfeasibleProblem,
    NotMarkov,
    PreconditionFailed,
    ShapeMismatch,
)
from .folding import fold, fold_parameters, unfold
from .measure import (
    DensePathMeasure,
    MarkovPathMeasure,
    _ingest,
    as_fraction,
    marginal_array,
    relative_entropy,
    validate_distribution,
)
from .structure import is_markov, is_reciprocal

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000
FLOW_TOL = 1e-9


# --------------------------------------------------------------------------- problem


@dataclass(frozen=True)
class Constraint:
    """Prescribed law ``target`` of ``X_index`` (on one leg of a folded path if ``leg`` is set)."""

    index: int
    target: np.ndarray
    leg: int | None = None


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    reference: object  # DensePathMeasure or MarkovPathMeasure
    constraints: tuple = ()
    endpoint: np.ndarray | None = None

    def __post_init__(self):
        ref = self.reference
        if not isinstance(ref, (DensePathMeasure, MarkovPathMeasure)):
            raise TypeError("reference must be a DensePathMeasure or a MarkovPathMeasure")
        n, K = ref.n, ref.K
        cons = []
        for c in self.constraints:
            if not isinstance(c, Constraint):
                c = Constraint(int(c[0]), c[1])
            if not 0 <= c.index < K:
                raise IncompatibleValues(f"constraint index {c.index} outside the grid")
            cons.append(Constraint(int(c.index), validate_distribution(c.target, n, f"mu_{c.index}"), c.leg))
        cons.sort(key=lambda c: c.index)
        idx = [c.index for c in cons]
        if len(set(idx)) != len(idx):
            raise IncompatibleValues(f"duplicate constraint indices {idx}")
        object.__setattr__(self, "constraints", tuple(cons))
        if self.endpoint is not None:
            pi = _ingest(self.endpoint, "endpoint")
            if pi.shape != (n, n):
                raise ShapeMismatch(f"endpoint law must have shape ({n}, {n})")
            if abs(pi.sum() - 1.0) > 1e-10:
                raise IncompatibleValues(f"endpoint law sums to {pi.sum()!r}")
            for c in cons:
                if c.index in (0, K - 1):
                    m = pi.sum(axis=1 if c.index == 0 else 0)
                    if 0.5 * np.abs(m - c.target).sum() > 1e-10:
                        raise IncompatibleValues(
                            f"endpoint law disagrees with the constraint at index {c.index}")
            object.__setattr__(self, "endpoint", pi)

    @property
    def n(self):
        return self.reference.n

    @property
    def K(self):
        return self.reference.K

    @property
    def indices(self):
        return [c.index for c in self.constraints]

    @property
    def has_endpoint(self):
        return self.endpoint is not None

    def dense_reference(self, limit=None) -> DensePathMeasure:
        ref = self.reference
        return ref if isinstance(ref, DensePathMeasure) else ref.to_dense(limit)

    def without_endpoint(self):
        return ProblemSpec(self.reference, self.constraints, None)


# --------------------------------------------------------------------------- feasibility


@dataclass
class Feasibility:
    feasible: bool
    witness: dict | None = None
    method: str = "support"

    def __bool__(self):
        return bool(self.feasible)


def _is_markov_reference(spec):
    if isinstance(spec.reference, MarkovPathMeasure):
        return True
    return is_markov(spec.reference).holds


def check_feasibility(spec: ProblemSpec, limit=None) -> Feasibility:
    """Is there a probability ``Q << R`` meeting every constraint?

    Single-time supports are checked first. Without an endpoint law and with a
    Markov reference, feasibility reduces to a coupling (max-flow) problem
    between each pair of consecutive constrained times. Otherwise an exact
    linear program over the charged paths decides it.
    """
    r = spec.dense_reference(limit).weights
    for c in spec.constraints:
        rt = marginal_array(r, [c.index])
        bad = np.flatnonzero((c.target > 0) & (rt <= 0))
        if bad.size:
            return Feasibility(False, {"index": c.index, "state": int(bad[0]),
                                       "reason": "target charges a state the reference never visits"})
    if spec.has_endpoint:
        re = marginal_array(r, [0, spec.K - 1])
        bad = np.argwhere((spec.endpoint > 0) & (re <= 0))
        if len(bad):
            return Feasibility(False, {"indices": [0, spec.K - 1], "states": [int(v) for v in bad[0]],
                                       "reason": "endpoint law charges a pair the reference never joins"})
    if not spec.constraints and not spec.has_endpoint:
        ok = bool(r.sum() > 0)
        return Feasibility(ok, None if ok else {"reason": "reference has zero mass"})
    if not spec.has_endpoint and _is_markov_reference(spec):
        for c0, c1 in zip(spec.constraints, spec.constraints[1:]):
            wit = _coupling_witness(r, c0, c1)
            if wit is not None:
                return Feasibility(False, wit, "flow")
        return Feasibility(True, None, "flow")
    return _lp_feasibility(spec, r)


def _coupling_witness(r, c0, c1):
    """``None`` if a coupling of the two targets lives on the reference's pair support, else a Hall set."""
    allowed = marginal_array(r, [c0.index, c1.index]) > 0
    G = nx.DiGraph()
    for x in np.flatnonzero(c0.target > 0):
        G.add_edge("src", ("a", int(x)), capacity=float(c0.target[x]))
        for z in np.flatnonzero(allowed[x] & (c1.target > 0)):
            G.add_edge(("a", int(x)), ("b", int(z)))  # no capacity attribute: unbounded
    for z in np.flatnonzero(c1.target > 0):
        G.add_edge(("b", int(z)), "sink", capacity=float(c1.target[z]))
    if "sink" not in G or "src" not in G:
        return {"indices": [c0.index, c1.index], "reason": "empty target"}
    value, (side, _) = nx.minimum_cut(G, "src", "sink")
    if value >= 1.0 - FLOW_TOL:
        return None
    S = sorted(v[1] for v in side if isinstance(v, tuple) and v[0] == "a")
    N = sorted(v[1] for v in side if isinstance(v, tuple) and v[0] == "b")
    return {"indices": [c0.index, c1.index], "hall_set": S, "neighbourhood": N,
            "mass": float(c0.target[S].sum()), "neighbourhood_mass": float(c1.target[N].sum()),
            "reason": "no coupling on the reference's pair support"}


def constraint_system(spec: ProblemSpec, cells):
    """Rows ``A q = b`` of every marginal constraint plus total mass, over the listed flat cells."""
    n, K = spec.n, spec.K
    coords = np.unravel_index(cells, (n,) * K)
    rows, rhs = [np.ones(len(cells))], [1.0]
    for c in spec.constraints:
        for x in range(n):
            rows.append((coords[c.index] == x).astype(float))
            rhs.append(float(c.target[x]))
    if spec.has_endpoint:
        for x in range(n):
            for z in range(n):
                rows.append(((coords[0] == x) & (coords[K - 1] == z)).astype(float))
                rhs.append(float(spec.endpoint[x, z]))
    return np.array(rows), np.array(rhs)


def _lp_feasibility(spec, r):
    cells = np.flatnonzero(r.ravel() > 0)
    A, b = constraint_system(spec, cells)
    res = linprog(np.zeros(len(cells)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 0:
        return Feasibility(True, None, "lp")
    return Feasibility(False, {"reason": "no probability on the reference's support meets the constraints",
                               "lp_status": int(res.status)}, "lp")


# --------------------------------------------------------------------------- engine


@dataclass
class Solution:
    P: DensePathMeasure
    potentials: Potentials
    iterations: int
    residual: float
    converged: bool
    objective: float
    history: list = field(default_factory=list)
    problem: ProblemSpec | None = None


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _expand(values, axes, ndim):
    shape = [1] * ndim
    for a, s in zip(axes, values.shape):
        shape[a] = s
    return values.reshape(shape)


def _log_marginal(logq, axes):
    others = tuple(a for a in range(logq.ndim) if a not in axes)
    out = logsumexp(logq, axis=others) if others else logq
    return out


def _tv_log(lm, target):
    """Total variation between ``exp(lm)`` renormalized and ``target``."""
    total = logsumexp(lm)
    with np.errstate(invalid="ignore"):
        cur = np.exp(lm - total) if np.isfinite(total) else np.zeros_like(lm)
    return 0.5 * float(np.abs(cur - target).sum())


def ipfp(logr, blocks, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, callback=None):
    """Cyclic block updates ``phi_b += log target_b - log marginal_b``.

    ``blocks`` is a list of ``(axes, target)`` with ``axes`` sorted. Returns
    ``(logq, potentials, cycles, residual, converged, history)``; ``logq`` is
    normalized after the first update. The residual of a cycle is the largest
    total variation of a block's marginal, measured just before that block's
    own update.
    """
    logq = np.array(logr, dtype=float)
    ndim = logq.ndim
    pots = [np.zeros(np.shape(t)) for _, t in blocks]
    logt = [_log(np.asarray(t, float)) for _, t in blocks]
    history = []
    if not blocks:
        logq = logq - logsumexp(logq)
        return logq, pots, 0, 0.0, True, history
    residual = np.inf
    converged = False
    cycles = 0
    for cycle in range(1, max_iter + 1):
        cycles = cycle
        residual = 0.0
        for b, (axes, target) in enumerate(blocks):
            lm = _log_marginal(logq, axes)
            residual = max(residual, _tv_log(lm, np.asarray(target)))
            zero = np.asarray(target) <= 0
            if np.any(~zero & np.isneginf(lm)):
                raise InfeasibleProblem(f"block on axes {list(axes)} lost a state its target charges")
            with np.errstate(invalid="ignore"):
                delta = np.where(zero, -np.inf, logt[b] - np.where(np.isneginf(lm), 0.0, lm))
            pots[b] = pots[b] + delta
            logq = logq + _expand(delta, axes, ndim)
        objective, dual = _objective(logq, logr, pots, blocks)
        record = {"cycle": cycle, "residual": residual, "objective": objective, "dual": dual}
        history.append(record)
        if callback is not None:
            callback(record)
        if residual <= tol:
            converged = True
            break
    if not converged:
        log.warning("IPFP stopped after %d cycles with residual %.3g > tol %.3g", cycles, residual, tol)
    return logq, pots, cycles, residual, converged, history


def _objective(logq, logr, pots, blocks):
    """Primal ``H(P|R)`` of the current iterate and the dual value of the potentials."""
    p = np.exp(logq)
    on = p > 0
    primal = float(np.sum(p[on] * (logq[on] - logr[on])))
    lin = 0.0
    for phi, (_, target) in zip(pots, blocks):
        t = np.asarray(target)
        live = t > 0
        lin += float(np.sum(t[live] * phi[live]))
    with np.errstate(invalid="ignore"):
        total = logr.copy()
        for phi, (axes, _) in zip(pots, blocks):
            total = total + _expand(phi, axes, logr.ndim)
    return primal, lin - float(logsumexp(total))


def _finish(spec, R, logq, pots, blocks_meta, cycles, residual, converged, history, eta_block=None):
    P = R.with_weights(np.exp(logq))
    times, fs, weights = [], [], []
    for (t, target), phi in zip(blocks_meta, pots):
        if t is None:
            continue
        times.append(t)
        fs.append(phi)
        weights.append(target)
    eta = None if eta_block is None else pots[eta_block]
    # with no block at all the only freedom is the normalizing constant
    scale = 0.0 if pots else -float(logsumexp(_log(R.weights)))
    pot = gauge_fix(Potentials(times, fs, eta, scale), weights)
    objective = relative_entropy(P, R)
    return Solution(P, pot, cycles, residual, converged, objective, history, spec)


def solve_schrodinger(spec: ProblemSpec, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                      callback=None, limit=None, check=True) -> Solution:
    """Minimize ``H(P|R)`` subject to the time-marginal constraints (no endpoint law)."""
    if spec.has_endpoint:
        raise PreconditionFailed("spec has an endpoint law; use solve_brodinger")
    R = spec.dense_reference(limit)
    if check:
        if not is_markov(R).holds:
            raise NotMarkov("Schrödinger reference must be Markov")
        feas = check_feasibility(spec, limit)
        if not feas:
            raise InfeasibleProblem("constraints admit no probability dominated by R", witness=feas.witness)
    blocks = [((c.index,), c.target) for c in spec.constraints]
    logr = _log(R.weights)
    out = ipfp(logr, blocks, tol, max_iter, callback)
    meta = [(c.index, c.target) for c in spec.constraints]
    return _finish(spec, R, out[0], out[1], meta, *out[2:])


def solve_brodinger(spec: ProblemSpec, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                    callback=None, limit=None, check=True) -> Solution:
    """Schrödinger constraints plus a prescribed joint law of ``(X_0, X_{K-1})``."""
    if not spec.has_endpoint:
        raise PreconditionFailed("spec has no endpoint law; use solve_schrodinger")
    R = spec.dense_reference(limit)
    K = spec.K
    if check:
        if not is_reciprocal(R).holds:
            raise PreconditionFailed("Brödinger reference must be reciprocal")
        feas = check_feasibility(spec, limit)
        if not feas:
            raise InfeasibleProblem("constraints admit no probability dominated by R", witness=feas.witness)
    blocks = [((c.index,), c.target) for c in spec.constraints] + [((0, K - 1), spec.endpoint)]
    out = ipfp(_log(R.weights), blocks, tol, max_iter, callback)
    meta = [(c.index, c.target) for c in spec.constraints] + [(None, None)]
    return _finish(spec, R, out[0], out[1], meta, *out[2:], eta_block=len(blocks) - 1)


def default_lambda(spec: ProblemSpec):
    """Midpoint between the last interior constrained time and 1, so interior targets sit on the forward leg."""
    times = spec.reference.grid.times
    interior = [times[c.index] for c in spec.constraints if 0 < c.index < spec.K - 1]
    if not interior:
        return as_fraction("1/2")
    return (max(interior) + 1) / 2


def solve_brodinger_via_folding(spec: ProblemSpec, lam=None, tol=DEFAULT_TOL,
                                max_iter=DEFAULT_MAX_ITER, callback=None, limit=None,
                                check=True) -> Solution:
    """Fold the reference, solve a Markov problem on path pairs, unfold.

    The endpoint law becomes the law of the first folded state and each
    interior target the law of one leg at the folded time that carries it.
    """
    if not spec.has_endpoint:
        raise PreconditionFailed("folding route needs an endpoint law")
    R = spec.dense_reference(limit)
    n = spec.n
    if check:
        if not is_reciprocal(R).holds:
            raise PreconditionFailed("Brödinger reference must be reciprocal")
        feas = check_feasibility(spec, limit)
        if not feas:
            raise InfeasibleProblem("constraints admit no probability dominated by R", witness=feas.witness)
    params = fold_parameters(R.grid, default_lambda(spec) if lam is None else lam)
    Rf = fold(R, params)
    Kf = params.K
    logr = _log(Rf.weights).reshape((n, n) * Kf)
    blocks, meta = [((0, 1), spec.endpoint)], [(None, None)]
    for c in spec.constraints:
        j, leg = params.leg_of(c.index)
        blocks.append(((2 * j + leg,), c.target))
        meta.append((c.index, c.target))
    order = sorted(range(len(blocks)), key=lambda i: blocks[i][0][0])
    blocks = [blocks[i] for i in order]
    meta = [meta[i] for i in order]
    logq, pots, cycles, residual, converged, history = ipfp(logr, blocks, tol, max_iter, callback)
    Pf = Rf.with_weights(np.exp(logq).reshape(Rf.weights.shape))
    P = unfold(Pf, params, R.space, R.grid)
    eta_block = next(i for i, m in enumerate(meta) if m[0] is None)
    sol = _finish(spec, R, _log(P.weights), pots, meta, cycles, residual, converged, history, eta_block)
    sol.lam = params.lam
    return sol


def solve(spec: ProblemSpec, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, callback=None, limit=None):
    """Dispatch on the presence of an endpoint law."""
    if spec.has_endpoint:
        return solve_brodinger(spec, tol, max_iter, callback, limit)
    return solve_schrodinger(spec, tol, max_iter, callback, limit)
