"""Exact structural checks on finite path measures.

Markov and reciprocal properties are conditional-independence statements; on a
finite grid they are decided by tabulating every conditional law. The residual
reported for a conditioning value is the total-variation distance between the
joint conditional law and the product of its marginals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    NotAbsolutelyContinuous,
    NotConditionallyIndependent,
    PreconditionFailed,
    ShapeMismatch,
)
from .measure import _weights, abs_continuous, marginal_array, outer

DEFAULT_TOL = 1e-9

MARKOV = "Markov"
RECIPROCAL = "Reciprocal"
IRREDUCIBLE_MARKOV = "IrreducibleMarkov"
IRREDUCIBLE_RECIPROCAL = "IrreducibleReciprocal"


@dataclass
class StructureReport:
    property: str
    holds: bool
    worst_residual: float
    witness: dict | None = None
    tol: float = DEFAULT_TOL

    def __bool__(self):
        return self.holds

    def to_dict(self):
        return {
            "property": self.property,
            "holds": self.holds,
            "worst_residual": self.worst_residual,
            "witness": self.witness,
        }


def _grouped(w, cond, first, second):
    """Reshape ``w`` to ``(C, F, S)`` with the given axis groups (all axes must be listed)."""
    order = list(cond) + list(first) + list(second)
    t = np.transpose(w, order)
    c = int(np.prod([w.shape[a] for a in cond])) if cond else 1
    f = int(np.prod([w.shape[a] for a in first])) if first else 1
    s = int(np.prod([w.shape[a] for a in second])) if second else 1
    return t.reshape(c, f, s)


def ci_residuals(w, cond, first, second):
    """Per-conditioning-value TV residual of ``first _||_ second | cond``.

    Returns an array over the flattened ``cond`` values; values with zero mass
    get residual 0 (they are skipped, like any almost-everywhere statement).
    """
    g = _grouped(w, cond, first, second)
    mass = g.sum(axis=(1, 2))
    res = np.zeros(g.shape[0])
    live = mass > 0
    if not np.any(live):
        return res
    J = g[live] / mass[live, None, None]
    prod = J.sum(axis=2)[:, :, None] * J.sum(axis=1)[:, None, :]
    res[live] = 0.5 * np.abs(J - prod).sum(axis=(1, 2))
    return res


def _cond_value(w, cond, flat):
    return [int(v) for v in np.unravel_index(flat, [w.shape[a] for a in cond])]


def is_markov(Q, tol=DEFAULT_TOL) -> StructureReport:
    """Past and future independent given the present, at every interior grid time."""
    w = _weights(Q)
    K = w.ndim
    worst, witness = 0.0, None
    for k in range(1, K - 1):
        res = ci_residuals(w, [k], list(range(k)), list(range(k + 1, K)))
        j = int(np.argmax(res))
        if res[j] > worst:
            worst = float(res[j])
            witness = {"time_indices": [k], "states": _cond_value(w, [k], j)}
    holds = worst <= tol
    return StructureReport(MARKOV, holds, worst, None if holds else witness, tol)


def reciprocal_windows(K):
    """Grid windows ``(k, l)`` whose inside and outside are both nonempty."""
    for k in range(K):
        for l in range(k + 2, K):
            if k == 0 and l == K - 1:
                continue
            yield k, l


def window_residuals(w, k, l):
    K = w.ndim
    inside = list(range(k + 1, l))
    outside = list(range(k)) + list(range(l + 1, K))
    return ci_residuals(w, [k, l], inside, outside)


def is_reciprocal(Q, tol=DEFAULT_TOL) -> StructureReport:
    """Inside and outside of every window independent given the window endpoints."""
    w = _weights(Q)
    worst, witness = 0.0, None
    for k, l in reciprocal_windows(w.ndim):
        res = window_residuals(w, k, l)
        j = int(np.argmax(res))
        if res[j] > worst:
            worst = float(res[j])
            witness = {"time_indices": [k, l], "states": _cond_value(w, [k, l], j)}
    holds = worst <= tol
    report = StructureReport(RECIPROCAL, holds, worst, None if holds else witness, tol)
    if not report.holds and is_markov(w, tol).holds:
        raise AssertionError("measure passes the Markov check but fails reciprocity")
    return report


def _support_mismatch(w, idx):
    joint = marginal_array(w, list(idx)) > 0
    prod = outer(*[marginal_array(w, [i]) for i in idx]) > 0
    return joint != prod


def is_irreducible(R, mode="markov_pairs", tol=DEFAULT_TOL) -> StructureReport:
    """Support of every pair (or triple) marginal equals the product of the one-time supports.

    Exact support comparison; ``worst_residual`` counts mismatched cells for the
    worst tuple of times, so it is 0 exactly when the property holds.
    """
    w = _weights(R)
    if mode == "markov_pairs":
        size, prop = 2, IRREDUCIBLE_MARKOV
    elif mode == "reciprocal_triples":
        size, prop = 3, IRREDUCIBLE_RECIPROCAL
    else:
        raise ValueError(f"unknown irreducibility mode {mode!r}")
    worst, witness = 0, None
    for idx in itertools.combinations(range(w.ndim), size):
        bad = _support_mismatch(w, idx)
        count = int(bad.sum())
        if count > worst:
            worst = count
            cell = [int(v) for v in np.argwhere(bad)[0]]
            witness = {"time_indices": list(idx), "states": cell}
    return StructureReport(prop, worst == 0, float(worst), witness, tol)


@dataclass
class TransitionDensity:
    s_index: int
    t_index: int
    values: np.ndarray


def transition_density(R, s_index, t_index) -> TransitionDensity:
    """``dR_{st} / d(R_s (x) R_t)``, set to 0 where either marginal vanishes."""
    w = _weights(R)
    joint = marginal_array(w, [s_index, t_index])
    rs = marginal_array(w, [s_index])
    rt = marginal_array(w, [t_index])
    denom = np.multiply.outer(rs, rt)
    values = np.divide(joint, denom, out=np.zeros_like(joint), where=denom > 0)
    return TransitionDensity(s_index, t_index, values)


def _broadcast_axes(values, axes, ndim):
    """View a tensor whose axes are the coordinates ``axes`` as a full ``ndim`` broadcastable array."""
    axes = list(axes)
    order = sorted(range(len(axes)), key=lambda i: axes[i])
    v = np.transpose(values, order)
    shape = [1] * ndim
    for pos, ax in enumerate(sorted(axes)):
        shape[ax] = v.shape[pos]
    return v.reshape(shape)


@dataclass
class Factorization:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    residual: float

    @property
    def exact(self):
        return self.residual <= 1e-10


def conditional_factorize(p, r, A_coords, B_coords, C_coords, ci_tol=DEFAULT_TOL) -> Factorization:
    """Split ``dp/dr`` into ``alpha(A,C) * beta(B,C) * gamma(C)``.

    ``gamma = d(C#p)/d(C#r)`` and ``alpha * gamma = d((A,C)#p)/d((A,C)#r)``
    (``beta`` likewise), with ``alpha = beta = 0`` where ``gamma`` vanishes.
    ``residual`` is the largest relative gap between ``dp/dr`` and the product
    on the support of ``r``; it vanishes exactly when ``A`` and ``B`` are
    conditionally independent given ``C`` under ``p``.
    """
    pw, rw = _weights(p), _weights(r)
    if pw.shape != rw.shape:
        raise ShapeMismatch(f"shapes {pw.shape} and {rw.shape} differ")
    A, B, C = list(A_coords), list(B_coords), list(C_coords)
    if sorted(A + B + C) != list(range(rw.ndim)):
        raise ValueError("A, B, C must partition the coordinates")
    res = ci_residuals(rw, C, A, B)
    if res.size and res.max() > ci_tol:
        raise NotConditionallyIndependent(
            f"reference fails A _||_ B | C (TV residual {res.max():.3g})")
    if not abs_continuous(pw, rw):
        raise NotAbsolutelyContinuous("p is not dominated by r")

    def density(axes):
        num = marginal_array(pw, axes)
        den = marginal_array(rw, axes)
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    gamma = density(C) if C else np.array(pw.sum() / rw.sum())
    g_ac = _broadcast_axes(gamma, list(range(len(A), len(A) + len(C))), len(A) + len(C)) if C else gamma
    ac = density(A + C)
    alpha = np.divide(ac, g_ac, out=np.zeros_like(ac), where=np.broadcast_to(g_ac, ac.shape) > 0)
    g_bc = _broadcast_axes(gamma, list(range(len(B), len(B) + len(C))), len(B) + len(C)) if C else gamma
    bc = density(B + C)
    beta = np.divide(bc, g_bc, out=np.zeros_like(bc), where=np.broadcast_to(g_bc, bc.shape) > 0)

    nd = rw.ndim
    recon = _broadcast_axes(alpha, A + C, nd) * _broadcast_axes(beta, B + C, nd)
    recon = recon * (_broadcast_axes(gamma, C, nd) if C else gamma)
    D = np.divide(pw, rw, out=np.zeros_like(pw), where=rw > 0)
    on = rw > 0
    gap = np.abs(D - recon)[on] / np.maximum(1.0, D[on])
    return Factorization(alpha, beta, gamma, float(gap.max()) if gap.size else 0.0)


@dataclass
class TensorizationReport:
    indices: list
    violations: list

    @property
    def holds(self):
        return not self.violations


def tensorization_check(R, indices, tol=DEFAULT_TOL) -> TensorizationReport:
    """Support of ``R_{t_1..t_k}`` against the product of one-time supports."""
    w = _weights(R)
    if not is_reciprocal(w, tol).holds:
        raise PreconditionFailed("reference is not reciprocal")
    irr = is_irreducible(w, "reciprocal_triples")
    if not irr.holds:
        raise PreconditionFailed("reference is not irreducible over triples", witness=irr.witness)
    indices = sorted(int(i) for i in indices)
    bad = _support_mismatch(w, indices)
    return TensorizationReport(indices, [[int(v) for v in c] for c in np.argwhere(bad)])


def condition(Q, fixed):
    """Normalized restriction of ``Q`` to ``{X_k = x for k, x in fixed.items()}``."""
    w = np.array(_weights(Q))
    mask = np.zeros_like(w, dtype=bool)
    index = [slice(None)] * w.ndim
    for k, x in fixed.items():
        index[k] = x
    mask[tuple(index)] = True
    out = np.where(mask, w, 0.0)
    total = out.sum()
    if total <= 0:
        raise ValueError("conditioning event has zero mass")
    return out / total
