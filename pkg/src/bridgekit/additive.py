"""Contents, additive functionals and the potentials they collapse to.

A content assigns to every grid interval ``[t_k, t_l]`` a value per path; the
values on closed intervals determine everything else (open and half-open
intervals, finite disjoint unions). ``-inf`` stands for zero density and is
absorbing.

Content values are stored as arrays that broadcast against the full path
shape ``(n,) * K``, so a value that only depends on ``X_{[k..l]}`` costs no
more than its segment tensor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IncompatibleValues,
    NotAbsolutelyContinuous,
    NotIrreducible,
    NotMarkov,
    PremiseViolated,
    ReconstructionFailed,
    ShapeMismatch,
)
from .measure import _weights, abs_continuous, broadcast_segment, marginal_array
from .structure import is_irreducible, is_markov

VALUE_TOL = 1e-10
RECON_TOL = 1e-9
NEG_INF = -np.inf


def _close(a, b, tol):
    """Elementwise equality with ``-inf == -inf`` and a relative tolerance on finite values."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    both = np.isneginf(a) & np.isneginf(b)
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
        ok = diff <= tol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return both | (ok & np.isfinite(a) & np.isfinite(b))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def segment_log_density(P, R, k, l):
    """``log E_R[dP/dR | X_{[k..l]}] = log(P_{k..l} / R_{k..l})`` as a segment tensor."""
    p, r = _weights(P), _weights(R)
    coords = list(range(k, l + 1))
    return _log(_ratio(marginal_array(p, coords), marginal_array(r, coords)))


# --------------------------------------------------------------------------- contents


@dataclass(frozen=True, eq=False)
class Content:
    """Closed-interval values ``A([t_k, t_l])`` for every ``k <= l``.

    ``closed[(k, l)]`` broadcasts against ``(n,) * K``.
    """

    n: int
    K: int
    closed: dict

    @property
    def shape(self):
        return (self.n,) * self.K

    def closed_value(self, k, l):
        return np.broadcast_to(self.closed[(k, l)], self.shape)

    def open_value(self, k, l):
        """``A((t_k, t_l)) = A([t_k, t_l]) - A({t_k}) - A({t_l})``.

        Where an endpoint carries ``-inf`` the subtraction is undefined; the
        open value is set to 0 there, which keeps every disjoint-union
        identity true under ``-inf`` absorption.
        """
        if k >= l:
            return np.zeros(self.shape)
        whole = self.closed_value(k, l)
        left, right = self.closed_value(k, k), self.closed_value(l, l)
        dead = np.isneginf(left) | np.isneginf(right)
        with np.errstate(invalid="ignore"):
            out = np.where(dead, 0.0, whole - left - right)
        return out

    def value(self, k, l, left_closed=True, right_closed=True):
        """Value on the grid interval with endpoints ``t_k <= t_l`` and the given closedness."""
        if k > l:
            raise ValueError(f"empty index range {k} > {l}")
        if k == l:
            if left_closed and right_closed:
                return self.closed_value(k, k)
            return np.zeros(self.shape)
        if left_closed and right_closed:
            return self.closed_value(k, l)
        out = self.open_value(k, l)
        if left_closed:
            out = out + self.closed_value(k, k)
        if right_closed:
            out = out + self.closed_value(l, l)
        return out

    def union_value(self, intervals):
        """Sum over pairwise disjoint intervals ``(k, l, left_closed, right_closed)``."""
        intervals = [tuple(iv) for iv in intervals]
        for a, b in itertools.combinations(intervals, 2):
            if _overlap(a, b):
                raise ValueError(f"intervals {a} and {b} overlap")
        out = np.zeros(self.shape)
        for k, l, lc, rc in intervals:
            out = out + self.value(k, l, lc, rc)
        return out

    def quadruple_violations(self, mask=None, tol=VALUE_TOL, first_only=False):
        """Index quadruples ``s <= u <= v <= t`` (and a path) breaking additivity on ``mask``."""
        mask = np.ones(self.shape, bool) if mask is None else np.broadcast_to(mask, self.shape)
        out = []
        for s, u, v, t in itertools.combinations_with_replacement(range(self.K), 4):
            mid = self.closed_value(u, v)
            st, sv, ut = self.closed_value(s, t), self.closed_value(s, v), self.closed_value(u, t)
            dead = np.isneginf(mid)
            absorbed = np.isneginf(st) & np.isneginf(sv) & np.isneginf(ut)
            with np.errstate(invalid="ignore"):
                rhs = np.where(dead, NEG_INF, sv + ut - np.where(dead, 0.0, mid))
            ok = np.where(dead, absorbed, _close(st, rhs, tol))
            bad = mask & ~ok
            if np.any(bad):
                path = [int(i) for i in np.argwhere(bad)[0]]
                out.append({"quadruple": [s, u, v, t], "path": path})
                if first_only:
                    break
        return out


def _overlap(a, b):
    (k1, l1, lc1, rc1), (k2, l2, lc2, rc2) = a, b
    if k1 > k2:
        (k1, l1, lc1, rc1), (k2, l2, lc2, rc2) = (k2, l2, lc2, rc2), (k1, l1, lc1, rc1)
    if k1 == l1 and not (lc1 and rc1) or k2 == l2 and not (lc2 and rc2):
        return False
    if l1 < k2:
        return False
    if l1 > k2:
        return True
    return rc1 and lc2


def content_from_closed(values, n, K, mask=None, tol=VALUE_TOL) -> Content:
    """Build a content from closed-interval values, checking the quadruple rule.

    ``values`` maps ``(k, l)`` to an array broadcastable to ``(n,) * K`` (or is
    a callable ``(k, l) -> array``). The rule is checked on ``mask`` (all paths
    by default); a failure raises :class:`IncompatibleValues` with a witness.
    """
    shape = (n,) * K
    closed = {}
    for k in range(K):
        for l in range(k, K):
            v = values(k, l) if callable(values) else values[(k, l)]
            v = np.asarray(v, dtype=float)
            try:
                np.broadcast_to(v, shape)
            except ValueError as exc:
                raise ShapeMismatch(f"value on ({k}, {l}) does not broadcast to {shape}") from exc
            if v.ndim != K and v.size != 1:
                raise ShapeMismatch(f"value on ({k}, {l}) must have {K} axes")
            if np.any(np.isnan(v)) or np.any(np.isposinf(v)):
                raise IncompatibleValues(f"value on ({k}, {l}) is NaN or +inf")
            v = v.reshape(v.shape if v.ndim == K else (1,) * K)
            v.setflags(write=False)
            closed[(k, l)] = v
    content = Content(n, K, closed)
    bad = content.quadruple_violations(mask, tol, first_only=True)
    if bad:
        raise IncompatibleValues("closed values violate the quadruple rule", witness=bad[0])
    return content


@dataclass(frozen=True, eq=False)
class AdditiveFunctional:
    """A content whose value on ``[t_k, t_l]`` depends on ``X_{[k..l]}`` only.

    ``mask`` is the set of paths on which identities are asserted (the support
    of the reference).
    """

    content: Content
    mask: np.ndarray

    @property
    def K(self):
        return self.content.K

    @property
    def n(self):
        return self.content.n

    def value(self, k, l, left_closed=True, right_closed=True):
        return self.content.value(k, l, left_closed, right_closed)

    def total(self):
        """``A([0, 1])``, one value per path."""
        return self.content.closed_value(0, self.K - 1)

    def measurability_violations(self, tol=VALUE_TOL):
        """Closed intervals whose value varies with coordinates outside the interval."""
        out = []
        for (k, l), v in self.content.closed.items():
            outside = tuple(a for a in range(self.K) if (a < k or a > l) and v.shape[a] > 1)
            if not outside:
                continue
            full = np.broadcast_to(v, self.content.shape)
            lo = np.where(self.mask, full, np.inf).min(axis=outside)
            hi = np.where(self.mask, full, NEG_INF).max(axis=outside)
            charged = self.mask.any(axis=outside)
            bad = charged & ~_close(lo, hi, tol)
            if np.any(bad):
                seg = [int(i) for i in np.argwhere(bad)[0]]
                out.append({"interval": [k, l], "segment": seg})
        return out


def functional_from_segments(segments, n, K, mask=None) -> AdditiveFunctional:
    """Additive functional from segment tensors ``segments[(k, l)]`` of shape ``(n,) * (l-k+1)``."""
    values = {kl: broadcast_segment(v, K, kl[0]) for kl, v in segments.items()}
    mask = np.ones((n,) * K, bool) if mask is None else np.asarray(mask, bool)
    return AdditiveFunctional(content_from_closed(values, n, K, mask), mask)


def extract_additive_functional(P, R) -> AdditiveFunctional:
    """``A([t_k, t_l]) = log E_R[dP/dR | X_{[k..l]}]`` for a dominated Markov pair."""
    p, r = _weights(P), _weights(R)
    if p.shape != r.shape:
        raise ShapeMismatch(f"shapes {p.shape} and {r.shape} differ")
    for name, w in (("P", p), ("R", r)):
        rep = is_markov(w)
        if not rep.holds:
            raise NotMarkov(f"{name} is not Markov", witness=rep.witness)
    if not abs_continuous(p, r):
        raise NotAbsolutelyContinuous("P is not dominated by R")
    K, n = r.ndim, r.shape[0]
    segments = {(k, l): segment_log_density(p, r, k, l) for k in range(K) for l in range(k, K)}
    return functional_from_segments(segments, n, K, r > 0)


def measure_from_functional(A: AdditiveFunctional, R):
    """Weights ``exp(A([0, 1])) * R`` (not renormalized)."""
    r = _weights(R)
    with np.errstate(invalid="ignore"):
        w = np.where(r > 0, np.exp(A.total()) * r, 0.0)
    return R.with_weights(w) if hasattr(R, "with_weights") else w


# --------------------------------------------------------------------------- sum decomposition


@dataclass
class Decomposition:
    f_s: np.ndarray
    f_t: np.ndarray
    pivot: int | None
    residual: float

    feasible = True


@dataclass
class Infeasible:
    """No ``f_s + f_t`` matches ``f`` on the support; ``cycle`` proves it.

    ``cycle`` lists cells ``(x, z)`` of the support, consecutive cells sharing
    a row or a column alternately; the alternating sum of ``f`` over it is
    ``alternating_sum`` and would be 0 for any sum of a row and a column term.
    """

    cycle: list
    alternating_sum: float
    reason: str = "cycle"

    feasible = False

    def to_dict(self):
        return {"infeasible": True, "reason": self.reason, "cycle": self.cycle,
                "alternating_sum": self.alternating_sum}


def _tabulate(fn, n, length):
    if callable(fn):
        out = np.empty((n,) * length)
        for idx in itertools.product(range(n), repeat=length):
            out[idx] = fn(*idx)
        return out
    return np.asarray(fn, dtype=float)


def _cond_mean(values, weights):
    """``E[values | first, last axis]`` under ``weights`` over a segment tensor (NaN where uncharged)."""
    n = weights.shape[0]
    L = weights.ndim
    v2 = np.moveaxis(values, L - 1, 1).reshape(n, n, -1)
    w2 = np.moveaxis(weights, L - 1, 1).reshape(n, n, -1)
    with np.errstate(invalid="ignore"):
        num = np.where(w2 > 0, v2 * w2, 0.0).sum(axis=2)
        den = w2.sum(axis=2)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def check_sum_premise(f, weights, a, b, u_off, tol=VALUE_TOL):
    """Cells of the ``[s..t]`` segment charged by ``weights`` where ``f != a + b``."""
    L = weights.ndim
    fb = f.reshape((f.shape[0],) + (1,) * (L - 2) + (f.shape[1],))
    ab = a.reshape(a.shape + (1,) * (L - a.ndim)) + b.reshape((1,) * u_off + b.shape)
    bad = (weights > 0) & ~_close(fb, ab, tol)
    return np.argwhere(bad)


def sum_decompose(f, R, s_idx, u_idx, t_idx, a, b, tol=VALUE_TOL):
    """Split ``f(X_s, X_t) = a(X_{[s..u]}) + b(X_{[u..t]})`` into ``f_s(X_s) + f_t(X_t)``.

    Pivots ``y`` are tried by decreasing ``R_u`` mass (ties by state index):
    ``f_s(x) = E_R[a | X_s=x, X_u=y]`` and ``f_t(z) = E_R[b | X_u=y, X_t=z]``,
    kept if they reproduce ``f`` on the support of ``R_{s,t}``. When no pivot
    works the support graph is solved directly; if that is inconsistent too
    an :class:`Infeasible` with a violating cycle is returned.
    """
    r = _weights(R)
    n, K = r.shape[0], r.ndim
    if not 0 <= s_idx < u_idx < t_idx < K:
        raise ValueError("need s < u < t inside the grid")
    f = _tabulate(f, n, 2)
    a = _tabulate(a, n, u_idx - s_idx + 1)
    b = _tabulate(b, n, t_idx - u_idx + 1)
    if f.shape != (n, n):
        raise ShapeMismatch("f must be an n x n matrix")
    if a.shape != (n,) * (u_idx - s_idx + 1) or b.shape != (n,) * (t_idx - u_idx + 1):
        raise ShapeMismatch("a and b must be tensors over their segments")
    seg = marginal_array(r, list(range(s_idx, t_idx + 1)))
    bad = check_sum_premise(f, seg, a, b, u_idx - s_idx, tol)
    if len(bad):
        cell = [int(i) for i in bad[0]]
        raise PremiseViolated("f differs from a + b on the support", witness={"segment": cell})

    support = marginal_array(r, [s_idx, t_idx]) > 0
    left = marginal_array(r, list(range(s_idx, u_idx + 1)))
    right = marginal_array(r, list(range(u_idx, t_idx + 1)))
    ea = _cond_mean(a, left)  # (x, y)
    eb = _cond_mean(b, right)  # (y, z)
    ru = marginal_array(r, [u_idx])
    rows, cols = support.any(axis=1), support.any(axis=0)
    for y in sorted(np.flatnonzero(ru > 0), key=lambda i: (-ru[i], i)):
        fs, ft = ea[:, y].copy(), eb[y, :].copy()
        fs[~rows], ft[~cols] = 0.0, 0.0
        if np.any(np.isnan(fs)) or np.any(np.isnan(ft)):
            continue
        ok, res = _validate_split(f, fs, ft, support, tol)
        if ok:
            return Decomposition(fs, ft, int(y), res)
    return split_on_support(f, support, tol)


def _validate_split(f, fs, ft, support, tol):
    recon = fs[:, None] + ft[None, :]
    ok = _close(f, recon, tol) | ~support
    with np.errstate(invalid="ignore"):
        diff = np.where(support & np.isfinite(f), np.abs(f - recon), 0.0)
    return bool(ok.all()), float(np.nan_to_num(diff, nan=np.inf).max()) if diff.size else 0.0


def split_on_support(f, support, tol=VALUE_TOL):
    """Solve ``f(x, z) = g(x) + h(z)`` on a 0/1 support pattern, or certify it impossible."""
    f = np.asarray(f, float)
    support = np.asarray(support, bool)
    n_rows, n_cols = support.shape
    # -inf cells: a whole row or column must be dead, or no split exists
    neg = support & np.isneginf(f)
    dead_rows = np.array([neg[i, support[i]].all() and support[i].any() and neg[i].any()
                          for i in range(n_rows)])
    dead_cols = np.array([neg[support[:, j], j].all() and support[:, j].any() and neg[:, j].any()
                          for j in range(n_cols)])
    live = support & ~dead_rows[:, None] & ~dead_cols[None, :]
    stray = live & neg
    if np.any(stray):
        x, z = (int(i) for i in np.argwhere(stray)[0])
        zf = int(np.flatnonzero(live[x] & ~neg[x])[0])
        xf = int(np.flatnonzero(live[:, z] & ~neg[:, z])[0])
        return Infeasible([[x, z], [x, zf], [xf, zf], [xf, z]], float("-inf"), "neg_inf")

    cyc = _four_cycle(f, live, tol)
    if cyc is not None:
        return cyc
    g = np.full(n_rows, np.nan)
    h = np.full(n_cols, np.nan)
    parent = {}
    for start in range(n_rows):
        if not np.isnan(g[start]) or not live[start].any():
            continue
        g[start] = 0.0
        queue = [("r", start)]
        while queue:
            kind, i = queue.pop()
            if kind == "r":
                for j in np.flatnonzero(live[i]):
                    if np.isnan(h[j]):
                        h[j] = f[i, j] - g[i]
                        parent[("c", int(j))] = ("r", i)
                        queue.append(("c", int(j)))
            else:
                for k in np.flatnonzero(live[:, i]):
                    if np.isnan(g[k]):
                        g[k] = f[k, i] - h[i]
                        parent[("r", int(k))] = ("c", i)
                        queue.append(("r", int(k)))
    g = np.where(np.isnan(g), 0.0, g)
    h = np.where(np.isnan(h), 0.0, h)
    g[dead_rows] = NEG_INF
    h[dead_cols] = NEG_INF
    recon_ok = _close(f, g[:, None] + h[None, :], tol) | ~support
    if recon_ok.all():
        return Decomposition(g, h, None, _validate_split(f, g, h, support, tol)[1])
    x, z = (int(i) for i in np.argwhere(~recon_ok)[0])
    return _tree_cycle(f, parent, x, z)


def _four_cycle(f, live, tol):
    rows = [i for i in range(live.shape[0]) if live[i].sum() >= 2]
    for x, x2 in itertools.combinations(rows, 2):
        common = np.flatnonzero(live[x] & live[x2])
        for z, z2 in itertools.combinations(common, 2):
            alt = f[x, z] - f[x, z2] + f[x2, z2] - f[x2, z]
            if abs(alt) > tol * max(1.0, np.abs(f[[x, x, x2, x2], [z, z2, z2, z]]).max()):
                cells = [[x, int(z)], [x, int(z2)], [x2, int(z2)], [x2, int(z)]]
                return Infeasible(cells, float(alt))
    return None


def _tree_cycle(f, parent, x, z):
    """Close the tree path between row ``x`` and column ``z`` with the cell ``(x, z)``."""

    def path(node):
        out = [node]
        while node in parent:
            node = parent[node]
            out.append(node)
        return out

    px, pz = path(("r", x)), path(("c", z))
    common = set(px) & set(pz)
    px = px[:next(i for i, v in enumerate(px) if v in common) + 1]
    pz = pz[:next(i for i, v in enumerate(pz) if v in common)]
    nodes = px + pz[::-1]  # row x ... lca ... column z
    cells = [[x, z]]  # shares row x with the first tree edge
    for a, b in zip(nodes, nodes[1:]):
        r_, c_ = (a[1], b[1]) if a[0] == "r" else (b[1], a[1])
        cells.append([int(r_), int(c_)])
    alt = sum((-1) ** i * f[c[0], c[1]] for i, c in enumerate(cells))
    return Infeasible(cells, float(alt))


def verify_certificate(f, support, cert: Infeasible, tol=VALUE_TOL):
    """A certificate is valid when its cells are charged, chained and the alternating sum is nonzero."""
    f = np.asarray(f, float)
    cells = [tuple(c) for c in cert.cycle]
    if len(cells) < 4 or len(cells) % 2:
        return False
    if not all(support[c] for c in cells):
        return False
    for i, (c, d) in enumerate(zip(cells, cells[1:] + cells[:1])):
        share = c[0] == d[0] if i % 2 == 0 else c[1] == d[1]
        if not share:
            return False
    if cert.reason == "neg_inf":
        x, z = cells[0]
        return bool(np.isneginf(f[x, z]) and all(np.isfinite(f[c]) for c in cells[1:]))
    alt = sum((-1) ** i * f[c] for i, c in enumerate(cells))
    return bool(abs(alt) > tol)


# --------------------------------------------------------------------------- localization


def _pick(weights):
    """Index of the largest weight, ties broken by the smaller index."""
    w = np.asarray(weights)
    return int(np.flatnonzero(w == w.max())[0])


def _split_adjacent(g, support):
    """Row/column pivot split of ``g(x, z)`` on a rectangular support."""
    res = split_on_support(np.where(support, g, 0.0), support)
    if not res.feasible:
        raise ReconstructionFailed("gap value is not a sum of endpoint terms", witness=res.to_dict())
    return res.f_s, res.f_t


def localize_functional(A: AdditiveFunctional, P, R, T_indices) -> AdditiveFunctional:
    """Rewrite ``A`` as a sum of point masses ``m_t(X_t)`` at the constrained times.

    Each open gap ``(t_i, t_{i+1})`` between consecutive constrained indices is
    split as ``alpha_i(X_{t_i}) + beta_i(X_{t_{i+1}})`` (with
    :func:`sum_decompose` when the gap contains a grid point), and
    ``m_{t_i} = A({t_i}) + alpha_i + beta_{i-1}``. The result vanishes on every
    interval missing ``T`` and keeps ``A([0, 1])`` on the support of ``R``.
    """
    p, r = _weights(P), _weights(R)
    K, n = r.ndim, r.shape[0]
    T = sorted(int(t) for t in T_indices)
    if len(set(T)) != len(T) or any(not 0 <= t < K for t in T):
        raise ValueError(f"bad constrained indices {T_indices}")
    irr = is_irreducible(r, "markov_pairs")
    if not irr.holds:
        raise NotIrreducible("reference is not irreducible over pairs", witness=irr.witness)
    m = localized_masses(A, p, r, T)
    return _functional_from_masses(m, T, n, K, r > 0)


def localized_masses(A, p, r, T):
    K = r.ndim
    if not T:
        total = A.total()
        vals = total[r > 0]
        if vals.size and not np.allclose(vals, vals[0], rtol=0, atol=RECON_TOL):
            raise ReconstructionFailed("density is not constant but no time is constrained")
        return {}
    active = {t: marginal_array(p, [t]) > 0 for t in T}
    # reference restricted to paths the minimizer charges at the constrained times
    keep = np.ones(r.shape, bool)
    for t in T:
        keep &= broadcast_segment(active[t], K, t)
    r_act = np.where(keep, r, 0.0)

    def point(t):
        return np.asarray(A.value(t, t)[(0,) * t + (slice(None),) + (0,) * (K - t - 1)])

    masses = {t: np.where(active[t], point(t), NEG_INF) for t in T}
    with np.errstate(invalid="ignore"):
        for s, t in zip(T, T[1:]):
            alpha, beta = _gap_split(A, r_act, s, t, active)
            masses[s] = np.where(active[s], masses[s] + alpha, NEG_INF)
            masses[t] = np.where(active[t], masses[t] + beta, NEG_INF)

    total = np.zeros(r.shape)
    for t in T:
        total = total + broadcast_segment(masses[t], K, t)
    ok = _close(total, A.total(), RECON_TOL) | (r <= 0)
    if not ok.all():
        cell = [int(i) for i in np.argwhere(~ok)[0]]
        raise ReconstructionFailed("localized masses do not reproduce A([0, 1])",
                                   witness={"path": cell})
    return masses


def _segment(full, k, l, K):
    """Segment tensor of a full-shape array known to depend on ``X_{[k..l]}`` only."""
    idx = tuple(slice(None) if k <= a <= l else 0 for a in range(K))
    return np.asarray(np.broadcast_to(full, full.shape)[idx])


def _gap_split(A, r_act, s, t, active):
    K = r_act.ndim
    seg_w = marginal_array(r_act, list(range(s, t + 1)))
    whole = _segment(A.value(s, t, False, False), s, t, K)
    support = marginal_array(r_act, [s, t]) > 0
    if t == s + 1:
        return _split_adjacent(whole, support)
    # f(x, z) = E[A((s, t)) | X_s = x, X_t = z] on the active reference
    f = np.nan_to_num(_cond_mean(whole, seg_w), nan=0.0)
    u = s + 1
    a = _segment(A.value(s, u, False, True), s, u, K)
    b = _segment(A.value(u, t, False, False), u, t, K)
    res = sum_decompose(f, r_act, s, u, t, a, b)
    if not res.feasible:
        raise ReconstructionFailed("gap decomposition is infeasible", witness=res.to_dict())
    return res.f_s, res.f_t


def _functional_from_masses(masses, T, n, K, mask):
    def value(k, l):
        out = np.zeros((1,) * K)
        for t in T:
            if k <= t <= l:
                out = out + broadcast_segment(masses[t], K, t)
        return out

    return AdditiveFunctional(content_from_closed(value, n, K, mask), mask)


# --------------------------------------------------------------------------- potentials


@dataclass
class Potentials:
    """``dP/dR = exp(sum_i f_i(X_{t_i}) + eta(X_0, X_{K-1}) + log_scale)``."""

    times: list
    f: list
    eta: np.ndarray | None = None
    log_scale: float = 0.0

    def log_density(self, n, K):
        out = np.full((1,) * K, float(self.log_scale))
        with np.errstate(invalid="ignore"):
            for t, ft in zip(self.times, self.f):
                out = out + broadcast_segment(np.asarray(ft, float), K, t)
            if self.eta is not None:
                eta = np.asarray(self.eta, float)
                out = out + eta.reshape((n,) + (1,) * (K - 2) + (n,))
        return np.broadcast_to(out, (n,) * K)

    def reconstruction(self, P, R):
        """Largest relative error of the reconstructed density and the offending path."""
        return reconstruction_error(self, P, R)


def reconstruction_error(pot: Potentials, P, R):
    p, r = _weights(P), _weights(R)
    K, n = r.ndim, r.shape[0]
    logd = pot.log_density(n, K)
    on = r > 0
    target = _ratio(p, r)
    with np.errstate(over="ignore"):
        recon = np.exp(logd)
    pos = on & (target > 0)
    err = np.zeros(r.shape)
    err[pos] = np.abs(recon[pos] - target[pos]) / target[pos]
    zero_bad = on & (target == 0) & (recon > 0)
    err[zero_bad] = np.inf
    worst = float(err.max()) if err.size else 0.0
    cell = [int(i) for i in np.unravel_index(int(np.argmax(err)), r.shape)]
    return worst, cell


def gauge_fix(pot: Potentials, marginals) -> Potentials:
    """Centre every ``f_i`` except the last under its weight vector; ``eta`` (or the last ``f``) absorbs it."""
    f = [np.array(v, float) for v in pot.f]
    eta = None if pot.eta is None else np.array(pot.eta, float)
    scale = float(pot.log_scale)
    shift = 0.0
    last = len(f) - 1
    for i, (fi, mu) in enumerate(zip(f, marginals)):
        if i == last and eta is None:
            break
        live = (np.asarray(mu) > 0) & np.isfinite(fi)
        if not live.any():
            continue
        c = float(np.sum(np.asarray(mu)[live] * fi[live]) / np.sum(np.asarray(mu)[live]))
        f[i] = fi - c
        shift += c
    if eta is not None:
        eta = eta + shift + scale
        scale = 0.0
    elif f:
        f[last] = f[last] + shift + scale
        scale = 0.0
    return Potentials(list(pot.times), f, eta, scale)


def decompose_to_potentials(P, R, T_indices, endpoint=False, check=True) -> Potentials:
    """Potentials reconstructing ``dP/dR`` on the support of ``R``.

    Without ``endpoint`` the additive functional of ``(P, R)`` is localized on
    the constrained times. With ``endpoint`` the density, a function of
    ``(X_0, X_T, X_{K-1})``, is split by fixing every interior coordinate at a
    pivot state: ``eta(x, z) = F(x, y, z)`` and
    ``f_i(x) = F(x_0*, y with y_i -> x, x_1*) - F(x_0*, y, x_1*)``.
    """
    p, r = _weights(P), _weights(R)
    T = sorted(int(t) for t in T_indices)
    if endpoint:
        pot = _bro_potentials(p, r, T)
    else:
        A = extract_additive_functional(p, r)
        irr = is_irreducible(r, "markov_pairs")
        if not irr.holds:
            raise NotIrreducible("reference is not irreducible over pairs", witness=irr.witness)
        masses = localized_masses(A, p, r, T)
        if T:
            pot = Potentials(T, [masses[t] for t in T])
        else:
            on = r > 0
            pot = Potentials([], [], None, float(np.log(_ratio(p, r)[on][0])) if on.any() else 0.0)
    pot = gauge_fix(pot, [marginal_array(p, [t]) for t in pot.times])
    if check:
        worst, cell = reconstruction_error(pot, p, r)
        if worst > RECON_TOL:
            raise ReconstructionFailed(f"potentials miss dP/dR by {worst:.3g} (relative)",
                                       witness={"path": cell, "relative_error": worst})
    return pot


def _bro_potentials(p, r, T):
    K, n = r.ndim, r.shape[0]
    irr = is_irreducible(r, "reciprocal_triples")
    if not irr.holds:
        raise NotIrreducible("reference is not irreducible over triples", witness=irr.witness)
    interior = [t for t in T if 0 < t < K - 1]
    J = [0] + interior + [K - 1]
    F = _log(_ratio(marginal_array(p, J), marginal_array(r, J)))
    pe = marginal_array(p, [0, K - 1])
    x0, x1 = np.unravel_index(_pick(pe), pe.shape)
    pivots = [_pick(marginal_array(p, [t])) for t in interior]
    base = (x0,) + tuple(pivots) + (x1,)
    with np.errstate(invalid="ignore"):
        eta = F[(slice(None),) + tuple(pivots) + (slice(None),)].copy()
        fs = {}
        for j, t in enumerate(interior):
            idx = list(base)
            idx[j + 1] = slice(None)
            fs[t] = F[tuple(idx)] - F[base]
    f = [fs.get(t, np.zeros(n)) for t in T]
    return Potentials(T, f, eta)


# --------------------------------------------------------------------------- measurability


@dataclass
class MeasurabilityReport:
    holds: bool
    worst_gap: float
    witness: dict | None
    conditional_laws_agree: bool
    pushforward_matches: bool | None
    coords: list = field(default_factory=list)

    def __bool__(self):
        return self.holds


def density_measurability_check(P, R, coords, tol=VALUE_TOL) -> MeasurabilityReport:
    """Is ``dP/dR`` a function of ``X_coords`` on the support of ``R``?

    Also compares ``P(. | X_coords)`` with ``R(. | X_coords)`` in total
    variation (the equivalent formulation) and, when measurable, checks the
    common value against ``d(S#P)/d(S#R)``.
    """
    p, r = _weights(P), _weights(R)
    if p.shape != r.shape:
        raise ShapeMismatch(f"shapes {p.shape} and {r.shape} differ")
    if not abs_continuous(p, r):
        raise NotAbsolutelyContinuous("P is not dominated by R")
    K = r.ndim
    coords = sorted(int(c) for c in coords)
    rest = [a for a in range(K) if a not in coords]
    order = coords + rest
    D = np.transpose(_ratio(p, r), order)
    on = np.transpose(r > 0, order)
    ncls = int(np.prod(D.shape[:len(coords)])) if coords else 1
    D2 = D.reshape(ncls, -1)
    on2 = on.reshape(ncls, -1)
    hi = np.where(on2, D2, -np.inf).max(axis=1)
    lo = np.where(on2, D2, np.inf).min(axis=1)
    charged = on2.any(axis=1)
    gap = np.zeros(ncls)
    gap[charged] = (hi[charged] - lo[charged]) / np.maximum(hi[charged], 1e-300)
    gap[charged & (hi == 0)] = 0.0
    worst = int(np.argmax(gap)) if ncls else 0
    holds = bool(gap.max() <= tol) if ncls else True
    witness = None
    if not holds:
        row_hi = int(np.argmax(np.where(on2[worst], D2[worst], -np.inf)))
        row_lo = int(np.argmin(np.where(on2[worst], D2[worst], np.inf)))
        witness = {"paths": [_unpermute(worst, row, D.shape, order, len(coords))
                              for row in (row_hi, row_lo)]}

    # conditional laws given X_coords, compared where P charges the class
    p2 = np.transpose(p, order).reshape(ncls, -1)
    r2 = np.where(on2, np.transpose(r, order).reshape(ncls, -1), 0.0)
    pm, rm = p2.sum(axis=1), r2.sum(axis=1)
    live = pm > 0
    tv = 0.5 * np.abs(p2[live] / pm[live, None] - r2[live] / rm[live, None]).sum(axis=1)
    agree = bool(tv.max() <= tol) if tv.size else True
    push = None
    if holds:
        ratio = np.where(rm > 0, pm / np.where(rm > 0, rm, 1.0), 0.0)
        cls = np.where(charged, hi, 0.0)
        push = bool(np.all(np.abs(cls - ratio)[charged] <= tol * np.maximum(1.0, ratio[charged])))
    return MeasurabilityReport(holds, float(gap.max()) if ncls else 0.0, witness, agree, push, coords)


def _unpermute(cls, row, shape, order, ncoords):
    """Original path of cell ``(class, row)`` in the permuted, flattened layout."""
    rowsize = int(np.prod(shape[ncoords:])) if ncoords < len(shape) else 1
    permuted = np.unravel_index(cls * rowsize + row, shape)
    path = [0] * len(order)
    for pos, axis in enumerate(order):
        path[axis] = int(permuted[pos])
    return path
