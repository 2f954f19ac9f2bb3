"""Exact discrete optimal transport.

Uniform marginals of equal size reduce to a linear assignment, which is
solved directly. Otherwise the solver is a primal transportation simplex (network simplex on the
complete bipartite graph): a north-west-corner spanning tree, dual
potentials from the tree, Dantzig pricing with a switch to Bland's rule on
long degenerate streaks, and lowest-index leaving-cell tie-breaking.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

MASS_TOL = 1e-9
DENSE_LIMIT = 10**6
BRUTE_FORCE_MAX = 7


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class TransportPlan:
    """Optimal coupling stored as its nonzero cells.

    ``coupling`` is the dense matrix when ``rows * cols <= 1e6`` and ``None``
    otherwise; ``cells`` always holds ``(i, j, flow)`` triples.
    """

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    flows: np.ndarray
    cost: float
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    pivots: int = 0

    @property
    def coupling(self) -> np.ndarray | None:
        if self.shape[0] * self.shape[1] > DENSE_LIMIT:
            return None
        return self.dense()

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.flows)
        return out

    @property
    def cells(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.flows.tolist()))

    def is_map(self) -> bool:
        """True when every source atom sends its mass to a single target."""
        return np.unique(self.rows).size == self.rows.size


def _check_inputs(src, dst, C):
    a = np.asarray(src, dtype=float)
    b = np.asarray(dst, dtype=float)
    C = np.asarray(C, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or C.shape != (a.size, b.size):
        raise TransportError(f"shape mismatch: src {a.shape}, dst {b.shape}, C {C.shape}")
    if a.size == 0 or b.size == 0:
        raise TransportError("empty marginal")
    if np.any(a < 0) or np.any(b < 0):
        raise TransportError("negative marginal weight")
    if np.any(np.isnan(C)) or np.any(C < 0):
        raise TransportError("cost entries must be nonnegative (inf allowed)")
    mass = a.sum()
    if abs(mass - b.sum()) > MASS_TOL * max(mass, 1.0):
        raise TransportError(f"unbalanced masses: {mass!r} vs {b.sum()!r}")
    return a, b, C


def _northwest(a, b, row_order, col_order):
    """Staircase spanning tree along the given orders (n + m - 1 cells)."""
    a = a.copy()
    b = b.copy()
    n, m = a.size, b.size
    cells, flows = [], []
    p = q = 0
    while True:
        i, j = row_order[p], col_order[q]
        f = min(a[i], b[j])
        cells.append((i, j))
        flows.append(f)
        a[i] -= f
        b[j] -= f
        if p == n - 1 and q == m - 1:
            break
        # exhaust the row unless it is the last one; ties advance the row
        if q == m - 1 or (p < n - 1 and a[i] <= b[j]):
            p += 1
        else:
            q += 1
    return cells, flows


def solve_ot(src, dst, C, row_order=None, col_order=None, max_pivots=None,
             method: str = "auto") -> TransportPlan:
    """Exact optimal transport plan between two discrete weight vectors.

    Parameters
    ----------
    src, dst : array_like
        Nonnegative weights with equal total mass (within 1e-9 relative).
    C : array_like, shape (len(src), len(dst))
        Nonnegative costs; ``inf`` marks forbidden cells.
    row_order, col_order : sequence of int, optional
        Orders along which the initial north-west-corner basis is laid out.
        A good order (e.g. both sides sorted by location) shortens the pivot
        sequence; the optimum value does not depend on it.
    method : {"auto", "simplex"}
        ``"simplex"`` disables the assignment shortcut for uniform marginals.

    Returns
    -------
    TransportPlan
        A vertex of the transportation polytope. The result is a
        deterministic function of the inputs.
    """
    a, b, C = _check_inputs(src, dst, C)
    n, m = a.size, b.size
    finite = np.isfinite(C)
    if not finite.any():
        raise TransportError("no finite-cost plan")
    big = (float(C[finite].max()) + 1.0) * (n + m) * 1e6
    W = np.where(finite, C, big)

    if method not in ("auto", "simplex"):
        raise TransportError(f"unknown method {method!r}")
    if method == "auto" and n == m and np.allclose(np.r_[a, b], a[0], rtol=1e-12, atol=0.0):
        return _assignment(a, b, C, W, finite)

    rows_o = np.arange(n) if row_order is None else np.asarray(row_order, dtype=int)
    cols_o = np.arange(m) if col_order is None else np.asarray(col_order, dtype=int)
    basis, flows = _northwest(a, b, rows_o, cols_o)
    flow = dict(zip(basis, flows))

    # node k < n is row k, node n + j is column j
    adj = [set() for _ in range(n + m)]
    for i, j in basis:
        adj[i].add(n + j)
        adj[n + j].add(i)

    parent = np.full(n + m, -1, dtype=int)
    depth = np.zeros(n + m, dtype=int)
    u = np.zeros(n)
    v = np.zeros(m)

    def grow(root, par):
        """Re-hang the component of ``root`` below ``par``, refreshing
        parents, depths and potentials; returns the number of nodes visited."""
        parent[root] = par
        depth[root] = 0 if par < 0 else depth[par] + 1
        if par < 0:
            u[root] = 0.0
        elif root < n:
            u[root] = W[root, par - n] - v[par - n]
        else:
            v[root - n] = W[par, root - n] - u[par]
        queue = deque([root])
        count = 0
        while queue:
            k = queue.popleft()
            count += 1
            for nb in adj[k]:
                if nb == parent[k]:
                    continue
                parent[nb] = k
                depth[nb] = depth[k] + 1
                if k < n:
                    v[nb - n] = W[k, nb - n] - u[k]
                else:
                    u[nb] = W[nb, k - n] - v[k - n]
                queue.append(nb)
        return count

    if grow(0, -1) != n + m:
        raise TransportError("internal error: basis is not a spanning tree")

    scale = float(np.abs(W).max()) + 1.0
    tol = 1e-12 * scale
    max_pivots = max_pivots or 50 * (n + m) ** 2
    degenerate_streak = 0
    pivots = 0
    while True:
        R = W - u[:, None] - v[None, :]
        if degenerate_streak > 2 * (n + m):
            neg = np.flatnonzero(R.ravel() < -tol)
            if neg.size == 0:
                break
            enter = int(neg[0])
        else:
            enter = int(np.argmin(R))
            if R.flat[enter] >= -tol:
                break
        ei, ej = divmod(enter, m)

        # tree path from column ej up to row ei, then the entering cell closes it
        x, y = n + ej, ei
        left, right = [], []
        while x != y:
            if depth[x] >= depth[y]:
                left.append(x)
                x = parent[x]
            else:
                right.append(y)
                y = parent[y]
        path = left + [x] + right[::-1]
        # path runs col ej -> ... -> row ei; cells alternate -, +, -, ...
        minus, plus = [], []
        for t in range(len(path) - 1):
            p, q = path[t], path[t + 1]
            cell = (p, q - n) if p < n else (q, p - n)
            (minus if t % 2 == 0 else plus).append(cell)
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] <= theta), key=lambda c: c[0] * m + c[1])
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(ei, ej)] = theta
        del flow[leaving]
        li, lj = leaving
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        adj[ei].add(n + ej)
        adj[n + ej].add(ei)

        # the endpoint of the leaving cell farther from the root heads the
        # detached subtree; the entering endpoint inside it becomes its new root
        child = li if parent[li] == n + lj else n + lj
        sub = {child}
        stack = [child]
        while stack:
            k = stack.pop()
            for nb in adj[k]:
                if nb not in sub and parent[nb] == k:
                    sub.add(nb)
                    stack.append(nb)
        if ei in sub:
            grow(ei, n + ej)
        else:
            grow(n + ej, ei)

        degenerate_streak = degenerate_streak + 1 if theta <= 0.0 else 0
        pivots += 1
        if pivots > max_pivots:
            raise TransportError("pivot limit exceeded")

    cells = sorted(flow)
    r = np.array([c[0] for c in cells], dtype=int)
    c_ = np.array([c[1] for c in cells], dtype=int)
    f = np.array([max(flow[c], 0.0) for c in cells])
    keep = f > 0
    r, c_, f = r[keep], c_[keep], f[keep]
    if np.any(~finite[r, c_]):
        raise TransportError("no finite-cost plan")
    cost = float(np.sum(f * C[r, c_]))
    return TransportPlan((n, m), r, c_, f, cost, a, b, pivots)


def _assignment(a, b, C, W, finite) -> TransportPlan:
    """Uniform equal-size marginals: some optimal vertex is a permutation, so
    an exact linear assignment solves the problem."""
    n = a.size
    r, c = linear_sum_assignment(W)
    if np.any(~finite[r, c]):
        raise TransportError("no finite-cost plan")
    f = a[r].copy()
    return TransportPlan((n, n), r, c, f, float(np.sum(f * C[r, c])), a, b, 0)


def brute_force_ot(src, dst, C) -> TransportPlan:
    """Exhaustive minimum over permutation matchings.

    Only valid for uniform marginals of equal size (Birkhoff), with at most
    seven atoms per side.
    """
    a, b, C = _check_inputs(src, dst, C)
    n = a.size
    if n != b.size or n > BRUTE_FORCE_MAX or not (np.allclose(a, a[0]) and np.allclose(b, a[0])):
        raise TransportError("oracle domain exceeded")
    w = a[0]
    best, best_perm = math.inf, None
    idx = np.arange(n)
    for perm in itertools.permutations(range(n)):
        cost = float(C[idx, perm].sum()) * w
        if cost < best:
            best, best_perm = cost, perm
    if not math.isfinite(best):
        raise TransportError("no finite-cost plan")
    return TransportPlan((n, n), idx.copy(), np.array(best_perm), np.full(n, w), best, a, b)


# costs on Omega = {(h, d) : d != 0}

def _nonzero(d):
    if np.any(np.asarray(d) == 0):
        raise TransportError("cost undefined on X_eq (d = 0)")


def cost_c(h, d, y):
    """Two-to-one cost ``(h - y)^2 / |d|``."""
    _nonzero(d)
    return (np.asarray(h) - y) ** 2 / np.abs(d)


def midpoint_m(x1, x2):
    """``|d|^-1``-weighted mean of ``h1`` and ``h2``: the minimizer in ``z`` of
    ``cost_c(x1, z) + cost_c(x2, z)``."""
    (h1, d1), (h2, d2) = x1, x2
    _nonzero(d1)
    _nonzero(d2)
    w1, w2 = 1.0 / np.abs(d1), 1.0 / np.abs(d2)
    return (h1 * w1 + h2 * w2) / (w1 + w2)


def cost_C(x1, x2):
    """Pairwise cost ``(h1 - h2)^2 / (|d1| + |d2|)``."""
    (h1, d1), (h2, d2) = x1, x2
    _nonzero(d1)
    _nonzero(d2)
    return (np.asarray(h1) - h2) ** 2 / (np.abs(d1) + np.abs(d2))


def cost_matrix_C(h1, d1, h2, d2) -> np.ndarray:
    h1, d1, h2, d2 = map(np.asarray, (h1, d1, h2, d2))
    return cost_C((h1[:, None], d1[:, None]), (h2[None, :], d2[None, :]))


def midpoint_matrix(h1, d1, h2, d2) -> np.ndarray:
    h1, d1, h2, d2 = map(np.asarray, (h1, d1, h2, d2))
    return midpoint_m((h1[:, None], d1[:, None]), (h2[None, :], d2[None, :]))


def cost_matrix_c(h, d, ys) -> np.ndarray:
    h, d = np.asarray(h), np.asarray(d)
    return cost_c(h[:, None], d[:, None], np.asarray(ys)[None, :])
