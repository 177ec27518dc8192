"""Maximum-weight assignment between user groups (rows) and channels (columns).

``hungarian_max`` is the exact Kuhn-Munkres solver, ``greedy_match`` the
max-element heuristic and ``brute_force_max`` an enumeration oracle for
small matrices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._jit import njit

TIGHT_EPS = 1e-12


@dataclass(frozen=True)
class Assignment:
    pairs: tuple
    total_weight: float

    @property
    def rows(self):
        return tuple(r for r, _ in self.pairs)

    @property
    def cols(self):
        return tuple(c for _, c in self.pairs)


@njit
def _hungarian_min(cost):
    # O(n^3) shortest augmenting path with potentials on a square cost matrix.
    # Returns the column of every row plus the row and column potentials.
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


@njit
def _try_kuhn(r, tight, row_lo, col_free, match_col, seen):
    # augmenting path for row r over tight edges, rows < row_lo are frozen
    n = tight.shape[0]
    for c in range(n):
        if tight[r, c] and col_free[c] and not seen[c]:
            seen[c] = True
            if match_col[c] < 0 or _try_kuhn(match_col[c], tight, row_lo, col_free, match_col, seen):
                match_col[c] = r
                return True
    return False


@njit
def _completes(tight, row_lo, col_free):
    # can rows row_lo..n-1 be perfectly matched to the free columns?
    n = tight.shape[0]
    match_col = np.full(n, -1, dtype=np.int64)
    for r in range(row_lo, n):
        seen = np.zeros(n, dtype=np.bool_)
        if not _try_kuhn(r, tight, row_lo, col_free, match_col, seen):
            return False
    return True


@njit
def _lex_smallest_optimal(cost, u, v, eps, fallback):
    # among optimal assignments (perfect matchings of zero-reduced-cost edges)
    # pick the lexicographically smallest column sequence
    n = cost.shape[0]
    tight = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            tight[i, j] = cost[i, j] - u[i] - v[j] <= eps
    col_free = np.ones(n, dtype=np.bool_)
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        found = False
        for c in range(n):
            if tight[r, c] and col_free[c]:
                col_free[c] = False
                if _completes(tight, r + 1, col_free):
                    out[r] = c
                    found = True
                    break
                col_free[c] = True
        if not found:
            return fallback
    return out


@njit
def solve_max_kernel(weights):
    """Column index per row (``-1`` if unmatched) maximising total weight."""
    n_rows, n_cols = weights.shape
    n = max(n_rows, n_cols)
    wmax = 0.0
    for i in range(n_rows):
        for j in range(n_cols):
            if weights[i, j] > wmax:
                wmax = weights[i, j]
    # zero-padded square cost matrix, cost = wmax - weight
    cost = np.full((n, n), wmax)
    for i in range(n_rows):
        for j in range(n_cols):
            cost[i, j] = wmax - weights[i, j]
    col_of_row, u, v = _hungarian_min(cost)
    eps = TIGHT_EPS * max(1.0, wmax)
    col_of_row = _lex_smallest_optimal(cost, u, v, eps, col_of_row)
    out = np.full(n_rows, -1, dtype=np.int64)
    for i in range(n_rows):
        if col_of_row[i] < n_cols:
            out[i] = col_of_row[i]
    return out


@njit
def greedy_kernel(weights):
    n_rows, n_cols = weights.shape
    out = np.full(n_rows, -1, dtype=np.int64)
    row_used = np.zeros(n_rows, dtype=np.bool_)
    col_used = np.zeros(n_cols, dtype=np.bool_)
    for _ in range(min(n_rows, n_cols)):
        best = -np.inf
        bi = -1
        bj = -1
        for i in range(n_rows):
            if row_used[i]:
                continue
            for j in range(n_cols):
                # strict > keeps the lexicographically smallest pair on ties
                if not col_used[j] and weights[i, j] > best:
                    best = weights[i, j]
                    bi = i
                    bj = j
        out[bi] = bj
        row_used[bi] = True
        col_used[bj] = True
    return out


def _check(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise ValueError("weights must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return w


def _to_assignment(w: np.ndarray, col_of_row: np.ndarray) -> Assignment:
    pairs = tuple((int(i), int(j)) for i, j in enumerate(col_of_row) if j >= 0)
    total = float(sum(w[i, j] for i, j in pairs))
    return Assignment(pairs, total)


def hungarian_max(weights) -> Assignment:
    """Exact maximum-weight assignment of cardinality ``min(n_rows, n_cols)``.

    Among optimal assignments, the lexicographically smallest pair list is
    returned. Negative entries are allowed, but zero-padding a rectangular
    matrix is only weight-preserving for non-negative weights.
    """
    w = _check(weights)
    return _to_assignment(w, solve_max_kernel(w))


def greedy_match(weights) -> Assignment:
    """Repeatedly pair the largest remaining entry's row and column."""
    w = _check(weights)
    return _to_assignment(w, greedy_kernel(w))


def brute_force_max(weights) -> float:
    """Best total weight by enumerating every injective row/column pairing."""
    w = _check(weights)
    n_rows, n_cols = w.shape
    if n_rows <= n_cols:
        rows = np.arange(n_rows)
        return float(max(w[rows, list(cols)].sum()
                         for cols in itertools.permutations(range(n_cols), n_rows)))
    cols = np.arange(n_cols)
    return float(max(w[list(rows), cols].sum()
                     for rows in itertools.permutations(range(n_rows), n_cols)))


MATCHERS = {
    "hungarian": solve_max_kernel,
    "greedy": greedy_kernel,
}
