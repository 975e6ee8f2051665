"""Rectangular linear sum assignment via shortest augmenting paths.

The kernel is the Jonker-Volgenant / Crouse row-by-row scheme: each call to
:func:`augment_row` runs Dijkstra over reduced costs from one free row and
flips the cheapest alternating path.  The Murty enumerator reuses it to
re-solve a subproblem from its parent's primal/dual state with a single
augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from .core import NULL, AssignmentProblem

INF = math.inf


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Null-augmented cost matrix: ``rows = n_meas``, ``cols = n_land + n_meas``.

    Column ``n_land + k`` is the private null column of row ``k``.  Costs are
    negated log-likelihoods, ``+inf`` for infeasible cells.
    """

    cost: np.ndarray

    def __post_init__(self) -> None:
        cost = np.array(self.cost, dtype=np.float64, copy=True)
        if cost.ndim != 2:
            raise ValueError("cost must be a 2-D matrix")
        if cost.shape[0] > cost.shape[1]:
            raise ValueError("cost matrix needs rows <= cols")
        if np.isnan(cost).any() or np.isneginf(cost).any():
            raise ValueError("cost entries must be finite or +inf")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)

    @property
    def rows(self) -> int:
        return self.cost.shape[0]

    @property
    def cols(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True)
class LsapSolution:
    """``cols[i]`` is the column matched to row ``i``."""

    cols: tuple[int, ...]
    cost: float

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.cols))


def augment(p: AssignmentProblem) -> CostMatrix:
    """Build the null-augmented :class:`CostMatrix` of ``p``."""
    m, n = p.n_meas, p.n_land
    cost = np.full((m, n + m), INF)
    cost[:, :n] = -p.log_lik
    cost[np.arange(m), n + np.arange(m)] = -p.null_log_lik
    return CostMatrix(cost)


def targets_from_cols(cols: Iterable[int], n_land: int) -> tuple[int, ...]:
    """Map augmented-matrix columns back to landmark indices / ``NULL``."""
    return tuple(int(c) if c < n_land else NULL for c in cols)


def square_cost(c: CostMatrix) -> np.ndarray:
    """Complete the augmented matrix to a square one with ``n_land`` slack rows.

    Slack row ``j`` may take landmark column ``j`` (landmark unused) or any
    null column (freed when a measurement takes a landmark), always at zero
    cost.  Square form keeps the dual state valid when a Murty child frees a
    column, so one augmentation re-solves it.
    """
    m = c.rows
    n = c.cols - m
    sq = np.full((m + n, m + n), INF)
    sq[:m, :] = c.cost
    sq[m + np.arange(n), np.arange(n)] = 0.0
    sq[m:, n:] = 0.0
    return sq


@njit(cache=True)
def augment_row(cost, start, col_on, ban, col4row, row4col, u, v,
                shortest, path, sr, sc, remaining):
    """Augment from free row ``start``; returns the sink column or -1.

    ``ban`` masks columns for ``start`` only.  On -1 (no finite path) the
    primal and dual state are left untouched.
    """
    nrows, ncols = cost.shape
    nrem = 0
    for j in range(ncols):
        shortest[j] = np.inf
        sc[j] = False
        path[j] = -1
        if col_on[j]:
            remaining[nrem] = j
            nrem += 1
    for i in range(nrows):
        sr[i] = False

    min_val = 0.0
    i = start
    sink = -1
    while sink == -1:
        sr[i] = True
        lowest = np.inf
        index = -1
        ui = u[i]
        for it in range(nrem):
            j = remaining[it]
            c = cost[i, j]
            if c < np.inf and not (i == start and ban[j]):
                r = min_val + c - ui - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
            s = shortest[j]
            if s < lowest or (s == lowest and row4col[j] == -1):
                lowest = s
                index = it
        min_val = lowest
        if index == -1 or min_val == np.inf:
            return -1
        j = remaining[index]
        if row4col[j] == -1:
            sink = j
        else:
            i = row4col[j]
        sc[j] = True
        nrem -= 1
        remaining[index] = remaining[nrem]

    u[start] += min_val
    for i in range(nrows):
        if sr[i] and i != start:
            u[i] += min_val - shortest[col4row[i]]
    for j in range(ncols):
        if sc[j]:
            v[j] -= min_val - shortest[j]

    j = sink
    while True:
        i = path[j]
        row4col[j] = i
        nxt = col4row[i]
        col4row[i] = j
        j = nxt
        if i == start:
            break
    return sink


@njit(cache=True)
def solve_from_scratch(cost, row_on, col_on, col4row, row4col, u, v):
    """Assign every active row; returns False if some row cannot be matched."""
    nrows, ncols = cost.shape
    shortest = np.empty(ncols)
    path = np.empty(ncols, dtype=np.int64)
    sr = np.empty(nrows, dtype=np.bool_)
    sc = np.empty(ncols, dtype=np.bool_)
    remaining = np.empty(ncols, dtype=np.int64)
    ban = np.zeros(ncols, dtype=np.bool_)
    for i in range(nrows):
        if row_on[i] and col4row[i] == -1:
            if augment_row(cost, i, col_on, ban, col4row, row4col, u, v,
                           shortest, path, sr, sc, remaining) < 0:
                return False
    return True


def solve_lsap(c: CostMatrix, locks: Iterable[tuple[int, int]] = (),
               bans: Iterable[tuple[int, int]] = ()) -> LsapSolution | None:
    """Minimum-cost matching of every row to a distinct column.

    ``locks`` force pairs into the matching, ``bans`` forbid pairs.  Returns
    ``None`` when no complete finite-cost matching exists.
    """
    locks = [(int(r), int(k)) for r, k in locks]
    bans = {(int(r), int(k)) for r, k in bans}
    rows, cols = c.rows, c.cols
    for r, k in list(locks) + sorted(bans):
        if not (0 <= r < rows and 0 <= k < cols):
            raise ValueError(f"pair {(r, k)} outside a {rows}x{cols} cost matrix")
    if len({r for r, _ in locks}) != len(locks) or len({k for _, k in locks}) != len(locks):
        raise ValueError("locks must be row- and column-disjoint")
    if bans.intersection(locks):
        raise ValueError("a pair cannot be both locked and banned")

    cost = np.array(c.cost)
    for r, k in bans:
        cost[r, k] = INF
    row_on = np.ones(rows, dtype=np.bool_)
    col_on = np.ones(cols, dtype=np.bool_)
    col4row = np.full(rows, -1, dtype=np.int64)
    row4col = np.full(cols, -1, dtype=np.int64)
    for r, k in locks:
        if cost[r, k] == INF:
            return None
        row_on[r] = False
        col_on[k] = False
        col4row[r] = k
        row4col[k] = r
    u = np.zeros(rows)
    v = np.zeros(cols)
    if not solve_from_scratch(cost, row_on, col_on, col4row, row4col, u, v):
        return None
    total = float(cost[np.arange(rows), col4row].sum()) if rows else 0.0
    return LsapSolution(tuple(int(k) for k in col4row), total)


def best_assignment(p: AssignmentProblem):
    """Maximum-likelihood assignment of ``p`` (rank-1 solution)."""
    sol = solve_lsap(augment(p))
    assert sol is not None, "the all-null assignment is always feasible"
    return p.assignment(targets_from_cols(sol.cols, p.n_land))
