"""Ground-truth engines: brute-force enumeration, Ryser permanents, exact counts.

These deliberately share nothing with the Murty path beyond the problem
types, so they can be used to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import NULL, Assignment, AssignmentProblem, MarginalTable, canonical_sum

MAX_PERMANENT_DIM = 30
MAX_COUNT_SIDE = 20
COUNT_CAP = 10**12


class BudgetExceeded(RuntimeError):
    """Enumeration refused; ``count`` is the exact or estimated count."""

    def __init__(self, count: int | float, limit: int):
        super().__init__(f"{count} assignments exceed the budget of {limit}")
        self.count = count
        self.limit = limit


@dataclass(frozen=True)
class EnumerationBudget:
    max_assignments: int = 10**7
    top_terms: int | None = None

    def __post_init__(self):
        if self.max_assignments < 1:
            raise ValueError("max_assignments must be positive")
        if self.top_terms is not None and self.top_terms < 1:
            raise ValueError("top_terms must be positive")


# ---------------------------------------------------------------------------
# counting

@njit(cache=True)
def _count_dp(feasible, cap):
    rows, cols = feasible.shape
    size = 1 << cols
    dp = np.zeros(size, dtype=np.int64)
    new = np.zeros(size, dtype=np.int64)
    dp[0] = 1
    for i in range(rows):
        new[:] = dp
        for mask in range(size):
            c = dp[mask]
            if c == 0:
                continue
            for j in range(cols):
                bit = 1 << j
                if feasible[i, j] and not (mask & bit):
                    new[mask | bit] += c
        total = 0
        for mask in range(size):
            total += new[mask]
        if total > cap:
            return -1
        dp[:] = new
    total = 0
    for mask in range(size):
        total += dp[mask]
    return total


def count_exact(p: AssignmentProblem, cap: int = COUNT_CAP) -> int:
    """Exact number of assignments (partial matchings of the feasible pairs)."""
    feasible = np.isfinite(p.log_lik)
    if feasible.shape[1] > feasible.shape[0]:
        feasible = feasible.T
    if feasible.shape[1] > MAX_COUNT_SIDE:
        raise ValueError(f"count_exact supports min(n_meas, n_land) <= {MAX_COUNT_SIDE}")
    if feasible.size == 0:
        return 1
    total = int(_count_dp(np.ascontiguousarray(feasible), cap))
    if total < 0:
        raise BudgetExceeded(f">{cap}", cap)
    return total


# ---------------------------------------------------------------------------
# brute-force enumeration

def enumerate_all(p: AssignmentProblem, b: EnumerationBudget = EnumerationBudget()) -> list[Assignment]:
    """Every assignment of ``p``, in depth-first order."""
    count = _checked_count(p, b)
    m, n = p.n_meas, p.n_land
    options = [[j for j in range(n) if np.isfinite(p.log_lik[k, j])] + [NULL] for k in range(m)]
    out: list[Assignment] = []
    targets = [NULL] * m
    used = [False] * n

    def rec(k: int) -> None:
        if k == m:
            t = tuple(targets)
            out.append(Assignment(t, canonical_sum(p.term(i, ti) for i, ti in enumerate(t))))
            return
        for j in options[k]:
            if j != NULL:
                if used[j]:
                    continue
                used[j] = True
            targets[k] = j
            rec(k + 1)
            if j != NULL:
                used[j] = False

    rec(0)
    assert len(out) == count
    return out


def _checked_count(p: AssignmentProblem, b: EnumerationBudget) -> int:
    try:
        count = count_exact(p, cap=b.max_assignments)
    except BudgetExceeded:
        raise BudgetExceeded(_count_estimate(p), b.max_assignments) from None
    if count > b.max_assignments:
        raise BudgetExceeded(count, b.max_assignments)
    return count


def _count_estimate(p: AssignmentProblem) -> float:
    # independent-choice upper estimate; only used in refusal messages
    return float(np.prod(np.isfinite(p.log_lik).sum(axis=1) + 1.0))


MODE_MAX, MODE_ROW, MODE_ACCUMULATE = 0, 1, 2


@njit(cache=True)
def _dfs(log_lik, null, mode, shift, row, acc, lps, labels):
    """Visit every assignment; behaviour depends on ``mode``.

    Returns the maximum log-prob (MODE_MAX), the number visited
    (MODE_ROW, filling ``lps`` and the target of ``row`` in ``labels``) or
    the accumulated linear mass (MODE_ACCUMULATE, filling ``acc``).
    """
    m, n = log_lik.shape
    choice = np.full(m, -1, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    partial = np.zeros(m + 1)
    best = -np.inf
    mass = 0.0
    count = 0
    k = 0
    while k >= 0:
        j = choice[k]
        if 0 <= j < n:
            used[j] = False
        j += 1
        while j < n and (used[j] or log_lik[k, j] == -np.inf):
            j += 1
        if j > n:
            choice[k] = -1
            k -= 1
            continue
        choice[k] = j
        if j < n:
            used[j] = True
            term = log_lik[k, j]
        else:
            term = null[k]
        partial[k + 1] = partial[k] + term
        if k < m - 1:
            k += 1
            continue
        lp = partial[m]
        if mode == MODE_MAX:
            if lp > best:
                best = lp
        elif mode == MODE_ROW:
            lps[count] = lp
            labels[count] = choice[row]
        else:
            w = np.exp(lp - shift)
            mass += w
            for i in range(m):
                acc[i, choice[i]] += w
        count += 1
    if mode == MODE_MAX:
        return best
    if mode == MODE_ROW:
        return float(count)
    return mass


def top_sum(lps: np.ndarray, T: int, shift: float) -> tuple[float, int]:
    """Linear sum of ``exp(lp - shift)`` over the ``T`` largest entries, and how many were kept."""
    if lps.size > T:
        lps = np.partition(lps, lps.size - T)[lps.size - T:]
    return float(np.exp(np.sort(lps) - shift).sum()), int(lps.size)


def normalise_rows(num: np.ndarray, kept: int, shift: float) -> MarginalTable:
    """Row-normalise per-cell numerators into a table; rows of a full table already share one sum."""
    m, cols = num.shape
    if m == 0:
        return MarginalTable(np.zeros((0, cols)), 0.0, 1, 0.0)
    rows = num.sum(axis=1)
    w = np.clip(num / rows[:, None], 0.0, 1.0)
    return MarginalTable(w, 0.0, kept, shift + math.log(float(rows.max())))


def true_marginals(p: AssignmentProblem, b: EnumerationBudget = EnumerationBudget()) -> MarginalTable:
    """Exact marginals by full enumeration (uniform assignment prior).

    With ``b.top_terms = T`` each (k, j) numerator keeps only its T largest
    terms and each row is normalised by the sum of its numerators; ``k_used``
    is then the largest number of terms kept in any row.
    """
    count = _checked_count(p, b)
    m, n = p.n_meas, p.n_land
    if m == 0:
        return MarginalTable(np.zeros((0, n + 1)), 0.0, 1, 0.0)
    L = np.ascontiguousarray(p.log_lik)
    null = np.ascontiguousarray(p.null_log_lik)
    acc = np.zeros((m, n + 1))
    dummy, no_labels = np.zeros(0), np.zeros(0, dtype=np.int64)
    shift = float(_dfs(L, null, MODE_MAX, 0.0, 0, acc, dummy, no_labels))
    if b.top_terms is None or count <= b.top_terms:
        mass = float(_dfs(L, null, MODE_ACCUMULATE, shift, 0, acc, dummy, no_labels))
        w = np.clip(acc / mass, 0.0, 1.0)
        return MarginalTable(w, 0.0, count, shift + math.log(mass))
    lps, labels = np.empty(count), np.empty(count, dtype=np.int64)
    kept = 0
    for k in range(m):
        _dfs(L, null, MODE_ROW, 0.0, k, acc, lps, labels)
        row_kept = 0
        for j in range(n + 1):
            acc[k, j], c = top_sum(lps[labels == j], b.top_terms, shift)
            row_kept += c
        kept = max(kept, row_kept)
    return normalise_rows(acc, kept, shift)


# ---------------------------------------------------------------------------
# permanents

@njit(cache=True)
def _ryser(a):
    # Gray-code Ryser with Neumaier-compensated accumulation.
    d = a.shape[0]
    rowsum = np.zeros(d)
    total = 0.0
    comp = 0.0
    gray = 0
    for step in range(1, 1 << d):
        bit = 0
        s = step
        while not (s & 1):
            s >>= 1
            bit += 1
        mask = 1 << bit
        gray ^= mask
        if gray & mask:
            for i in range(d):
                rowsum[i] += a[i, bit]
        else:
            for i in range(d):
                rowsum[i] -= a[i, bit]
        prod = 1.0
        for i in range(d):
            prod *= rowsum[i]
        # sign (-1)^|S|; overall factor (-1)^d applied below
        pop = 0
        g = gray
        while g:
            g &= g - 1
            pop += 1
        term = -prod if pop & 1 else prod
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
    total += comp
    if d & 1:
        total = -total
    return total


def _log_sum_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def _balance(logs: np.ndarray, iters: int = 50, tol: float = 1e-3) -> tuple[np.ndarray, float] | None:
    """Alternate row / column log-normalisation of a log-domain matrix.

    Returns the balanced matrix and the log of the factored-out scales, or
    ``None`` if some row or column is all zero (permanent zero).  Diagonal
    scaling is exact for permanents; balancing only tames the cancellation
    in the inclusion-exclusion sum.
    """
    a = np.array(logs, dtype=np.float64)
    total = 0.0
    for _ in range(iters):
        r = _log_sum_rows(a)
        if not np.isfinite(r).all():
            return None
        a -= r[:, None]
        total += float(r.sum())
        c = _log_sum_rows(a.T)
        if not np.isfinite(c).all():
            return None
        a -= c[None, :]
        total += float(c.sum())
        if np.abs(c).max() < tol:
            break
    return a, total


def _log_permanent(logs: np.ndarray) -> float:
    """Log-permanent of ``exp(logs)`` by Ryser's formula after balancing."""
    if logs.shape[0] == 0:
        return 0.0
    bal = _balance(logs)
    if bal is None:
        return -math.inf
    a, total = bal
    val = _ryser(np.ascontiguousarray(np.exp(a)))
    return total + math.log(val) if val > 0 else -math.inf


def permanent_ryser(m: np.ndarray) -> float:
    """Log of the permanent of a square non-negative matrix.

    The matrix is diagonally rescaled towards doubly stochastic form before
    the inclusion-exclusion sum, and the scales are added back in the log
    domain.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("permanent_ryser needs a square matrix")
    d = a.shape[0]
    if d > MAX_PERMANENT_DIM:
        raise ValueError(f"permanent_ryser refuses d={d} > {MAX_PERMANENT_DIM}")
    if (a < 0).any() or not np.isfinite(a).all():
        raise ValueError("permanent_ryser needs finite non-negative entries")
    with np.errstate(divide="ignore"):
        return _log_permanent(np.log(a))


def _square_likelihoods(p: AssignmentProblem) -> np.ndarray:
    """Square completion of the problem in the log domain."""
    m, n = p.n_meas, p.n_land
    d = m + n
    logs = np.full((d, d), -np.inf)
    logs[:m, :n] = p.log_lik
    logs[np.arange(m), n + np.arange(m)] = p.null_log_lik
    logs[m:, :] = 0.0
    return logs


def permanent_marginals(p: AssignmentProblem) -> MarginalTable:
    """Marginals as ratios of permanents of the square completion."""
    m, n = p.n_meas, p.n_land
    d = m + n
    if d > MAX_PERMANENT_DIM:
        raise ValueError(f"square completion of size {d} exceeds {MAX_PERMANENT_DIM}")
    if m == 0:
        return MarginalTable(np.zeros((0, n + 1)), 0.0, 1, 0.0)
    logs = _square_likelihoods(p)
    log_total = _log_permanent(logs)
    w = np.zeros((m, n + 1))
    idx = np.arange(d)
    for k in range(m):
        keep_rows = idx != k
        for col in range(n + m):
            if col >= n and col != n + k:
                continue
            ell = logs[k, col]
            if ell == -np.inf:
                continue
            log_minor = _log_permanent(logs[np.ix_(keep_rows, idx != col)])
            w[k, min(col, n)] = math.exp(ell + log_minor - log_total)
    # dummy rows contribute n_land! to every permanent
    return MarginalTable(np.clip(w, 0.0, 1.0), 0.0, 0, log_total - math.lgamma(n + 1))


def permanent_direct(a: np.ndarray) -> float:
    """Permutation-sum permanent (linear domain); test oracle for small d."""
    from itertools import permutations
    a = np.asarray(a, dtype=np.float64)
    d = a.shape[0]
    return math.fsum(math.prod(a[i, s[i]] for i in range(d)) for s in permutations(range(d)))
