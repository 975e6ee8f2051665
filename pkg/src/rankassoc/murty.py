"""K-best assignment enumeration (Murty's partitioning).

The engine works on the square completion of the null-augmented cost matrix
(see :func:`rankassoc.lsap.square_cost`) and branches only on the real
measurement rows.  Two facts keep it cheap:

* Children of a node at row ``r`` lock every row before ``r``, so a
  subproblem is fully described by its first free row, the parent's solution
  and the set of columns banned on that row.  Bans on earlier rows are moot.
* Children are pushed unsolved, keyed by an upper bound taken from the
  parent's reduced costs.  A child is solved (one augmenting path from the
  parent's duals) only when it reaches the top of the queue.

Output order is canonical: descending log-probability, ties broken by the
lexicographic order of the target tuples with ``NULL`` after every landmark.
Items are only released once nothing left in the queue can tie with them.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np
from numba import njit

from .core import NULL, Assignment, AssignmentProblem, RankedAssignmentSet
from .lsap import augment, augment_row, solve_from_scratch, square_cost

# counters layout
N_NODES, N_SLOTS, HEAP_SIZE, N_OUT, N_SOLVES = range(5)
DONE, NEED_CAPACITY = 0, 1

TIE_EPS = 1e-10


@njit(cache=True)
def _tol(x):
    return TIE_EPS * (1.0 + abs(x))


@njit(cache=True)
def _heap_before(a, b, key):
    ka = key[a]
    kb = key[b]
    return ka > kb or (ka == kb and a < b)


@njit(cache=True)
def _heap_push(heap, size, node, key):
    i = size
    heap[i] = node
    while i > 0:
        parent = (i - 1) >> 1
        if _heap_before(heap[i], heap[parent], key):
            tmp = heap[i]
            heap[i] = heap[parent]
            heap[parent] = tmp
            i = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(heap, size, key):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _heap_before(heap[right], heap[left], key):
            best = right
        if _heap_before(heap[best], heap[i], key):
            tmp = heap[i]
            heap[i] = heap[best]
            heap[best] = tmp
            i = best
        else:
            break
    return top, size


@njit(cache=True)
def _solution_log_prob(cost, x, m):
    lp = 0.0
    for k in range(m):
        lp += -cost[k, x[k]]
    return lp


@njit(cache=True)
def _init_root(cost, m, node_parent, node_row, node_ban, node_banprev, node_slot,
               node_key, slot_x, slot_u, slot_v, slot_lp, heap, counters):
    N = cost.shape[0]
    row_on = np.ones(N, dtype=np.bool_)
    col_on = np.ones(N, dtype=np.bool_)
    col4row = np.full(N, -1, dtype=np.int64)
    row4col = np.full(N, -1, dtype=np.int64)
    u = np.zeros(N)
    v = np.zeros(N)
    ok = solve_from_scratch(cost, row_on, col_on, col4row, row4col, u, v)
    if not ok:
        return False
    slot_x[0, :] = col4row
    slot_u[0, :] = u
    slot_v[0, :] = v
    lp = _solution_log_prob(cost, col4row, m)
    slot_lp[0] = lp
    node_parent[0] = -1
    node_row[0] = 0
    node_ban[0] = -1
    node_banprev[0] = -1
    node_slot[0] = 0
    node_key[0] = lp
    counters[N_NODES] = 1
    counters[N_SLOTS] = 1
    counters[HEAP_SIZE] = _heap_push(heap, 0, 0, node_key)
    counters[N_SOLVES] = 1
    return True


@njit(cache=True)
def _advance(cost, m, need, node_parent, node_row, node_ban, node_banprev, node_slot,
             node_key, slot_x, slot_u, slot_v, slot_lp, heap, out, counters):
    N = cost.shape[0]
    cap_nodes = node_parent.shape[0]
    cap_slots = slot_lp.shape[0]
    cap_out = out.shape[0]

    col_on = np.empty(N, dtype=np.bool_)
    ban = np.empty(N, dtype=np.bool_)
    row4col = np.empty(N, dtype=np.int64)
    shortest = np.empty(N)
    path = np.empty(N, dtype=np.int64)
    sr = np.empty(N, dtype=np.bool_)
    sc = np.empty(N, dtype=np.bool_)
    remaining = np.empty(N, dtype=np.int64)

    while True:
        size = counters[HEAP_SIZE]
        n_out = counters[N_OUT]
        if n_out >= need:
            if size == 0:
                return DONE
            t = np.inf
            for q in range(need):
                lp = slot_lp[node_slot[out[q]]]
                if lp < t:
                    t = lp
            if node_key[heap[0]] < t - _tol(t):
                return DONE
        elif size == 0:
            return DONE
        if (counters[N_NODES] + m > cap_nodes or counters[N_SLOTS] + 1 > cap_slots
                or n_out + 1 > cap_out):
            return NEED_CAPACITY

        top = heap[0]
        if node_slot[top] < 0:
            top, size = _heap_pop(heap, size, node_key)
            counters[HEAP_SIZE] = size
            # re-solve from the parent's primal/dual state
            ps = node_slot[node_parent[top]]
            s = counters[N_SLOTS]
            x = slot_x[s]
            u = slot_u[s]
            v = slot_v[s]
            x[:] = slot_x[ps]
            u[:] = slot_u[ps]
            v[:] = slot_v[ps]
            r = node_row[top]
            for j in range(N):
                col_on[j] = True
                ban[j] = False
            for k in range(r):
                col_on[x[k]] = False
            b = top
            while b >= 0:
                if node_ban[b] >= 0:
                    ban[node_ban[b]] = True
                b = node_banprev[b]
            for j in range(N):
                row4col[j] = -1
            for i in range(N):
                row4col[x[i]] = i
            row4col[x[r]] = -1
            x[r] = -1
            counters[N_SOLVES] += 1
            sink = augment_row(cost, r, col_on, ban, x, row4col, u, v,
                               shortest, path, sr, sc, remaining)
            if sink >= 0:
                lp = _solution_log_prob(cost, x, m)
                slot_lp[s] = lp
                node_slot[top] = s
                node_key[top] = lp
                counters[N_SLOTS] = s + 1
                counters[HEAP_SIZE] = _heap_push(heap, size, top, node_key)
            continue

        top, size = _heap_pop(heap, size, node_key)
        out[n_out] = top
        counters[N_OUT] = n_out + 1

        # expand: child at row k bans x[k], locks rows < k
        ps = node_slot[top]
        x = slot_x[ps]
        u = slot_u[ps]
        v = slot_v[ps]
        lp = slot_lp[ps]
        slack = _tol(lp)
        r0 = node_row[top]
        for j in range(N):
            col_on[j] = True
        for k in range(r0):
            col_on[x[k]] = False
        n_nodes = counters[N_NODES]
        for k in range(r0, m):
            for j in range(N):
                ban[j] = False
            ban[x[k]] = True
            if k == r0:
                b = top
                while b >= 0:
                    if node_ban[b] >= 0:
                        ban[node_ban[b]] = True
                    b = node_banprev[b]
            best = np.inf
            uk = u[k]
            for j in range(N):
                if col_on[j] and not ban[j]:
                    c = cost[k, j]
                    if c < np.inf:
                        red = c - uk - v[j]
                        if red < best:
                            best = red
            if best < np.inf:
                # the path must also re-enter the freed column from another row
                c_free = x[k]
                last = np.inf
                vc = v[c_free]
                for i in range(k + 1, N):
                    c = cost[i, c_free]
                    if c < np.inf:
                        red = c - u[i] - vc
                        if red < last:
                            last = red
                if last == np.inf:
                    col_on[x[k]] = False
                    continue
                node_parent[n_nodes] = top
                node_row[n_nodes] = k
                node_ban[n_nodes] = x[k]
                node_banprev[n_nodes] = top if k == r0 else -1
                node_slot[n_nodes] = -1
                node_key[n_nodes] = lp - max(best, 0.0) - max(last, 0.0) + slack
                size = _heap_push(heap, size, n_nodes, node_key)
                n_nodes += 1
            col_on[x[k]] = False
        counters[N_NODES] = n_nodes
        counters[HEAP_SIZE] = size


class MurtyEnumerator:
    """Resumable K-best enumerator for one :class:`AssignmentProblem`.

    >>> e = MurtyEnumerator(p)          # doctest: +SKIP
    >>> ranked = e.ranked(200)          # doctest: +SKIP
    >>> e.lsap_solves                   # doctest: +SKIP
    """

    def __init__(self, problem: AssignmentProblem, capacity: int = 64):
        self.problem = problem
        self.m = problem.n_meas
        self.n = problem.n_land
        self.cost = np.ascontiguousarray(square_cost(augment(problem)))
        N = self.cost.shape[0]
        cap_nodes = max(capacity * max(self.m, 1), 16)
        cap_slots = max(2 * capacity, 16)
        self.node_parent = np.empty(cap_nodes, dtype=np.int64)
        self.node_row = np.empty(cap_nodes, dtype=np.int64)
        self.node_ban = np.empty(cap_nodes, dtype=np.int64)
        self.node_banprev = np.empty(cap_nodes, dtype=np.int64)
        self.node_slot = np.empty(cap_nodes, dtype=np.int64)
        self.node_key = np.empty(cap_nodes)
        self.heap = np.empty(cap_nodes, dtype=np.int64)
        self.slot_x = np.empty((cap_slots, N), dtype=np.int64)
        self.slot_u = np.empty((cap_slots, N))
        self.slot_v = np.empty((cap_slots, N))
        self.slot_lp = np.empty(cap_slots)
        self.out = np.empty(max(capacity, 16), dtype=np.int64)
        self.counters = np.zeros(5, dtype=np.int64)
        if self.m == 0:
            self._empty = True
            return
        self._empty = False
        ok = _init_root(self.cost, self.m, self.node_parent, self.node_row, self.node_ban,
                        self.node_banprev, self.node_slot, self.node_key, self.slot_x,
                        self.slot_u, self.slot_v, self.slot_lp, self.heap, self.counters)
        assert ok, "the all-null assignment is always feasible"
        self._sorted_for = -1
        self._order = None

    @property
    def lsap_solves(self) -> int:
        return 1 if self._empty else int(self.counters[N_SOLVES])

    @property
    def pulled(self) -> int:
        return 1 if self._empty else int(self.counters[N_OUT])

    def _grow(self) -> None:
        c = self.counters
        if c[N_NODES] + self.m > self.node_parent.shape[0]:
            size = 2 * self.node_parent.shape[0] + self.m
            for name in ("node_parent", "node_row", "node_ban", "node_banprev",
                         "node_slot", "node_key", "heap"):
                old = getattr(self, name)
                new = np.empty(size, dtype=old.dtype)
                new[:old.shape[0]] = old
                setattr(self, name, new)
        if c[N_SLOTS] + 1 > self.slot_lp.shape[0]:
            size = 2 * self.slot_lp.shape[0]
            for name in ("slot_x", "slot_u", "slot_v", "slot_lp"):
                old = getattr(self, name)
                new = np.empty((size,) + old.shape[1:], dtype=old.dtype)
                new[:old.shape[0]] = old
                setattr(self, name, new)
        if c[N_OUT] + 1 > self.out.shape[0]:
            new = np.empty(2 * self.out.shape[0], dtype=np.int64)
            new[:self.out.shape[0]] = self.out
            self.out = new

    def advance(self, need: int) -> int:
        """Enumerate until the first ``need`` canonical items are final."""
        if self._empty:
            return 1
        while _advance(self.cost, self.m, need, self.node_parent, self.node_row,
                       self.node_ban, self.node_banprev, self.node_slot, self.node_key,
                       self.slot_x, self.slot_u, self.slot_v, self.slot_lp, self.heap,
                       self.out, self.counters) == NEED_CAPACITY:
            self._grow()
        return int(self.counters[N_OUT])

    def _pulled_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._empty:
            return np.zeros((1, 0), dtype=np.int64), np.zeros(1)
        n_out = int(self.counters[N_OUT])
        slots = self.node_slot[self.out[:n_out]]
        cols = self.slot_x[slots, :self.m]
        targets = np.where(cols < self.n, cols, NULL)
        return targets, self.slot_lp[slots]

    def _sorted(self) -> tuple[np.ndarray, np.ndarray]:
        targets, lps = self._pulled_arrays()
        if targets.shape[0] > 1:
            keyed = np.where(targets == NULL, self.n, targets)
            keys = tuple(keyed[:, k] for k in range(self.m - 1, -1, -1)) + (-lps,)
            order = np.lexsort(keys)
            targets, lps = targets[order], lps[order]
        return targets, lps

    def ranked(self, K: int) -> RankedAssignmentSet:
        """The K likeliest assignments (all of them if fewer exist)."""
        if K < 1:
            raise ValueError("K must be >= 1")
        self.advance(K)
        targets, lps = self._sorted()
        targets = np.ascontiguousarray(targets[:K])
        lps = np.ascontiguousarray(lps[:K])
        return RankedAssignmentSet(targets, lps, exhausted=lps.shape[0] < K)

    def stream(self, K: int) -> Iterator[Assignment]:
        """Lazily yield up to K assignments in canonical order."""
        if K < 1:
            raise ValueError("K must be >= 1")
        cached_n = -1
        targets = lps = None
        for i in range(K):
            n_out = self.advance(i + 1)
            if n_out <= i:
                return
            if n_out != cached_n:
                targets, lps = self._sorted()
                cached_n = n_out
            yield Assignment(tuple(int(t) for t in targets[i]), float(lps[i]))


def kbest(p: AssignmentProblem, K: int) -> RankedAssignmentSet:
    """Return the K assignments of ``p`` with the highest log-probability."""
    return MurtyEnumerator(p, capacity=min(K, 4096)).ranked(K)


def kbest_stream(p: AssignmentProblem, K: int) -> Iterator[Assignment]:
    """Generator form of :func:`kbest`; stop early to save work."""
    return MurtyEnumerator(p, capacity=min(K, 64)).stream(K)
