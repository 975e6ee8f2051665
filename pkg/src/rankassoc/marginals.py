"""Approximate marginals from the K likeliest assignments, with an error bound.

The bound follows from splitting the probability mass into what was
enumerated and a tail bounded by ``N_rem * p(A_K)``, where ``N_rem`` is an
upper bound on the number of assignments not enumerated.  ``N_rem`` comes
from the Bregman-Minc permanent bound on the {0,1} feasibility pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .core import NULL, AssignmentProblem, MarginalTable, RankedAssignmentSet
from .lsap import CostMatrix

# exp() of a log count below this is still an exactly-flooring float
_EXACT_LOG_LIMIT = 700.0
_ROUNDING_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class FeasibilityMatrix:
    """{0,1} pattern of the augmented cost matrix (1 = finite cost)."""

    zero_one: np.ndarray

    @property
    def row_degrees(self) -> np.ndarray:
        return self.zero_one.sum(axis=1)

    @property
    def n_meas(self) -> int:
        return self.zero_one.shape[0]

    @property
    def n_land(self) -> int:
        return self.zero_one.shape[1] - self.zero_one.shape[0]

    @classmethod
    def from_cost(cls, c: CostMatrix) -> FeasibilityMatrix:
        return cls(np.isfinite(c.cost))

    @classmethod
    def from_problem(cls, p: AssignmentProblem) -> FeasibilityMatrix:
        m, n = p.n_meas, p.n_land
        z = np.zeros((m, n + m), dtype=bool)
        z[:, :n] = np.isfinite(p.log_lik)
        z[np.arange(m), n + np.arange(m)] = True
        return cls(z)


def log_independent_bound(f: FeasibilityMatrix) -> float:
    """log of prod_k (f_k + 1): every measurement picks independently."""
    return float(np.log(f.row_degrees.astype(np.float64)).sum())


def log_bregman_minc_bound(f: FeasibilityMatrix) -> float:
    """Bregman-Minc bound on the square completion, divided by ``n_land!``.

    The ``n_land`` completion rows are all ones, so their permanent factor is
    exactly ``n_land!`` times the number of assignments.
    """
    m, n = f.n_meas, f.n_land
    r = f.row_degrees.astype(np.float64)
    if np.any(r == 0):
        return -math.inf
    d = m + n
    log_real = float((gammaln(r + 1.0) / r).sum())
    log_dummy = n * math.lgamma(d + 1) / d if d else 0.0
    return log_real + log_dummy - math.lgamma(n + 1)


def count_bound_int(f: FeasibilityMatrix) -> int:
    """Integer upper bound on the number of assignments.

    The smaller of the independent-choice and Bregman-Minc bounds, floored
    (the true count is an integer).  Past the float range a power of two
    above the bound is returned instead.
    """
    log_b = min(log_independent_bound(f), log_bregman_minc_bound(f))
    if log_b < _EXACT_LOG_LIMIT:
        return max(math.floor(math.exp(log_b) * (1.0 + _ROUNDING_SLACK)), 1)
    return 1 << math.ceil(log_b / math.log(2.0) + _ROUNDING_SLACK)


def count_bound(f: FeasibilityMatrix) -> float:
    """Log of :func:`count_bound_int`."""
    return math.log(count_bound_int(f))


def error_bound(ranked: RankedAssignmentSet, f: FeasibilityMatrix) -> float:
    """Association error bound: ``beta / (beta + enumerated mass)``."""
    K = len(ranked)
    if K == 0:
        raise ValueError("error_bound needs at least one assignment")
    if ranked.exhausted:
        return 0.0
    n_rem = count_bound_int(f) - K
    if n_rem <= 0:
        return 0.0
    log_beta = math.log(n_rem) + float(ranked.log_probs[-1])
    gamma = float(expit(log_beta - ranked.total_log_mass))
    return min(max(gamma, 0.0), 1.0)


def marginals(p: AssignmentProblem, ranked: RankedAssignmentSet,
              f: FeasibilityMatrix | None = None) -> MarginalTable:
    """Approximate marginal weights over the enumerated assignments."""
    m, n = p.n_meas, p.n_land
    K = len(ranked)
    lps = ranked.log_probs
    total = ranked.total_log_mass
    weights = np.exp(lps - total)
    cols = np.where(ranked.targets == NULL, n, ranked.targets)
    idx = (np.arange(m) * (n + 1))[None, :] + cols
    w_bar = np.bincount(idx.ravel(), weights=np.repeat(weights, m),
                        minlength=m * (n + 1)).reshape(m, n + 1)
    np.clip(w_bar, 0.0, 1.0, out=w_bar)
    if f is None:
        f = FeasibilityMatrix.from_problem(p)
    return MarginalTable(w_bar, error_bound(ranked, f), K, total)

