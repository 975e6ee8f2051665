import numpy as np
import pytest

from rankassoc.core import AssignmentProblem


def random_problem(rng, m_range=(1, 5), n_range=(0, 5), gate_prob=0.2, null_range=(-10.0, 0.0)):
    """Log-likelihoods uniform in [-10, 0], a fraction of pairs gated to -inf."""
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    L = rng.uniform(-10.0, 0.0, (m, n))
    L[rng.random((m, n)) < gate_prob] = -np.inf
    null = rng.uniform(*null_range, m)
    return AssignmentProblem(L, null)


def random_corpus(seed, count, **kwargs):
    rng = np.random.default_rng(seed)
    return [random_problem(rng, **kwargs) for _ in range(count)]


def brute_marginals(p):
    """Exact marginals by plain Python enumeration, independent of the package oracles."""
    from itertools import permutations
    m, n = p.n_meas, p.n_land
    terms = []
    # choose for each measurement a landmark or null, landmarks distinct
    def rec(k, used, acc):
        if k == m:
            terms.append(tuple(acc))
            return
        rec(k + 1, used, acc + [-1])
        for j in range(n):
            if j not in used and np.isfinite(p.log_lik[k, j]):
                rec(k + 1, used | {j}, acc + [j])
    rec(0, frozenset(), [])
    lps = np.array([sum(p.null_log_lik[k] if t == -1 else p.log_lik[k, t] for k, t in enumerate(a))
                    for a in terms])
    w = np.exp(lps - lps.max())
    w /= w.sum()
    out = np.zeros((m, n + 1))
    for a, wi in zip(terms, w):
        for k, t in enumerate(a):
            out[k, n if t == -1 else t] += wi
    return out, terms, lps


@pytest.fixture
def example_2x2():
    L = np.log([[0.8, 0.2], [0.3, 0.7]])
    return AssignmentProblem(L, np.array([-20.0, -20.0]))
