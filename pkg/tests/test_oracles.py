import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankassoc.bench import truncated_truth
from rankassoc.core import NULL, AssignmentProblem
from rankassoc.oracles import (BudgetExceeded, EnumerationBudget, count_exact, enumerate_all,
                               permanent_direct, permanent_marginals, permanent_ryser,
                               true_marginals)

from conftest import brute_marginals, random_problem


def test_counts():
    assert count_exact(AssignmentProblem(np.zeros((1, 1)), np.zeros(1))) == 2
    assert count_exact(AssignmentProblem(np.zeros((3, 3)), np.zeros(3))) == 34
    assert count_exact(AssignmentProblem(np.zeros((3, 0)), np.zeros(3))) == 1
    # one gated pair in a 2x2: 7 - 1 (the lone pair) - 1 (its permutation) = 5
    p = AssignmentProblem(np.array([[0.0, -np.inf], [0.0, 0.0]]), np.zeros(2))
    assert count_exact(p) == 5
    assert len(enumerate_all(p)) == 5


def test_enumerate_all_contents():
    p = AssignmentProblem(np.zeros((3, 3)), np.zeros(3))
    a = enumerate_all(p)
    assert len(a) == 34
    assert len({x.targets for x in a}) == 34
    assert all(p.is_assignment(x.targets) for x in a)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_count_matches_enumeration(seed):
    p = random_problem(np.random.default_rng(seed), m_range=(0, 6), n_range=(0, 6))
    assert count_exact(p) == len(enumerate_all(p))


def test_budget_refusal():
    p = AssignmentProblem(np.zeros((6, 6)), np.zeros(6))
    with pytest.raises(BudgetExceeded):
        enumerate_all(p, EnumerationBudget(max_assignments=100))
    with pytest.raises(BudgetExceeded):
        true_marginals(p, EnumerationBudget(max_assignments=100))
    with pytest.raises(ValueError):
        EnumerationBudget(max_assignments=0)


def test_top_terms_keeps_the_largest_per_cell(example_2x2):
    p = example_2x2
    w = true_marginals(p, EnumerationBudget(top_terms=1))
    # one term per cell: row 0 keeps 0.8*0.7, 0.2*0.3 and e^-20*0.7
    tiny = math.exp(-20.0)
    assert w.k_used == 3
    assert w.w_bar[0, 0] == pytest.approx(0.56 / (0.62 + 0.7 * tiny), rel=1e-12)
    assert w.w_bar[0, 2] == pytest.approx(0.7 * tiny / (0.62 + 0.7 * tiny), rel=1e-9)
    assert w.w_bar[1, 2] == pytest.approx(0.8 * tiny / (0.62 + 0.8 * tiny), rel=1e-9)
    np.testing.assert_allclose(w.w_bar.sum(axis=1), 1.0, atol=1e-12)


def test_top_terms_large_cap_is_exact():
    p = random_problem(np.random.default_rng(7), (4, 4), (4, 4))
    full = true_marginals(p).w_bar
    capped = true_marginals(p, EnumerationBudget(top_terms=10**6)).w_bar
    np.testing.assert_allclose(capped, full, atol=1e-15)


@pytest.mark.parametrize("T", [1, 2, 5, 40])
def test_truncated_truth_routes_agree(T):
    # enumeration route and per-cell k-best route must keep the same terms
    rng = np.random.default_rng(100 + T)
    for _ in range(30):
        p = random_problem(rng)
        a = true_marginals(p, EnumerationBudget(top_terms=T))
        b = truncated_truth(p, T)
        np.testing.assert_allclose(a.w_bar, b.w_bar, atol=1e-12)
        if count_exact(p) > T:
            assert a.k_used == b.k_used


def test_true_marginals_examples(example_2x2):
    w = true_marginals(example_2x2).w_bar
    assert w[0, 0] == pytest.approx(0.903226, abs=1e-6)
    sym = true_marginals(AssignmentProblem(np.zeros((2, 2)), np.full(2, -50.0))).w_bar
    assert sym[0, 0] == pytest.approx(0.5) and sym[1, 1] == pytest.approx(0.5)


def test_permanent_identities():
    for d in range(1, 9):
        assert permanent_ryser(np.eye(d)) == 0.0
    for d in range(2, 11):
        assert permanent_ryser(np.ones((d, d))) == pytest.approx(math.lgamma(d + 1), rel=1e-10)
    assert math.exp(permanent_ryser(np.ones((3, 3)))) == pytest.approx(6.0, rel=1e-14)


def test_permanent_against_direct_sum():
    rng = np.random.default_rng(31)
    for _ in range(10):
        a = rng.uniform(0.0, 1.0, (5, 5))
        a[a == 0] = 1.0
        ref = permanent_direct(a)
        assert math.exp(permanent_ryser(a)) == pytest.approx(ref, rel=1e-10)


def test_permanent_zero_and_errors():
    assert permanent_ryser(np.zeros((3, 3))) == -math.inf
    assert permanent_ryser(np.array([[1.0, 0.0], [1.0, 0.0]])) == -math.inf
    with pytest.raises(ValueError):
        permanent_ryser(np.ones((2, 3)))
    with pytest.raises(ValueError):
        permanent_ryser(-np.ones((2, 2)))


def test_permanent_marginals_one_by_one():
    q, r = 0.3, 0.05
    p = AssignmentProblem(np.log([[q]]), np.log([r]))
    w = permanent_marginals(p).w_bar
    assert w[0, 0] == pytest.approx(q / (q + r), rel=1e-13)
    assert w[0, 1] == pytest.approx(r / (q + r), rel=1e-13)


def test_permanent_marginals_two_by_two(example_2x2):
    w = permanent_marginals(example_2x2).w_bar
    assert w[0, 0] == pytest.approx(true_marginals(example_2x2).w_bar[0, 0], abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_three_oracles_agree(seed):
    p = random_problem(np.random.default_rng(seed))
    ref, _, _ = brute_marginals(p)
    assert np.abs(true_marginals(p).w_bar - ref).max() <= 1e-12
    assert np.abs(permanent_marginals(p).w_bar - ref).max() <= 1e-10


def test_total_mass_agrees():
    rng = np.random.default_rng(8)
    for _ in range(30):
        p = random_problem(rng)
        _, _, lps = brute_marginals(p)
        ref = float(np.log(np.exp(lps - lps.max()).sum()) + lps.max())
        assert true_marginals(p).total_log_mass == pytest.approx(ref, abs=1e-10)
        assert permanent_marginals(p).total_log_mass == pytest.approx(ref, abs=1e-10)


def test_ryser_cost_grows_with_dimension():
    # d * 2^d work: every +2 in dimension should cost at least 4x
    rng = np.random.default_rng(0)
    times = {}
    for d in (16, 18, 20):
        a = rng.uniform(0.5, 1.0, (d, d))
        permanent_ryser(a)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            permanent_ryser(a)
            best = min(best, time.perf_counter() - t0)
        times[d] = best
    assert times[18] >= 4 * times[16] * 0.9
    assert times[20] >= 4 * times[18] * 0.9
