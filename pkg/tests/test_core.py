import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankassoc.core import (NULL, AssignmentProblem, ProblemFormatError, RankedAssignmentSet,
                            canonical_sum, log_sum_exp, problem_read, problem_write,
                            read_corpus, write_corpus)

from conftest import random_corpus, random_problem


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(0.6931471805599453, abs=1e-15)
    assert log_sum_exp([-math.inf, -3.25]) == -3.25
    # reference from 50-digit evaluation: -998.9160312507591762561867
    assert log_sum_exp([-1000.0, -1000.5, -999.7]) == pytest.approx(-998.9160312507591762561867,
                                                                     rel=1e-15)


def test_log_sum_exp_edge_cases():
    assert log_sum_exp([-math.inf, -math.inf]) == -math.inf
    with pytest.raises(ValueError):
        log_sum_exp([])
    with pytest.raises(ValueError):
        log_sum_exp([0.0, math.nan])
    with pytest.raises(ValueError):
        log_sum_exp([math.inf])


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=20))
def test_log_sum_exp_bounds(xs):
    v = log_sum_exp(xs)
    assert max(xs) - 1e-12 <= v <= max(xs) + math.log(len(xs)) + 1e-12


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
def test_log_sum_exp_shift(xs, c):
    assert log_sum_exp([x + c for x in xs]) == pytest.approx(log_sum_exp(xs) + c, abs=1e-9)


def test_canonical_sum_is_left_to_right():
    assert canonical_sum([0.1, 0.2, 0.3]) == (0.1 + 0.2) + 0.3
    assert canonical_sum([]) == 0.0


def test_problem_validation():
    with pytest.raises(ValueError):
        AssignmentProblem(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        AssignmentProblem(np.array([[np.nan]]), np.zeros(1))
    with pytest.raises(ValueError):
        AssignmentProblem(np.array([[np.inf]]), np.zeros(1))
    with pytest.raises(ValueError):
        AssignmentProblem(np.zeros((1, 1)), np.array([-np.inf]))
    with pytest.raises(ValueError):
        AssignmentProblem(np.array([[-np.inf]]), np.zeros(1), truth=(0,))
    p = AssignmentProblem(np.zeros((2, 2)), np.zeros(2), truth=(1, NULL))
    assert p.truth == (1, NULL)
    assert p.max_dim == 2


def test_is_assignment():
    p = AssignmentProblem(np.array([[0.0, -np.inf], [0.0, 0.0]]), np.zeros(2))
    assert p.is_assignment((0, 1))
    assert p.is_assignment((NULL, NULL))
    assert not p.is_assignment((0, 0))
    assert not p.is_assignment((1, 0))
    assert not p.is_assignment((0,))
    assert not p.is_assignment((2, NULL))
    assert p.log_prob_of((NULL, 1)) == 0.0


def test_minimal_file():
    p = problem_read('{"version":1,"n_meas":1,"n_land":0,"log_lik":[[]],"null_log_lik":[0.0]}')
    assert (p.n_meas, p.n_land) == (1, 0)
    assert p.is_assignment((NULL,))


def test_neg_inf_entry():
    p = problem_read('{"version":1,"n_meas":1,"n_land":2,"log_lik":[[-1.5,"-inf"]],'
                     '"null_log_lik":[-3]}')
    assert p.log_lik[0, 1] == -math.inf
    assert not p.is_assignment((1,))


@pytest.mark.parametrize("doc, field", [
    ('{"version":1,"n_meas":1,"n_land":1,"log_lik":[[0]]}', "null_log_lik"),
    ('{"version":2,"n_meas":1,"n_land":1,"log_lik":[[0]],"null_log_lik":[0]}', "version"),
    ('{"version":1,"n_meas":2,"n_land":1,"log_lik":[[0]],"null_log_lik":[0]}', "log_lik"),
    ('{"version":1,"n_meas":1,"n_land":2,"log_lik":[[0]],"null_log_lik":[0]}', "log_lik[0]"),
    ('{"version":1,"n_meas":1,"n_land":1,"log_lik":[[NaN]],"null_log_lik":[0]}', "log_lik[0][0]"),
    ('{"version":1,"n_meas":1,"n_land":1,"log_lik":[[0]],"null_log_lik":["-inf"]}', "null_log_lik[0]"),
    ('{"version":1,"n_meas":1,"n_land":1,"log_lik":[[0]],"null_log_lik":[Infinity]}', "null_log_lik[0]"),
    ('{"version":1,"n_meas":1,"n_land":1,"log_lik":[[0]],"null_log_lik":[0],"truth":[3]}', "truth"),
    ('{"version":1,"n_meas":-1,"n_land":1,"log_lik":[],"null_log_lik":[]}', "n_meas"),
    ('[1, 2]', "object"),
    ('{"version":1,', "malformed"),
])
def test_format_errors_name_the_field(doc, field):
    with pytest.raises(ProblemFormatError, match=field.replace("[", r"\[").replace("]", r"\]")):
        problem_read(doc)


def test_round_trip_random_3x4():
    rng = np.random.default_rng(11)
    L = rng.uniform(-10, 0, (3, 4))
    L[0, 2] = -np.inf
    p = AssignmentProblem(L, rng.uniform(-10, 0, 3), truth=(1, NULL, 0), meta={"id": "x", "frame": 3})
    text = problem_write(p)
    q = problem_read(text)
    assert q == p
    assert problem_write(q) == text
    assert json.loads(text) == json.loads(problem_write(q))
    assert q.meta == {"id": "x", "frame": 3}


def test_write_is_deterministic():
    p = random_problem(np.random.default_rng(3))
    assert problem_write(p) == problem_write(p)
    assert "\n" not in problem_write(p)


def test_corpus_round_trip(tmp_path):
    corpus = [p.with_meta(id=f"p{i}") for i, p in enumerate(random_corpus(5, 10))]
    path = tmp_path / "c.jsonl"
    assert write_corpus(path, corpus) == 10
    back = read_corpus(path)
    assert back == corpus


def test_corpus_error_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(problem_write(random_problem(np.random.default_rng(0))) + "\n{bad\n")
    with pytest.raises(ProblemFormatError, match=":2:"):
        read_corpus(path)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    p = random_problem(np.random.default_rng(seed), n_range=(0, 6))
    assert problem_read(problem_write(p)) == p


def test_ranked_set_entries():
    r = RankedAssignmentSet(np.array([[0, NULL], [NULL, 0]]), np.array([-1.0, -2.0]), False)
    assert len(r) == 2
    assert r.entries[1].targets == (NULL, 0)
    assert r.total_log_mass == pytest.approx(math.log(math.exp(-1) + math.exp(-2)))


def test_empty_problem_allowed():
    p = AssignmentProblem(np.zeros((0, 3)), np.zeros(0))
    assert p.n_meas == 0 and p.n_land == 3
    assert problem_read(problem_write(p)) == p
