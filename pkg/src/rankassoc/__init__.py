"""Marginal association probabilities from the K best assignments, with error bounds."""

from .core import (NULL, Assignment, AssignmentProblem, MarginalTable, ProblemFormatError,
                   RankedAssignmentSet, log_sum_exp, problem_read, problem_write, read_corpus,
                   write_corpus)
from .lsap import CostMatrix, augment, solve_lsap
from .marginals import FeasibilityMatrix, count_bound, count_bound_int, error_bound, marginals
from .murty import kbest, kbest_stream
from .oracles import (BudgetExceeded, EnumerationBudget, count_exact, enumerate_all,
                      permanent_marginals, permanent_ryser, true_marginals)
from .quadric import Ellipsoid, ellipsoid_distance, extract_center_shape, triangulate_measurement

__all__ = [
    "NULL", "Assignment", "AssignmentProblem", "MarginalTable", "ProblemFormatError",
    "RankedAssignmentSet", "log_sum_exp", "problem_read", "problem_write", "read_corpus",
    "write_corpus", "CostMatrix", "augment", "solve_lsap", "FeasibilityMatrix", "count_bound",
    "count_bound_int", "error_bound", "marginals", "kbest", "kbest_stream", "BudgetExceeded", "EnumerationBudget",
    "count_exact", "enumerate_all", "permanent_marginals", "permanent_ryser", "true_marginals",
    "Ellipsoid", "ellipsoid_distance", "extract_center_shape", "triangulate_measurement",
]
