"""Timing and error studies over problem corpora, with CSV and SVG output."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import NULL, AssignmentProblem, MarginalTable, problem_id
from .marginals import marginals
from .murty import kbest
from .oracles import (BudgetExceeded, EnumerationBudget, normalise_rows, permanent_marginals,
                      top_sum, true_marginals)

TIMING_HEADER = ("problem_id", "method", "k", "n_meas", "n_land", "max_dim", "wall_time_ns")
ERROR_HEADER = ("problem_id", "k", "n_meas", "n_land", "max_dim", "delta", "gamma", "truncated")
RYSER_METHOD = "ryser-exact"
DEFAULT_RYSER_MAX_DIM = 20
# slack for rounding in the delta <= gamma check
GAMMA_SLACK = 1e-12


def kbest_marginals(p: AssignmentProblem, K: int) -> MarginalTable:
    return marginals(p, kbest(p, K))


def max_abs_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max()) if a.size else 0.0


@dataclass(frozen=True)
class TimingRecord:
    problem_id: str
    method: str
    k: int
    n_meas: int
    n_land: int
    max_dim: int
    wall_time_ns: int

    def row(self) -> tuple:
        return (self.problem_id, self.method, self.k, self.n_meas, self.n_land,
                self.max_dim, self.wall_time_ns)


@dataclass(frozen=True)
class ErrorRecord:
    problem_id: str
    k: int
    n_meas: int
    n_land: int
    max_dim: int
    delta: float
    gamma: float
    truncated: bool
    k_used: int
    wall_time_ns: int

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"{self.problem_id}: delta {self.delta} outside [0, 1]")
        if not self.truncated and self.delta > self.gamma + GAMMA_SLACK:
            raise AssertionError(f"{self.problem_id} K={self.k}: delta {self.delta!r} "
                                 f"exceeds bound {self.gamma!r}")

    def row(self) -> tuple:
        return (self.problem_id, self.k, self.n_meas, self.n_land, self.max_dim,
                repr(self.delta), repr(self.gamma), int(self.truncated))


def _cell_problem(p: AssignmentProblem, k: int, j: int) -> tuple[AssignmentProblem, float]:
    # assignments with k -> j are those of the problem without row k (and column j)
    rows = np.arange(p.n_meas) != k
    cols = np.arange(p.n_land) != j
    sub = AssignmentProblem(p.log_lik[np.ix_(rows, cols)], p.null_log_lik[rows])
    return sub, float(p.term(k, NULL if j == p.n_land else j))


def truncated_truth(p: AssignmentProblem, top_terms: int) -> MarginalTable:
    """Reference marginals keeping the ``top_terms`` likeliest terms of each (k, j) numerator.

    Each cell's terms are the k-best assignments of the problem with that pair
    fixed, so this works beyond the enumeration budget. Rows are normalised by
    the sum of their numerators, as in truncated ``true_marginals``.
    """
    m, n = p.n_meas, p.n_land
    cells = {}
    for k in range(m):
        for j in range(n + 1):
            sub, term = _cell_problem(p, k, j)
            if term > -math.inf:
                cells[k, j] = np.asarray(kbest(sub, top_terms).log_probs) + term
    shift = max((float(v.max()) for v in cells.values()), default=0.0)
    num = np.zeros((m, n + 1))
    kept = np.zeros(m, dtype=np.int64)
    for (k, j), lps in cells.items():
        num[k, j], c = top_sum(lps, top_terms, shift)
        kept[k] += c
    return normalise_rows(num, int(kept.max(initial=0)), shift)


def _prime_jit() -> None:
    # compile the numba kernels outside any timed region
    p = AssignmentProblem.uniform_null(np.array([[-1.0, -2.0], [-2.0, -1.0]]))
    kbest_marginals(p, 3)
    permanent_marginals(p)


def time_problem(p: AssignmentProblem, pid: str, ks: Sequence[int], ryser_max_dim: int,
                 warmup: int = 0) -> list[TimingRecord]:
    shape = (p.n_meas, p.n_land, p.max_dim)
    out = []
    for K in ks:
        for _ in range(warmup):
            kbest_marginals(p, K)
        t0 = time.perf_counter_ns()
        kbest_marginals(p, K)
        out.append(TimingRecord(pid, f"kbest-{K}", K, *shape, time.perf_counter_ns() - t0))
    if p.n_meas + p.n_land <= ryser_max_dim:
        for _ in range(warmup):
            permanent_marginals(p)
        t0 = time.perf_counter_ns()
        permanent_marginals(p)
        out.append(TimingRecord(pid, RYSER_METHOD, 0, *shape, time.perf_counter_ns() - t0))
    return out


def timing_study(problems: Iterable[AssignmentProblem], ks: Sequence[int],
                 ryser_max_dim: int = DEFAULT_RYSER_MAX_DIM, warmup: int = 0) -> list[TimingRecord]:
    """Sequential per-problem wall times of the marginal computation only."""
    _prime_jit()
    records: list[TimingRecord] = []
    for i, p in enumerate(problems):
        records += time_problem(p, problem_id(p, i), ks, ryser_max_dim, warmup)
    return records


def error_records(p: AssignmentProblem, pid: str, ks: Sequence[int], budget: int,
                  top_terms: int | None = None) -> list[ErrorRecord] | None:
    """Error records for one problem, or ``None`` when its truth is out of reach."""
    truncated = False
    try:
        truth = true_marginals(p, EnumerationBudget(budget)).w_bar
    except BudgetExceeded:
        if top_terms is None:
            return None
        truth = truncated_truth(p, top_terms).w_bar
        truncated = True
    out = []
    for K in ks:
        t0 = time.perf_counter_ns()
        mt = kbest_marginals(p, K)
        elapsed = time.perf_counter_ns() - t0
        out.append(ErrorRecord(pid, K, p.n_meas, p.n_land, p.max_dim,
                               max_abs_error(mt.w_bar, truth), mt.gamma, truncated,
                               mt.k_used, elapsed))
    return out


def _error_job(args):
    return error_records(*args)


@dataclass
class ErrorStudy:
    records: list[ErrorRecord]
    skipped: list[str]


def error_study(problems: Iterable[AssignmentProblem], ks: Sequence[int],
                budget: int = 10**7, top_terms: int | None = None,
                workers: int = 1) -> ErrorStudy:
    jobs = [(p, problem_id(p, i), tuple(ks), budget, top_terms) for i, p in enumerate(problems)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_error_job, jobs, chunksize=8))
    else:
        results = [_error_job(j) for j in jobs]
    records, skipped = [], []
    for job, res in zip(jobs, results):
        if res is None:
            skipped.append(job[1])
        else:
            records += res
    return ErrorStudy(records, skipped)


def to_csv(header: Sequence[str], rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sorted_error_curve(records: Sequence[ErrorRecord], K: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted deltas for ``K`` against normalised rank in [0, 1]."""
    d = np.sort([r.delta for r in records if r.k == K])
    if d.size == 0:
        return d, d
    rank = np.linspace(0.0, 1.0, d.size) if d.size > 1 else np.zeros(1)
    return rank, d


# ---------------------------------------------------------------------------
# figures

def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.fonttype"] = "path"
    matplotlib.rcParams["svg.hashsalt"] = "rankassoc"
    return plt


def _save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def timing_svg(records: Sequence[TimingRecord], path) -> None:
    """Scatter of log10(milliseconds) per problem index, coloured by max_dim."""
    plt = _figure()
    order = {pid: i for i, pid in enumerate(dict.fromkeys(r.problem_id for r in records))}
    fig, ax = plt.subplots(figsize=(8, 4.5))
    markers = "ox^sv+*"
    methods = list(dict.fromkeys(r.method for r in records))
    sc = None
    for mk, method in zip(markers * len(methods), methods):
        rs = [r for r in records if r.method == method]
        x = [order[r.problem_id] for r in rs]
        y = [math.log10(max(r.wall_time_ns, 1) / 1e6) for r in rs]
        sc = ax.scatter(x, y, c=[r.max_dim for r in rs], cmap="viridis", s=8, marker=mk,
                        label=method, vmin=0, vmax=max(r.max_dim for r in records))
    if sc is not None:
        fig.colorbar(sc, ax=ax, label="max dimension")
        ax.legend(loc="upper left")
    ax.set_xlabel("problem index")
    ax.set_ylabel("log10 of milliseconds")
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def error_svg(records: Sequence[ErrorRecord], path) -> None:
    """Sorted worst-case error against normalised rank, one curve per K."""
    plt = _figure()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    floor = 1e-17
    for K in sorted({r.k for r in records}):
        rank, d = sorted_error_curve(records, K)
        ax.plot(rank, np.maximum(d, floor), label=f"K = {K}")
    ax.set_yscale("log")
    ax.set_xlabel("fraction of problems")
    ax.set_ylabel("worst-case marginal error")
    ax.legend(loc="upper left")
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)
