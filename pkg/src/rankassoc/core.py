"""Domain types, log-domain helpers and the JSON problem-file format.

An :class:`AssignmentProblem` holds log-likelihoods for every
(measurement, landmark) pair plus a per-measurement null option.  An
:class:`Assignment` maps every measurement to a distinct landmark or to
``NULL``.  Everything is stored in the log domain; linear probabilities only
appear in the final :class:`MarginalTable`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

NULL = -1
FORMAT_VERSION = 1
DEFAULT_NULL_LOG_LIK = -8.0


class ProblemFormatError(ValueError):
    """Raised when a problem document is malformed."""


def log_sum_exp(values: Iterable[float]) -> float:
    """Return ``log(sum(exp(values)))`` without overflow.

    Returns ``-inf`` when every entry is ``-inf``.
    """
    arr = np.asarray(values if isinstance(values, np.ndarray) else list(values),
                     dtype=np.float64)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    top = arr.max()
    if np.isnan(top) or top == math.inf:
        raise ValueError("log_sum_exp entries must be finite or -inf")
    if top == -math.inf:
        return -math.inf
    return float(top + np.log(np.exp(arr - top).sum()))


def canonical_sum(terms: Iterable[float]) -> float:
    # Plain left-to-right float addition starting from 0.0.  Every code path
    # that computes a log_prob (brute force, Murty engine) uses this order so
    # mathematically tied assignments compare equal bit-for-bit.
    total = 0.0
    for t in terms:
        total += t
    return total


@dataclass(frozen=True, eq=False)
class AssignmentProblem:
    """Log-likelihood matrix plus per-measurement null log-likelihoods.

    ``log_lik[k, j]`` is the log-likelihood that measurement ``k`` came from
    landmark ``j`` (``-inf`` marks a gated / infeasible pair).
    ``null_log_lik[k]`` is the finite log-likelihood of the null association.
    """

    log_lik: np.ndarray
    null_log_lik: np.ndarray
    truth: tuple[int, ...] | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        log_lik = np.array(self.log_lik, dtype=np.float64, copy=True)
        null = np.array(self.null_log_lik, dtype=np.float64, copy=True).reshape(-1)
        if log_lik.ndim != 2:
            if log_lik.size == 0:
                log_lik = log_lik.reshape(null.shape[0], 0)
            else:
                raise ValueError("log_lik must be a 2-D matrix")
        if log_lik.shape[0] != null.shape[0]:
            raise ValueError(
                f"log_lik has {log_lik.shape[0]} rows but null_log_lik has {null.shape[0]} entries")
        if np.isnan(log_lik).any():
            raise ValueError("log_lik contains NaN")
        if np.isposinf(log_lik).any():
            raise ValueError("log_lik contains +inf")
        if not np.isfinite(null).all():
            raise ValueError("null_log_lik entries must be finite")
        log_lik.setflags(write=False)
        null.setflags(write=False)
        object.__setattr__(self, "log_lik", log_lik)
        object.__setattr__(self, "null_log_lik", null)
        object.__setattr__(self, "meta", dict(self.meta))
        if self.truth is not None:
            truth = tuple(int(t) for t in self.truth)
            if not self.is_assignment(truth):
                raise ValueError(f"truth {truth} is not a valid assignment of this problem")
            object.__setattr__(self, "truth", truth)

    @property
    def n_meas(self) -> int:
        return self.log_lik.shape[0]

    @property
    def n_land(self) -> int:
        return self.log_lik.shape[1]

    @property
    def max_dim(self) -> int:
        return max(self.n_meas, self.n_land)

    def term(self, k: int, target: int) -> float:
        return float(self.null_log_lik[k] if target == NULL else self.log_lik[k, target])

    def log_prob_of(self, targets: Sequence[int]) -> float:
        return canonical_sum(self.term(k, t) for k, t in enumerate(targets))

    def is_assignment(self, targets: Sequence[int]) -> bool:
        """True iff ``targets`` is a feasible, landmark-injective assignment."""
        if len(targets) != self.n_meas:
            return False
        used = set()
        for k, t in enumerate(targets):
            if t == NULL:
                continue
            if not 0 <= t < self.n_land or t in used:
                return False
            if self.log_lik[k, t] == -math.inf:
                return False
            used.add(t)
        return True

    def assignment(self, targets: Sequence[int]) -> Assignment:
        targets = tuple(int(t) for t in targets)
        if not self.is_assignment(targets):
            raise ValueError(f"{targets} is not a valid assignment")
        return Assignment(targets, self.log_prob_of(targets))

    def with_meta(self, **tags: Any) -> AssignmentProblem:
        return AssignmentProblem(self.log_lik, self.null_log_lik, self.truth,
                                 {**self.meta, **tags})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AssignmentProblem):
            return NotImplemented
        return (self.log_lik.shape == other.log_lik.shape
                and np.array_equal(self.log_lik, other.log_lik)
                and np.array_equal(self.null_log_lik, other.null_log_lik)
                and self.truth == other.truth
                and dict(self.meta) == dict(other.meta))

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def uniform_null(cls, log_lik, null_log_lik: float = DEFAULT_NULL_LOG_LIK,
                     **kwargs: Any) -> AssignmentProblem:
        log_lik = np.asarray(log_lik, dtype=np.float64)
        return cls(log_lik, np.full(log_lik.shape[0], null_log_lik), **kwargs)


@dataclass(frozen=True, order=False)
class Assignment:
    """A complete assignment: ``targets[k]`` is a landmark index or ``NULL``."""

    targets: tuple[int, ...]
    log_prob: float

    @property
    def pairs(self) -> dict[int, int]:
        return dict(enumerate(self.targets))

    def sort_key(self, n_land: int) -> tuple:
        # NULL sorts after every landmark, matching its column in MarginalTable.
        return (-self.log_prob, tuple(n_land if t == NULL else t for t in self.targets))


@dataclass(frozen=True, eq=False)
class RankedAssignmentSet:
    """The K likeliest assignments in non-increasing log-probability order.

    Stored column-wise: ``targets`` is a ``(K, n_meas)`` integer array using
    ``NULL`` for the null option, ``log_probs`` has length K.
    """

    targets: np.ndarray
    log_probs: np.ndarray
    exhausted: bool

    def __post_init__(self) -> None:
        self.targets.setflags(write=False)
        self.log_probs.setflags(write=False)

    def __len__(self) -> int:
        return self.log_probs.shape[0]

    @property
    def entries(self) -> list[Assignment]:
        return [Assignment(tuple(int(t) for t in row), float(lp))
                for row, lp in zip(self.targets, self.log_probs)]

    @cached_property
    def total_log_mass(self) -> float:
        return log_sum_exp(self.log_probs)

    @classmethod
    def from_entries(cls, entries: Sequence[Assignment], n_meas: int,
                     exhausted: bool = False) -> RankedAssignmentSet:
        targets = np.array([a.targets for a in entries], dtype=np.int64).reshape(len(entries), n_meas)
        log_probs = np.array([a.log_prob for a in entries], dtype=np.float64)
        return cls(targets, log_probs, exhausted)


@dataclass(frozen=True, eq=False)
class MarginalTable:
    """Marginal association weights; column ``n_land`` is the null column."""

    w_bar: np.ndarray
    gamma: float
    k_used: int
    total_log_mass: float

    @property
    def n_meas(self) -> int:
        return self.w_bar.shape[0]

    @property
    def n_land(self) -> int:
        return self.w_bar.shape[1] - 1

    @property
    def null_column(self) -> np.ndarray:
        return self.w_bar[:, -1]


# ---------------------------------------------------------------------------
# problem files

def _fmt_float(x: float) -> str:
    if x == -math.inf:
        return '"-inf"'
    return format(float(x), ".17g")


def problem_write(p: AssignmentProblem) -> str:
    """Serialize ``p`` as a single-line JSON document with a stable layout."""
    rows = ",".join("[" + ",".join(_fmt_float(v) for v in row) + "]" for row in p.log_lik)
    parts = [
        f'"version":{FORMAT_VERSION}',
        f'"n_meas":{p.n_meas}',
        f'"n_land":{p.n_land}',
        f'"log_lik":[{rows}]',
        '"null_log_lik":[' + ",".join(_fmt_float(v) for v in p.null_log_lik) + "]",
    ]
    if p.truth is not None:
        parts.append('"truth":[' + ",".join(str(t) for t in p.truth) + "]")
    if p.meta:
        parts.append('"meta":' + json.dumps(dict(p.meta), sort_keys=True, separators=(",", ":")))
    return "{" + ",".join(parts) + "}"


def _parse_number(value: Any, where: str, allow_neg_inf: bool) -> float:
    if isinstance(value, str):
        if value == "-inf" and allow_neg_inf:
            return -math.inf
        raise ProblemFormatError(f"{where}: unexpected string {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFormatError(f"{where}: expected a number, got {type(value).__name__}")
    x = float(value)
    if math.isnan(x):
        raise ProblemFormatError(f"{where}: NaN is not allowed")
    if math.isinf(x):
        raise ProblemFormatError(f"{where}: infinite values must be written as \"-inf\"")
    return x


def _parse_constant(name: str) -> float:
    # json accepts bare NaN/Infinity tokens; route them through the same checks.
    return {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}[name]


def problem_from_dict(doc: Any) -> AssignmentProblem:
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    for key in ("version", "n_meas", "n_land", "log_lik", "null_log_lik"):
        if key not in doc:
            raise ProblemFormatError(f"missing field {key!r}")
    if doc["version"] != FORMAT_VERSION:
        raise ProblemFormatError(f"version: unsupported value {doc['version']!r}")
    n_meas, n_land = doc["n_meas"], doc["n_land"]
    for key, val in (("n_meas", n_meas), ("n_land", n_land)):
        if isinstance(val, bool) or not isinstance(val, int) or val < 0:
            raise ProblemFormatError(f"{key}: expected a non-negative integer")
    rows = doc["log_lik"]
    if not isinstance(rows, list) or len(rows) != n_meas:
        raise ProblemFormatError(f"log_lik: expected {n_meas} rows")
    log_lik = np.empty((n_meas, n_land))
    for k, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n_land:
            raise ProblemFormatError(f"log_lik[{k}]: expected {n_land} entries")
        for j, v in enumerate(row):
            log_lik[k, j] = _parse_number(v, f"log_lik[{k}][{j}]", allow_neg_inf=True)
    nulls = doc["null_log_lik"]
    if not isinstance(nulls, list) or len(nulls) != n_meas:
        raise ProblemFormatError(f"null_log_lik: expected {n_meas} entries")
    null = np.array([_parse_number(v, f"null_log_lik[{k}]", allow_neg_inf=False)
                     for k, v in enumerate(nulls)], dtype=np.float64)
    truth = doc.get("truth")
    if truth is not None:
        if (not isinstance(truth, list) or len(truth) != n_meas
                or any(isinstance(t, bool) or not isinstance(t, int) for t in truth)):
            raise ProblemFormatError(f"truth: expected {n_meas} integers")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ProblemFormatError("meta: expected an object")
    try:
        return AssignmentProblem(log_lik, null, tuple(truth) if truth is not None else None, meta)
    except ValueError as exc:
        raise ProblemFormatError(f"truth: {exc}") from exc


def problem_read(content: str | bytes) -> AssignmentProblem:
    """Parse one problem document (see :func:`problem_write`)."""
    if isinstance(content, bytes):
        content = content.decode("utf-8")
    try:
        doc = json.loads(content, parse_constant=_parse_constant)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"malformed JSON: {exc}") from exc
    return problem_from_dict(doc)


def iter_corpus(path: str | Path) -> Iterator[AssignmentProblem]:
    """Yield the problems of a JSONL corpus, skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield problem_read(line)
            except ProblemFormatError as exc:
                raise ProblemFormatError(f"{path}:{lineno}: {exc}") from exc


def read_corpus(path: str | Path) -> list[AssignmentProblem]:
    return list(iter_corpus(path))


def write_corpus(path: str | Path, problems: Iterable[AssignmentProblem]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in problems:
            fh.write(problem_write(p))
            fh.write("\n")
            n += 1
    return n


def problem_id(p: AssignmentProblem, default: Any) -> str:
    return str(p.meta.get("id", default))
