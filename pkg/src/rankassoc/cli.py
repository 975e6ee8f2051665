"""Command-line interface: ``rankassoc {gen,solve,oracle,bench-timing,bench-error}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bench
from .core import (DEFAULT_NULL_LOG_LIK, AssignmentProblem, ProblemFormatError,
                   problem_id, problem_write, read_corpus)
from .marginals import marginals
from .murty import kbest
from .oracles import BudgetExceeded, EnumerationBudget, permanent_marginals, true_marginals
from .quadric import DegenerateQuadricError
from .scenario import (DEFAULT_GATE, ConfigError, build_problem, demo_config, load_config,
                       scenario_from_config)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None, help="random seed")
    shared.add_argument("--k", type=_k_list, default=[200], help="comma-separated K values (default 200)")
    shared.add_argument("--out", type=Path, default=None, help="output path (default stdout)")
    shared.add_argument("--format", choices=("csv", "json"), default="csv")
    shared.add_argument("--svg", type=Path, default=None, help="write a figure to this path")
    shared.add_argument("--budget", type=_positive, default=10_000_000,
                        help="largest assignment count the exact oracle will enumerate")
    shared.add_argument("--null-cost", type=float, default=DEFAULT_NULL_LOG_LIK,
                        help="null log-likelihood for generated problems")
    shared.add_argument("--gate", type=float, default=DEFAULT_GATE, help="distance gate")
    shared.add_argument("--workers", type=_positive, default=1)
    shared.add_argument("--max-dim", type=_positive, default=None,
                        help="only use problems with max(n_meas, n_land) at most this")

    parser = _Parser(prog="rankassoc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[shared], help="generate a problem corpus from a scenario")
    g.add_argument("--config", type=Path, default=None, help="scenario JSON (default: built-in demo)")
    g.add_argument("--frames", type=_positive, default=None, help="override the frame count")
    g.add_argument("--dump-config", action="store_true", help="print the scenario config and exit")

    s = sub.add_parser("solve", parents=[shared], help="approximate marginals for problem files")
    s.add_argument("problems", type=Path)
    s.add_argument("--oracle", action="store_true", help="add exact marginals and the error")

    o = sub.add_parser("oracle", parents=[shared], help="exact marginals by enumeration and permanents")
    o.add_argument("problems", type=Path)

    t = sub.add_parser("bench-timing", parents=[shared], help="per-problem timing study")
    t.add_argument("corpus", type=Path)
    t.add_argument("--ryser-max-dim", type=_non_negative, default=bench.DEFAULT_RYSER_MAX_DIM,
                   help="time exact permanent marginals when n_meas + n_land is at most this")
    t.add_argument("--warmup", type=_non_negative, default=0, help="untimed runs before each measurement")

    e = sub.add_parser("bench-error", parents=[shared], help="error order statistics study")
    e.add_argument("corpus", type=Path)
    e.add_argument("--top-terms", type=_positive, default=None,
                   help="truncated reference for problems beyond the budget")
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8", newline="\n")


def _load(path: Path, max_dim: int | None) -> list[AssignmentProblem]:
    problems = read_corpus(path)
    if max_dim is not None:
        problems = [p for p in problems if p.max_dim <= max_dim]
    return problems


# ---------------------------------------------------------------------------
# gen

def _gen_problem(args):
    s, frame, null_cost, gate = args
    p = build_problem(s, frame, null_log_lik=null_cost, gate=gate)
    return (problem_write(p), p.max_dim) if p.n_meas else None


def cmd_gen(args) -> int:
    cfg = load_config(args.config) if args.config else demo_config()
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    if args.frames is not None:
        cfg = {**cfg, "frames": args.frames}
    if args.dump_config:
        _emit(json.dumps(cfg, indent=1) + "\n", args.out)
        return EXIT_OK
    s = scenario_from_config(cfg)
    jobs = [(s, f, args.null_cost, args.gate) for f in range(s.n_frames)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            lines = list(pool.map(_gen_problem, jobs, chunksize=16))
    else:
        lines = [_gen_problem(j) for j in jobs]
    limit = math.inf if args.max_dim is None else args.max_dim
    lines = [ln for ln, dim in filter(None, lines) if dim <= limit]
    _emit("".join(ln + "\n" for ln in lines), args.out)
    print(f"wrote {len(lines)} problems from {s.n_frames} frames", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve / oracle

def _label(j: int, n: int) -> str:
    return "null" if j == n else str(j)


def _table_rows(pid: str, tables: dict[str, np.ndarray], n: int) -> list[tuple]:
    rows = []
    first = next(iter(tables.values()))
    for k in range(first.shape[0]):
        for j in range(n + 1):
            rows.append((pid, k, _label(j, n), *(repr(float(t[k, j])) for t in tables.values())))
    return rows


def _solve_one(p: AssignmentProblem, pid: str, K: int, args) -> dict:
    t0 = time.perf_counter_ns()
    ranked = kbest(p, K)
    mt = marginals(p, ranked)
    elapsed = time.perf_counter_ns() - t0
    out = {"problem_id": pid, "k": K, "k_used": mt.k_used, "exhausted": ranked.exhausted,
           "gamma": mt.gamma, "wall_time_ns": elapsed, "tables": {"w_bar": mt.w_bar}}
    if args.oracle:
        truth = true_marginals(p, EnumerationBudget(args.budget)).w_bar
        out["tables"]["w_true"] = truth
        out["delta"] = bench.max_abs_error(mt.w_bar, truth)
    return out


def cmd_solve(args) -> int:
    problems = _load(args.problems, args.max_dim)
    results = [_solve_one(p, problem_id(p, i), K, args)
               for i, p in enumerate(problems) for K in args.k]
    if args.format == "json":
        doc = [{**{k: v for k, v in r.items() if k != "tables"},
                **{name: t.tolist() for name, t in r["tables"].items()}} for r in results]
        _emit(json.dumps(doc, indent=1) + "\n", args.out)
        return EXIT_OK
    parts = []
    for r, p in zip(results, [p for p in problems for _ in args.k]):
        summary = (f"# problem {r['problem_id']} K={r['k']} k_used={r['k_used']} "
                   f"exhausted={int(r['exhausted'])} gamma={r['gamma']!r} "
                   f"time_ms={r['wall_time_ns'] / 1e6:.3f}")
        if "delta" in r:
            summary += f" delta={r['delta']!r}"
        parts.append(summary + "\n")
        parts.append(bench.to_csv(("problem_id", "meas", "target", *r["tables"]),
                                  _table_rows(r["problem_id"], r["tables"], p.n_land)))
    _emit("".join(parts), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    problems = _load(args.problems, args.max_dim)
    doc, parts = [], []
    for i, p in enumerate(problems):
        pid = problem_id(p, i)
        enum = true_marginals(p, EnumerationBudget(args.budget))
        tables = {"w_enum": enum.w_bar}
        if p.n_meas + p.n_land <= 25:
            tables["w_perm"] = permanent_marginals(p).w_bar
        agree = bench.max_abs_error(enum.w_bar, tables["w_perm"]) if "w_perm" in tables else math.nan
        doc.append({"problem_id": pid, "log_mass": enum.total_log_mass, "max_disagreement": agree,
                    **{k: v.tolist() for k, v in tables.items()}})
        parts.append(f"# problem {pid} assignments={enum.k_used} log_mass={enum.total_log_mass!r} "
                     f"max_disagreement={agree!r}\n")
        parts.append(bench.to_csv(("problem_id", "meas", "target", *tables),
                                  _table_rows(pid, tables, p.n_land)))
    _emit(json.dumps(doc, indent=1) + "\n" if args.format == "json" else "".join(parts), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmarks

def _records_out(header, records, args) -> None:
    if args.format == "json":
        _emit(json.dumps([dict(zip(header, r.row())) for r in records], indent=1) + "\n", args.out)
    else:
        _emit(bench.to_csv(header, (r.row() for r in records)), args.out)


def cmd_bench_timing(args) -> int:
    problems = _load(args.corpus, args.max_dim)
    if args.workers > 1:
        print("bench-timing runs on a single worker so timings are uncontended", file=sys.stderr)
    records = bench.timing_study(problems, args.k, args.ryser_max_dim, args.warmup)
    _records_out(bench.TIMING_HEADER, records, args)
    if args.svg:
        bench.timing_svg(records, args.svg)
    for method in dict.fromkeys(r.method for r in records):
        ms = np.array([r.wall_time_ns for r in records if r.method == method]) / 1e6
        print(f"{method}: n={ms.size} median={np.median(ms):.4f} ms p99={np.percentile(ms, 99):.4f} ms",
              file=sys.stderr)
    return EXIT_OK


def cmd_bench_error(args) -> int:
    problems = _load(args.corpus, args.max_dim)
    study = bench.error_study(problems, args.k, args.budget, args.top_terms, args.workers)
    _records_out(bench.ERROR_HEADER, study.records, args)
    if args.svg:
        bench.error_svg(study.records, args.svg)
    if study.skipped:
        print(f"warning: skipped {len(study.skipped)} problems over the budget of {args.budget}",
              file=sys.stderr)
    for K in args.k:
        d = np.array([r.delta for r in study.records if r.k == K])
        if d.size:
            print(f"K={K}: n={d.size} median delta={np.median(d):.3e} max delta={d.max():.3e}",
                  file=sys.stderr)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "oracle": cmd_oracle,
            "bench-timing": cmd_bench_timing, "bench-error": cmd_bench_error}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ProblemFormatError, ConfigError, DegenerateQuadricError, BudgetExceeded,
            OSError, ValueError) as exc:
        print(f"rankassoc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
