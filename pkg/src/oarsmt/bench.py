"""Solver comparisons: per-instance records, CSV files, summary tables.

Correctness is never taken from a solver's own report: every record's
``correct`` flag is recomputed from :func:`is_valid_tree` and the optimal
length stored with the instance.  Timing is one instance at a time on a
monotonic clock.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import approx, exact, tc
from .core import MazeInstance, SteinerTree, is_valid_tree
from .dataset import DatasetConfig, Sample, generate_samples
from .errors import FormatError, InputError
from .rcnn import NetworkWeights

CSV_SCHEMA_VERSION = 1
SOLVER_NAMES = ("exhaustive", "dreyfus", "kou", "mehlhorn", "net")

# Wall removals for the 11x11 benchmark distribution, chosen by
# calibrate_wall_removals against REFERENCE_ACCURACY at N = 3 and 4 only.
BENCH_ROWS = BENCH_COLS = 11
BENCH_WALL_REMOVALS = 1
# Reference exact-match rates (%) of (kou, mehlhorn) used for calibration.
REFERENCE_ACCURACY = {3: (99.11, 99.05), 4: (98.1, 97.99)}


@dataclass
class BenchRecord:
    instance_id: str
    n_terminals: int
    solver: str
    length: int
    optimal_length: int
    valid: bool
    correct: bool
    elapsed: float
    iterations: int = 0

    def __post_init__(self) -> None:
        if self.correct != (self.valid and self.length == self.optimal_length):
            raise AssertionError(f"{self.instance_id}/{self.solver}: correct flag disagrees with length and validity")


RECORD_COLUMNS = ("schema",) + tuple(f.name for f in fields(BenchRecord))


def run_solver(
    name: str,
    instance: MazeInstance,
    weights: NetworkWeights | None = None,
    tc_config: tc.TCConfig | None = None,
) -> tuple[SteinerTree, float, int]:
    """``(tree, elapsed seconds, network iterations)`` for one instance."""
    if name == "net":
        if weights is None:
            raise InputError("solver 'net' needs weights")
        res = tc.solve(instance, weights, tc_config or tc.TCConfig())
        return res.tree, res.elapsed, res.iterations_used
    if name == "exhaustive":
        res = exact.dijkstra_exhaustive(instance)
    elif name == "dreyfus":
        res = exact.dreyfus_wagner(instance)
    elif name == "kou":
        res = approx.kou(instance)
    elif name == "mehlhorn":
        res = approx.mehlhorn(instance)
    else:
        raise InputError(f"unknown solver {name!r}; choose from {', '.join(SOLVER_NAMES)}")
    return res.tree, res.elapsed, 0


def judge(sample: Sample, solver: str, tree: SteinerTree, elapsed: float, iterations: int = 0) -> BenchRecord:
    valid = is_valid_tree(sample.instance, tree).valid
    return BenchRecord(
        instance_id=sample.instance.id,
        n_terminals=sample.n_terminals,
        solver=solver,
        length=len(tree),
        optimal_length=sample.optimal_length,
        valid=valid,
        correct=valid and len(tree) == sample.optimal_length,
        elapsed=elapsed,
        iterations=iterations,
    )


def bench_samples(
    samples: Sequence[Sample],
    solvers: Sequence[str],
    weights: NetworkWeights | None = None,
    tc_config: tc.TCConfig | None = None,
) -> list[BenchRecord]:
    for name in solvers:
        if name not in SOLVER_NAMES:
            raise InputError(f"unknown solver {name!r}; choose from {', '.join(SOLVER_NAMES)}")
    if "net" in solvers and weights is None:
        raise InputError("solver 'net' needs weights")
    records = []
    for sample in samples:
        for name in solvers:
            tree, elapsed, iters = run_solver(name, sample.instance, weights, tc_config)
            records.append(judge(sample, name, tree, elapsed, iters))
    return records


# -- CSV -----------------------------------------------------------------------

def records_to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for r in records:
        writer.writerow([CSV_SCHEMA_VERSION, r.instance_id, r.n_terminals, r.solver, r.length,
                         r.optimal_length, int(r.valid), int(r.correct), f"{r.elapsed:.9f}", r.iterations])
    return buf.getvalue()


def write_records(path, records: Iterable[BenchRecord]) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def read_table(path, required: Sequence[str]) -> list[dict[str, str]]:
    """Rows of a CSV file; raises FormatError naming the first missing column."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    for col in required:
        if col not in header:
            raise FormatError(f"{path}: missing column {col!r}")
    return list(reader)


def read_records(path) -> list[BenchRecord]:
    rows = read_table(path, RECORD_COLUMNS)
    out = []
    for i, row in enumerate(rows, start=2):
        if int(row["schema"]) != CSV_SCHEMA_VERSION:
            raise FormatError(f"{path}:{i}: schema version {row['schema']}, expected {CSV_SCHEMA_VERSION}")
        try:
            out.append(BenchRecord(
                instance_id=row["instance_id"],
                n_terminals=int(row["n_terminals"]),
                solver=row["solver"],
                length=int(row["length"]),
                optimal_length=int(row["optimal_length"]),
                valid=bool(int(row["valid"])),
                correct=bool(int(row["correct"])),
                elapsed=float(row["elapsed"]),
                iterations=int(row["iterations"]),
            ))
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: {exc}") from exc
    return out


# -- summaries ---------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    count: int
    accuracy: float
    mean_elapsed: float


def summarize(records: Iterable[BenchRecord]) -> dict[str, dict[int, Cell]]:
    groups: dict[tuple[str, int], list[BenchRecord]] = defaultdict(list)
    for r in records:
        groups[(r.solver, r.n_terminals)].append(r)
    out: dict[str, dict[int, Cell]] = defaultdict(dict)
    for (solver, n), rs in sorted(groups.items()):
        out[solver][n] = Cell(len(rs), 100.0 * sum(r.correct for r in rs) / len(rs),
                              float(np.mean([r.elapsed for r in rs])))
    return dict(out)


def format_table(summary: dict[str, dict[int, Cell]], metric: str = "accuracy") -> str:
    """Methods down the side, terminal counts across, as in the accuracy tables."""
    if metric not in ("accuracy", "runtime"):
        raise InputError("metric must be 'accuracy' or 'runtime'")
    counts = sorted({n for row in summary.values() for n in row})
    title = "Accuracy (%)" if metric == "accuracy" else "Mean runtime (s)"
    header = [title] + [f"N={n}" for n in counts]
    lines = [header]
    order = [s for s in SOLVER_NAMES if s in summary] + sorted(s for s in summary if s not in SOLVER_NAMES)
    for solver in order:
        row = [solver]
        for n in counts:
            cell = summary[solver].get(n)
            if cell is None:
                row.append("-")
            elif metric == "accuracy":
                row.append(f"{cell.accuracy:.2f}")
            else:
                row.append(f"{cell.mean_elapsed:.3g}")
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    text = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
            for r in lines]
    text.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(text)


def runtime_ratio(summary: dict[str, dict[int, Cell]], solver: str, low: int, high: int) -> float:
    return summary[solver][high].mean_elapsed / summary[solver][low].mean_elapsed


# -- network iterations --------------------------------------------------------

ITERATION_COLUMNS = ("n_terminals", "count", "mean", "p50", "p90", "max", "solved_fraction")


def iteration_stats(samples: Sequence[Sample], weights: NetworkWeights,
                    tc_config: tc.TCConfig | None = None) -> list[dict]:
    cfg = tc_config or tc.TCConfig()
    per_n: dict[int, list[tc.SolveResult]] = defaultdict(list)
    for s in samples:
        per_n[s.n_terminals].append(tc.solve(s.instance, weights, cfg))
    rows = []
    for n in sorted(per_n):
        its = np.array([r.iterations_used for r in per_n[n]], dtype=float)
        rows.append({
            "n_terminals": n,
            "count": len(its),
            "mean": float(its.mean()),
            "p50": float(np.percentile(its, 50)),
            "p90": float(np.percentile(its, 90)),
            "max": int(its.max()),
            "solved_fraction": sum(r.solved for r in per_n[n]) / len(its),
        })
    return rows


def write_rows(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# -- the 11x11 benchmark distribution ------------------------------------------

def benchmark_distribution(n_terminals: int, count: int, seed: int = 0,
                       wall_removals: int = BENCH_WALL_REMOVALS) -> DatasetConfig:
    """11x11 mazes with ``n_terminals`` terminals; seeds are disjoint across N."""
    return DatasetConfig(rows=BENCH_ROWS, cols=BENCH_COLS, terminal_counts=(n_terminals,), count=count,
                         wall_removals=wall_removals, seed=1_000_000 * n_terminals + seed)


def approx_accuracy(samples: Sequence[Sample]) -> tuple[float, float]:
    """Exact-match rates (%) of Kou and Mehlhorn on a sample set."""
    recs = bench_samples(samples, ("kou", "mehlhorn"))
    kou = [r.correct for r in recs if r.solver == "kou"]
    meh = [r.correct for r in recs if r.solver == "mehlhorn"]
    return 100.0 * float(np.mean(kou)), 100.0 * float(np.mean(meh))


def calibrate_wall_removals(
    candidates: Sequence[int],
    reference: dict[int, tuple[float, float]] = REFERENCE_ACCURACY,
    count: int = 1000,
    seed: int = 0,
) -> tuple[int, dict[int, float]]:
    """Pick the wall-removal count whose approximation accuracies best match ``reference``.

    Returns the best candidate and the squared error of every candidate.
    """
    errors = {}
    for w in candidates:
        err = 0.0
        for n, (ref_kou, ref_meh) in reference.items():
            kou, meh = approx_accuracy(generate_samples(benchmark_distribution(n, count, seed, w)))
            err += (kou - ref_kou) ** 2 + (meh - ref_meh) ** 2
        errors[w] = err
    best = min(errors, key=lambda w: (errors[w], w))
    return best, errors

