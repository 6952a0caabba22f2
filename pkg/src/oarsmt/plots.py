"""SVG charts from benchmark CSV files."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import bench  # noqa: E402
from .errors import InputError  # noqa: E402

REQUIRED = {
    "runtime": ("solver", "n_terminals", "elapsed"),
    "accuracy": ("solver", "n_terminals", "correct"),
    "iterations": ("n_terminals", "mean"),
    "sections": ("n_sections", "seconds"),
}

SECTION_COLUMNS = ("n_sections", "seconds", "split", "compute", "merge")


def _grouped(rows, value: str) -> dict[str, dict[int, list[float]]]:
    out: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        out[row["solver"]][int(row["n_terminals"])].append(float(row[value]))
    return out


def plot_csv(csv_path, kind: str, out_path, log_y: bool | None = None) -> Path:
    """Render ``csv_path`` as a chart of the given kind; returns the SVG path."""
    if kind not in REQUIRED:
        raise InputError(f"unknown chart kind {kind!r}; choose from {', '.join(REQUIRED)}")
    rows = bench.read_table(csv_path, REQUIRED[kind])
    if log_y is None:
        log_y = kind == "runtime"
    plt.rcParams["svg.hashsalt"] = "oarsmt"
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "runtime":
        for solver, per_n in sorted(_grouped(rows, "elapsed").items()):
            ns = sorted(per_n)
            ax.plot(ns, [np.mean(per_n[n]) for n in ns], marker="o", label=solver)
        ax.set_xlabel("terminals")
        ax.set_ylabel("mean runtime (s)")
        ax.legend()
    elif kind == "accuracy":
        groups = _grouped(rows, "correct")
        solvers = sorted(groups)
        ns = sorted({n for per_n in groups.values() for n in per_n})
        width = 0.8 / max(len(solvers), 1)
        for i, solver in enumerate(solvers):
            acc = [100 * np.mean(groups[solver][n]) if groups[solver].get(n) else 0.0 for n in ns]
            ax.bar(np.arange(len(ns)) + i * width, acc, width, label=solver)
        ax.set_xticks(np.arange(len(ns)) + width * (len(solvers) - 1) / 2, [str(n) for n in ns])
        ax.set_xlabel("terminals")
        ax.set_ylabel("accuracy (%)")
        ax.legend()
    elif kind == "iterations":
        ns = [int(r["n_terminals"]) for r in rows]
        ax.bar([str(n) for n in ns], [float(r["mean"]) for r in rows])
        ax.set_xlabel("terminals")
        ax.set_ylabel("mean iterations used")
    else:
        ns = [int(r["n_sections"]) for r in rows]
        ax.plot(ns, [float(r["seconds"]) for r in rows], marker="o")
        ax.set_xlabel("sections")
        ax.set_ylabel("wall-clock (s)")
    if log_y:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
