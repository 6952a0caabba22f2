"""Termination condition: whiteness-guided exploration of a prediction, and the
batch-scheduled inference loop that stops once the exploration succeeds.

The exploration walks the cell lattice of a binary prediction, starting at
the upper-left terminal.  A neighboring cell is traversable when its
whiteness (mean of its 2x2 block) exceeds the threshold.  With one way
forward the walk moves; with several it is a junction and each direction is
explored as its own branch, depth first.  A branch stops at a dead end or
when it steps onto an already visited cell.  The prediction is accepted once
every terminal cell has been visited.

Only the prediction and the terminal positions are consulted; maze walls
are not.  Cells whose coordinates are both odd are never entered: they are
lattice corners, always wall in a raster, and stepping through them would
link cells that share no grid edge.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import raster, rcnn
from .core import Edge, MazeInstance, Node, SteinerTree, prune_leaves
from .errors import ContractError, InputError

Cell = tuple[int, int]

# N, E, W, S: the order directions are examined in
NEWS = ((-1, 0), (0, 1), (0, -1), (1, 0))


@dataclass(frozen=True)
class TCConfig:
    whiteness_threshold: float = 0.65
    first_batch: int = 30
    batch_step: int = 10
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if not 0 < self.whiteness_threshold < 1:
            raise InputError("whiteness_threshold must lie in (0, 1)")
        if self.first_batch < 1 or self.batch_step < 1:
            raise InputError("first_batch and batch_step must be positive")
        if self.max_iterations < self.first_batch:
            raise InputError("max_iterations must be at least first_batch")

    def checkpoints(self) -> list[int]:
        return list(range(self.first_batch, self.max_iterations + 1, self.batch_step))


@dataclass
class TCReport:
    solved: bool
    visited_cells: set[Cell]
    extracted_tree: SteinerTree | None
    iterations_used: int = 0
    steps: int = 0


def whiteness(pred: np.ndarray, cell: Cell) -> float:
    img = pred[0] if pred.ndim == 3 else pred
    n_ci = (img.shape[0] - 2 * raster.PAD_PX) // raster.CELL_PX
    n_cj = (img.shape[1] - 2 * raster.PAD_PX) // raster.CELL_PX
    ci, cj = cell
    if not (0 <= ci < n_ci and 0 <= cj < n_cj):
        raise InputError(f"cell {cell} outside the {n_ci}x{n_cj} cell lattice")
    y, x = raster.cell_origin(ci, cj)
    return float(img[y:y + raster.CELL_PX, x:x + raster.CELL_PX].mean())


def _cell_to_node(cell: Cell) -> Node:
    return cell[0] // 2, cell[1] // 2


def tc_explore(pred: np.ndarray, instance: MazeInstance, threshold: float = 0.65) -> TCReport:
    means = raster.cell_means(pred)[0]
    n_ci, n_cj = 2 * instance.rows - 1, 2 * instance.cols - 1
    if means.shape != (n_ci, n_cj):
        raise ContractError(f"prediction cell grid {means.shape} does not fit a {instance.rows}x{instance.cols} maze")
    open_cell = means > threshold
    open_cell[1::2, 1::2] = False
    targets = {raster.node_cell(t) for t in instance.terminals}
    start = raster.node_cell(min(instance.terminals))

    visited: set[Cell] = set()
    parent: dict[Cell, Cell | None] = {}
    explored_junctions: set[Cell] = set()
    remaining = set(targets)
    budget = 4 * n_ci * n_cj
    steps = 0

    def step_into(cell: Cell, came_from: Cell | None) -> None:
        visited.add(cell)
        parent[cell] = came_from
        remaining.discard(cell)

    # Each stack entry starts a branch: (cell, predecessor, from_junction).
    stack: list[tuple[Cell, Cell | None, bool]] = [(start, None, False)]
    if not open_cell[start]:
        stack = []
    while stack and remaining:
        pos, came_from, from_junction = stack.pop()
        if pos in visited:
            continue  # branch reached a revisited position
        step_into(pos, came_from)
        while remaining:
            steps += 1
            if steps > budget:
                raise AssertionError("exploration exceeded its visit budget")
            options = []
            for rank, (dr, dc) in enumerate(NEWS):
                nxt = (pos[0] + dr, pos[1] + dc)
                if 0 <= nxt[0] < n_ci and 0 <= nxt[1] < n_cj and open_cell[nxt] and nxt not in visited:
                    options.append((-means[nxt], rank, nxt))
            if not options:
                break
            options.sort()
            if len(options) == 1:
                nxt = options[0][2]
                step_into(nxt, pos)
                pos = nxt
                continue
            if from_junction and pos in explored_junctions:
                break
            explored_junctions.add(pos)
            # pushed in reverse so the whitest direction is explored first
            for _, _, nxt in reversed(options):
                stack.append((nxt, pos, True))
            break

    solved = not remaining
    tree = _extract_tree(parent, instance) if solved else None
    return TCReport(solved=solved, visited_cells=visited, extracted_tree=tree, steps=steps)


def _extract_tree(parent: dict[Cell, Cell | None], instance: MazeInstance) -> SteinerTree:
    """Node-to-node hops of the exploration tree, stripped of dead-end branches."""
    edges: set[Edge] = set()
    for cell, via in parent.items():
        if cell[0] % 2 or cell[1] % 2 or via is None:
            continue
        prev = parent[via]
        if prev is None:
            continue
        a, b = _cell_to_node(cell), _cell_to_node(prev)
        edges.add((a, b) if a < b else (b, a))
    return SteinerTree(frozenset(prune_leaves(edges, instance.terminals)))


@dataclass
class SolveResult:
    tree: SteinerTree
    length: int
    iterations_used: int
    tc_checks: int
    elapsed: float
    solved: bool


def check_compatible(instance: MazeInstance, weights: rcnn.NetworkWeights) -> None:
    """Weights must take 3-channel rasters drawn with this module's cell geometry."""
    expected = (3, raster.CELL_PX, raster.PAD_PX)
    conv = weights.metadata.get("raster", {})
    got = (weights.config.input_channels, conv.get("cell_px", raster.CELL_PX), conv.get("pad_px", raster.PAD_PX))
    if got != expected:
        h, w = raster.image_dims(instance.rows, instance.cols)
        raise ContractError(
            f"weights expect (channels, cell_px, pad_px) = {got}, but this instance rasterizes to "
            f"3x{h}x{w} with cell_px={raster.CELL_PX}, pad_px={raster.PAD_PX}"
        )


def solve(instance: MazeInstance, weights: rcnn.NetworkWeights, config: TCConfig = TCConfig()) -> SolveResult:
    """Run the network in batches, checking the prediction after each batch."""
    start = time.perf_counter()
    check_compatible(instance, weights)
    x = raster.instance_to_image(instance)
    marks = set(config.checkpoints())
    report = None
    pred = None
    checks = 0
    t = 0
    for t, state in enumerate(rcnn.iterate_states(x, weights), start=1):
        if t in marks or t >= config.max_iterations:
            pred = rcnn.argmax_image(rcnn.head(state, weights))
        if t in marks:
            report = tc_explore(pred, instance, config.whiteness_threshold)
            report.iterations_used = t
            checks += 1
            if report.solved:
                break
        if t >= config.max_iterations:
            break
    solved = bool(report and report.solved)
    # on the cap, fall back to a plain decode of the last prediction
    tree = report.extracted_tree if solved else raster.prediction_to_edges(pred, instance)
    return SolveResult(
        tree=tree,
        length=len(tree),
        iterations_used=t,
        tc_checks=checks,
        elapsed=time.perf_counter() - start,
        solved=solved,
    )
