"""Random maze instances: DFS perfect maze, wall removal, terminal placement.

Randomness comes from numpy's PCG64 bit generator.  Each step of
:func:`generate_instance` draws from its own stream, seeded with
``(config.seed + offset) mod 2**64`` using the offsets below; the generator
name and these offsets are part of the dataset format, so a manifest fully
determines its instances.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import DIRECTIONS, OPPOSITE, Edge, GridGraph, MazeInstance, Node
from .errors import InputError

GENERATOR_NAME = "numpy.PCG64"
GENERATOR_VERSION = 1

MAZE_OFFSET = 0
CYCLES_OFFSET = 0x9E3779B97F4A7C15
TERMINALS_OFFSET = 0xBF58476D1CE4E5B9

_MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


def default_wall_removals(rows: int, cols: int) -> int:
    return math.ceil(0.1 * rows * cols)


@dataclass(frozen=True)
class GenConfig:
    rows: int
    cols: int
    n_terminals: int
    wall_removals: int
    seed: int

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise InputError(f"grid must be at least 2x2, got {self.rows}x{self.cols}")
        if not 2 <= self.n_terminals <= self.rows * self.cols:
            raise InputError(
                f"n_terminals={self.n_terminals} must lie in [2, {self.rows * self.cols}]"
            )
        # a perfect maze on R x C leaves (R-1)C + R(C-1) - (RC-1) interior walls closed
        closed = (self.rows - 1) * self.cols + self.rows * (self.cols - 1) - (self.rows * self.cols - 1)
        if not 0 <= self.wall_removals <= closed:
            raise InputError(f"wall_removals={self.wall_removals} must lie in [0, {closed}]")
        if not 0 <= self.seed <= _MASK64:
            raise InputError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def generate_perfect_maze(rows: int, cols: int, seed: int) -> GridGraph:
    """Recursive-backtracker maze carved from cell (0, 0) with an explicit stack."""
    if rows < 2 or cols < 2:
        raise InputError(f"grid must be at least 2x2, got {rows}x{cols}")
    rng = make_rng(seed)
    flags = np.zeros((rows, cols), dtype=np.uint8)
    visited = np.zeros((rows, cols), dtype=bool)
    visited[0, 0] = True
    stack: list[Node] = [(0, 0)]
    while stack:
        r, c = stack[-1]
        options = [
            (flag, r + dr, c + dc)
            for flag, dr, dc in DIRECTIONS
            if 0 <= r + dr < rows and 0 <= c + dc < cols and not visited[r + dr, c + dc]
        ]
        if not options:
            stack.pop()
            continue
        flag, nr, nc = options[int(rng.integers(len(options)))]
        flags[r, c] |= flag
        flags[nr, nc] |= OPPOSITE[flag]
        visited[nr, nc] = True
        stack.append((nr, nc))
    return GridGraph(rows, cols, flags)


def cycle_candidates(graph: GridGraph, seed: int) -> list[Edge]:
    """Closed interior walls in removal order.

    Walls touching a dead end (degree-1 node) come first, then the rest; each
    pool is shuffled independently from the same stream.
    """
    rng = make_rng(seed)
    dead_end, other = [], []
    for a, b in graph.closed_interior_walls():
        (dead_end if graph.degree(a) == 1 or graph.degree(b) == 1 else other).append((a, b))
    order = []
    for pool in (dead_end, other):
        perm = rng.permutation(len(pool))
        order.extend(pool[i] for i in perm)
    return order


def add_cycles(graph: GridGraph, wall_removals: int, seed: int) -> GridGraph:
    if wall_removals < 0:
        raise InputError("wall_removals must be non-negative")
    candidates = cycle_candidates(graph, seed)
    if wall_removals > len(candidates):
        raise InputError(
            f"wall_removals={wall_removals} exceeds the {len(candidates)} closed interior walls"
        )
    if wall_removals == 0:
        return graph
    return graph.with_opened(candidates[:wall_removals])


def place_terminals(graph: GridGraph, n: int, seed: int) -> list[Node]:
    """``n`` distinct nodes drawn uniformly without replacement, returned sorted."""
    if not 1 <= n <= graph.n_nodes:
        raise InputError(f"cannot place {n} terminals on {graph.n_nodes} nodes")
    rng = make_rng(seed)
    picks = rng.choice(graph.n_nodes, size=n, replace=False)
    return sorted(graph.node(int(i)) for i in picks)


def sub_seed(seed: int, offset: int) -> int:
    return (int(seed) + offset) & _MASK64


def generate_instance(config: GenConfig, instance_id: str | None = None) -> MazeInstance:
    graph = generate_perfect_maze(config.rows, config.cols, sub_seed(config.seed, MAZE_OFFSET))
    graph = add_cycles(graph, config.wall_removals, sub_seed(config.seed, CYCLES_OFFSET))
    terminals = place_terminals(graph, config.n_terminals, sub_seed(config.seed, TERMINALS_OFFSET))
    if instance_id is None:
        instance_id = f"r{config.rows}c{config.cols}n{config.n_terminals}w{config.wall_removals}s{config.seed}"
    return MazeInstance(graph=graph, terminals=tuple(terminals), seed=config.seed, id=instance_id)
