"""Grid graphs, maze instances and Steiner trees.

Nodes are ``(row, col)`` tuples on a rectangular lattice.  Every node stores a
4-bit mask of open passages (North, East, South, West); a closed passage is a
wall, which is how obstacles are represented.  All edges have unit length.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import FormatError, InputError

Node = tuple[int, int]
Edge = tuple[Node, Node]

NORTH, EAST, SOUTH, WEST = 1, 2, 4, 8
# (flag, d_row, d_col) in the fixed N, E, S, W order used for every traversal.
DIRECTIONS: tuple[tuple[int, int, int], ...] = (
    (NORTH, -1, 0),
    (EAST, 0, 1),
    (SOUTH, 1, 0),
    (WEST, 0, -1),
)
OPPOSITE = {NORTH: SOUTH, SOUTH: NORTH, EAST: WEST, WEST: EAST}


def canonical_edge(a: Sequence[int], b: Sequence[int]) -> Edge:
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
        raise InputError(f"nodes {a} and {b} are not lattice-adjacent")
    return (a, b) if a < b else (b, a)


def _direction(a: Node, b: Node) -> int:
    dr, dc = b[0] - a[0], b[1] - a[1]
    for flag, r, c in DIRECTIONS:
        if (r, c) == (dr, dc):
            return flag
    raise InputError(f"nodes {a} and {b} are not lattice-adjacent")


class GridGraph:
    """Immutable rows x cols lattice with per-node passage flags."""

    __slots__ = ("rows", "cols", "_open", "_adj", "_hash")

    def __init__(self, rows: int, cols: int, open_flags: np.ndarray):
        if rows < 2 or cols < 2:
            raise InputError(f"grid must be at least 2x2, got {rows}x{cols}")
        flags = np.array(open_flags, dtype=np.uint8, copy=True)
        if flags.shape != (rows, cols):
            raise InputError(f"flag array has shape {flags.shape}, expected {(rows, cols)}")
        if np.any(flags & ~np.uint8(0xF)):
            raise InputError("flags use bits beyond N/E/S/W")
        if np.any(flags[0] & NORTH) or np.any(flags[-1] & SOUTH):
            raise InputError("passage flag points off the lattice")
        if np.any(flags[:, 0] & WEST) or np.any(flags[:, -1] & EAST):
            raise InputError("passage flag points off the lattice")
        south = (flags[:-1] & SOUTH) > 0
        north = (flags[1:] & NORTH) > 0
        east = (flags[:, :-1] & EAST) > 0
        west = (flags[:, 1:] & WEST) > 0
        if np.any(south != north) or np.any(east != west):
            raise InputError("passage flags are not symmetric")
        flags.setflags(write=False)
        self.rows = int(rows)
        self.cols = int(cols)
        self._open = flags
        self._adj: tuple[tuple[int, ...], ...] | None = None
        self._hash: int | None = None

    @classmethod
    def full(cls, rows: int, cols: int) -> "GridGraph":
        """Obstacle-free lattice."""
        flags = np.full((rows, cols), NORTH | EAST | SOUTH | WEST, dtype=np.uint8)
        flags[0] &= ~np.uint8(NORTH)
        flags[-1] &= ~np.uint8(SOUTH)
        flags[:, 0] &= ~np.uint8(WEST)
        flags[:, -1] &= ~np.uint8(EAST)
        return cls(rows, cols, flags)

    @classmethod
    def empty(cls, rows: int, cols: int) -> "GridGraph":
        return cls(rows, cols, np.zeros((rows, cols), dtype=np.uint8))

    @classmethod
    def from_edges(cls, rows: int, cols: int, edges: Iterable[Sequence[Sequence[int]]]) -> "GridGraph":
        flags = np.zeros((rows, cols), dtype=np.uint8)
        for a, b in edges:
            a, b = canonical_edge(a, b)
            for node in (a, b):
                if not (0 <= node[0] < rows and 0 <= node[1] < cols):
                    raise InputError(f"edge endpoint {node} outside {rows}x{cols} lattice")
            flags[a] |= _direction(a, b)
            flags[b] |= _direction(b, a)
        return cls(rows, cols, flags)

    @property
    def open(self) -> np.ndarray:
        return self._open

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def n_edges(self) -> int:
        return int(sum(int(v).bit_count() for v in self._open.ravel())) // 2

    def contains(self, node: Sequence[int]) -> bool:
        return 0 <= node[0] < self.rows and 0 <= node[1] < self.cols

    def index(self, node: Sequence[int]) -> int:
        return node[0] * self.cols + node[1]

    def node(self, index: int) -> Node:
        return divmod(int(index), self.cols)

    def is_open(self, a: Node, b: Node) -> bool:
        if not (self.contains(a) and self.contains(b)):
            return False
        if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
            return False
        return bool(self._open[a] & _direction(a, b))

    def degree(self, node: Node) -> int:
        return int(self._open[node]).bit_count()

    def edges(self) -> list[Edge]:
        """All open edges in canonical order."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                f = self._open[r, c]
                if f & EAST:
                    out.append(((r, c), (r, c + 1)))
                if f & SOUTH:
                    out.append(((r, c), (r + 1, c)))
        return sorted(out)

    def closed_interior_walls(self) -> list[Edge]:
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                f = self._open[r, c]
                if c + 1 < self.cols and not f & EAST:
                    out.append(((r, c), (r, c + 1)))
                if r + 1 < self.rows and not f & SOUTH:
                    out.append(((r, c), (r + 1, c)))
        return sorted(out)

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Neighbor indices per node index, in N, E, S, W order."""
        if self._adj is None:
            adj = []
            for idx in range(self.n_nodes):
                r, c = divmod(idx, self.cols)
                f = int(self._open[r, c])
                adj.append(tuple((r + dr) * self.cols + (c + dc) for flag, dr, dc in DIRECTIONS if f & flag))
            self._adj = tuple(adj)
        return self._adj

    def with_opened(self, edges: Iterable[Edge]) -> "GridGraph":
        flags = self._open.copy()
        for a, b in edges:
            a, b = canonical_edge(a, b)
            flags[a] |= _direction(a, b)
            flags[b] |= _direction(b, a)
        return GridGraph(self.rows, self.cols, flags)

    def is_connected(self) -> bool:
        return len(_reach(self.adjacency, 0)) == self.n_nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridGraph):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and np.array_equal(self._open, other._open)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.rows, self.cols, self._open.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"GridGraph({self.rows}x{self.cols}, edges={self.n_edges})"


def _reach(adj: Sequence[Sequence[int]], start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def neighbors(graph: GridGraph, node: Sequence[int]) -> list[Node]:
    """Nodes reachable from ``node`` through one open passage, in N, E, S, W order."""
    if not graph.contains(node):
        raise InputError(f"node {tuple(node)} outside {graph.rows}x{graph.cols} lattice")
    r, c = int(node[0]), int(node[1])
    f = int(graph.open[r, c])
    return [(r + dr, c + dc) for flag, dr, dc in DIRECTIONS if f & flag]


@dataclass(frozen=True)
class MazeInstance:
    graph: GridGraph
    terminals: tuple[Node, ...]
    seed: int = 0
    id: str = ""

    def __post_init__(self) -> None:
        terms = tuple((int(t[0]), int(t[1])) for t in self.terminals)
        object.__setattr__(self, "terminals", terms)
        if len(terms) < 2:
            raise InputError(f"an instance needs at least 2 terminals, got {len(terms)}")
        if len(set(terms)) != len(terms):
            raise InputError("terminals must be pairwise distinct")
        for t in terms:
            if not self.graph.contains(t):
                raise InputError(f"terminal {t} outside the lattice")
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")

    @property
    def n_terminals(self) -> int:
        return len(self.terminals)

    @property
    def rows(self) -> int:
        return self.graph.rows

    @property
    def cols(self) -> int:
        return self.graph.cols


@dataclass(frozen=True)
class SteinerTree:
    """Set of canonical grid edges.  Build with :meth:`from_edges`."""

    edges: frozenset[Edge] = frozenset()

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[Sequence[int]]]) -> "SteinerTree":
        return cls(frozenset(canonical_edge(a, b) for a, b in edges))

    @property
    def nodes(self) -> set[Node]:
        return {n for e in self.edges for n in e}

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self) -> Iterator[Edge]:
        return iter(sorted(self.edges))


def tree_length(tree: SteinerTree) -> int:
    """Total length under unit edge weights."""
    return len(tree.edges)


@dataclass(frozen=True)
class TreeReport:
    connected: bool
    spans_terminals: bool
    acyclic: bool
    uses_only_open_edges: bool

    @property
    def valid(self) -> bool:
        return self.connected and self.spans_terminals and self.acyclic and self.uses_only_open_edges


def _components(edges: Iterable[Edge]) -> tuple[int, int, dict[Node, Node]]:
    """Union-find over the induced vertex set; returns (n_vertices, n_components, parents)."""
    parent: dict[Node, Node] = {}

    def find(x: Node) -> Node:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = {find(x) for x in parent}
    return len(parent), len(roots), parent


def is_valid_tree(instance: MazeInstance, tree: SteinerTree) -> TreeReport:
    edges = tree.edges
    n_vertices, n_components, _ = _components(edges)
    nodes = tree.nodes
    return TreeReport(
        connected=n_components <= 1,
        spans_terminals=all(t in nodes for t in instance.terminals),
        acyclic=len(edges) == n_vertices - n_components,
        uses_only_open_edges=all(instance.graph.is_open(a, b) for a, b in edges),
    )


def spanning_tree(edges: Iterable[Edge], root: Node | None = None) -> set[Edge]:
    """BFS spanning tree of the component of ``root`` (default: smallest node).

    Neighbors are expanded in sorted order so the result is deterministic.
    """
    adj: dict[Node, list[Node]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if not adj:
        return set()
    if root is None:
        root = min(adj)
    if root not in adj:
        return set()
    out: set[Edge] = set()
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                out.add((u, v) if u < v else (v, u))
                queue.append(v)
    return out


def prune_leaves(edges: Iterable[Edge], keep: Iterable[Node]) -> set[Edge]:
    """Repeatedly drop leaf edges whose leaf is not in ``keep``."""
    keep = set(keep)
    edges = set(edges)
    adj: dict[Node, set[Node]] = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    stack = [n for n, nb in adj.items() if len(nb) == 1 and n not in keep]
    while stack:
        n = stack.pop()
        if len(adj[n]) != 1 or n in keep:
            continue
        (m,) = adj[n]
        adj[n].clear()
        adj[m].discard(n)
        edges.discard((n, m) if n < m else (m, n))
        if len(adj[m]) == 1 and m not in keep:
            stack.append(m)
    return edges


# -- instance interchange -------------------------------------------------

RECORD_FIELDS = ("rows", "cols", "open_edges", "terminals", "seed", "id")


def dumps_instance(instance: MazeInstance) -> str:
    """Serialize to the instance text record.

    The record is a JSON object with keys in the order ``rows, cols,
    open_edges, terminals, seed, id``.  ``open_edges`` lists canonical node
    pairs ``[[r, c], [r, c]]`` sorted ascending, one per line; terminals keep
    instance order.  Output always ends with a newline.
    """
    g = instance.graph
    lines = ["{", f'  "rows": {g.rows},', f'  "cols": {g.cols},']
    edges = g.edges()
    if edges:
        lines.append('  "open_edges": [')
        body = [f"    [[{a[0]}, {a[1]}], [{b[0]}, {b[1]}]]" for a, b in edges]
        lines.append(",\n".join(body))
        lines.append("  ],")
    else:
        lines.append('  "open_edges": [],')
    terms = ", ".join(f"[{r}, {c}]" for r, c in instance.terminals)
    lines.append(f'  "terminals": [{terms}],')
    lines.append(f'  "seed": {instance.seed},')
    lines.append(f'  "id": {json.dumps(instance.id)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_instance(text: str, *, require_connected: bool = True) -> MazeInstance:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"instance record is not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise FormatError("instance record must be an object")
    missing = [f for f in RECORD_FIELDS if f not in record]
    if missing:
        raise FormatError(f"instance record missing field(s): {', '.join(missing)}")
    try:
        graph = GridGraph.from_edges(int(record["rows"]), int(record["cols"]), record["open_edges"])
        inst = MazeInstance(
            graph=graph,
            terminals=tuple(tuple(t) for t in record["terminals"]),
            seed=int(record["seed"]),
            id=str(record["id"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"instance record is malformed: {exc}") from exc
    if require_connected and not graph.is_connected():
        raise FormatError(f"instance {inst.id!r}: graph is not connected")
    return inst


def save_instance(instance: MazeInstance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_instance(instance))


def load_instance(path) -> MazeInstance:
    with open(path, encoding="utf-8") as fh:
        return loads_instance(fh.read())
