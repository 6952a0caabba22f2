"""Kou-Markowsky-Berman and Mehlhorn 2-approximations.

Both MST stages sort candidate edges stably on ``(weight, canonical id)``;
approximation quality on near-equidistant instances depends on this rule, so
it is fixed here rather than left to container ordering.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

from .core import Edge, GridGraph, MazeInstance, SteinerTree, prune_leaves
from .errors import InputError, NoPathError


@dataclass(frozen=True)
class ApproxResult:
    tree: SteinerTree
    length: int
    elapsed: float


class _DisjointSet:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _kruskal(nodes, weighted_edges):
    """``weighted_edges`` are ``(weight, u, v)``; returns the chosen ``(u, v)`` pairs."""
    ds = _DisjointSet(nodes)
    return [(u, v) for w, u, v in sorted(weighted_edges) if ds.union(u, v)]


def _bfs(adj, src: int) -> tuple[list[int], list[int]]:
    V = len(adj)
    dist = [-1] * V
    parent = [-1] * V
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                queue.append(v)
    return dist, parent


def _walk(parent: list[int], v: int) -> list[int]:
    """Nodes from ``v`` back to the root of a BFS parent array."""
    out = [v]
    while parent[v] >= 0:
        v = parent[v]
        out.append(v)
    return out


def _finish(graph: GridGraph, instance: MazeInstance, node_edges: set[tuple[int, int]], start: float) -> ApproxResult:
    # MST of the expanded subgraph (unit weights), then strip non-terminal leaves
    nodes = {x for e in node_edges for x in e}
    chosen = _kruskal(nodes, [(1, u, v) for u, v in node_edges])
    edges: set[Edge] = set()
    for u, v in chosen:
        a, b = graph.node(u), graph.node(v)
        edges.add((a, b) if a < b else (b, a))
    edges = prune_leaves(edges, instance.terminals)
    tree = SteinerTree(frozenset(edges))
    return ApproxResult(tree, len(tree), time.perf_counter() - start)


def _add_path(node_edges: set[tuple[int, int]], path: list[int]) -> None:
    for u, v in zip(path, path[1:]):
        node_edges.add((u, v) if u < v else (v, u))


def kou(instance: MazeInstance) -> ApproxResult:
    """Metric closure on terminals, MST, path expansion, MST again, prune."""
    start = time.perf_counter()
    if instance.n_terminals < 2:
        raise InputError("need at least 2 terminals")
    graph = instance.graph
    adj = graph.adjacency
    tix = [graph.index(t) for t in instance.terminals]
    searches = [_bfs(adj, t) for t in tix]
    closure = []
    for i in range(len(tix)):
        dist = searches[i][0]
        for j in range(i + 1, len(tix)):
            if dist[tix[j]] < 0:
                raise NoPathError(f"terminals {instance.terminals[i]} and {instance.terminals[j]} are disconnected")
            closure.append((dist[tix[j]], i, j))
    node_edges: set[tuple[int, int]] = set()
    for i, j in _kruskal(range(len(tix)), closure):
        _add_path(node_edges, _walk(searches[i][1], tix[j]))
    return _finish(graph, instance, node_edges, start)


def voronoi_regions(graph: GridGraph, sources: list[int]) -> tuple[list[int], list[int], list[int]]:
    """Multi-source BFS: ``(base, dist, parent)`` per node index.

    Sources are seeded in the given order, so equidistant nodes go to the
    source whose wavefront reaches them first in N, E, S, W expansion order.
    """
    adj = graph.adjacency
    V = graph.n_nodes
    base = [-1] * V
    dist = [-1] * V
    parent = [-1] * V
    queue = deque()
    for k, s in enumerate(sources):
        base[s] = k
        dist[s] = 0
        queue.append(s)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                base[v] = base[u]
                parent[v] = u
                queue.append(v)
    return base, dist, parent


def mehlhorn(instance: MazeInstance) -> ApproxResult:
    """Voronoi-region variant: one multi-source search replaces the N searches.

    Every grid edge ``(u, v)`` crossing two regions proposes a terminal-graph
    edge of weight ``d(u) + 1 + d(v)``; the cheapest proposal per terminal
    pair (smallest grid edge on ties) is kept, and its MST is expanded back
    through the search tree.
    """
    start = time.perf_counter()
    if instance.n_terminals < 2:
        raise InputError("need at least 2 terminals")
    graph = instance.graph
    adj = graph.adjacency
    tix = [graph.index(t) for t in instance.terminals]
    base, dist, parent = voronoi_regions(graph, tix)
    best: dict[tuple[int, int], tuple[int, int, int]] = {}
    for u, nbrs in enumerate(adj):
        for v in nbrs:
            if u >= v or base[u] == base[v] or base[u] < 0:
                continue
            a, b = base[u], base[v]
            cand = (dist[u] + 1 + dist[v], u, v)
            key = (a, b) if a < b else (b, a)
            if key not in best or cand < best[key]:
                best[key] = cand
    aux = [(w, a, b) for (a, b), (w, _, _) in best.items()]
    node_edges: set[tuple[int, int]] = set()
    chosen = _kruskal(range(len(tix)), aux)
    if len(chosen) < len(tix) - 1:
        raise NoPathError("terminals are disconnected")
    for a, b in chosen:
        key = (a, b) if a < b else (b, a)
        _, u, v = best[key]
        _add_path(node_edges, _walk(parent, u))
        _add_path(node_edges, _walk(parent, v))
        node_edges.add((u, v))
    return _finish(graph, instance, node_edges, start)
