import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oarsmt import raster
from oarsmt.core import GridGraph, dumps_instance, neighbors
from oarsmt.errors import InputError
from oarsmt.mazegen import (
    GenConfig, add_cycles, cycle_candidates, default_wall_removals, generate_instance,
    generate_perfect_maze, place_terminals,
)


def _simple_paths(graph, a, b):
    count = 0
    stack = [(a, {a})]
    while stack:
        node, seen = stack.pop()
        if node == b:
            count += 1
            continue
        for n in neighbors(graph, node):
            if n not in seen:
                stack.append((n, seen | {n}))
    return count


@pytest.mark.parametrize("rows,cols", [(2, 2), (11, 11), (4, 7)])
def test_perfect_maze_is_spanning_tree(rows, cols):
    g = generate_perfect_maze(rows, cols, 5)
    assert g.n_nodes == rows * cols
    assert g.n_edges == rows * cols - 1
    assert g.is_connected()


def test_perfect_maze_deterministic():
    a = generate_perfect_maze(11, 11, 42)
    b = generate_perfect_maze(11, 11, 42)
    assert np.array_equal(a.open, b.open)
    assert not np.array_equal(a.open, generate_perfect_maze(11, 11, 43).open)


def test_perfect_maze_bad_dims():
    with pytest.raises(InputError):
        generate_perfect_maze(1, 5, 0)


@pytest.mark.parametrize("seed", range(5))
def test_perfect_maze_unique_paths(seed):
    g = generate_perfect_maze(3, 4, seed)
    nodes = [(r, c) for r in range(3) for c in range(4)]
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            assert _simple_paths(g, a, b) == 1


def test_add_cycles_counts():
    g = generate_perfect_maze(11, 11, 3)
    assert add_cycles(g, 0, 1) == g
    for k in (1, 5, 13):
        out = add_cycles(g, k, 1)
        assert out.n_edges == 120 + k
        assert out.is_connected()


def test_add_cycles_too_many():
    g = generate_perfect_maze(3, 3, 0)
    closed = len(g.closed_interior_walls())
    add_cycles(g, closed, 0)
    with pytest.raises(InputError):
        add_cycles(g, closed + 1, 0)


@pytest.mark.parametrize("seed", range(10))
def test_dead_end_walls_come_first(seed):
    g = generate_perfect_maze(8, 8, seed)
    order = cycle_candidates(g, seed)
    touches = [g.degree(a) == 1 or g.degree(b) == 1 for a, b in order]
    n_dead = sum(touches)
    assert n_dead > 0
    assert all(touches[:n_dead]) and not any(touches[n_dead:])
    opened = add_cycles(g, n_dead, seed)
    # every dead-end wall was used before any other wall
    assert set(opened.edges()) - set(g.edges()) == set(order[:n_dead])


def test_place_terminals():
    g = GridGraph.full(3, 3)
    assert place_terminals(g, 9, 0) == [(r, c) for r in range(3) for c in range(3)]
    g11 = GridGraph.full(11, 11)
    assert place_terminals(g11, 2, 1) == place_terminals(g11, 2, 1)
    assert place_terminals(g11, 2, 1) != place_terminals(g11, 2, 2)
    with pytest.raises(InputError):
        place_terminals(g, 10, 0)


def test_terminal_placement_uniform():
    g = GridGraph.full(5, 5)
    draws = 100_000
    counts = np.zeros(25)
    for seed in range(draws):
        (node,) = place_terminals(g, 1, seed)
        counts[g.index(node)] += 1
    p = 1 / 25
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)
    assert stats.chisquare(counts).pvalue > 0.001


def test_generate_instance_examples():
    inst = generate_instance(GenConfig(11, 11, 3, 13, 9))
    assert raster.image_dims(inst.rows, inst.cols) == (48, 48)
    small = generate_instance(GenConfig(5, 5, 2, 2, 9))
    assert small.graph.n_nodes == 25 and small.graph.n_edges == 26
    assert dumps_instance(generate_instance(GenConfig(5, 5, 2, 2, 9))) == dumps_instance(small)


def test_genconfig_validation():
    with pytest.raises(InputError):
        GenConfig(3, 3, 10, 0, 0)
    with pytest.raises(InputError):
        GenConfig(3, 3, 2, 100, 0)
    with pytest.raises(InputError):
        GenConfig(3, 3, 2, 0, -1)
    assert default_wall_removals(5, 5) == 3
    assert default_wall_removals(11, 11) == 13


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**64 - 1), st.data())
def test_generation_is_pure_and_well_formed(rows, cols, seed, data):
    n = data.draw(st.integers(2, rows * cols))
    closed = (rows - 1) * (cols - 1)
    w = data.draw(st.integers(0, closed))
    cfg = GenConfig(rows, cols, n, w, seed)
    a, b = generate_instance(cfg), generate_instance(cfg)
    assert a == b
    assert a.graph.n_edges == rows * cols - 1 + w
    assert a.graph.is_connected()
    assert len(set(a.terminals)) == n
