import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oarsmt.core import (
    EAST, NORTH, SOUTH, WEST, GridGraph, MazeInstance, SteinerTree, canonical_edge, dumps_instance,
    is_valid_tree, loads_instance, neighbors, prune_leaves, spanning_tree, tree_length,
)
from oarsmt.errors import FormatError, InputError
from oarsmt.exact import dreyfus_wagner
from oarsmt.mazegen import GenConfig, generate_instance


def test_neighbors_interior_and_corner():
    g = GridGraph.full(3, 3)
    assert neighbors(g, (1, 1)) == [(0, 1), (1, 2), (2, 1), (1, 0)]
    assert neighbors(g, (0, 0)) == [(0, 1), (1, 0)]


def test_neighbors_out_of_range():
    with pytest.raises(InputError):
        neighbors(GridGraph.full(3, 3), (3, 0))


def test_neighbors_perfect_maze_degree():
    inst = generate_instance(GenConfig(6, 6, 2, 0, 11))
    for r in range(6):
        for c in range(6):
            assert 1 <= len(neighbors(inst.graph, (r, c))) <= 4


def test_graph_rejects_asymmetric_and_boundary_flags():
    flags = np.zeros((2, 2), dtype=np.uint8)
    flags[0, 0] = EAST
    with pytest.raises(InputError):
        GridGraph(2, 2, flags)
    flags = np.zeros((2, 2), dtype=np.uint8)
    flags[0, 0] = NORTH
    with pytest.raises(InputError):
        GridGraph(2, 2, flags)


def test_edge_count_is_half_flag_sum():
    g = GridGraph.full(4, 5)
    bits = sum(bin(int(f)).count("1") for f in g.open.ravel())
    assert g.n_edges == bits // 2 == 4 * 4 + 3 * 5


def test_canonical_edge():
    assert canonical_edge((1, 2), (1, 1)) == ((1, 1), (1, 2))
    with pytest.raises(InputError):
        canonical_edge((0, 0), (1, 1))


def test_tree_length_examples():
    assert tree_length(SteinerTree()) == 0
    corridor = SteinerTree.from_edges([((0, c), (0, c + 1)) for c in range(4)])
    assert tree_length(corridor) == 4
    y = SteinerTree.from_edges([((1, 1), (0, 1)), ((0, 1), (0, 0)), ((1, 1), (1, 2)), ((1, 2), (1, 3)), ((1, 1), (2, 1))])
    assert tree_length(y) == 5


def test_edge_canonicalization_dedupes():
    t = SteinerTree.from_edges([((0, 0), (0, 1)), ((0, 1), (0, 0))])
    assert len(t) == 1


@given(st.permutations([((0, c), (0, c + 1)) for c in range(5)] + [((1, 0), (0, 0))]))
def test_tree_length_order_invariant(edges):
    assert tree_length(SteinerTree.from_edges(edges)) == 6


def test_validity_of_oracle_solution():
    for seed in range(20):
        inst = generate_instance(GenConfig(5, 5, 2 + seed % 4, 3, seed))
        assert is_valid_tree(inst, dreyfus_wagner(inst).tree).valid


def test_validity_flags():
    g = GridGraph.full(3, 3)
    inst = MazeInstance(g, ((0, 0), (0, 2)))
    rep = is_valid_tree(inst, SteinerTree())
    assert not rep.spans_terminals
    square = SteinerTree.from_edges([((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 0)), ((1, 0), (0, 0)),
                                     ((0, 1), (0, 2))])
    rep = is_valid_tree(inst, square)
    assert rep.connected and not rep.acyclic
    walled = MazeInstance(GridGraph.empty(3, 3).with_opened([((0, 0), (0, 1))]), ((0, 0), (0, 2)))
    rep = is_valid_tree(walled, SteinerTree.from_edges([((0, 0), (0, 1)), ((0, 1), (0, 2))]))
    assert not rep.uses_only_open_edges


def test_instance_validation():
    g = GridGraph.full(3, 3)
    with pytest.raises(InputError):
        MazeInstance(g, ((0, 0),))
    with pytest.raises(InputError):
        MazeInstance(g, ((0, 0), (0, 0)))
    with pytest.raises(InputError):
        MazeInstance(g, ((0, 0), (3, 3)))


def test_spanning_tree_and_prune():
    edges = {((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 0)), ((0, 0), (1, 0)), ((1, 1), (2, 1))}
    st_edges = spanning_tree(edges)
    assert len(st_edges) == 4
    pruned = prune_leaves(st_edges, [(0, 0), (1, 1)])
    assert all((2, 1) not in e for e in pruned)


def test_interchange_golden(golden_dir):
    inst = generate_instance(GenConfig(5, 5, 3, 3, 2024))
    assert dumps_instance(inst) == (golden_dir / "instance_r5c5n3w3s2024.json").read_text()
    assert loads_instance(dumps_instance(inst)) == inst


def test_interchange_errors():
    with pytest.raises(FormatError, match="terminals"):
        loads_instance('{"rows": 2, "cols": 2, "open_edges": [], "seed": 0, "id": ""}')
    with pytest.raises(FormatError, match="connected"):
        loads_instance('{"rows": 2, "cols": 2, "open_edges": [], "terminals": [[0,0],[1,1]], "seed": 0, "id": ""}')
    with pytest.raises(FormatError):
        loads_instance("not json")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**32))
def test_generated_graph_connected(rows, cols, seed):
    inst = generate_instance(GenConfig(rows, cols, 2, 0, seed))
    assert inst.graph.is_connected()
    assert loads_instance(dumps_instance(inst)).graph == inst.graph
