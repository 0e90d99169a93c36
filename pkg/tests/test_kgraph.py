"""Tests for graph loading, path lengths and Leacock relatedness."""

import io
import itertools
import math

import networkx as nx
import numpy as np
import pytest

from relmap_ranker.errors import GraphLoadError, ParseError, UnknownObjectError
from relmap_ranker.kgraph import (
    leacock_sim,
    load_graph,
    max_leacock,
    path_length,
    relatedness_matrix,
    save_graph,
)

from .conftest import build_graph, random_hierarchy

NODES = "a\tanimal\nb\tbird\nc\tcanary\n"


def _floyd_warshall(g):
    ids = sorted(g.objects)
    index = {oid: i for i, oid in enumerate(ids)}
    dist = np.full((len(ids), len(ids)), np.inf)
    np.fill_diagonal(dist, 0)
    for child, parent, _ in g.edges:
        i, j = index[child], index[parent]
        dist[i, j] = dist[j, i] = 1
    for m in range(len(ids)):
        dist = np.minimum(dist, dist[:, [m]] + dist[[m], :])
    return ids, dist


def test_load_graph_keeps_only_filtered_relation():
    edges = "b\ta\tIS-A\nc\tb\tIS-A\nc\ta\tPART-OF\n"
    g = load_graph(io.StringIO(NODES), io.StringIO(edges), relation_filter="IS-A")
    assert len(g) == 3
    assert len(g.edges) == 2
    assert g.max_depth == 3
    assert g.label("c") == "canary"


def test_load_graph_without_edges_has_depth_one():
    g = load_graph(io.StringIO(NODES), io.StringIO(""))
    assert g.max_depth == 1
    assert path_length(g, "a", "b") is None


def test_load_graph_skips_comments_and_blank_lines():
    edges = "# child\tparent\trelation\n\nb\ta\tIS-A\n"
    g = load_graph(io.StringIO("# header\n" + NODES), io.StringIO(edges))
    assert len(g.edges) == 1


def test_load_graph_unknown_endpoint_names_object():
    with pytest.raises(GraphLoadError, match="'x'"):
        load_graph(io.StringIO(NODES), io.StringIO("x\ta\tIS-A\n"))


def test_load_graph_malformed_row_reports_line():
    with pytest.raises(ParseError) as excinfo:
        load_graph(io.StringIO("a\tanimal\nbroken\n"), io.StringIO(""))
    assert excinfo.value.line == 2
    assert "line 2" in str(excinfo.value)


def test_load_graph_duplicate_object_id():
    with pytest.raises(ParseError, match="duplicate"):
        load_graph(io.StringIO("a\tx\na\ty\n"), io.StringIO(""))


def test_reversed_duplicate_edge_collapses():
    g = load_graph(io.StringIO("a\tA\nb\tB\n"), io.StringIO("b\ta\tIS-A\na\tb\tIS-A\n"))
    assert g.edges == [("b", "a", "IS-A")]
    assert g.max_depth == 2
    assert path_length(g, "a", "b") == 2


def test_directed_cycle_keeps_paths_and_finite_depth(caplog):
    edges = "b\ta\tIS-A\nc\tb\tIS-A\na\tc\tIS-A\n"
    g = load_graph(io.StringIO(NODES), io.StringIO(edges))
    assert len(g.edges) == 3
    assert g.max_depth == 3
    assert path_length(g, "a", "c") == 2
    assert "closes a cycle" in caplog.text
    assert build_graph([("a", "a")]).edges == []


def test_duplicate_edges_collapse(chain_graph):
    assert chain_graph.add_edge("b", "a", "IS-A") is False
    assert chain_graph.add_edge("a", "b", "IS-A") is False
    assert len(chain_graph.edges) == 2


def test_mutation_recomputes_depth(chain_graph):
    chain_graph.add_object("d", "dodo")
    assert chain_graph.max_depth == 3
    chain_graph.add_edge("d", "c", "IS-A")
    assert chain_graph.max_depth == 4
    assert path_length(chain_graph, "a", "d") == 4


def test_path_length_counts_nodes(chain_graph):
    assert path_length(chain_graph, "a", "c") == 3
    assert path_length(chain_graph, "a", "b") == 2
    assert path_length(chain_graph, "a", "a") == 1


def test_path_length_disconnected_components():
    g = build_graph([("b", "a"), ("y", "x")])
    assert path_length(g, "a", "x") is None
    assert leacock_sim(g, "a", "x") == 0.0


def test_leacock_chain_values(chain_graph):
    assert leacock_sim(chain_graph, "a", "c") == pytest.approx(math.log(2))
    assert leacock_sim(chain_graph, "a", "a") == pytest.approx(math.log(6))
    assert max_leacock(chain_graph) == pytest.approx(math.log(6))


def test_unknown_object_lookup(chain_graph):
    with pytest.raises(UnknownObjectError, match="'zz'"):
        leacock_sim(chain_graph, "a", "zz")
    with pytest.raises(KeyError):
        path_length(chain_graph, "zz", "a")


def test_leacock_symmetry_and_self_maximality():
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = random_hierarchy(rng, int(rng.integers(2, 31)))
        ids = sorted(g.objects)
        for a in ids:
            own = leacock_sim(g, a, a)
            for b in ids:
                ab = leacock_sim(g, a, b)
                assert ab == leacock_sim(g, b, a)
                assert ab >= 0.0
                assert own >= ab


def test_leacock_decreases_along_chain():
    ids = [f"c{i}" for i in range(8)]
    g = build_graph(list(zip(ids[1:], ids[:-1])))
    values = [leacock_sim(g, ids[0], other) for other in ids]
    assert all(x > y for x, y in zip(values, values[1:]))


def _edge_subsets(n, max_edges=None):
    """Every labelled undirected graph on n nodes, edges oriented towards the lower id."""
    ids = [f"v{i}" for i in range(n)]
    pairs = list(itertools.combinations(range(n), 2))
    sizes = range(len(pairs) + 1) if max_edges is None else range(min(max_edges, len(pairs)) + 1)
    for size in sizes:
        for chosen in itertools.combinations(pairs, size):
            yield build_graph([(ids[j], ids[i]) for i, j in chosen], nodes=ids)


def _assert_matches_floyd_warshall(g):
    ids, dist = _floyd_warshall(g)
    for i, a in enumerate(ids):
        for j, b in enumerate(ids):
            expected = None if np.isinf(dist[i, j]) else int(dist[i, j]) + 1
            assert path_length(g, a, b) == expected, (a, b, g.edges)


def test_path_length_matches_floyd_warshall_on_every_graph_up_to_five_nodes():
    count = 0
    for n in range(1, 6):
        for g in _edge_subsets(n):
            _assert_matches_floyd_warshall(g)
            count += 1
    assert count == 1 + 2 + 8 + 64 + 1024


def test_path_length_matches_floyd_warshall_on_every_forest_of_six_nodes():
    forests = [g for g in _edge_subsets(6, max_edges=5) if nx.is_forest(g._undirected)]
    # Labelled forests on six nodes.
    assert len(forests) == 2932
    for g in forests:
        _assert_matches_floyd_warshall(g)


def test_path_length_matches_floyd_warshall_on_random_graphs():
    rng = np.random.default_rng(11)
    graphs = [random_hierarchy(rng, n) for n in range(1, 9) for _ in range(6)]
    graphs += [random_hierarchy(rng, int(rng.integers(2, 21)), attach=0.7) for _ in range(50)]
    for _ in range(50):
        n = int(rng.integers(2, 21))
        ids = [f"r{i:02d}" for i in range(n)]
        pairs = [(ids[j], ids[i]) for i, j in itertools.combinations(range(n), 2) if rng.random() < 3.0 / n]
        graphs.append(build_graph(pairs, nodes=ids))
    for g in graphs:
        _assert_matches_floyd_warshall(g)


def test_relatedness_matrix_matches_pairwise(chain_graph):
    ids = ["a", "b", "c"]
    matrix = relatedness_matrix(chain_graph, ids)
    for i, a in enumerate(ids):
        for j, b in enumerate(ids):
            assert matrix[i, j] == pytest.approx(leacock_sim(chain_graph, a, b), abs=1e-12)


def test_warm_up_fills_cache(chain_graph):
    chain_graph.warm_up(["a"])
    assert "a" in chain_graph._lengths
    chain_graph.warm_up()
    assert set(chain_graph._lengths) == {"a", "b", "c"}


def test_save_graph_roundtrip_keeps_filtered_edges(tmp_path):
    edges = "b\ta\tIS-A\nc\tb\tIS-A\nc\ta\tPART-OF\n"
    g = load_graph(io.StringIO(NODES), io.StringIO(edges))
    save_graph(g, tmp_path / "nodes.tsv", tmp_path / "edges.tsv")
    again = load_graph(tmp_path / "nodes.tsv", tmp_path / "edges.tsv", relation_filter=None)
    assert sorted(again.edges) == sorted(g.edges)
    assert again.max_depth == g.max_depth
    assert {oid: n.label for oid, n in again.objects.items()} == {oid: n.label for oid, n in g.objects.items()}
