"""Knowledge resource graph and Leacock path relatedness between its objects."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from .errors import GraphLoadError, ParseError, UnknownObjectError
from .store import iter_data_lines, open_source, source_name, write_text_atomic

logger = logging.getLogger("relmap_ranker.kgraph")


@dataclass
class ObjectNode:
    id: str
    label: str
    df: int = 0


@dataclass
class KnowledgeGraph:
    """Objects with textual labels and the filtered relation between them.

    Edges are stored as ``(child, parent, relation)``. Path queries treat them
    as undirected, so a reversed duplicate collapses into the first edge.
    ``max_depth`` is the longest root-to-node path of the child→parent
    hierarchy, counted in nodes; an edge that would close a directed cycle
    still joins paths but does not count towards depth.
    """

    objects: dict[str, ObjectNode] = field(default_factory=dict)
    edges: list[tuple[str, str, str]] = field(default_factory=list)
    max_depth: int = 1

    def __post_init__(self) -> None:
        self._hierarchy = nx.DiGraph()
        self._undirected = nx.Graph()
        self._lengths: dict[str, dict[str, int]] = {}
        edges, self.edges = list(self.edges), []
        for object_id in self.objects:
            self._hierarchy.add_node(object_id)
            self._undirected.add_node(object_id)
        for child, parent, relation in edges:
            self._insert_edge(child, parent, relation)
        self._recompute_depth()

    # Mutation
    def add_object(self, object_id: str, label: str, df: int = 0) -> ObjectNode:
        if not object_id:
            raise GraphLoadError("object id must be non-empty")
        if object_id in self.objects:
            raise GraphLoadError(f"duplicate object id {object_id!r}")
        node = ObjectNode(id=object_id, label=label, df=df)
        self.objects[object_id] = node
        self._hierarchy.add_node(object_id)
        self._undirected.add_node(object_id)
        self._lengths.clear()
        self._recompute_depth()
        return node

    def add_edge(self, child: str, parent: str, relation: str) -> bool:
        added = self._insert_edge(child, parent, relation)
        if added:
            self._lengths.clear()
            self._recompute_depth()
        return added

    def _insert_edge(self, child: str, parent: str, relation: str) -> bool:
        for endpoint in (child, parent):
            if endpoint not in self.objects:
                raise GraphLoadError(f"edge references unknown object {endpoint!r}")
        if child == parent:
            logger.warning("Ignoring self-loop on %r", child)
            return False
        # Undirected for paths: (a, b) and (b, a) are the same edge.
        if self._undirected.has_edge(child, parent):
            return False
        self._undirected.add_edge(child, parent)
        self.edges.append((child, parent, relation))
        if nx.has_path(self._hierarchy, parent, child):
            logger.warning(
                "Edge %r -> %r closes a cycle; kept for paths, left out of the depth hierarchy", child, parent
            )
        else:
            self._hierarchy.add_edge(child, parent)
        return True

    def _recompute_depth(self) -> None:
        if self._hierarchy.number_of_nodes() == 0:
            self.max_depth = 1
            return
        self.max_depth = nx.dag_longest_path_length(self._hierarchy) + 1

    # Queries
    def __contains__(self, object_id: object) -> bool:
        return object_id in self.objects

    def __len__(self) -> int:
        return len(self.objects)

    def label(self, object_id: str) -> str:
        return self._node(object_id).label

    def _node(self, object_id: str) -> ObjectNode:
        node = self.objects.get(object_id)
        if node is None:
            raise UnknownObjectError(object_id)
        return node

    def _bfs_from(self, source: str) -> dict[str, int]:
        lengths = self._lengths.get(source)
        if lengths is None:
            lengths = nx.single_source_shortest_path_length(self._undirected, source)
            self._lengths[source] = lengths
        return lengths

    def warm_up(self, object_ids: Optional[Iterable[str]] = None) -> None:
        """Fill the BFS cache for ``object_ids`` (all objects by default).

        Run this once before sharing the graph between workers; queries
        against warmed sources only read the cache.
        """
        ids = sorted(self.objects) if object_ids is None else sorted(set(object_ids))
        for object_id in ids:
            self._node(object_id)
            self._bfs_from(object_id)
        logger.debug("Warmed path cache for %d sources", len(ids))


def _read_rows(source: Iterable[str], width: int, kind: str) -> Iterable[tuple[int, list[str]]]:
    name = source_name(source)
    for number, line in iter_data_lines(source):
        parts = [part.strip() for part in line.split("\t")]
        if len(parts) != width or not all(parts[:-1]) or (width > 2 and not parts[-1]):
            raise ParseError(f"expected {width} tab-separated fields in {kind} row", line=number, source=name)
        yield number, parts


def load_graph(
    nodes_source: str | Path | Iterable[str],
    edges_source: str | Path | Iterable[str],
    relation_filter: Optional[str] = "IS-A",
) -> KnowledgeGraph:
    """Build a graph from ``id<TAB>label`` and ``child<TAB>parent<TAB>relation`` rows.

    Sources are paths or open line streams. Only edges whose relation equals
    ``relation_filter`` are kept (``None`` keeps every edge). Objects without
    a kept edge stay as isolated nodes.
    """
    objects: dict[str, ObjectNode] = {}
    with open_source(nodes_source) as nodes:
        name = source_name(nodes)
        for number, (object_id, label) in _read_rows(nodes, 2, "node"):
            if object_id in objects:
                raise ParseError(f"duplicate object id {object_id!r}", line=number, source=name)
            objects[object_id] = ObjectNode(id=object_id, label=label)

    kept: list[tuple[str, str, str]] = []
    skipped = 0
    with open_source(edges_source) as edges:
        for number, (child, parent, relation) in _read_rows(edges, 3, "edge"):
            for endpoint in (child, parent):
                if endpoint not in objects:
                    raise GraphLoadError(f"line {number}: edge references unknown object {endpoint!r}")
            if relation_filter is not None and relation != relation_filter:
                skipped += 1
                continue
            kept.append((child, parent, relation))

    graph = KnowledgeGraph(objects=objects, edges=kept)
    logger.info(
        "Loaded graph: %d objects, %d %s edges (%d other edges skipped), max depth %d",
        len(graph.objects), len(graph.edges), relation_filter or "any", skipped, graph.max_depth,
    )
    return graph


def save_graph(g: KnowledgeGraph, nodes_path: str | Path, edges_path: str | Path) -> None:
    """Write the graph cache in the input TSV format, nodes and edges sorted."""
    node_lines = [f"{oid}\t{g.objects[oid].label}\n" for oid in sorted(g.objects)]
    edge_lines = [f"{c}\t{p}\t{r}\n" for c, p, r in sorted(g.edges)]
    write_text_atomic(nodes_path, "".join(node_lines))
    write_text_atomic(edges_path, "".join(edge_lines))


def path_length(g: KnowledgeGraph, a: str, b: str) -> Optional[int]:
    """Number of nodes on the shortest undirected path, or None if disconnected."""
    g._node(a)
    g._node(b)
    if a == b:
        return 1
    # Symmetric lookup: reuse whichever endpoint already has a BFS cached.
    if b in g._lengths and a not in g._lengths:
        a, b = b, a
    distance = g._bfs_from(a).get(b)
    return None if distance is None else distance + 1


def leacock_sim(g: KnowledgeGraph, a: str, b: str) -> float:
    """``-ln(len / (2 * max_depth))``; 0 for disconnected pairs, never negative."""
    length = path_length(g, a, b)
    if length is None:
        return 0.0
    return max(0.0, -math.log(length / (2.0 * g.max_depth)))


def max_leacock(g: KnowledgeGraph) -> float:
    """Largest attainable Leacock value, ``ln(2 * max_depth)``."""
    return math.log(2.0 * g.max_depth)


def relatedness_matrix(g: KnowledgeGraph, object_ids: Sequence[str]) -> np.ndarray:
    """Dense ``len(object_ids)``-square matrix of leacock_sim values."""
    ids = list(object_ids)
    index = {oid: i for i, oid in enumerate(ids)}
    two_depth = 2.0 * g.max_depth
    matrix = np.zeros((len(ids), len(ids)), dtype=np.float64)
    for i, oid in enumerate(ids):
        for other, distance in g._bfs_from(g._node(oid).id).items():
            j = index.get(other)
            if j is not None:
                matrix[i, j] = max(0.0, -math.log((distance + 1) / two_depth))
    return matrix
