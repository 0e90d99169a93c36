"""Relation mapping: topical referential over objects and x^KR text vectors.

A referential is k clusters of knowledge-resource objects, each with one
representative. A text's x^KR has one component per cluster: the product of
how close the text's objects sit to the cluster in embedding space
(importance) and how close they sit to its representative in the graph
(relatedness).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import STRATEGIES
from .embeddings import EmbeddingTable, cosine
from .errors import ConfigurationError, DimensionError, ParseError
from .kgraph import KnowledgeGraph, leacock_sim
from .store import format_floats, iter_data_lines, parse_floats, write_text_atomic

logger = logging.getLogger("relmap_ranker.relmap")

REFERENTIAL_FORMAT = "relmap-referential"
REFERENTIAL_VERSION = 1
TOP_CONCEPTS = "top_concepts"


@dataclass
class TopicalCluster:
    members: list[str]
    centroid: np.ndarray
    representative: str

    def __post_init__(self) -> None:
        self.members = sorted(self.members)
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        if not self.members:
            raise ConfigurationError("topical cluster has no members")
        if self.representative not in self.members:
            raise ConfigurationError(f"representative {self.representative!r} is not a cluster member")


@dataclass
class Referential:
    k: int
    clusters: list[TopicalCluster]
    strategy: str
    dims: int

    def __post_init__(self) -> None:
        if self.k != len(self.clusters):
            raise ConfigurationError(f"referential declares k={self.k} but holds {len(self.clusters)} clusters")
        seen: set[str] = set()
        for cluster in self.clusters:
            if cluster.centroid.shape != (self.dims,):
                raise DimensionError(f"centroid has {cluster.centroid.size} components, expected {self.dims}")
            overlap = seen.intersection(cluster.members)
            if overlap:
                raise ConfigurationError(f"object {sorted(overlap)[0]!r} belongs to two clusters")
            seen.update(cluster.members)

    @property
    def representatives(self) -> list[str]:
        return [c.representative for c in self.clusters]

    def objects(self) -> list[str]:
        return sorted(o for c in self.clusters for o in c.members)


@dataclass
class KrVector:
    values: np.ndarray
    object_count: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise DimensionError("x^KR components must be non-negative")

    @property
    def k(self) -> int:
        return int(self.values.size)


# -- k-means -------------------------------------------------------------------


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(0, n))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        probs = closest / total
        nxt = int(rng.choice(n, p=probs))
        chosen.append(nxt)
        closest = np.minimum(closest, _squared_distances(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def _objective(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    diff = points - centroids[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def _reseed_empty(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray, k: int) -> None:
    """Move the farthest point of a multi-member cluster into each empty cluster."""
    for j in range(k):
        counts = np.bincount(assignments, minlength=k)
        if counts[j] > 0:
            continue
        dist = np.einsum("ij,ij->i", points - centroids[assignments], points - centroids[assignments])
        movable = counts[assignments] > 1
        dist = np.where(movable, dist, -1.0)
        far = int(np.argmax(dist))
        logger.debug("k-means: re-seeding empty cluster %d at point %d", j, far)
        assignments[far] = j
        centroids[j] = points[far]


def kmeans(
    points: np.ndarray | Sequence[np.ndarray],
    k: int,
    max_iter: int = 100,
    seed: int = 0,
    objective_log: Optional[list[float]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(assignments, centroids)``. Stops at an assignment fixpoint or
    after ``max_iter`` updates. A cluster left empty by an assignment step is
    re-seeded at the point farthest from its centroid (lowest index on ties)
    among clusters with more than one member. When ``objective_log`` is given,
    the within-cluster sum of squares after every update is appended to it.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("kmeans expects a 2-D array of points")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    distinct = np.unique(X, axis=0).shape[0]
    if k > distinct:
        raise ConfigurationError(f"k={k} exceeds the number of distinct points ({distinct})")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_plusplus(X, k, rng)
    assignments = np.full(X.shape[0], -1, dtype=np.int64)

    for iteration in range(max_iter):
        labels = np.argmin(_squared_distances(X, centroids), axis=1)
        empty = np.bincount(labels, minlength=k) == 0
        if np.array_equal(labels, assignments) and not empty.any():
            logger.debug("k-means converged after %d iterations", iteration)
            break
        assignments = labels
        if empty.any():
            _reseed_empty(X, assignments, centroids, k)
        for j in range(k):
            centroids[j] = X[assignments == j].mean(axis=0)
        if objective_log is not None:
            objective_log.append(_objective(X, assignments, centroids))
    return assignments, centroids


# -- referential ---------------------------------------------------------------


def _pick_representative(
    members: Sequence[str],
    strategy: str,
    df: Optional[Mapping[str, int]],
    obj_vectors: EmbeddingTable,
    centroid: np.ndarray,
) -> str:
    if strategy == "centroid":
        return min(members, key=lambda o: (-cosine(obj_vectors.get(o), centroid), o))
    counts = df or {}
    if strategy == "idf_min":
        return min(members, key=lambda o: (-counts.get(o, 0), o))
    if strategy == "idf_max":
        return min(members, key=lambda o: (counts.get(o, 0), o))
    raise ConfigurationError(f"Invalid strategy: {strategy}")


def build_referential(
    objects: Sequence[str],
    obj_vectors: EmbeddingTable,
    k: int,
    strategy: str = "centroid",
    df: Optional[Mapping[str, int]] = None,
    seed: int = 0,
    max_iter: int = 100,
) -> Referential:
    """Cluster object vectors into k topical clusters and pick one representative each.

    idf_min picks the most frequent member, idf_max the rarest, centroid the
    member closest (cosine) to the cluster centroid. Ties go to the
    lexicographically smallest id.
    """
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"Invalid strategy: {strategy}")
    if strategy != "centroid" and df is None:
        raise ConfigurationError(f"strategy {strategy} needs document frequencies")
    ids = sorted(set(objects))
    points = np.vstack([obj_vectors.get(o) for o in ids]) if ids else np.zeros((0, obj_vectors.dims))
    assignments, centroids = kmeans(points, k, max_iter=max_iter, seed=seed)

    clusters = []
    for j in range(k):
        members = [ids[i] for i in np.flatnonzero(assignments == j)]
        rep = _pick_representative(members, strategy, df, obj_vectors, centroids[j])
        clusters.append(TopicalCluster(members=members, centroid=centroids[j].copy(), representative=rep))
    logger.info(
        "Built referential: %d objects in %d clusters, strategy %s",
        len(ids), k, strategy,
    )
    return Referential(k=k, clusters=clusters, strategy=strategy, dims=obj_vectors.dims)


def top_concepts_referential(
    objects: Sequence[str],
    df: Mapping[str, int],
    k: int,
    obj_vectors: Optional[EmbeddingTable] = None,
) -> Referential:
    """Baseline referential: the k most frequent objects as singleton clusters."""
    candidates = sorted((o for o in set(objects) if df.get(o, 0) > 0), key=lambda o: (-df[o], o))
    if len(candidates) < k:
        raise ConfigurationError(f"top_concepts needs {k} objects with df > 0, found {len(candidates)}")
    dims = obj_vectors.dims if obj_vectors is not None else 0
    clusters = []
    for object_id in candidates[:k]:
        centroid = obj_vectors.get(object_id).copy() if obj_vectors is not None else np.zeros(0)
        clusters.append(TopicalCluster(members=[object_id], centroid=centroid, representative=object_id))
    return Referential(k=k, clusters=clusters, strategy=TOP_CONCEPTS, dims=dims)


# -- x^KR ----------------------------------------------------------------------


def _normalized_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def cluster_importance(cluster: TopicalCluster, text_objects: Sequence[str], obj_vectors: EmbeddingTable) -> float:
    """w_j: max of clamp0(cosine) over (text object, cluster member) pairs."""
    distinct = sorted(set(text_objects))
    if not distinct:
        return 0.0
    text_rows = _normalized_rows(np.vstack([obj_vectors.get(o) for o in distinct]))
    member_rows = _normalized_rows(np.vstack([obj_vectors.get(o) for o in cluster.members]))
    return float(np.clip((text_rows @ member_rows.T).max(), 0.0, 1.0))


def cluster_relatedness(rep: str, text_objects: Sequence[str], g: KnowledgeGraph, avg_no: float) -> float:
    """S_relat: sum of ln(1 + leacock(rep, o)) over O(T), scaled by avg_no / |O(T)|."""
    if avg_no <= 0:
        raise ConfigurationError("avg_no must be > 0")
    if not text_objects:
        return 0.0
    total = sum(math.log1p(leacock_sim(g, rep, o)) for o in text_objects)
    return total * (avg_no / len(text_objects))


@dataclass
class RelationMapper:
    """Vectorizes many texts against one referential.

    Member matrices are normalized once; graph relatedness of every text
    object to all representatives is cached per object.
    With ``avg_no == 0`` (no annotated document) every vector is zero.
    """

    referential: Referential
    graph: KnowledgeGraph
    obj_vectors: EmbeddingTable
    avg_no: float
    _members: np.ndarray = field(init=False, repr=False)
    _starts: np.ndarray = field(init=False, repr=False)
    _rep_relatedness: dict[str, np.ndarray] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.avg_no < 0:
            raise ConfigurationError("avg_no must be >= 0")
        if self.avg_no == 0:
            logger.warning("No document carries annotations (avg_no = 0); every x^KR is the zero vector")
        rows = []
        starts = []
        for cluster in self.referential.clusters:
            starts.append(len(rows))
            rows.extend(self.obj_vectors.get(o) for o in cluster.members)
        self._members = _normalized_rows(np.vstack(rows)) if rows else np.zeros((0, self.obj_vectors.dims))
        self._starts = np.array(starts, dtype=np.int64)

    def _log_relatedness(self, object_id: str) -> np.ndarray:
        cached = self._rep_relatedness.get(object_id)
        if cached is None:
            cached = np.array(
                [math.log1p(leacock_sim(self.graph, rep, object_id)) for rep in self.referential.representatives]
            )
            self._rep_relatedness[object_id] = cached
        return cached

    def importance(self, text_objects: Sequence[str]) -> np.ndarray:
        distinct = sorted(set(text_objects))
        text_rows = _normalized_rows(np.vstack([self.obj_vectors.get(o) for o in distinct]))
        per_member = (text_rows @ self._members.T).max(axis=0)
        return np.clip(np.maximum.reduceat(per_member, self._starts), 0.0, 1.0)

    def relatedness(self, text_objects: Sequence[str]) -> np.ndarray:
        total = np.zeros(self.referential.k)
        for object_id in text_objects:
            total += self._log_relatedness(object_id)
        return total * (self.avg_no / len(text_objects))

    def vector(self, text_objects: Sequence[str], text_id: Optional[str] = None) -> KrVector:
        if not text_objects:
            logger.warning("Text %s has no objects; x^KR is the zero vector", text_id or "<unnamed>")
            return KrVector(values=np.zeros(self.referential.k), object_count=0)
        if self.avg_no == 0:
            return KrVector(values=np.zeros(self.referential.k), object_count=len(text_objects))
        values = self.importance(text_objects) * self.relatedness(text_objects)
        return KrVector(values=values, object_count=len(text_objects))


def build_kr_vector(
    text_objects: Sequence[str],
    ref: Referential,
    g: KnowledgeGraph,
    obj_vectors: EmbeddingTable,
    avg_no: float,
) -> KrVector:
    return RelationMapper(ref, g, obj_vectors, avg_no).vector(text_objects)


# -- persistence ---------------------------------------------------------------


def save_referential(ref: Referential, path: str | Path) -> None:
    lines = [
        f"{REFERENTIAL_FORMAT}\t{REFERENTIAL_VERSION}\n",
        f"k\t{ref.k}\n",
        f"strategy\t{ref.strategy}\n",
        f"dims\t{ref.dims}\n",
    ]
    for j, cluster in enumerate(ref.clusters):
        lines.append(f"cluster\t{j}\t{cluster.representative}\n")
        lines.append("members\t" + "\t".join(cluster.members) + "\n")
        lines.append(f"centroid\t{format_floats(cluster.centroid)}\n")
    write_text_atomic(path, "".join(lines))


def load_referential(path: str | Path) -> Referential:
    source = str(path)
    with open(path, encoding="utf-8") as fh:
        rows = [(number, line.split("\t")) for number, line in iter_data_lines(fh)]
    if not rows or rows[0][1][0] != REFERENTIAL_FORMAT:
        raise ParseError("not a referential file", line=rows[0][0] if rows else None, source=source)
    number, header = rows[0]
    if len(header) != 2 or header[1] != str(REFERENTIAL_VERSION):
        raise ParseError(f"unsupported referential version {header[1:]!r}", line=number, source=source)

    meta: dict[str, str] = {}
    clusters: list[TopicalCluster] = []
    pending: dict[str, object] = {}
    for number, parts in rows[1:]:
        tag = parts[0]
        if tag in {"k", "strategy", "dims"} and len(parts) == 2:
            meta[tag] = parts[1]
        elif tag == "cluster" and len(parts) == 3:
            pending = {"representative": parts[2]}
        elif tag == "members" and "representative" in pending:
            pending["members"] = parts[1:]
        elif tag == "centroid" and "members" in pending:
            centroid = parse_floats(parts[1] if len(parts) > 1 else "", line=number, source=source)
            clusters.append(TopicalCluster(centroid=centroid, **pending))  # type: ignore[arg-type]
            pending = {}
        else:
            raise ParseError(f"unexpected referential row {tag!r}", line=number, source=source)
    try:
        return Referential(k=int(meta["k"]), clusters=clusters, strategy=meta["strategy"], dims=int(meta["dims"]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"incomplete referential header ({exc})", source=source) from exc
