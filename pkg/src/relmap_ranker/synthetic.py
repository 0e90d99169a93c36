"""Desk-scale synthetic experiment: IS-A trees, corpus, annotations, qrels, config.

Topical objects form root -> topic -> subtopic -> leaf. A second tree holds
general concepts (general -> g00..g49) that every document mentions a few
of regardless of its subject, so the collection's most frequent objects are
generic, not topical. Every document is written about one subtopic (its leaf
words, the subtopic word, sometimes the topic word) plus general-concept
words and shared filler words, and is annotated with the leaves and general
concepts it mentions. Queries target one subtopic each; documents of that
subtopic are highly relevant.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import STAGE_SEED_OFFSETS
from .errors import ConfigurationError
from .store import write_text_atomic

logger = logging.getLogger("relmap_ranker.synthetic")

N_TOPICS = 8
N_SUBTOPICS = 5
N_LEAVES = 9
N_FILLER = 50
N_GENERAL = 50
GENERAL_PER_DOC = 5

FIXTURE_SETTINGS = {
    "dims": 50,
    "embedding_epochs": 15,
    "k": 40,
    "strategy": "centroid",
    "dropout": 0.0,
    "average_negatives": "true",
    "epochs": 30,
    "top_candidates": 100,
    "top_rerank": 100,
    "analysis_k_values": "20,40",
    "n_pivots": 30,
    "neighborhood": 5,
}


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    nodes: Path
    edges: Path
    docs: Path
    queries: Path
    annotations: Path
    qrels: Path
    config: Path


def _topic(t: int) -> str:
    return f"t{t}"


def _subtopic(t: int, s: int) -> str:
    return f"t{t}s{s}"


def _leaf(t: int, s: int, l: int) -> str:
    return f"t{t}s{s}l{l}"


def _general(j: int) -> str:
    return f"g{j:02d}"


def _words(object_id: str) -> str:
    # Object ids double as their label's head word.
    return f"w{object_id}"


def _graph_rows() -> tuple[list[str], list[str]]:
    nodes = ["root\tentity\n"]
    edges = []
    for t in range(N_TOPICS):
        topic = _topic(t)
        nodes.append(f"{topic}\t{_words(topic)}\n")
        edges.append(f"{topic}\troot\tIS-A\n")
        for s in range(N_SUBTOPICS):
            sub = _subtopic(t, s)
            nodes.append(f"{sub}\t{_words(sub)} {_words(topic)}\n")
            edges.append(f"{sub}\t{topic}\tIS-A\n")
            for l in range(N_LEAVES):
                leaf = _leaf(t, s, l)
                nodes.append(f"{leaf}\t{_words(leaf)} {_words(sub)}\n")
                edges.append(f"{leaf}\t{sub}\tIS-A\n")
        # Off-relation edges the IS-A filter must drop.
        edges.append(f"{_leaf(t, 0, 0)}\t{_topic((t + 1) % N_TOPICS)}\tPART-OF\n")
    nodes.append("general\tgeneral concept\n")
    for j in range(N_GENERAL):
        nodes.append(f"{_general(j)}\t{_words(_general(j))} general\n")
        edges.append(f"{_general(j)}\tgeneral\tIS-A\n")
    return nodes, edges


def generate_fixture(
    output_dir: str | Path,
    n_docs: int = 300,
    n_queries: int = 30,
    seed: int = 42,
    random_negatives: int = 5,
) -> FixturePaths:
    """Write the synthetic experiment under ``output_dir`` and return its paths.

    ``seed`` is the experiment seed written into the config; the fixture
    itself draws from that seed's ``fixture`` stream.
    """
    n_subtopics = N_TOPICS * N_SUBTOPICS
    if n_queries > n_subtopics:
        raise ConfigurationError(f"at most {n_subtopics} queries (one per subtopic)")
    if n_docs < 2 * n_subtopics:
        raise ConfigurationError(f"need at least {2 * n_subtopics} documents")

    root = Path(output_dir)
    rng = np.random.default_rng(seed + STAGE_SEED_OFFSETS["fixture"])
    paths = FixturePaths(
        root=root,
        nodes=root / "nodes.tsv",
        edges=root / "edges.tsv",
        docs=root / "docs.jsonl",
        queries=root / "queries.jsonl",
        annotations=root / "annotations.tsv",
        qrels=root / "qrels.txt",
        config=root / "experiment.conf",
    )

    nodes, edges = _graph_rows()
    filler = [f"filler{i}" for i in range(N_FILLER)]

    docs: list[tuple[str, int, int, list[str], list[str]]] = []
    for i in range(n_docs):
        t, s = divmod(i % n_subtopics, N_SUBTOPICS)
        picked = sorted(int(l) for l in rng.choice(N_LEAVES, size=int(rng.integers(3, 7)), replace=False))
        objects = [_leaf(t, s, l) for l in picked]
        words = []
        for object_id in objects:
            words += [_words(object_id)] * int(rng.integers(1, 4))
        words += [_words(_subtopic(t, s))] * int(rng.integers(2, 4))
        if rng.random() < 0.7:
            words.append(_words(_topic(t)))
        if rng.random() < 0.3:
            sibling = int((s + rng.integers(1, N_SUBTOPICS)) % N_SUBTOPICS)
            cross = _leaf(t, sibling, int(rng.integers(0, N_LEAVES)))
            objects.append(cross)
            words.append(_words(cross))
        for j in sorted(int(x) for x in rng.choice(N_GENERAL, size=GENERAL_PER_DOC, replace=False)):
            objects.append(_general(j))
            words += [_words(_general(j))] * int(rng.integers(1, 3))
        words += [filler[j] for j in rng.choice(N_FILLER, size=int(rng.integers(8, 15)))]
        words = [words[j] for j in rng.permutation(len(words))]
        docs.append((f"d{i:03d}", t, s, objects, words))

    targets = sorted(int(x) for x in rng.choice(n_subtopics, size=n_queries, replace=False))
    queries: list[tuple[str, int, int, list[str], list[str]]] = []
    for n, target in enumerate(targets):
        t, s = divmod(target, N_SUBTOPICS)
        leaves = [_leaf(t, s, int(l)) for l in sorted(rng.choice(N_LEAVES, size=2, replace=False))]
        objects = [_subtopic(t, s), *leaves]
        words = [_words(_subtopic(t, s)), *(_words(o) for o in leaves), _words(_topic(t)), filler[int(rng.integers(0, N_FILLER))]]
        queries.append((f"q{n:02d}", t, s, objects, words))

    qrels: list[str] = []
    for query_id, t, s, q_objects, _ in queries:
        wanted = set(q_objects)
        for doc_id, dt, ds, d_objects, _ in docs:
            if dt != t:
                continue
            if ds == s:
                grade = 2
            elif wanted.intersection(d_objects):
                grade = 1
            else:
                grade = 0
            qrels.append(f"{query_id} 0 {doc_id} {grade}\n")
        others = [d[0] for d in docs if d[1] != t]
        for j in sorted(rng.choice(len(others), size=min(random_negatives, len(others)), replace=False)):
            qrels.append(f"{query_id} 0 {others[j]} 0\n")

    write_text_atomic(paths.nodes, "".join(nodes))
    write_text_atomic(paths.edges, "".join(edges))
    write_text_atomic(paths.docs, "".join(json.dumps({"id": d[0], "text": " ".join(d[4])}) + "\n" for d in docs))
    write_text_atomic(paths.queries, "".join(json.dumps({"id": q[0], "text": " ".join(q[4])}) + "\n" for q in queries))
    annotation_rows = [f"{text_id}\t{o}\n" for text_id, _, _, objects, _ in docs + queries for o in objects]
    write_text_atomic(paths.annotations, "".join(annotation_rows))
    write_text_atomic(paths.qrels, "".join(qrels))

    config_lines = [
        "# Synthetic desk-scale experiment",
        f"nodes_path = {paths.nodes.name}",
        f"edges_path = {paths.edges.name}",
        f"docs_path = {paths.docs.name}",
        f"queries_path = {paths.queries.name}",
        f"annotations_path = {paths.annotations.name}",
        f"qrels_path = {paths.qrels.name}",
        f"seed = {seed}",
    ]
    config_lines += [f"{key} = {value}" for key, value in FIXTURE_SETTINGS.items()]
    write_text_atomic(paths.config, "\n".join(config_lines) + "\n")
    logger.info(
        "Wrote synthetic fixture to %s: %d objects, %d documents, %d queries, %d judgments",
        root, len(nodes), len(docs), len(queries), len(qrels),
    )
    return paths
