"""Documents, queries, concept annotations, relevance judgments and input vectors."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .config import FEATURE_SETS
from .embeddings import tokenize
from .errors import ConfigurationError, DimensionError, ParseError
from .kgraph import KnowledgeGraph
from .relmap import KrVector
from .store import format_floats, iter_data_lines, open_source, parse_floats, source_name, write_text_atomic

logger = logging.getLogger("relmap_ranker.corpus")

GRADES = (0, 1, 2)


@dataclass
class Corpus:
    documents: dict[str, list[str]] = field(default_factory=dict)
    queries: dict[str, list[str]] = field(default_factory=dict)
    annotations: dict[str, list[str]] = field(default_factory=dict)
    avg_no: float = 0.0

    def tokens(self, text_id: str) -> list[str]:
        if text_id in self.documents:
            return self.documents[text_id]
        return self.queries[text_id]

    def objects(self, text_id: str) -> list[str]:
        return self.annotations.get(text_id, [])

    def text_ids(self) -> list[str]:
        return sorted(self.documents) + sorted(self.queries)


def _read_records(source: str | Path | Iterable[str], kind: str, seen: Mapping[str, object]) -> dict[str, list[str]]:
    records: dict[str, list[str]] = {}
    with open_source(source) as lines:
        name = source_name(lines)
        for number, line in iter_data_lines(lines):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON record ({exc.msg})", line=number, source=name) from exc
            if not isinstance(record, dict) or not isinstance(record.get("id"), str) or not record["id"]:
                raise ParseError(f"{kind} record needs a non-empty string `id`", line=number, source=name)
            text = record.get("text", "")
            if not isinstance(text, str):
                raise ParseError(f"{kind} {record['id']!r}: `text` must be a string", line=number, source=name)
            text_id = record["id"]
            if text_id in records:
                raise ParseError(f"duplicate {kind} id {text_id!r}", line=number, source=name)
            if text_id in seen:
                raise ParseError(f"{kind} id {text_id!r} collides with a document id", line=number, source=name)
            tokens = tokenize(text)
            if not tokens:
                logger.warning("%s %r has empty text", kind.capitalize(), text_id)
            records[text_id] = tokens
    return records


def load_corpus(
    docs_source: str | Path | Iterable[str],
    queries_source: str | Path | Iterable[str],
) -> Corpus:
    """Load JSON-lines ``{"id": ..., "text": ...}`` records, tokenized."""
    documents = _read_records(docs_source, "document", {})
    queries = _read_records(queries_source, "query", documents)
    logger.info("Loaded corpus: %d documents, %d queries", len(documents), len(queries))
    return Corpus(documents=documents, queries=queries)


def document_frequencies(corpus: Corpus, include_queries: bool = False) -> dict[str, int]:
    """Number of distinct texts (documents, plus queries when asked) holding each object."""
    counts: dict[str, int] = {}
    ids = list(corpus.documents) + (list(corpus.queries) if include_queries else [])
    for text_id in ids:
        for object_id in set(corpus.objects(text_id)):
            counts[object_id] = counts.get(object_id, 0) + 1
    return counts


def average_object_count(corpus: Corpus, include_queries: bool = False) -> float:
    ids = list(corpus.documents) + (list(corpus.queries) if include_queries else [])
    if not ids:
        return 0.0
    return sum(len(corpus.objects(t)) for t in ids) / len(ids)


def load_annotations(
    source: str | Path | Iterable[str],
    corpus: Corpus,
    graph: Optional[KnowledgeGraph] = None,
    include_queries: bool = False,
) -> dict[str, list[str]]:
    """Read ``text-id<TAB>object-id`` rows into per-text object multisets.

    Fills ``corpus.annotations`` and ``corpus.avg_no`` and, when a graph is
    given, every ``ObjectNode.df``. Rows naming an unknown text or object are
    skipped with a warning.
    """
    annotations: dict[str, list[str]] = {}
    unknown_texts: set[str] = set()
    unknown_objects: set[str] = set()
    with open_source(source) as lines:
        name = source_name(lines)
        for number, line in iter_data_lines(lines):
            parts = [part.strip() for part in line.split("\t")]
            if len(parts) != 2 or not all(parts):
                raise ParseError("expected `text-id<TAB>object-id`", line=number, source=name)
            text_id, object_id = parts
            if text_id not in corpus.documents and text_id not in corpus.queries:
                unknown_texts.add(text_id)
                continue
            if graph is not None and object_id not in graph:
                unknown_objects.add(object_id)
                continue
            annotations.setdefault(text_id, []).append(object_id)
    if unknown_texts:
        logger.warning("Skipped annotations for %d unknown texts (e.g. %r)", len(unknown_texts), min(unknown_texts))
    if unknown_objects:
        logger.warning("Skipped annotations naming %d unknown objects (e.g. %r)", len(unknown_objects), min(unknown_objects))

    corpus.annotations = annotations
    corpus.avg_no = average_object_count(corpus, include_queries)
    if graph is not None:
        df = document_frequencies(corpus, include_queries)
        for object_id, node in graph.objects.items():
            node.df = df.get(object_id, 0)
    logger.info(
        "Loaded annotations for %d texts, avg objects per document %.3f",
        len(annotations), corpus.avg_no,
    )
    return annotations


@dataclass
class Qrels:
    judgments: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_query: dict[str, dict[str, int]] = {}
        for (query_id, doc_id), grade in self.judgments.items():
            if grade not in GRADES:
                raise ParseError(f"grade {grade!r} for ({query_id}, {doc_id}) outside {GRADES}")
            self._by_query.setdefault(query_id, {})[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> Optional[int]:
        return self.judgments.get((query_id, doc_id))

    def judged(self, query_id: str) -> dict[str, int]:
        return self._by_query.get(query_id, {})

    def relevant(self, query_id: str) -> list[str]:
        return sorted(d for d, g in self.judged(query_id).items() if g >= 1)

    def non_relevant(self, query_id: str) -> list[str]:
        return sorted(d for d, g in self.judged(query_id).items() if g == 0)

    def queries(self) -> list[str]:
        return sorted(self._by_query)


def load_qrels(source: str | Path | Iterable[str]) -> Qrels:
    """Read TREC qrels rows ``query-id 0 doc-id grade``."""
    judgments: dict[tuple[str, str], int] = {}
    with open_source(source) as lines:
        name = source_name(lines)
        for number, line in iter_data_lines(lines):
            parts = line.split()
            if len(parts) != 4:
                raise ParseError("expected `query-id 0 doc-id grade`", line=number, source=name)
            query_id, _, doc_id, raw_grade = parts
            try:
                grade = int(raw_grade)
            except ValueError as exc:
                raise ParseError(f"invalid grade {raw_grade!r}", line=number, source=name) from exc
            if grade not in GRADES:
                raise ParseError(f"grade {grade} outside {GRADES}", line=number, source=name)
            if (query_id, doc_id) in judgments:
                raise ParseError(f"duplicate judgment for ({query_id}, {doc_id})", line=number, source=name)
            judgments[(query_id, doc_id)] = grade
    return Qrels(judgments=judgments)


@dataclass(frozen=True)
class TrainingInstance:
    query_id: str
    positive: str
    negatives: tuple[str, ...]
    unjudged_negatives: tuple[str, ...] = ()


def sample_training_instances(
    qrels: Qrels,
    candidates: Mapping[str, Sequence[str]],
    n: int,
    seed: int,
    queries: Optional[Iterable[str]] = None,
) -> list[TrainingInstance]:
    """One instance per relevant (query, document) pair, with n sampled negatives.

    Negatives come from the query's grade-0 judgments; when those run short
    the remainder is drawn from candidates the qrels do not judge, and those
    picks are listed in ``unjudged_negatives``.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    selected = qrels.queries() if queries is None else sorted(set(queries))
    instances: list[TrainingInstance] = []
    for query_id in selected:
        judged = qrels.judged(query_id)
        pool = qrels.non_relevant(query_id)
        extra = sorted({d for d in candidates.get(query_id, ()) if d not in judged})
        for positive in qrels.relevant(query_id):
            if len(pool) + len(extra) < n:
                logger.warning(
                    "Skipping instance (%s, %s): only %d possible negatives for n=%d",
                    query_id, positive, len(pool) + len(extra), n,
                )
                continue
            if len(pool) >= n:
                judged_negs = [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]
                unjudged: list[str] = []
            else:
                judged_negs = [pool[i] for i in rng.permutation(len(pool))]
                unjudged = [extra[i] for i in rng.choice(len(extra), size=n - len(pool), replace=False)]
            instances.append(
                TrainingInstance(
                    query_id=query_id,
                    positive=positive,
                    negatives=tuple(judged_negs + unjudged),
                    unjudged_negatives=tuple(unjudged),
                )
            )
    logger.debug("Sampled %d training instances over %d queries", len(instances), len(selected))
    return instances


def split_folds(query_ids: Iterable[str], folds: int, seed: int) -> list[list[str]]:
    """Random partition into ``folds`` groups whose sizes differ by at most one."""
    ids = sorted(set(query_ids))
    if folds < 2:
        raise ConfigurationError("folds must be >= 2")
    if folds > len(ids):
        raise ConfigurationError(f"cannot split {len(ids)} queries into {folds} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    return [sorted(ids[i] for i in part) for part in np.array_split(order, folds)]


@dataclass
class InputVector:
    x_t: np.ndarray
    x_kr: np.ndarray

    def __post_init__(self) -> None:
        self.x_t = np.asarray(self.x_t, dtype=np.float64)
        self.x_kr = np.asarray(self.x_kr, dtype=np.float64)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate((self.x_t, self.x_kr))

    def __len__(self) -> int:
        return int(self.x_t.size + self.x_kr.size)

    def features(self, feature_set: str = "kr+p2v") -> np.ndarray:
        if feature_set == "kr+p2v":
            return self.values
        if feature_set == "kr":
            return self.x_kr.copy()
        if feature_set == "p2v":
            return self.x_t.copy()
        raise ConfigurationError(f"Invalid feature set: {feature_set} (expected one of {', '.join(FEATURE_SETS)})")


def build_input_vector(x_t: np.ndarray, x_kr: KrVector | np.ndarray) -> InputVector:
    values = x_kr.values if isinstance(x_kr, KrVector) else x_kr
    return InputVector(x_t=np.array(x_t, dtype=np.float64), x_kr=np.array(values, dtype=np.float64))


@dataclass
class VectorStore:
    """Input vectors of every text, keyed by document or query id."""

    dims: int
    k: int
    vectors: dict[str, InputVector] = field(default_factory=dict)

    def add(self, text_id: str, vec: InputVector) -> None:
        if vec.x_t.size != self.dims or vec.x_kr.size != self.k:
            raise DimensionError(
                f"vector {text_id!r} has parts ({vec.x_t.size}, {vec.x_kr.size}), expected ({self.dims}, {self.k})"
            )
        self.vectors[text_id] = vec

    def get(self, text_id: str) -> Optional[InputVector]:
        return self.vectors.get(text_id)

    def __contains__(self, text_id: object) -> bool:
        return text_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def input_dim(self, feature_set: str = "kr+p2v") -> int:
        return {"kr+p2v": self.dims + self.k, "kr": self.k, "p2v": self.dims}[feature_set]


def save_vectors(store: VectorStore, path: str | Path) -> None:
    lines = [f"# dims={store.dims} k={store.k}\n"]
    for text_id in sorted(store.vectors):
        vec = store.vectors[text_id]
        lines.append(f"{text_id}\t{format_floats(vec.x_t)}\t{format_floats(vec.x_kr)}\n")
    write_text_atomic(path, "".join(lines))


def load_vectors(path: str | Path) -> VectorStore:
    store: Optional[VectorStore] = None
    source = str(path)
    with open(path, encoding="utf-8") as fh:
        for number, line in iter_data_lines(fh):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected `text-id<TAB>x_t<TAB>x_kr`", line=number, source=source)
            x_t = parse_floats(parts[1], line=number, source=source)
            x_kr = parse_floats(parts[2], line=number, source=source)
            if store is None:
                store = VectorStore(dims=x_t.size, k=x_kr.size)
            try:
                store.add(parts[0], InputVector(x_t=x_t, x_kr=x_kr))
            except DimensionError as exc:
                raise ParseError(str(exc), line=number, source=source) from exc
    if store is None:
        raise ParseError("vector store is empty", source=source)
    return store
