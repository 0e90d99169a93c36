"""BM25 candidates, siamese re-ranking, MAP, cross-validation and query difficulty."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .corpus import Corpus, Qrels, VectorStore, sample_training_instances, split_folds
from .errors import ConfigurationError, ParseError
from .net import LossHistory, SiameseParams, TrainConfig, init_params, score_candidates, train
from .relmap import kmeans
from .store import iter_data_lines, write_text_atomic

logger = logging.getLogger("relmap_ranker.retrieval")

Ranking = list[tuple[str, float]]
Run = dict[str, Ranking]

DIFFICULTY_CLASSES = ("easy", "medium", "difficult")


def _ordered(scored: Mapping[str, float] | Sequence[tuple[str, float]]) -> Ranking:
    items = scored.items() if isinstance(scored, Mapping) else scored
    return sorted(((doc, float(s)) for doc, s in items), key=lambda item: (-item[1], item[0]))


# -- BM25 ------------------------------------------------------------------------


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_lengths: dict[str, int] = field(default_factory=dict)
    avg_dl: float = 0.0
    N: int = 0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def build_index(corpus: Corpus | Mapping[str, Sequence[str]]) -> InvertedIndex:
    """Postings of term frequencies over the (already tokenized) documents."""
    documents = corpus.documents if isinstance(corpus, Corpus) else corpus
    if not documents:
        raise ConfigurationError("cannot index an empty document set")
    postings: dict[str, list[tuple[str, int]]] = {}
    lengths: dict[str, int] = {}
    for doc_id in sorted(documents):
        tokens = documents[doc_id]
        lengths[doc_id] = len(tokens)
        tf: dict[str, int] = {}
        for token in tokens:
            tf[token] = tf.get(token, 0) + 1
        for term in sorted(tf):
            postings.setdefault(term, []).append((doc_id, tf[term]))
    N = len(lengths)
    return InvertedIndex(postings=postings, doc_lengths=lengths, avg_dl=sum(lengths.values()) / N, N=N)


def bm25_rank(
    index: InvertedIndex,
    query_tokens: Sequence[str],
    top: int = 2000,
    k1: float = 1.2,
    b: float = 0.75,
) -> Ranking:
    """Okapi BM25 over the distinct query terms; best ``top`` documents."""
    if top < 1:
        raise ConfigurationError("top must be >= 1")
    terms = sorted({t for t in query_tokens if t in index.postings})
    if not terms:
        logger.warning("Query has no indexed terms; BM25 ranking is empty")
        return []
    scores: dict[str, float] = {}
    avg_dl = index.avg_dl if index.avg_dl > 0 else 1.0
    for term in terms:
        plist = index.postings[term]
        df = len(plist)
        idf = math.log((index.N - df + 0.5) / (df + 0.5) + 1.0)
        for doc_id, tf in sorted(plist):
            norm = k1 * (1.0 - b + b * index.doc_lengths[doc_id] / avg_dl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
    return _ordered(scores)[:top]


def bm25_candidates(
    index: InvertedIndex,
    queries: Mapping[str, Sequence[str]],
    top: int = 2000,
    k1: float = 1.2,
    b: float = 0.75,
) -> Run:
    run: Run = {}
    for query_id in sorted(queries):
        run[query_id] = bm25_rank(index, queries[query_id], top=top, k1=k1, b=b)
    return run


# -- re-ranking ----------------------------------------------------------------


def rerank(
    model: Optional[SiameseParams],
    query_id: str,
    candidates: Sequence[str],
    vectors: VectorStore,
    top: int = 1000,
) -> Ranking:
    """Order candidates by siamese score; those without vectors score 0."""
    if model is None:
        raise ConfigurationError(f"no trained model for query {query_id!r}")
    docs = list(dict.fromkeys(candidates))
    query_vec = vectors.get(query_id)
    scores = np.zeros(len(docs))
    if query_vec is None:
        logger.warning("Query %r has no input vector; all candidates score 0", query_id)
    else:
        present = [i for i, d in enumerate(docs) if d in vectors]
        missing = len(docs) - len(present)
        if missing:
            logger.warning("Query %r: %d candidates have no input vector and score 0", query_id, missing)
        if present:
            rows = np.vstack([vectors.get(docs[i]).features(model.features) for i in present])
            scores[present] = score_candidates(model, query_vec, rows)
    return _ordered(list(zip(docs, scores.tolist())))[:top]


def random_rerank(run: Mapping[str, Ranking], seed: int, top: int = 1000) -> Run:
    """Random permutation of every query's candidates, scored by reversed rank."""
    rng = np.random.default_rng(seed)
    out: Run = {}
    for query_id in sorted(run):
        docs = [doc for doc, _ in run[query_id]]
        order = rng.permutation(len(docs))
        shuffled = [docs[i] for i in order][:top]
        out[query_id] = [(doc, float(len(shuffled) - rank)) for rank, doc in enumerate(shuffled)]
    return out


# -- run files -------------------------------------------------------------------


def write_run(run: Mapping[str, Ranking], path: str | Path, tag: str = "relmap") -> None:
    """TREC run format ``query-id Q0 doc-id rank score tag``."""
    lines = []
    for query_id in sorted(run):
        for rank, (doc_id, value) in enumerate(run[query_id], start=1):
            lines.append(f"{query_id} Q0 {doc_id} {rank} {value:.6f} {tag}\n")
    write_text_atomic(path, "".join(lines))


def read_run(path: str | Path) -> Run:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in iter_data_lines(fh):
            parts = line.split()
            if len(parts) != 6:
                raise ParseError("expected `query-id Q0 doc-id rank score tag`", line=number, source=str(path))
            try:
                rows.setdefault(parts[0], []).append((int(parts[3]), parts[2], float(parts[4])))
            except ValueError as exc:
                raise ParseError(f"invalid rank or score ({exc})", line=number, source=str(path)) from exc
    return {q: [(doc, value) for _, doc, value in sorted(entries)] for q, entries in rows.items()}


# -- evaluation ----------------------------------------------------------------


def average_precision(ranking: Sequence[str] | Ranking, qrels: Qrels, query_id: str) -> float:
    """Mean of precision@r over the ranks r holding a relevant (grade >= 1) document.

    Divides by the number of relevant judgments, so relevant documents
    missing from the ranking count as zeros. Unjudged documents are
    non-relevant.
    """
    relevant = set(qrels.relevant(query_id))
    if not relevant:
        raise ConfigurationError(f"query {query_id!r} has no relevant judgments")
    hits = 0
    total = 0.0
    for rank, entry in enumerate(ranking, start=1):
        doc_id = entry[0] if isinstance(entry, tuple) else entry
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def per_query_average_precision(run: Mapping[str, Ranking], qrels: Qrels) -> dict[str, float]:
    """AP for every run query that has at least one relevant judgment."""
    out: dict[str, float] = {}
    skipped = []
    for query_id in sorted(run):
        if not qrels.relevant(query_id):
            skipped.append(query_id)
            continue
        out[query_id] = average_precision(run[query_id], qrels, query_id)
    if skipped:
        logger.warning("Excluded %d queries without relevant judgments from MAP (e.g. %r)", len(skipped), skipped[0])
    return out


def mean_average_precision(run: Mapping[str, Ranking], qrels: Qrels) -> float:
    per_query = per_query_average_precision(run, qrels)
    if not per_query:
        logger.warning("No judged queries in run; MAP is 0")
        return 0.0
    return float(sum(per_query.values()) / len(per_query))


# -- cross-validation ----------------------------------------------------------


@dataclass
class FoldModel:
    fold: int
    params: SiameseParams
    history: LossHistory
    train_queries: list[str]
    instances: int
    validation_queries: list[str] = field(default_factory=list)


@dataclass
class CrossValidationResult:
    folds: list[list[str]]
    models: list[FoldModel]
    run: Run
    fold_maps: list[float]

    @property
    def mean_map(self) -> float:
        return float(np.mean(self.fold_maps)) if self.fold_maps else 0.0


def judged_queries(corpus: Corpus, qrels: Qrels) -> list[str]:
    return sorted(q for q in corpus.queries if qrels.relevant(q))


def split_validation(train_queries: Sequence[str], qrels: Qrels, fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Hold a seeded share of the training queries out for epoch selection.

    Only queries with a relevant judgment can be held out, and at least one
    query always stays in the fit set. Returns (fit, validation), both sorted.
    """
    eligible = sorted(q for q in train_queries if qrels.relevant(q))
    n = int(round(len(train_queries) * fraction))
    if fraction > 0:
        n = max(n, 1)
    n = min(n, len(eligible), len(train_queries) - 1)
    if n <= 0:
        return sorted(train_queries), []
    rng = np.random.default_rng(seed)
    held = {eligible[j] for j in rng.permutation(len(eligible))[:n]}
    return sorted(q for q in train_queries if q not in held), sorted(held)


def _validation_map(
    queries: Sequence[str],
    candidate_ids: Mapping[str, list[str]],
    vectors: VectorStore,
    qrels: Qrels,
    top: int,
) -> Callable[[SiameseParams], float]:
    def score_params(p: SiameseParams) -> float:
        run = {q: rerank(p, q, candidate_ids.get(q, []), vectors, top=top) for q in queries}
        return mean_average_precision(run, qrels)

    return score_params


def train_folds(
    qrels: Qrels,
    vectors: VectorStore,
    candidates: Mapping[str, Ranking],
    folds: Sequence[Sequence[str]],
    cfg: ExperimentConfig,
    feature_set: Optional[str] = None,
) -> list[FoldModel]:
    """Train one model per fold on the instances of the other folds' queries.

    A ``validation_fraction`` share of those queries is kept out of sampling;
    their MAP after each epoch picks the weights the fold keeps.
    """
    features = feature_set or cfg.features
    candidate_ids = {q: [doc for doc, _ in ranking] for q, ranking in candidates.items()}
    models = []
    for i, test_queries in enumerate(folds):
        held_out = set(test_queries)
        train_queries = sorted(q for fold in folds for q in fold if q not in held_out)
        fit_queries, validation_queries = split_validation(
            train_queries, qrels, cfg.validation_fraction, cfg.stage_seed("validation", i)
        )
        instances = sample_training_instances(
            qrels, candidate_ids, cfg.negatives, seed=cfg.stage_seed("sampling", i), queries=fit_queries
        )
        if not instances:
            raise ConfigurationError(f"fold {i}: no training instances could be sampled")
        params = init_params(
            vectors.input_dim(features),
            cfg.stage_seed("init", i),
            hidden_sizes=cfg.hidden_sizes,
            output_size=cfg.output_size,
            features=features,
        )
        logger.info(
            "Fold %d/%d: %d training queries (%d for validation), %d instances",
            i + 1, len(folds), len(train_queries), len(validation_queries), len(instances),
        )
        validate = None
        if validation_queries:
            validate = _validation_map(validation_queries, candidate_ids, vectors, qrels, cfg.top_rerank)
        trained, history = train(params, instances, vectors, TrainConfig.from_experiment(cfg, i), validate=validate)
        models.append(FoldModel(i, trained, history, train_queries, len(instances), validation_queries))
    return models


def evaluate_folds(
    models: Sequence[SiameseParams],
    folds: Sequence[Sequence[str]],
    candidates: Mapping[str, Ranking],
    vectors: VectorStore,
    qrels: Qrels,
    top: int = 1000,
) -> tuple[Run, list[float]]:
    """Re-rank each held-out fold with its model; returns the joint run and fold MAPs."""
    if len(models) != len(folds):
        raise ConfigurationError(f"{len(models)} models for {len(folds)} folds")
    run: Run = {}
    fold_maps = []
    for i, (params, queries) in enumerate(zip(models, folds)):
        fold_run = {
            q: rerank(params, q, [doc for doc, _ in candidates.get(q, [])], vectors, top=top)
            for q in sorted(queries)
        }
        fold_maps.append(mean_average_precision(fold_run, qrels))
        logger.info("Fold %d/%d: MAP %.4f", i + 1, len(folds), fold_maps[-1])
        run.update(fold_run)
    return run, fold_maps


def cross_validate(
    corpus: Corpus,
    qrels: Qrels,
    vectors: VectorStore,
    candidates: Mapping[str, Ranking],
    cfg: ExperimentConfig,
    feature_set: Optional[str] = None,
) -> CrossValidationResult:
    """Split judged queries into ``cfg.folds`` folds, train on k-1, test on the rest."""
    folds = split_folds(judged_queries(corpus, qrels), cfg.folds, cfg.stage_seed("folds"))
    models = train_folds(qrels, vectors, candidates, folds, cfg, feature_set)
    run, fold_maps = evaluate_folds([m.params for m in models], folds, candidates, vectors, qrels, cfg.top_rerank)
    result = CrossValidationResult(folds=folds, models=models, run=run, fold_maps=fold_maps)
    logger.info("Cross-validated MAP over %d folds: %.4f", len(folds), result.mean_map)
    return result


# -- query difficulty ----------------------------------------------------------


@dataclass
class DifficultyClassRow:
    label: str
    queries: int
    mean_words: float
    mean_objects: float
    baseline_map: float
    model_map: Optional[float]

    @property
    def change_percent(self) -> Optional[float]:
        """MAP-relative change of the model over the baseline, per class."""
        if self.model_map is None or self.baseline_map == 0:
            return None
        return (self.model_map - self.baseline_map) / self.baseline_map * 100.0


@dataclass
class DifficultyReport:
    per_query: dict[str, tuple[float, str]]
    classes: list[DifficultyClassRow]
    degenerate: bool = False


def classify_query_difficulty(
    baseline_ap: Mapping[str, float],
    seed: int,
    model_ap: Optional[Mapping[str, float]] = None,
    corpus: Optional[Corpus] = None,
) -> DifficultyReport:
    """Three-way 1-D k-means over baseline AP; highest centroid is ``easy``."""
    queries = sorted(baseline_ap)
    if len(queries) < 3:
        raise ConfigurationError(f"difficulty classification needs >= 3 queries, got {len(queries)}")
    values = np.array([baseline_ap[q] for q in queries], dtype=np.float64)
    distinct = np.unique(values)

    degenerate = distinct.size < 3
    if degenerate:
        logger.warning("Only %d distinct AP values; classes assigned by value order", distinct.size)
        labels_by_value = {float(distinct[-1]): "easy"}
        if distinct.size == 2:
            labels_by_value[float(distinct[0])] = "difficult"
        labels = [labels_by_value[float(v)] for v in values]
    else:
        assignments, centroids = kmeans(values[:, None], 3, seed=seed)
        order = np.argsort(-centroids[:, 0], kind="stable")
        name = {int(cluster): DIFFICULTY_CLASSES[rank] for rank, cluster in enumerate(order)}
        labels = [name[int(a)] for a in assignments]

    per_query = {q: (float(v), label) for q, v, label in zip(queries, values, labels)}
    rows = []
    for label in DIFFICULTY_CLASSES:
        members = [q for q in queries if per_query[q][1] == label]
        if not members:
            continue
        words = [len(corpus.queries.get(q, [])) for q in members] if corpus else [0]
        objects = [len(corpus.objects(q)) for q in members] if corpus else [0]
        model = None
        if model_ap is not None:
            model = float(np.mean([model_ap.get(q, 0.0) for q in members]))
        rows.append(
            DifficultyClassRow(
                label=label,
                queries=len(members),
                mean_words=float(np.mean(words)),
                mean_objects=float(np.mean(objects)),
                baseline_map=float(np.mean([baseline_ap[q] for q in members])),
                model_map=model,
            )
        )
    return DifficultyReport(per_query=per_query, classes=rows, degenerate=degenerate)
