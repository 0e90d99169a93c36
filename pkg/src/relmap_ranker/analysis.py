"""Representation-quality experiments and report tables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Corpus, VectorStore, document_frequencies
from .embeddings import cosine
from .errors import ConfigurationError
from .kgraph import KnowledgeGraph, max_leacock, relatedness_matrix
from .net import SiameseParams, score
from .retrieval import DifficultyReport
from .store import write_text_atomic

logger = logging.getLogger("relmap_ranker.analysis")

LDA_NOTE = "LDA comparison row omitted: no topic-model baseline is implemented."


# -- Corley similarity ---------------------------------------------------------


def idf_weights(df: Mapping[str, int], n_docs: int) -> dict[str, float]:
    """ln(N / df) for every object with df >= 1."""
    return {o: math.log(n_docs / c) for o, c in df.items() if c >= 1}


def _directional(sub: np.ndarray, weights: np.ndarray, axis: int) -> float:
    best = sub.max(axis=axis)
    total = weights.sum()
    if total <= 0:
        return float(best.mean())
    return float((weights * best).sum() / total)


def _corley_from_block(block: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> float:
    value = 0.5 * (_directional(block, wa, 1) + _directional(block, wb, 0))
    return float(min(1.0, max(0.0, value)))


def corley_sim(
    objs_a: Sequence[str],
    objs_b: Sequence[str],
    g: KnowledgeGraph,
    idf: Mapping[str, float],
) -> float:
    """Symmetric idf-weighted greedy matching of two object sets.

    For every object of one side take its best Leacock relatedness to the
    other side (divided by the largest attainable value), average with idf
    weights, then average the two directions.
    """
    a = sorted(set(objs_a))
    b = sorted(set(objs_b))
    if not a or not b:
        raise ConfigurationError("corley_sim needs two non-empty object lists")
    union = sorted(set(a) | set(b))
    index = {o: i for i, o in enumerate(union)}
    rel = relatedness_matrix(g, union) / max_leacock(g)
    block = rel[np.ix_([index[o] for o in a], [index[o] for o in b])]
    wa = np.array([idf.get(o, 0.0) for o in a])
    wb = np.array([idf.get(o, 0.0) for o in b])
    return _corley_from_block(block, wa, wb)


class CorleyScorer:
    """Corley similarity between annotated texts over one shared relatedness matrix."""

    def __init__(self, g: KnowledgeGraph, corpus: Corpus, idf: Mapping[str, float], text_ids: Sequence[str]):
        objects = sorted({o for t in text_ids for o in corpus.objects(t)})
        self._index = {o: i for i, o in enumerate(objects)}
        g.warm_up(objects)
        self._rel = relatedness_matrix(g, objects) / max_leacock(g)
        self._idf = np.array([idf.get(o, 0.0) for o in objects])
        self._rows = {t: np.array([self._index[o] for o in sorted(set(corpus.objects(t)))]) for t in text_ids}

    def __call__(self, a: str, b: str) -> float:
        ia, ib = self._rows[a], self._rows[b]
        return _corley_from_block(self._rel[np.ix_(ia, ib)], self._idf[ia], self._idf[ib])


# -- pivot experiment ----------------------------------------------------------


@dataclass
class RepresentationBuilder:
    label: str
    k: int
    strategy: str
    vector: Callable[[str], np.ndarray]


@dataclass
class SeparationRow:
    label: str
    k: int
    strategy: str
    top_mean: float
    less_mean: float

    @property
    def diff(self) -> float:
        return self.top_mean - self.less_mean


@dataclass
class SeparationReport:
    rows: list[SeparationRow]
    pivots: int
    neighborhood: int
    seed: int
    pivot_ids: list[str] = field(default_factory=list)


def pivotal_experiment(
    repr_builders: Sequence[RepresentationBuilder],
    corpus: Corpus,
    g: KnowledgeGraph,
    n_pivots: int = 100,
    neighborhood: int = 10,
    seed: int = 0,
    idf: Optional[Mapping[str, float]] = None,
) -> SeparationReport:
    """Mean x^KR cosine of pivots to their most and least Corley-similar documents.

    Only annotated documents take part, as pivots and as neighbors. Neighbors
    are ranked by (-similarity, doc-id); the first ``neighborhood`` form the
    similar set, the last ``neighborhood`` the dissimilar set.
    """
    annotated = sorted(d for d in corpus.documents if corpus.objects(d))
    if len(annotated) <= 2 * neighborhood + 1:
        raise ConfigurationError(
            f"pivot experiment needs more than {2 * neighborhood + 1} annotated documents, found {len(annotated)}"
        )
    if idf is None:
        idf = idf_weights(document_frequencies(corpus), len(corpus.documents))
    if n_pivots > len(annotated):
        logger.warning("Requested %d pivots but only %d annotated documents; using all", n_pivots, len(annotated))
        n_pivots = len(annotated)

    rng = np.random.default_rng(seed)
    pivots = sorted(annotated[i] for i in rng.choice(len(annotated), size=n_pivots, replace=False))
    corley = CorleyScorer(g, corpus, idf, annotated)
    cache: dict[tuple[int, str], np.ndarray] = {}

    def vec(b: int, text_id: str) -> np.ndarray:
        key = (b, text_id)
        if key not in cache:
            cache[key] = repr_builders[b].vector(text_id)
        return cache[key]

    top_sums = np.zeros(len(repr_builders))
    less_sums = np.zeros(len(repr_builders))
    for number, pivot in enumerate(pivots, start=1):
        ranked = sorted(((corley(pivot, d), d) for d in annotated if d != pivot), key=lambda item: (-item[0], item[1]))
        similar = [d for _, d in ranked[:neighborhood]]
        dissimilar = [d for _, d in ranked[-neighborhood:]]
        for b in range(len(repr_builders)):
            top_sums[b] += np.mean([cosine(vec(b, pivot), vec(b, d)) for d in similar])
            less_sums[b] += np.mean([cosine(vec(b, pivot), vec(b, d)) for d in dissimilar])
        if number % 25 == 0:
            logger.debug("Pivot experiment: %d/%d pivots done", number, len(pivots))

    rows = [
        SeparationRow(
            label=builder.label,
            k=builder.k,
            strategy=builder.strategy,
            top_mean=float(top_sums[b] / len(pivots)),
            less_mean=float(less_sums[b] / len(pivots)),
        )
        for b, builder in enumerate(repr_builders)
    ]
    return SeparationReport(rows=rows, pivots=len(pivots), neighborhood=neighborhood, seed=seed, pivot_ids=pivots)


# -- input / output similarity -------------------------------------------------


@dataclass
class IoSimilarityReport:
    pairs: int
    input_mean: float
    output_mean: float

    @property
    def improvement(self) -> Optional[float]:
        if self.input_mean == 0:
            return None
        return (self.output_mean - self.input_mean) / abs(self.input_mean)


def io_similarity_report(
    model: SiameseParams,
    pairs: Sequence[tuple[str, str]],
    vectors: VectorStore,
) -> IoSimilarityReport:
    """Mean query-document cosine of the raw input vectors vs. the latent vectors."""
    inputs = []
    outputs = []
    skipped = 0
    for query_id, doc_id in pairs:
        q = vectors.get(query_id)
        d = vectors.get(doc_id)
        if q is None or d is None:
            skipped += 1
            continue
        inputs.append(cosine(q.features(model.features), d.features(model.features)))
        outputs.append(score(model, q, d))
    if skipped:
        logger.warning("Skipped %d relevant pairs without input vectors", skipped)
    if not inputs:
        raise ConfigurationError("io_similarity_report needs at least one relevant pair with vectors")
    return IoSimilarityReport(pairs=len(inputs), input_mean=float(np.mean(inputs)), output_mean=float(np.mean(outputs)))


# -- report tables ---------------------------------------------------------------


@dataclass
class EffectivenessRow:
    label: str
    map: float
    change_percent: Optional[float]


def effectiveness_report(maps: Mapping[str, float], reference: str) -> list[EffectivenessRow]:
    """MAP per model and the reference model's % change over each other row."""
    if reference not in maps:
        raise ConfigurationError(f"reference model {reference!r} missing from MAP table")
    ref = maps[reference]
    rows = []
    for label, value in maps.items():
        change = None
        if label != reference and value != 0:
            change = (ref - value) / value * 100.0
        rows.append(EffectivenessRow(label=label, map=value, change_percent=change))
    return rows


def _cell(value: object) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_report_tsv(
    path: str | Path,
    headers: Sequence[str],
    rows: Sequence[Sequence[object]],
    notes: Sequence[str] = (),
) -> None:
    lines = [f"# {note}\n" for note in notes]
    lines.append("\t".join(headers) + "\n")
    for row in rows:
        lines.append("\t".join(_cell(v) for v in row) + "\n")
    write_text_atomic(path, "".join(lines))


def separation_table(report: SeparationReport) -> tuple[list[str], list[list[object]]]:
    headers = ["Representation", "k", "Strategy", "Top_N", "Less_N", "Diff"]
    rows = [[r.label, r.k, r.strategy, r.top_mean, r.less_mean, r.diff] for r in report.rows]
    return headers, rows


def difficulty_table(report: DifficultyReport) -> tuple[list[str], list[list[object]]]:
    headers = ["Class", "#Queries", "#Words", "#Objects", "BaselineMAP", "ModelMAP", "%Change(MAP-relative)"]
    rows = [
        [c.label, c.queries, c.mean_words, c.mean_objects, c.baseline_map, c.model_map, c.change_percent]
        for c in report.classes
    ]
    return headers, rows


def effectiveness_table(rows: Sequence[EffectivenessRow], reference: str) -> tuple[list[str], list[list[object]]]:
    headers = ["Model", "MAP", f"%Change({reference})"]
    return headers, [[r.label, r.map, r.change_percent] for r in rows]


def io_similarity_table(report: IoSimilarityReport) -> tuple[list[str], list[list[object]]]:
    improvement = None if report.improvement is None else report.improvement * 100.0
    headers = ["Pairs", "InputCosine", "OutputCosine", "%Improvement"]
    return headers, [[report.pairs, report.input_mean, report.output_mean, improvement]]
