"""Distributional text and object vectors.

A small PV-DBOW trainer: every text owns a vector that is trained to predict
its own tokens against negative-sampled ones, word2vec style (unigram^0.75
noise table, linearly decaying learning rate). Object vectors are the same
machine applied to each object's textual label.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, ParseError, UnknownObjectError
from .store import format_floats, iter_data_lines, open_source, parse_floats, source_name, write_text_atomic

if TYPE_CHECKING:
    from .config import ExperimentConfig
    from .corpus import Corpus
    from .kgraph import KnowledgeGraph

logger = logging.getLogger("relmap_ranker.embeddings")

_TOKEN_RE = re.compile(r"[^\W_]+")
_TEXT_PREFIX = "text:"
_OBJECT_PREFIX = "object:"
_MAX_EXP = 30.0


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"cosine of vectors with shapes {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass
class PvDbowConfig:
    dims: int = 100
    epochs: int = 20
    negatives_per_target: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dims <= 0:
            raise ConfigurationError("dims must be > 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.negatives_per_target < 0:
            raise ConfigurationError("negatives_per_target must be >= 0")

    @classmethod
    def from_experiment(cls, cfg: "ExperimentConfig") -> "PvDbowConfig":
        return cls(
            dims=cfg.dims,
            epochs=cfg.embedding_epochs,
            negatives_per_target=cfg.embedding_negatives,
            learning_rate=cfg.embedding_learning_rate,
            min_learning_rate=min(cfg.embedding_min_learning_rate, cfg.embedding_learning_rate),
            seed=cfg.stage_seed("embeddings"),
        )


@dataclass
class WordState:
    """Frozen output side of a trained model: vocabulary, counts, word vectors."""

    vocab: list[str]
    counts: np.ndarray
    output: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.output = np.asarray(self.output, dtype=np.float64)
        if self.output.ndim != 2 or self.output.shape[0] != len(self.vocab) or len(self.counts) != len(self.vocab):
            raise DimensionError("word state vocabulary, counts and output rows disagree")
        self.index = {word: i for i, word in enumerate(self.vocab)}
        self._cum_table = _noise_table(self.counts)

    @property
    def dims(self) -> int:
        return int(self.output.shape[1])

    def token_ids(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.index[t] for t in tokens if t in self.index], dtype=np.int64)


@dataclass
class EmbeddingTable:
    dims: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    word_state: Optional[WordState] = None
    training_loss: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.dims <= 0:
            raise DimensionError("embedding dims must be > 0")
        for key, vec in list(self.vectors.items()):
            self.vectors[key] = self._checked(key, vec)

    def _checked(self, key: str, vec: np.ndarray) -> np.ndarray:
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != (self.dims,):
            raise DimensionError(f"vector {key!r} has {arr.size} components, expected {self.dims}")
        if not np.all(np.isfinite(arr)):
            raise DimensionError(f"vector {key!r} has non-finite components")
        return arr

    def __contains__(self, key: object) -> bool:
        return key in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def add(self, key: str, vec: np.ndarray) -> None:
        self.vectors[key] = self._checked(key, vec)

    def get(self, key: str) -> np.ndarray:
        vec = self.vectors.get(key)
        if vec is None:
            raise UnknownObjectError(key, "embedding table")
        return vec

    def keys(self) -> list[str]:
        return sorted(self.vectors)


def _noise_table(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    weights = np.asarray(counts, dtype=np.float64) ** power
    total = weights.sum()
    if total <= 0:
        return np.zeros(0, dtype=np.float64)
    return np.cumsum(weights / total)


def _draw_negatives(cum_table: np.ndarray, rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    if shape[1] == 0 or cum_table.size == 0:
        return np.zeros(shape, dtype=np.int64)
    draws = np.searchsorted(cum_table, rng.random(shape), side="right")
    return np.minimum(draws, cum_table.size - 1)


def _sgd_text_vector(
    vec: np.ndarray,
    token_ids: np.ndarray,
    negatives: np.ndarray,
    output: np.ndarray,
    lr_schedule: np.ndarray,
    update_output: bool,
) -> float:
    """One pass of negative-sampling SGD over a text's tokens; returns summed loss.

    Sampled negatives that hit the target word are dropped for that step.
    """
    loss = 0.0
    for pos, word in enumerate(token_ids):
        negs = negatives[pos]
        ids = np.concatenate(([word], negs[negs != word]))
        labels = np.zeros(ids.size)
        labels[0] = 1.0
        rows = output[ids]
        scores = np.clip(rows @ vec, -_MAX_EXP, _MAX_EXP)
        fb = 1.0 / (1.0 + np.exp(-scores))
        loss -= float(np.log(fb[0]) + np.sum(np.log(1.0 - fb[1:])))
        gb = (labels - fb) * lr_schedule[pos]
        neu1e = gb @ rows
        if update_output:
            np.add.at(output, ids, np.outer(gb, vec))
        vec += neu1e
    return loss


def _build_vocab(texts: Mapping[str, Sequence[str]]) -> tuple[list[str], np.ndarray]:
    counts: dict[str, int] = {}
    for tokens in texts.values():
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
    vocab = sorted(counts)
    return vocab, np.array([counts[w] for w in vocab], dtype=np.int64)


def train_doc_embeddings(texts: Mapping[str, Sequence[str]], cfg: PvDbowConfig) -> EmbeddingTable:
    """Train one vector per text key; deterministic for ``cfg.seed``.

    The returned table carries the frozen word state (for infer_text_vector)
    and the mean per-token loss of every epoch in ``training_loss``.
    """
    if len(texts) < 2:
        raise ConfigurationError("train_doc_embeddings needs at least 2 texts")
    vocab, counts = _build_vocab(texts)
    if not vocab:
        raise ConfigurationError("train_doc_embeddings needs a non-empty vocabulary")

    keys = sorted(texts)
    index = {word: i for i, word in enumerate(vocab)}
    doc_tokens = [np.array([index[t] for t in texts[key]], dtype=np.int64) for key in keys]
    for key, ids in zip(keys, doc_tokens):
        if ids.size == 0:
            logger.warning("Text %r has no tokens; it keeps the zero vector", key)

    rng = np.random.default_rng(cfg.seed)
    doc_vectors = (rng.random((len(keys), cfg.dims)) - 0.5) / cfg.dims
    for row, ids in enumerate(doc_tokens):
        if ids.size == 0:
            doc_vectors[row] = 0.0
    output = np.zeros((len(vocab), cfg.dims), dtype=np.float64)
    cum_table = _noise_table(counts)

    total_tokens = int(sum(ids.size for ids in doc_tokens))
    total_steps = max(1, cfg.epochs * total_tokens)
    step = 0
    history: list[float] = []
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for row in rng.permutation(len(keys)):
            ids = doc_tokens[row]
            if ids.size == 0:
                continue
            progress = (step + np.arange(ids.size)) / total_steps
            schedule = cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * progress
            negatives = _draw_negatives(cum_table, rng, (ids.size, cfg.negatives_per_target))
            epoch_loss += _sgd_text_vector(doc_vectors[row], ids, negatives, output, schedule, True)
            step += ids.size
        history.append(epoch_loss / max(1, total_tokens))
        logger.debug("Embedding epoch %d/%d: mean token loss %.6f", epoch + 1, cfg.epochs, history[-1])

    if not np.all(np.isfinite(doc_vectors)):
        raise DimensionError("embedding training produced non-finite vectors")
    logger.info(
        "Trained %d text vectors (dims=%d, vocabulary=%d, epochs=%d)",
        len(keys), cfg.dims, len(vocab), cfg.epochs,
    )
    return EmbeddingTable(
        dims=cfg.dims,
        vectors={key: doc_vectors[row].copy() for row, key in enumerate(keys)},
        word_state=WordState(vocab=vocab, counts=counts, output=output),
        training_loss=history,
    )


def infer_text_vector(table: EmbeddingTable, tokens: Sequence[str], cfg: PvDbowConfig) -> np.ndarray:
    """Fit a vector for an unseen text against the frozen word state."""
    state = table.word_state
    if state is None:
        raise ConfigurationError("embedding table carries no word state; inference needs a trained model")
    if state.dims != table.dims:
        raise DimensionError(f"word state has {state.dims} dims, table has {table.dims}")
    ids = state.token_ids(tokens)
    if ids.size == 0:
        if tokens:
            logger.warning("All %d tokens are out of vocabulary; returning the zero vector", len(tokens))
        return np.zeros(table.dims, dtype=np.float64)

    rng = np.random.default_rng(cfg.seed)
    vec = (rng.random(table.dims) - 0.5) / table.dims
    total_steps = max(1, cfg.epochs * ids.size)
    for epoch in range(cfg.epochs):
        progress = (epoch * ids.size + np.arange(ids.size)) / total_steps
        schedule = cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * progress
        negatives = _draw_negatives(state._cum_table, rng, (ids.size, cfg.negatives_per_target))
        _sgd_text_vector(vec, ids, negatives, state.output, schedule, False)
    return vec


def load_embeddings(source: str | Path | Iterable[str]) -> EmbeddingTable:
    """Read ``key<TAB>v1 v2 ... vd`` rows; every row must have the same d."""
    vectors: dict[str, np.ndarray] = {}
    dims: Optional[int] = None
    with open_source(source) as lines:
        name = source_name(lines)
        for number, line in iter_data_lines(lines):
            key, sep, rest = line.partition("\t")
            key = key.strip()
            if not sep or not key:
                raise ParseError("expected `key<TAB>floats`", line=number, source=name)
            values = parse_floats(rest, line=number, source=name)
            if values.size == 0:
                raise ParseError(f"no vector components for {key!r}", line=number, source=name)
            if dims is None:
                dims = values.size
            elif values.size != dims:
                raise ParseError(f"expected {dims} components, found {values.size}", line=number, source=name)
            if key in vectors:
                raise ParseError(f"duplicate key {key!r}", line=number, source=name)
            vectors[key] = values
    if dims is None:
        raise ParseError("embedding source holds no vectors", source=name)
    return EmbeddingTable(dims=dims, vectors=vectors)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    lines = [f"{key}\t{format_floats(table.vectors[key])}\n" for key in table.keys()]
    write_text_atomic(path, "".join(lines))


def save_word_state(state: WordState, path: str | Path) -> None:
    lines = [f"# relmap word state dims={state.dims}\n"]
    for i, word in enumerate(state.vocab):
        lines.append(f"{word}\t{int(state.counts[i])}\t{format_floats(state.output[i])}\n")
    write_text_atomic(path, "".join(lines))


def load_word_state(path: str | Path) -> WordState:
    vocab: list[str] = []
    counts: list[int] = []
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for number, line in iter_data_lines(fh):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected `word<TAB>count<TAB>floats`", line=number, source=str(path))
            try:
                counts.append(int(parts[1]))
            except ValueError as exc:
                raise ParseError(f"invalid count {parts[1]!r}", line=number, source=str(path)) from exc
            vocab.append(parts[0])
            rows.append(parse_floats(parts[2], line=number, source=str(path)))
    if not rows or len({row.size for row in rows}) != 1:
        raise ParseError("word state rows are empty or ragged", source=str(path))
    return WordState(vocab=vocab, counts=np.array(counts), output=np.vstack(rows))


def embed_corpus(
    corpus: "Corpus",
    graph: "KnowledgeGraph",
    cfg: "ExperimentConfig",
) -> tuple[EmbeddingTable, EmbeddingTable]:
    """Co-train documents, queries and object labels in one model.

    Returns ``(text_table, object_table)``: text vectors keyed by document or
    query id, object vectors keyed by object id. With ``cotrain_queries``
    off, query vectors are inferred after training instead.
    """
    pv = PvDbowConfig.from_experiment(cfg)
    texts: dict[str, list[str]] = {}
    for doc_id, tokens in corpus.documents.items():
        texts[_TEXT_PREFIX + doc_id] = list(tokens)
    if cfg.cotrain_queries:
        for query_id, tokens in corpus.queries.items():
            texts[_TEXT_PREFIX + query_id] = list(tokens)
    for object_id, node in graph.objects.items():
        texts[_OBJECT_PREFIX + object_id] = tokenize(node.label)

    joint = train_doc_embeddings(texts, pv)
    text_table = EmbeddingTable(dims=pv.dims, word_state=joint.word_state, training_loss=joint.training_loss)
    object_table = EmbeddingTable(dims=pv.dims, word_state=joint.word_state)
    for key, vec in joint.vectors.items():
        if key.startswith(_TEXT_PREFIX):
            text_table.add(key[len(_TEXT_PREFIX):], vec)
        else:
            object_table.add(key[len(_OBJECT_PREFIX):], vec)
    if not cfg.cotrain_queries:
        for query_id in sorted(corpus.queries):
            text_table.add(query_id, infer_text_vector(joint, corpus.queries[query_id], pv))
    return text_table, object_table
