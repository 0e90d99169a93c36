"""relmap-ranker package."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_experiment_config
from .corpus import Corpus, Qrels, VectorStore, load_annotations, load_corpus, load_qrels
from .embeddings import EmbeddingTable, embed_corpus, load_embeddings
from .kgraph import KnowledgeGraph, leacock_sim, load_graph, path_length
from .net import SiameseParams, init_params, score, train
from .relmap import Referential, build_kr_vector, build_referential, kmeans, top_concepts_referential
from .retrieval import average_precision, bm25_rank, cross_validate, mean_average_precision, rerank

__all__ = [
    "ExperimentConfig",
    "load_experiment_config",
    "Corpus",
    "Qrels",
    "VectorStore",
    "load_corpus",
    "load_annotations",
    "load_qrels",
    "EmbeddingTable",
    "embed_corpus",
    "load_embeddings",
    "KnowledgeGraph",
    "load_graph",
    "path_length",
    "leacock_sim",
    "SiameseParams",
    "init_params",
    "score",
    "train",
    "Referential",
    "kmeans",
    "build_referential",
    "top_concepts_referential",
    "build_kr_vector",
    "bm25_rank",
    "rerank",
    "average_precision",
    "mean_average_precision",
    "cross_validate",
]
