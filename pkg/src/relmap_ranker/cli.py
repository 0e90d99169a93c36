"""CLI entry point for relmap-ranker."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .analysis import (
    LDA_NOTE,
    IoSimilarityReport,
    RepresentationBuilder,
    difficulty_table,
    effectiveness_report,
    effectiveness_table,
    format_table,
    io_similarity_report,
    io_similarity_table,
    pivotal_experiment,
    separation_table,
    write_report_tsv,
)
from .config import FEATURE_SETS, STRATEGIES, ExperimentConfig, load_experiment_config
from .corpus import (
    Corpus,
    Qrels,
    VectorStore,
    build_input_vector,
    document_frequencies,
    load_annotations,
    load_corpus,
    load_qrels,
    load_vectors,
    save_vectors,
    split_folds,
)
from .embeddings import (
    EmbeddingTable,
    PvDbowConfig,
    embed_corpus,
    infer_text_vector,
    load_embeddings,
    load_word_state,
    save_embeddings,
    save_word_state,
)
from .errors import ConfigurationError, ParseError, RelmapError
from .kgraph import KnowledgeGraph, load_graph, save_graph
from .net import load_checkpoint, save_checkpoint
from .relmap import RelationMapper, build_referential, load_referential, save_referential, top_concepts_referential
from .retrieval import (
    Run,
    bm25_candidates,
    build_index,
    classify_query_difficulty,
    evaluate_folds,
    judged_queries,
    mean_average_precision,
    per_query_average_precision,
    random_rerank,
    read_run,
    train_folds,
    write_run,
)
from .store import ArtifactLayout, iter_data_lines, require_artifact, write_manifest, write_text_atomic
from .synthetic import generate_fixture

logger = logging.getLogger("relmap_ranker.cli")

# Flags that map one-to-one onto ExperimentConfig fields.
_OVERRIDE_KEYS = (
    "output_dir",
    "seed",
    "k",
    "strategy",
    "dims",
    "alpha",
    "negatives",
    "batch_size",
    "dropout",
    "epochs",
    "learning_rate",
    "validation_fraction",
    "folds",
    "top_candidates",
    "top_rerank",
    "features",
    "variants",
    "cotrain_queries",
    "average_negatives",
    "verbose",
    "strict_config",
)


def _add_bool_toggle(parser: argparse.ArgumentParser, name: str, help_text: str):
    parser.add_argument(
        f"--enable-{name}",
        dest=name.replace("-", "_"),
        action="store_true",
        help=f"Enable {help_text}",
    )
    parser.add_argument(
        f"--disable-{name}",
        dest=name.replace("-", "_"),
        action="store_false",
        help=f"Disable {help_text}",
    )


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Path to experiment config (key-value, JSON or YAML)")
    parser.add_argument("--output-dir", help="Directory holding staged artifacts")
    parser.add_argument("--seed", type=int, help="Experiment seed; every stage derives its own stream")
    parser.add_argument("--verbose", "-v", action="store_true", default=None, help="Enable debug logging")
    parser.add_argument("--strict-config", action="store_true", default=None, help="Reject unknown config keys")
    parser.add_argument("--dump-effective-config", action="store_true", help="Print resolved config to stderr")

    parser.add_argument("--k", type=int, help="Number of topical clusters in the referential")
    parser.add_argument("--strategy", choices=list(STRATEGIES), help="Cluster representative strategy")
    parser.add_argument("--dims", type=int, help="Paragraph vector dimensions")
    parser.add_argument("--alpha", type=float, help="Hinge loss margin")
    parser.add_argument("--negatives", type=int, help="Non-relevant documents per training instance")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size")
    parser.add_argument("--dropout", type=float, help="Dropout rate on hidden layers")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--learning-rate", type=float, help="SGD learning rate")
    parser.add_argument("--validation-fraction", type=float, help="Share of training queries held out to pick the epoch")
    parser.add_argument("--folds", type=int, help="Cross-validation folds")
    parser.add_argument("--top-candidates", type=int, help="BM25 candidates per query")
    parser.add_argument("--top-rerank", type=int, help="Documents kept per query after re-ranking")
    parser.add_argument("--features", choices=list(FEATURE_SETS), help="Input representation of the primary model")
    parser.add_argument("--variants", help="Comma-separated input variants to train and evaluate")

    _add_bool_toggle(parser, "cotrain-queries", "co-training query vectors with documents")
    _add_bool_toggle(parser, "average-negatives", "averaging (instead of summing) negative similarities")
    parser.set_defaults(cotrain_queries=None, average_negatives=None)


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        stream=sys.stderr,
    )


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cli_overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    cli_overrides["config_path"] = args.config
    config = load_experiment_config(config_path=args.config, cli_overrides=cli_overrides)
    _configure_logging(config.verbose)
    if args.dump_effective_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True), file=sys.stderr)
    return config


def _manifest(
    layout: ArtifactLayout,
    command: str,
    config: ExperimentConfig,
    inputs: Optional[dict[str, Path | str | None]] = None,
    artifacts: Optional[dict[str, Path]] = None,
) -> Path:
    present = {name: path for name, path in (inputs or {}).items() if path}
    return write_manifest(
        layout,
        command,
        config.hashed_settings(),
        config_hash=config.config_hash(),
        seed=config.seed,
        inputs=present,
        artifacts=artifacts,
    )


def _required_path(config: ExperimentConfig, key: str) -> str:
    value = getattr(config, key)
    if not value:
        raise ConfigurationError(f"{key} is not set (config file, {key.replace('_', '-')} key, or environment)")
    return value


# ---------------------------------------------------------------------------
# Staged artifact loaders
# ---------------------------------------------------------------------------


def _load_staged_graph(layout: ArtifactLayout) -> KnowledgeGraph:
    require_artifact(layout.graph_nodes, "build-graph")
    require_artifact(layout.graph_edges, "build-graph")
    # The cache only holds edges that passed the relation filter.
    return load_graph(layout.graph_nodes, layout.graph_edges, relation_filter=None)


def _load_corpus(config: ExperimentConfig, graph: Optional[KnowledgeGraph] = None, annotated: bool = True) -> Corpus:
    corpus = load_corpus(_required_path(config, "docs_path"), _required_path(config, "queries_path"))
    if annotated:
        load_annotations(
            _required_path(config, "annotations_path"),
            corpus,
            graph=graph,
            include_queries=config.annotations_include_queries,
        )
    return corpus


def _load_object_vectors(layout: ArtifactLayout) -> EmbeddingTable:
    return load_embeddings(require_artifact(layout.object_vectors, "train-embeddings"))


def _load_staged_vectors(layout: ArtifactLayout) -> VectorStore:
    return load_vectors(require_artifact(layout.vectors, "vectorize"))


def _write_folds(path: Path, folds: Sequence[Sequence[str]]) -> None:
    lines = [f"{i}\t{query_id}\n" for i, fold in enumerate(folds) for query_id in fold]
    write_text_atomic(path, "".join(lines))


def _read_folds(path: Path) -> list[list[str]]:
    folds: dict[int, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in iter_data_lines(fh):
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].isdigit():
                raise ParseError("expected `fold<TAB>query-id`", line=number, source=str(path))
            folds.setdefault(int(parts[0]), []).append(parts[1])
    if sorted(folds) != list(range(len(folds))):
        raise ParseError("fold indices are not contiguous", source=str(path))
    return [sorted(folds[i]) for i in range(len(folds))]


def _variant_name(config: ExperimentConfig, features: str) -> Optional[str]:
    """Checkpoint subdirectory of an input variant; None for the primary model."""
    return None if features == config.features else features


def _model_label(features: str) -> str:
    return f"DSRIM({features})"


def _trained_variants(config: ExperimentConfig) -> list[str]:
    return [config.features] + [v for v in config.variants if v != config.features]


def _candidate_subset(run: Run, queries: Sequence[str], top: int) -> Run:
    return {q: run.get(q, [])[:top] for q in sorted(queries)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build_graph(config: ExperimentConfig) -> KnowledgeGraph:
    layout = ArtifactLayout(Path(config.output_dir))
    nodes = _required_path(config, "nodes_path")
    edges = _required_path(config, "edges_path")
    graph = load_graph(nodes, edges, relation_filter=config.relation_filter)
    save_graph(graph, layout.graph_nodes, layout.graph_edges)
    _manifest(
        layout,
        "build-graph",
        config,
        inputs={"nodes": nodes, "edges": edges},
        artifacts={"graph_nodes": layout.graph_nodes, "graph_edges": layout.graph_edges},
    )
    print(f"Graph: {len(graph)} objects, {len(graph.edges)} edges, max depth {graph.max_depth} -> {layout.graph_nodes.parent}")
    return graph


def cmd_train_embeddings(config: ExperimentConfig) -> tuple[EmbeddingTable, EmbeddingTable]:
    layout = ArtifactLayout(Path(config.output_dir))
    graph = _load_staged_graph(layout)
    corpus = _load_corpus(config, annotated=False)

    if config.text_embeddings_path and config.object_embeddings_path:
        logger.info("Loading precomputed embeddings instead of training")
        text_table = load_embeddings(config.text_embeddings_path)
        object_table = load_embeddings(config.object_embeddings_path)
        if text_table.dims != object_table.dims:
            raise ConfigurationError(
                f"text and object embeddings differ in dims ({text_table.dims} vs {object_table.dims})"
            )
    else:
        text_table, object_table = embed_corpus(corpus, graph, config)
        if text_table.training_loss:
            logger.info(
                "Embedding loss: first epoch %.6f, last epoch %.6f",
                text_table.training_loss[0], text_table.training_loss[-1],
            )

    save_embeddings(text_table, layout.text_vectors)
    save_embeddings(object_table, layout.object_vectors)
    artifacts = {"text_vectors": layout.text_vectors, "object_vectors": layout.object_vectors}
    if text_table.word_state is not None:
        save_word_state(text_table.word_state, layout.word_state)
        artifacts["word_state"] = layout.word_state
    _manifest(
        layout,
        "train-embeddings",
        config,
        inputs={
            "docs": config.docs_path,
            "queries": config.queries_path,
            "text_embeddings": config.text_embeddings_path,
            "object_embeddings": config.object_embeddings_path,
            "graph_nodes": layout.graph_nodes,
        },
        artifacts=artifacts,
    )
    print(f"Embeddings: {len(text_table)} texts, {len(object_table)} objects, {text_table.dims} dims")
    return text_table, object_table


def cmd_build_referential(config: ExperimentConfig):
    layout = ArtifactLayout(Path(config.output_dir))
    graph = _load_staged_graph(layout)
    corpus = _load_corpus(config, graph)
    object_table = _load_object_vectors(layout)
    df = document_frequencies(corpus, config.annotations_include_queries)
    referential = build_referential(
        sorted(graph.objects),
        object_table,
        config.k,
        strategy=config.strategy,
        df=df,
        seed=config.stage_seed("referential"),
        max_iter=config.kmeans_max_iter,
    )
    save_referential(referential, layout.referential)
    _manifest(
        layout,
        "build-referential",
        config,
        inputs={"annotations": config.annotations_path, "object_vectors": layout.object_vectors},
        artifacts={"referential": layout.referential},
    )
    sizes = [len(c.members) for c in referential.clusters]
    print(
        f"Referential: k={referential.k}, strategy {referential.strategy}, "
        f"cluster sizes {min(sizes)}..{max(sizes)} -> {layout.referential}"
    )
    return referential


def cmd_vectorize(config: ExperimentConfig) -> VectorStore:
    layout = ArtifactLayout(Path(config.output_dir))
    graph = _load_staged_graph(layout)
    corpus = _load_corpus(config, graph)
    text_table = load_embeddings(require_artifact(layout.text_vectors, "train-embeddings"))
    object_table = _load_object_vectors(layout)
    referential = load_referential(require_artifact(layout.referential, "build-referential"))
    if layout.word_state.exists():
        text_table.word_state = load_word_state(layout.word_state)

    graph.warm_up(referential.representatives)
    mapper = RelationMapper(referential, graph, object_table, corpus.avg_no)
    pv = PvDbowConfig.from_experiment(config)
    store = VectorStore(dims=text_table.dims, k=referential.k)
    inferred = 0
    for text_id in corpus.text_ids():
        if text_id in text_table or text_table.word_state is None:
            x_t = text_table.get(text_id)
        else:
            x_t = infer_text_vector(text_table, corpus.tokens(text_id), pv)
            inferred += 1
        store.add(text_id, build_input_vector(x_t, mapper.vector(corpus.objects(text_id), text_id)))
    if inferred:
        logger.info("Inferred distributional vectors for %d texts missing from the embedding table", inferred)

    save_vectors(store, layout.vectors)
    _manifest(
        layout,
        "vectorize",
        config,
        inputs={
            "annotations": config.annotations_path,
            "text_vectors": layout.text_vectors,
            "referential": layout.referential,
        },
        artifacts={"vectors": layout.vectors},
    )
    print(f"Vectors: {len(store)} texts, x_t {store.dims} + x_KR {store.k} -> {layout.vectors}")
    return store


def cmd_train(config: ExperimentConfig) -> None:
    layout = ArtifactLayout(Path(config.output_dir))
    corpus = _load_corpus(config, annotated=False)
    qrels = load_qrels(_required_path(config, "qrels_path"))
    vectors = _load_staged_vectors(layout)

    index = build_index(corpus)
    candidates = bm25_candidates(
        index, corpus.queries, top=config.top_candidates, k1=config.bm25_k1, b=config.bm25_b
    )
    write_run(candidates, layout.bm25_run, tag="bm25")
    folds = split_folds(judged_queries(corpus, qrels), config.folds, config.stage_seed("folds"))
    _write_folds(layout.folds, folds)

    artifacts = {"bm25_run": layout.bm25_run, "folds": layout.folds}
    history_lines = ["variant\tfold\tepoch\teval_loss\ttrain_loss\tvalidation_map\n"]
    for features in _trained_variants(config):
        variant = _variant_name(config, features)
        models = train_folds(qrels, vectors, candidates, folds, config, feature_set=features)
        for model in models:
            path = layout.checkpoint(model.fold, variant)
            history = model.history
            save_checkpoint(
                model.params,
                path,
                config={
                    "fold": model.fold,
                    "instances": model.instances,
                    "train_queries": model.train_queries,
                    "validation_queries": model.validation_queries,
                    "best_epoch": history.best_epoch,
                },
            )
            artifacts[f"checkpoint.{features}.{model.fold}"] = path
            validation = [repr(v) for v in history.validation] or [""] * (len(history.eval_loss) + 1)
            history_lines.append(f"{features}\t{model.fold}\t0\t{history.initial!r}\t\t{validation[0]}\n")
            for epoch, (eval_loss, train_loss) in enumerate(zip(history.eval_loss, history.train_loss), start=1):
                history_lines.append(
                    f"{features}\t{model.fold}\t{epoch}\t{eval_loss!r}\t{train_loss!r}\t{validation[epoch]}\n"
                )
        print(f"Trained {_model_label(features)}: {len(models)} folds")
    write_text_atomic(layout.loss_history, "".join(history_lines))
    artifacts["loss_history"] = layout.loss_history

    _manifest(
        layout,
        "train",
        config,
        inputs={"docs": config.docs_path, "queries": config.queries_path, "qrels": config.qrels_path,
                "vectors": layout.vectors},
        artifacts=artifacts,
    )


def _load_fold_models(layout: ArtifactLayout, folds: Sequence[Sequence[str]], variant: Optional[str]):
    return [load_checkpoint(require_artifact(layout.checkpoint(i, variant), "train"))[0] for i in range(len(folds))]


def cmd_evaluate(config: ExperimentConfig) -> dict[str, float]:
    layout = ArtifactLayout(Path(config.output_dir))
    qrels = load_qrels(_required_path(config, "qrels_path"))
    vectors = _load_staged_vectors(layout)
    candidates = read_run(require_artifact(layout.bm25_run, "train"))
    folds = _read_folds(require_artifact(layout.folds, "train"))
    queries = sorted(q for fold in folds for q in fold)

    maps: dict[str, float] = {"BM25": mean_average_precision(_candidate_subset(candidates, queries, config.top_rerank), qrels)}
    random_run = random_rerank(_candidate_subset(candidates, queries, config.top_candidates), config.stage_seed("random"), config.top_rerank)
    write_run(random_run, layout.random_run, tag="random")
    maps["Random"] = mean_average_precision(random_run, qrels)

    notes = []
    artifacts = {"model_run": layout.model_run, "random_run": layout.random_run}
    for features in _trained_variants(config):
        variant = _variant_name(config, features)
        models = _load_fold_models(layout, folds, variant)
        run, fold_maps = evaluate_folds(models, folds, candidates, vectors, qrels, config.top_rerank)
        label = _model_label(features)
        if variant is None:
            write_run(run, layout.model_run, tag=config.run_tag)
        else:
            path = layout.root / "runs" / f"dsrim-{variant.replace('+', '-')}.run"
            write_run(run, path, tag=f"{config.run_tag}-{variant.replace('+', '-')}")
            artifacts[f"run.{features}"] = path
        maps[label] = mean_average_precision(run, qrels)
        notes.append(f"{label} fold MAPs: " + " ".join(f"{m:.4f}" for m in fold_maps) + f" (mean {np.mean(fold_maps):.4f})")

    reference = _model_label(config.features)
    headers, rows = effectiveness_table(effectiveness_report(maps, reference), reference)
    report_path = layout.report("effectiveness.tsv")
    write_report_tsv(report_path, headers, rows, notes=notes)
    artifacts["effectiveness"] = report_path
    _manifest(
        layout,
        "evaluate",
        config,
        inputs={"qrels": config.qrels_path, "bm25_run": layout.bm25_run, "vectors": layout.vectors},
        artifacts=artifacts,
    )
    print(format_table(headers, rows), end="")
    return maps


def cmd_analyze_repr(config: ExperimentConfig):
    layout = ArtifactLayout(Path(config.output_dir))
    graph = _load_staged_graph(layout)
    corpus = _load_corpus(config, graph)
    object_table = _load_object_vectors(layout)
    if corpus.avg_no <= 0:
        raise ConfigurationError("no document carries annotations; x^KR cannot be built")
    df = document_frequencies(corpus, config.annotations_include_queries)
    objects = sorted(graph.objects)

    def builder(label: str, k: int, strategy: str, referential) -> RepresentationBuilder:
        mapper = RelationMapper(referential, graph, object_table, corpus.avg_no)
        vector: Callable[[str], np.ndarray] = lambda text_id: mapper.vector(corpus.objects(text_id), text_id).values
        return RepresentationBuilder(label=label, k=k, strategy=strategy, vector=vector)

    builders = []
    for k in config.analysis_k_values:
        for strategy in config.analysis_strategies:
            referential = build_referential(
                objects, object_table, k, strategy=strategy, df=df,
                seed=config.stage_seed("referential"), max_iter=config.kmeans_max_iter,
            )
            builders.append(builder("Clustering", k, strategy, referential))
        try:
            builders.append(builder("Top_concepts", k, "top_concepts", top_concepts_referential(objects, df, k, object_table)))
        except ConfigurationError as exc:
            logger.warning("Skipping Top_concepts row for k=%d: %s", k, exc)

    report = pivotal_experiment(
        builders, corpus, graph,
        n_pivots=config.n_pivots, neighborhood=config.neighborhood, seed=config.stage_seed("pivots"),
    )
    headers, rows = separation_table(report)
    report_path = layout.report("separation.tsv")
    write_report_tsv(
        report_path,
        headers,
        rows,
        notes=[f"pivots={report.pivots} neighborhood={report.neighborhood} seed={report.seed}", LDA_NOTE],
    )
    _manifest(
        layout,
        "analyze-repr",
        config,
        inputs={"annotations": config.annotations_path, "object_vectors": layout.object_vectors},
        artifacts={"separation": report_path},
    )
    print(format_table(headers, rows), end="")
    print(LDA_NOTE)
    return report


def _io_similarity(
    layout: ArtifactLayout,
    folds: Sequence[Sequence[str]],
    qrels: Qrels,
    vectors: VectorStore,
) -> IoSimilarityReport:
    """Pool per-fold reports; each query is scored by the model that held it out."""
    models = _load_fold_models(layout, folds, None)
    parts = []
    for model, queries in zip(models, folds):
        pairs = [(q, d) for q in queries for d in qrels.relevant(q)]
        if pairs:
            parts.append(io_similarity_report(model, pairs, vectors))
    if not parts:
        raise ConfigurationError("no relevant pairs for the input/output similarity report")
    total = sum(p.pairs for p in parts)
    return IoSimilarityReport(
        pairs=total,
        input_mean=sum(p.input_mean * p.pairs for p in parts) / total,
        output_mean=sum(p.output_mean * p.pairs for p in parts) / total,
    )


def cmd_difficulty(config: ExperimentConfig):
    layout = ArtifactLayout(Path(config.output_dir))
    corpus = _load_corpus(config)
    qrels = load_qrels(_required_path(config, "qrels_path"))
    vectors = _load_staged_vectors(layout)
    model_run = read_run(require_artifact(layout.model_run, "evaluate"))
    candidates = read_run(require_artifact(layout.bm25_run, "train"))
    folds = _read_folds(require_artifact(layout.folds, "train"))

    model_ap = per_query_average_precision(model_run, qrels)
    baseline_ap = per_query_average_precision(_candidate_subset(candidates, sorted(model_ap), config.top_rerank), qrels)
    report = classify_query_difficulty(baseline_ap, config.stage_seed("difficulty"), model_ap, corpus)

    headers, rows = difficulty_table(report)
    notes = ["baseline=BM25 model=" + _model_label(config.features)]
    if report.degenerate:
        notes.append("degenerate: fewer than three distinct baseline AP values")
    difficulty_path = layout.report("difficulty.tsv")
    write_report_tsv(difficulty_path, headers, rows, notes=notes)
    per_query_path = layout.report("query_difficulty.tsv")
    write_report_tsv(
        per_query_path,
        ["Query", "BaselineAP", "ModelAP", "Class"],
        [[q, ap, model_ap.get(q), label] for q, (ap, label) in sorted(report.per_query.items())],
    )

    io_report = _io_similarity(layout, folds, qrels, vectors)
    io_headers, io_rows = io_similarity_table(io_report)
    io_path = layout.report("io_similarity.tsv")
    write_report_tsv(io_path, io_headers, io_rows)

    _manifest(
        layout,
        "difficulty",
        config,
        inputs={"qrels": config.qrels_path, "bm25_run": layout.bm25_run, "model_run": layout.model_run},
        artifacts={"difficulty": difficulty_path, "query_difficulty": per_query_path, "io_similarity": io_path},
    )
    print(format_table(headers, rows), end="")
    print(format_table(io_headers, io_rows), end="")
    return report, io_report


def cmd_run(config: ExperimentConfig) -> dict[str, float]:
    cmd_build_graph(config)
    cmd_train_embeddings(config)
    cmd_build_referential(config)
    cmd_vectorize(config)
    cmd_train(config)
    maps = cmd_evaluate(config)
    cmd_analyze_repr(config)
    cmd_difficulty(config)
    return maps


_COMMANDS: dict[str, tuple[Callable[[ExperimentConfig], object], str]] = {
    "build-graph": (cmd_build_graph, "Load and filter the knowledge graph into the graph cache"),
    "train-embeddings": (cmd_train_embeddings, "Train (or load) text and object paragraph vectors"),
    "build-referential": (cmd_build_referential, "Cluster objects into the k-cluster referential"),
    "vectorize": (cmd_vectorize, "Build x_t + x^KR input vectors for every document and query"),
    "train": (cmd_train, "BM25 candidates, fold split and one siamese checkpoint per fold"),
    "evaluate": (cmd_evaluate, "Re-rank held-out folds and write runs and the MAP report"),
    "analyze-repr": (cmd_analyze_repr, "Pivot-document separation of x^KR representations"),
    "difficulty": (cmd_difficulty, "Query difficulty classes and input/output similarity"),
    "run": (cmd_run, "Every stage above, in order"),
}


def main(argv: Optional[Sequence[str]] = None):
    parser = argparse.ArgumentParser(
        prog="relmap-ranker",
        description="relmap-ranker - knowledge-resource relation mapping for neural re-ranking",
    )
    sub = parser.add_subparsers(dest="command")

    # -- make-fixture subcommand --
    p_fixture = sub.add_parser("make-fixture", help="Write the synthetic desk-scale experiment")
    p_fixture.add_argument("output", help="Directory for the fixture files")
    p_fixture.add_argument("--docs", type=int, default=300, help="Number of documents (default: 300)")
    p_fixture.add_argument("--queries", type=int, default=30, help="Number of queries (default: 30)")
    p_fixture.add_argument("--seed", type=int, default=42, help="Experiment seed (default: 42)")
    p_fixture.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")

    for name, (_, help_text) in _COMMANDS.items():
        _add_experiment_arguments(sub.add_parser(name, help=help_text))

    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        sys.exit(1)

    if args.command == "make-fixture":
        _configure_logging(args.verbose)
        try:
            paths = generate_fixture(args.output, n_docs=args.docs, n_queries=args.queries, seed=args.seed)
        except (RelmapError, OSError) as exc:
            print(f"Error: {exc}", file=sys.stderr)
            sys.exit(1)
        print(f"Fixture written to {paths.root}; run with --config {paths.config}")
        return

    handler, _ = _COMMANDS[args.command]
    try:
        config = _resolve_config(args)
        handler(config)
    except ConfigurationError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(2)
    except (RelmapError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
