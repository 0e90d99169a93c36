"""Tests for BM25, re-ranking, run files, MAP and query difficulty."""

import io
import math

import numpy as np
import pytest

from relmap_ranker.config import ExperimentConfig
from relmap_ranker.corpus import Corpus, InputVector, VectorStore, load_qrels
from relmap_ranker.errors import ConfigurationError, ParseError
from relmap_ranker.net import Layer, SiameseParams
from relmap_ranker.retrieval import (
    DifficultyClassRow,
    average_precision,
    bm25_candidates,
    bm25_rank,
    build_index,
    classify_query_difficulty,
    cross_validate,
    evaluate_folds,
    mean_average_precision,
    per_query_average_precision,
    random_rerank,
    read_run,
    rerank,
    split_validation,
    write_run,
)


def _qrels(rows):
    return load_qrels(io.StringIO("".join(f"{q} 0 {d} {g}\n" for q, d, g in rows)))


def _precision_at(ranking, relevant, k):
    return sum(1 for d in ranking[:k] if d in relevant) / k


def test_average_precision_reference_value():
    qrels = _qrels([("q", "a", 1), ("q", "c", 2), ("q", "b", 0)])
    assert average_precision(["a", "b", "c"], qrels, "q") == pytest.approx(5 / 6)
    assert average_precision([("c", 0.9), ("a", 0.8)], qrels, "q") == pytest.approx(1.0)


def test_unretrieved_relevant_documents_count_as_zero():
    qrels = _qrels([("q", "a", 1), ("q", "z", 1)])
    assert average_precision(["a", "x"], qrels, "q") == pytest.approx(0.5)
    assert average_precision([], qrels, "q") == 0.0
    with pytest.raises(ConfigurationError):
        average_precision(["a"], _qrels([("q", "a", 0)]), "q")


def test_map_matches_precision_at_k_definition():
    rng = np.random.default_rng(13)
    for _ in range(50):
        docs = [f"d{i}" for i in range(20)]
        rows, run = [], {}
        for q in range(4):
            judged = rng.choice(docs, size=10, replace=False)
            grades = rng.integers(0, 3, size=10)
            grades[0] = 1
            rows += [(f"q{q}", d, int(g)) for d, g in zip(judged, grades)]
            run[f"q{q}"] = [(d, 0.0) for d in rng.permutation(docs)[: int(rng.integers(5, 21))]]
        qrels = _qrels(rows)
        expected = []
        for q, ranking in run.items():
            relevant = set(qrels.relevant(q))
            ids = [d for d, _ in ranking]
            hits = [k for k in range(1, len(ids) + 1) if ids[k - 1] in relevant]
            expected.append(sum(_precision_at(ids, relevant, k) for k in hits) / len(relevant))
        assert mean_average_precision(run, qrels) == pytest.approx(np.mean(expected), abs=1e-12)


def test_map_skips_queries_without_relevant_documents(caplog):
    qrels = _qrels([("q1", "a", 1), ("q2", "a", 0)])
    run = {"q1": [("a", 1.0)], "q2": [("a", 1.0)]}
    assert per_query_average_precision(run, qrels) == {"q1": 1.0}
    assert mean_average_precision(run, qrels) == 1.0
    assert "'q2'" in caplog.text
    assert mean_average_precision({"q2": []}, qrels) == 0.0


def test_bm25_hand_computed_score():
    index = build_index({"d1": ["a", "b"], "d2": ["b", "b", "c"]})
    assert index.N == 2 and index.avg_dl == 2.5 and index.df("b") == 2
    ((doc, value),) = bm25_rank(index, ["a", "a"])
    norm = 1.2 * (1 - 0.75 + 0.75 * 2 / 2.5)
    assert doc == "d1"
    assert value == pytest.approx(math.log(2) * 2.2 / (1 + norm))


def test_bm25_ties_break_on_document_id():
    index = build_index({"z": ["x", "y"], "m": ["x", "y"], "a": ["x", "y"], "n": ["q"]})
    ranking = bm25_rank(index, ["x"])
    assert [doc for doc, _ in ranking] == ["a", "m", "z"]
    assert bm25_rank(index, ["x"], top=2) == ranking[:2]


def test_bm25_unknown_terms_and_bad_arguments(caplog):
    index = build_index(Corpus(documents={"d": ["a"]}))
    assert bm25_rank(index, ["nothing"]) == []
    assert "no indexed terms" in caplog.text
    with pytest.raises(ConfigurationError):
        bm25_rank(index, ["a"], top=0)
    with pytest.raises(ConfigurationError):
        build_index({})


def test_bm25_candidates_cover_every_query():
    index = build_index({"d1": ["a"], "d2": ["b"]})
    run = bm25_candidates(index, {"q2": ["b"], "q1": ["a", "b"]}, top=5)
    assert list(run) == ["q1", "q2"]
    assert [d for d, _ in run["q2"]] == ["d2"]


def test_rerank_orders_by_cosine_and_zero_scores_missing_vectors(caplog):
    params = SiameseParams([Layer(np.eye(2), np.zeros(2))], features="p2v")
    store = VectorStore(dims=2, k=1)
    for text_id, x_t in {"q": [1.0, 0.0], "near": [1.0, 0.1], "far": [0.1, 1.0]}.items():
        store.add(text_id, InputVector(x_t=x_t, x_kr=[0.0]))
    ranking = rerank(params, "q", ["far", "ghost", "near", "near"], store)
    assert [d for d, _ in ranking] == ["near", "far", "ghost"]
    assert ranking[-1][1] == 0.0
    assert "1 candidates have no input vector" in caplog.text
    assert rerank(params, "q", ["far", "near"], store, top=1)[0][0] == "near"
    with pytest.raises(ConfigurationError):
        rerank(None, "q", ["near"], store)


def test_evaluate_folds_needs_one_model_per_fold():
    with pytest.raises(ConfigurationError, match="1 models for 2 folds"):
        evaluate_folds([None], [["q1"], ["q2"]], {}, VectorStore(dims=1, k=1), _qrels([("q1", "a", 1)]))


def _cv_problem():
    rng = np.random.default_rng(21)
    docs = [f"d{i:02d}" for i in range(24)]
    queries = [f"q{i}" for i in range(6)]
    rows = []
    for i, q in enumerate(queries):
        rows += [(q, docs[4 * i], 1), (q, docs[4 * i + 1], 2)]
        rows += [(q, docs[(4 * i + j) % 24], 0) for j in range(4, 8)]
    store = VectorStore(dims=4, k=3)
    for text_id in docs + queries:
        store.add(text_id, InputVector(rng.normal(size=4), rng.random(3)))
    corpus = Corpus(documents={d: ["w"] for d in docs}, queries={q: ["w"] for q in queries})
    candidates = {q: [(d, float(24 - n)) for n, d in enumerate(docs)] for q in queries}
    return corpus, _qrels(rows), store, candidates


def test_cross_validate_holds_out_every_query_once():
    corpus, qrels, store, candidates = _cv_problem()
    cfg = ExperimentConfig(
        folds=3, epochs=2, negatives=2, batch_size=2, hidden_sizes=(5,), output_size=3, top_rerank=10, seed=3
    )
    result = cross_validate(corpus, qrels, store, candidates, cfg, feature_set="kr")

    assert sorted(q for fold in result.folds for q in fold) == sorted(corpus.queries)
    assert [len(f) for f in result.folds] == [2, 2, 2]
    assert sorted(result.run) == sorted(corpus.queries)
    assert all(len(ranking) == 10 for ranking in result.run.values())
    for model, held_out in zip(result.models, result.folds):
        assert not set(model.train_queries) & set(held_out)
        assert model.params.features == "kr"
        assert model.params.input_dim == 3
        assert len(model.history.eval_loss) == 2
        assert len(model.validation_queries) == 1
        assert set(model.validation_queries) <= set(model.train_queries)
        assert model.instances == 2 * (len(model.train_queries) - 1)
        assert len(model.history.validation) == 3
        assert model.history.best_epoch in (0, 1, 2)
    assert result.mean_map == pytest.approx(np.mean(result.fold_maps))
    assert 0.0 <= result.mean_map <= 1.0

    again = cross_validate(corpus, qrels, store, candidates, cfg, feature_set="kr")
    assert again.run == result.run


def test_random_rerank_is_a_seeded_permutation():
    run = {"q1": [(f"d{i}", float(20 - i)) for i in range(20)], "q2": [("x", 1.0)]}
    first = random_rerank(run, seed=4)
    assert first == random_rerank(run, seed=4)
    assert first != random_rerank(run, seed=5)
    assert sorted(d for d, _ in first["q1"]) == sorted(d for d, _ in run["q1"])
    scores = [s for _, s in first["q1"]]
    assert scores == sorted(scores, reverse=True)
    assert len(random_rerank(run, seed=4, top=5)["q1"]) == 5


def test_run_file_roundtrip(tmp_path):
    run = {"q2": [("b", 0.25), ("a", -0.5)], "q1": [("c", 1.0)]}
    write_run(run, tmp_path / "x.run", tag="bm25")
    lines = (tmp_path / "x.run").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "q1 Q0 c 1 1.000000 bm25"
    assert lines[2] == "q2 Q0 a 2 -0.500000 bm25"
    assert read_run(tmp_path / "x.run") == {"q1": [("c", 1.0)], "q2": [("b", 0.25), ("a", -0.5)]}


def test_read_run_rejects_short_rows(tmp_path):
    path = tmp_path / "bad.run"
    path.write_text("q1 Q0 a 1 0.5 tag\nq1 Q0 b 2\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        read_run(path)


def test_difficulty_classes_follow_centroids():
    ap = {"q1": 0.9, "q2": 0.85, "q3": 0.5, "q4": 0.48, "q5": 0.1, "q6": 0.12}
    model = {"q1": 0.95, "q2": 0.85, "q3": 0.6, "q4": 0.6, "q5": 0.2, "q6": 0.3}
    corpus = Corpus(queries={q: ["w"] * i for i, q in enumerate(sorted(ap), start=1)})
    report = classify_query_difficulty(ap, seed=0, model_ap=model, corpus=corpus)
    assert not report.degenerate
    assert {q: label for q, (_, label) in report.per_query.items()} == {
        "q1": "easy", "q2": "easy", "q3": "medium", "q4": "medium", "q5": "difficult", "q6": "difficult",
    }
    easy, medium, difficult = report.classes
    assert (easy.label, medium.label, difficult.label) == ("easy", "medium", "difficult")
    assert easy.queries == 2 and easy.mean_words == 1.5
    assert difficult.baseline_map == pytest.approx(0.11)
    assert difficult.model_map == pytest.approx(0.25)
    assert difficult.change_percent == pytest.approx((0.25 - 0.11) / 0.11 * 100)


def test_difficulty_degenerate_and_small_inputs(caplog):
    report = classify_query_difficulty({"a": 0.2, "b": 0.2, "c": 0.7}, seed=1)
    assert report.degenerate
    assert [row.label for row in report.classes] == ["easy", "difficult"]
    assert report.per_query["c"] == (0.7, "easy")
    assert report.classes[0].model_map is None
    assert "distinct AP values" in caplog.text
    with pytest.raises(ConfigurationError):
        classify_query_difficulty({"a": 0.1, "b": 0.2}, seed=1)


def test_change_percent_undefined_for_zero_baseline():
    row = DifficultyClassRow("difficult", 2, 3.0, 2.0, baseline_map=0.0, model_map=0.3)
    assert row.change_percent is None


def test_split_validation_holds_out_judged_queries_only():
    qrels = _qrels([(f"q{i}", "d", 1) for i in range(8)] + [("q8", "d", 0), ("q9", "d", 0)])
    queries = [f"q{i}" for i in range(10)]
    fit, held = split_validation(queries, qrels, 0.2, seed=5)
    assert len(held) == 2
    assert not set(held) & {"q8", "q9"}
    assert sorted(fit + held) == queries
    assert (fit, held) == split_validation(queries, qrels, 0.2, seed=5)
    assert split_validation(queries, qrels, 0.0, seed=5) == (queries, [])
    assert split_validation(["q0"], qrels, 0.4, seed=5) == (["q0"], [])
    assert split_validation(["q8", "q9"], qrels, 0.4, seed=5) == (["q8", "q9"], [])


def test_cross_validate_without_validation_keeps_last_epoch():
    corpus, qrels, store, candidates = _cv_problem()
    cfg = ExperimentConfig(
        folds=3, epochs=2, negatives=2, batch_size=2, hidden_sizes=(5,), output_size=3, seed=3,
        validation_fraction=0.0,
    )
    result = cross_validate(corpus, qrels, store, candidates, cfg, feature_set="kr")
    for model in result.models:
        assert model.validation_queries == []
        assert model.history.best_epoch is None
        assert model.instances == 2 * len(model.train_queries)
