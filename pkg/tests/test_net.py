"""Tests for the siamese network: forward pass, hinge gradients, SGD and checkpoints."""

import dataclasses

import numpy as np
import pytest

import relmap_ranker.net as net
from relmap_ranker.config import ExperimentConfig
from relmap_ranker.corpus import InputVector, TrainingInstance, VectorStore
from relmap_ranker.errors import ConfigurationError, DimensionError, ParseError, TrainingDivergedError
from relmap_ranker.net import (
    Layer,
    SiameseParams,
    TrainConfig,
    delta,
    forward,
    gradients,
    hinge_loss,
    init_params,
    load_checkpoint,
    save_checkpoint,
    score,
    score_candidates,
    train,
)


def _store(rows, k=1):
    dims = len(next(iter(rows.values())))
    store = VectorStore(dims=dims, k=k)
    for text_id, x_t in rows.items():
        store.add(text_id, InputVector(x_t=x_t, x_kr=np.zeros(k)))
    return store


def _random_problem(rng, input_dim=6, n_negatives=3):
    ids = ["q", "pos"] + [f"neg{i}" for i in range(n_negatives)]
    store = _store({i: rng.normal(size=input_dim) for i in ids})
    inst = TrainingInstance(query_id="q", positive="pos", negatives=tuple(ids[2:]))
    params = init_params(input_dim, seed=int(rng.integers(0, 1000)), hidden_sizes=(5, 4), output_size=3, features="p2v")
    for layer in params.layers:
        layer.bias = rng.normal(scale=0.5, size=layer.bias.shape)
    return params, inst, store


def _loss(params, inst, store, cfg):
    return hinge_loss(delta(params, inst, store, cfg.average_negatives), cfg.alpha)


def _toy_ranking_problem():
    """Query matches the positive on its first two components; negatives live elsewhere."""
    rng = np.random.default_rng(0)
    rows, instances = {}, []
    for q in range(6):
        base = np.zeros(8)
        base[q % 4] = 1.0
        rows[f"q{q}"] = base + rng.normal(scale=0.05, size=8)
        rows[f"p{q}"] = base + rng.normal(scale=0.05, size=8)
        negatives = []
        for n in range(3):
            other = np.zeros(8)
            other[4 + (q + n) % 4] = 1.0
            rows[f"n{q}-{n}"] = other + rng.normal(scale=0.05, size=8)
            negatives.append(f"n{q}-{n}")
        instances.append(TrainingInstance(query_id=f"q{q}", positive=f"p{q}", negatives=tuple(negatives)))
    return instances, _store(rows)


def test_init_params_shapes_and_bounds():
    params = init_params(10, seed=1, hidden_sizes=(8, 6), output_size=4)
    assert [l.shape for l in params.layers] == [(8, 10), (6, 8), (4, 6)]
    assert params.input_dim == 10 and params.output_dim == 4
    for layer in params.layers:
        rows, cols = layer.shape
        assert np.all(np.abs(layer.weights) <= np.sqrt(6.0 / (rows + cols)))
        assert not layer.bias.any()
    again = init_params(10, seed=1, hidden_sizes=(8, 6), output_size=4)
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(params.layers, again.layers))


def test_params_reject_mismatched_layers():
    with pytest.raises(DimensionError, match="layer 1"):
        SiameseParams([Layer(np.ones((3, 2)), np.zeros(3)), Layer(np.ones((2, 4)), np.zeros(2))])
    with pytest.raises(DimensionError, match="bias"):
        SiameseParams([Layer(np.ones((3, 2)), np.zeros(2))])
    with pytest.raises(DimensionError):
        init_params(0, seed=0)


def test_forward_and_score_in_evaluation_mode():
    params = init_params(5, seed=2, hidden_sizes=(7,), output_size=3)
    x = np.random.default_rng(3).normal(size=(4, 5))
    y = forward(params, x)
    assert y.shape == (4, 3)
    assert np.all(y >= 0)
    assert np.allclose(forward(params, x[1]), y[1], rtol=1e-12, atol=1e-12)
    assert -1.0 <= score(params, x[0], x[1]) <= 1.0
    assert score(params, x[0], x[0]) == pytest.approx(1.0) or not forward(params, x[0]).any()
    assert np.allclose(score_candidates(params, x[0], x[1:]), [score(params, x[0], r) for r in x[1:]])
    assert score_candidates(params, x[0], np.zeros((0, 5))).size == 0
    with pytest.raises(DimensionError):
        forward(params, np.ones(4))


def test_zero_latent_vector_scores_zero():
    params = SiameseParams([Layer(np.eye(2), np.zeros(2))], features="p2v")
    assert score(params, np.array([-1.0, -1.0]), np.array([1.0, 0.0])) == 0.0


def test_dropout_only_in_training_mode():
    params = init_params(6, seed=4, hidden_sizes=(16,), output_size=8)
    x = np.ones(6)
    assert np.array_equal(forward(params, x), forward(params, x, training=True, rng=None))
    dropped = [forward(params, x, training=True, rng=np.random.default_rng(s), dropout=0.5) for s in range(5)]
    assert any(not np.allclose(d, forward(params, x)) for d in dropped)
    same = forward(params, x, training=True, rng=np.random.default_rng(1), dropout=0.5)
    assert np.array_equal(same, dropped[1])


def test_delta_sums_or_averages_negatives():
    params = SiameseParams([Layer(np.eye(3), np.zeros(3))], features="p2v")
    store = _store({"q": [1.0, 0.0, 0.0], "pos": [1.0, 0.0, 0.0], "n1": [1.0, 1.0, 0.0], "n2": [0.0, 0.0, 1.0]})
    inst = TrainingInstance("q", "pos", ("n1", "n2"))
    assert delta(params, inst, store) == pytest.approx(1.0 - 1.0 / np.sqrt(2))
    assert delta(params, inst, store, average_negatives=True) == pytest.approx(1.0 - 0.5 / np.sqrt(2))


def test_hinge_loss_values():
    assert hinge_loss(0.2, 1.0) == pytest.approx(0.8)
    assert hinge_loss(1.5, 1.0) == 0.0
    assert hinge_loss(-1.0, 0.5) == pytest.approx(1.5)
    with pytest.raises(ConfigurationError):
        hinge_loss(0.0, 0.0)


def _numeric_gradients(params, inst, store, cfg, eps):
    numeric = []
    for layer in params.layers:
        for arr in (layer.weights, layer.bias):
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                saved = arr[idx]
                arr[idx] = saved + eps
                up = _loss(params, inst, store, cfg)
                arr[idx] = saved - eps
                down = _loss(params, inst, store, cfg)
                arr[idx] = saved
                fd[idx] = (up - down) / (2 * eps)
            numeric.append(fd)
    return numeric


def _near_kink(params, inst, store, cfg):
    """True when the hinge or any ReLU sits too close to its kink for central differences."""
    if abs(delta(params, inst, store, cfg.average_negatives) - cfg.alpha) <= 1e-3:
        return True
    X = net.instance_matrix(inst, store, params.features)
    pre, _, _ = net._forward_pass(params, X, [None] * len(params.layers))
    return any(np.any(np.abs(z) <= 1e-4) for z in pre)


@pytest.mark.parametrize("average_negatives", [False, True])
def test_gradients_match_finite_differences(average_negatives):
    rng = np.random.default_rng(21)
    cfg = TrainConfig(alpha=5.0, n_negatives=3, dropout=0.0, average_negatives=average_negatives)
    checked = 0
    for _ in range(400):
        if checked == 100:
            break
        params, inst, store = _random_problem(rng)
        if _near_kink(params, inst, store, cfg):
            continue
        analytic = gradients(params, inst, store, cfg)
        numeric = _numeric_gradients(params, inst, store, cfg, eps=1e-5)
        flat_a = np.concatenate([g.ravel() for layer in analytic for g in (layer.weights, layer.bias)])
        flat_n = np.concatenate([g.ravel() for g in numeric])
        scale = max(np.linalg.norm(flat_a) + np.linalg.norm(flat_n), 1e-12)
        assert np.linalg.norm(flat_a - flat_n) / scale < 1e-4
        checked += 1
    assert checked == 100


def test_satisfied_margin_gives_exactly_zero_gradients():
    params = SiameseParams([Layer(np.eye(3), np.zeros(3))], features="p2v")
    store = _store({"q": [1.0, 0.0, 0.0], "pos": [1.0, 0.0, 0.0], "neg": [0.0, 1.0, 0.0]})
    inst = TrainingInstance("q", "pos", ("neg",))
    cfg = TrainConfig(alpha=0.5, n_negatives=1)
    assert delta(params, inst, store) >= cfg.alpha
    for g in gradients(params, inst, store, cfg, rng=np.random.default_rng(0)):
        assert not g.weights.any()
        assert not g.bias.any()


def test_zero_learning_rate_keeps_loss_constant():
    instances, store = _toy_ranking_problem()
    params = init_params(store.input_dim("p2v"), seed=3, hidden_sizes=(6,), output_size=4, features="p2v")
    trained, history = train(params, instances, store, TrainConfig(epochs=3, learning_rate=0.0, n_negatives=3))
    assert history.eval_loss == [history.initial] * 3
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(trained.layers, params.layers))


def test_training_reduces_loss_and_leaves_input_untouched():
    instances, store = _toy_ranking_problem()
    params = init_params(store.input_dim("p2v"), seed=3, hidden_sizes=(16,), output_size=8, features="p2v")
    before = params.copy()
    cfg = TrainConfig(epochs=40, learning_rate=0.1, batch_size=2, dropout=0.0, n_negatives=3, seed=5)
    trained, history = train(params, instances, store, cfg)
    assert len(history.eval_loss) == len(history.train_loss) == 40
    assert history.eval_loss[-1] < history.initial
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(params.layers, before.layers))

    again, history2 = train(params, instances, store, cfg)
    assert history2.eval_loss == history.eval_loss
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(trained.layers, again.layers))


def test_validation_keeps_best_epoch_and_earliest_tie():
    instances, store = _toy_ranking_problem()
    params = init_params(store.input_dim("p2v"), seed=3, hidden_sizes=(16,), output_size=8, features="p2v")
    cfg = TrainConfig(epochs=3, learning_rate=0.1, batch_size=2, dropout=0.0, n_negatives=3, seed=5)
    scores = iter([0.1, 0.5, 0.3, 0.5])
    kept, history = train(params, instances, store, cfg, validate=lambda p: next(scores))
    assert history.validation == [0.1, 0.5, 0.3, 0.5]
    assert history.best_epoch == 1
    assert len(history.eval_loss) == 3

    one_epoch, _ = train(params, instances, store, dataclasses.replace(cfg, epochs=1))
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(kept.layers, one_epoch.layers))

    initial, history = train(params, instances, store, cfg, validate=lambda p: 0.0)
    assert history.best_epoch == 0
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(initial.layers, params.layers))
    _, plain = train(params, instances, store, cfg)
    assert plain.validation == [] and plain.best_epoch is None


def test_train_rejects_empty_input_and_reports_divergence(monkeypatch):
    instances, store = _toy_ranking_problem()
    params = init_params(store.input_dim("p2v"), seed=0, hidden_sizes=(4,), output_size=2, features="p2v")
    with pytest.raises(ConfigurationError):
        train(params, [], store, TrainConfig())
    calls = iter([0.5, float("nan")])
    monkeypatch.setattr(net, "_mean_eval_loss", lambda *args: next(calls))
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(params, instances, store, TrainConfig(epochs=2, n_negatives=3))
    assert excinfo.value.epoch == 1


def test_train_config_validation_and_experiment_seed():
    with pytest.raises(ConfigurationError):
        TrainConfig(alpha=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)
    cfg = TrainConfig.from_experiment(ExperimentConfig(seed=10, negatives=2, epochs=7), fold=2)
    assert (cfg.n_negatives, cfg.epochs, cfg.seed) == (2, 7, 17)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(9, seed=8, hidden_sizes=(5,), output_size=3, features="kr")
    save_checkpoint(params, tmp_path / "fold-0.json", {"fold": 0, "instances": 12})
    loaded, config = load_checkpoint(tmp_path / "fold-0.json")
    assert loaded.features == "kr"
    assert config == {"fold": 0, "instances": 12}
    for a, b in zip(loaded.layers, params.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_load_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}', encoding="utf-8")
    with pytest.raises(ParseError, match="not a relmap-ranker checkpoint"):
        load_checkpoint(path)
    path.write_text("{broken", encoding="utf-8")
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_text('{"format": "relmap-ranker-checkpoint", "version": 1, "layers": [{"rows": 2}]}', encoding="utf-8")
    with pytest.raises(ParseError, match="malformed"):
        load_checkpoint(path)
