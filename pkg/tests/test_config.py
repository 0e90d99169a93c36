"""Tests for experiment config resolution."""

import json
from pathlib import Path

import pytest

from relmap_ranker.config import ExperimentConfig, load_experiment_config
from relmap_ranker.errors import ConfigurationError


def test_defaults_match_reference_settings():
    cfg = load_experiment_config(env={})
    assert cfg.k == 200
    assert cfg.strategy == "centroid"
    assert cfg.dims == 100
    assert cfg.negatives == 4
    assert cfg.batch_size == 5
    assert cfg.dropout == 0.3
    assert cfg.epochs == 50
    assert cfg.folds == 5
    assert cfg.top_candidates == 2000
    assert cfg.top_rerank == 1000
    assert cfg.features == "kr+p2v"
    assert cfg.analysis_k_values == (100, 200)


def test_key_value_file_resolves_relative_paths(tmp_path):
    config_path = tmp_path / "exp.conf"
    config_path.write_text(
        "# experiment\nk = 40\nstrategy = idf_max\ndocs_path = data/docs.jsonl\nhidden_sizes = 32, 16\n",
        encoding="utf-8",
    )
    cfg = load_experiment_config(str(config_path), env={})
    assert cfg.k == 40
    assert cfg.strategy == "idf_max"
    assert cfg.hidden_sizes == (32, 16)
    assert Path(cfg.docs_path) == tmp_path.resolve() / "data" / "docs.jsonl"
    assert cfg.source_path == str(config_path)


def test_json_sections_flatten(tmp_path):
    config_path = tmp_path / "exp.json"
    config_path.write_text(json.dumps({"net": {"alpha": 2, "dropout": 0.1}, "seed": 7}), encoding="utf-8")
    cfg = load_experiment_config(str(config_path), env={})
    assert cfg.alpha == 2.0
    assert cfg.dropout == 0.1
    assert cfg.seed == 7


def test_precedence_file_env_cli(tmp_path):
    config_path = tmp_path / "exp.conf"
    config_path.write_text("k = 10\nepochs = 3\ndims = 20\n", encoding="utf-8")
    env = {"RELMAP_RANKER_K": "20", "RELMAP_RANKER_EPOCHS": "4"}
    cfg = load_experiment_config(str(config_path), cli_overrides={"k": 30, "dims": None}, env=env)
    assert cfg.k == 30
    assert cfg.epochs == 4
    assert cfg.dims == 20


def test_config_path_from_environment(tmp_path):
    config_path = tmp_path / "exp.conf"
    config_path.write_text("k = 12\n", encoding="utf-8")
    cfg = load_experiment_config(env={"RELMAP_RANKER_CONFIG": str(config_path)})
    assert cfg.k == 12


def test_invalid_env_value_is_ignored():
    cfg = load_experiment_config(env={"RELMAP_RANKER_K": "many"})
    assert cfg.k == 200


def test_unknown_key_warns_or_fails(tmp_path, caplog):
    config_path = tmp_path / "exp.conf"
    config_path.write_text("k = 10\nbogus = 1\n", encoding="utf-8")
    cfg = load_experiment_config(str(config_path), env={})
    assert cfg.k == 10
    assert "bogus" in caplog.text
    with pytest.raises(ConfigurationError, match="bogus"):
        load_experiment_config(str(config_path), cli_overrides={"strict_config": True}, env={})


def test_validation_rejects_out_of_range_values():
    with pytest.raises(ConfigurationError, match="strategy"):
        load_experiment_config(cli_overrides={"strategy": "median"}, env={})
    with pytest.raises(ConfigurationError, match="dropout"):
        load_experiment_config(cli_overrides={"dropout": 1.0}, env={})
    with pytest.raises(ConfigurationError, match="folds"):
        load_experiment_config(cli_overrides={"folds": 1}, env={})
    with pytest.raises(ConfigurationError, match="variants"):
        load_experiment_config(cli_overrides={"variants": "kr,bogus"}, env={})
    with pytest.raises(ConfigurationError, match="validation_fraction"):
        load_experiment_config(cli_overrides={"validation_fraction": 0.5}, env={})


def test_bad_value_type_is_configuration_error():
    with pytest.raises(ConfigurationError, match="'k'"):
        load_experiment_config(cli_overrides={"k": "lots"}, env={})
    with pytest.raises(ConfigurationError):
        load_experiment_config(cli_overrides={"cotrain_queries": "maybe"}, env={})


def test_unreadable_or_malformed_file(tmp_path):
    with pytest.raises(ConfigurationError, match="Cannot read"):
        load_experiment_config(str(tmp_path / "missing.conf"), env={})
    bad = tmp_path / "bad.conf"
    bad.write_text("k 10\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="line 1"):
        load_experiment_config(str(bad), env={})


def test_config_hash_ignores_location_and_verbosity():
    a = ExperimentConfig(output_dir="one", verbose=False)
    b = ExperimentConfig(output_dir="two", verbose=True)
    assert a.config_hash() == b.config_hash()
    assert ExperimentConfig(k=100).config_hash() != a.config_hash()
    assert "output_dir" not in a.hashed_settings()
    assert "output_dir" in a.to_dict()


def test_stage_seeds_are_offset_per_stage_and_fold():
    cfg = ExperimentConfig(seed=100)
    assert cfg.stage_seed("embeddings") == 101
    assert cfg.stage_seed("train", fold=3) == 108
    assert cfg.stage_seed("folds") == 106
    assert cfg.stage_seed("validation", fold=2) == 113
    with pytest.raises(ConfigurationError):
        cfg.stage_seed("nope")
