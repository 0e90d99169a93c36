"""Experiment configuration: defaults, config file, environment and CLI flags."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from .errors import ConfigurationError
from .store import stable_hash

logger = logging.getLogger("relmap_ranker.config")

ENV_PREFIX = "RELMAP_RANKER_"

STRATEGIES = ("idf_min", "idf_max", "centroid")
FEATURE_SETS = ("kr+p2v", "kr", "p2v")

# Offsets added to the experiment seed so every stage draws from its own stream.
STAGE_SEED_OFFSETS = {
    "embeddings": 1,
    "referential": 2,
    "sampling": 3,
    "init": 4,
    "train": 5,
    "folds": 6,
    "pivots": 7,
    "difficulty": 8,
    "fixture": 9,
    "random": 10,
    "validation": 11,
}

# Keys excluded from the config hash: they change logging, validation or location, not results.
_UNHASHED = frozenset({"verbose", "strict_config", "source_path", "output_dir"})


def _parse_bool(value: Any, default: Optional[bool] = None) -> Optional[bool]:
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    text = str(value).strip().lower()
    if text in {"1", "true", "yes", "y", "on"}:
        return True
    if text in {"0", "false", "no", "n", "off"}:
        return False
    return default


def _parse_list(value: Any, item: Callable[[Any], Any]) -> tuple:
    if isinstance(value, (list, tuple)):
        raw = list(value)
    else:
        raw = [part for part in str(value).replace(";", ",").split(",")]
    return tuple(item(part.strip() if isinstance(part, str) else part) for part in raw if str(part).strip())


@dataclass
class ExperimentConfig:
    """Resolved experiment settings after file/env/CLI merge."""

    # Inputs
    nodes_path: Optional[str] = None
    edges_path: Optional[str] = None
    docs_path: Optional[str] = None
    queries_path: Optional[str] = None
    annotations_path: Optional[str] = None
    qrels_path: Optional[str] = None
    text_embeddings_path: Optional[str] = None
    object_embeddings_path: Optional[str] = None
    output_dir: str = "relmap-out"

    # Knowledge resource
    relation_filter: str = "IS-A"
    annotations_include_queries: bool = False

    # Distributional vectors
    dims: int = 100
    embedding_epochs: int = 20
    embedding_negatives: int = 5
    embedding_learning_rate: float = 0.025
    embedding_min_learning_rate: float = 0.0001
    cotrain_queries: bool = True

    # Referential
    k: int = 200
    strategy: str = "centroid"
    kmeans_max_iter: int = 100

    # Siamese ranker
    features: str = "kr+p2v"
    alpha: float = 1.0
    negatives: int = 4
    batch_size: int = 5
    dropout: float = 0.3
    epochs: int = 50
    learning_rate: float = 0.01
    average_negatives: bool = False
    hidden_sizes: tuple[int, ...] = (64, 64)
    output_size: int = 32
    validation_fraction: float = 0.2

    # Retrieval and evaluation
    folds: int = 5
    top_candidates: int = 2000
    top_rerank: int = 1000
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    run_tag: str = "relmap"
    variants: tuple[str, ...] = ("kr+p2v",)

    # Representation analysis
    analysis_k_values: tuple[int, ...] = (100, 200)
    analysis_strategies: tuple[str, ...] = ("idf_max", "centroid", "idf_min")
    n_pivots: int = 100
    neighborhood: int = 10

    seed: int = 42
    verbose: bool = False
    strict_config: bool = False
    source_path: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def hashed_settings(self) -> dict[str, Any]:
        """Settings that determine results; echoed in manifests."""
        return {key: value for key, value in self.to_dict().items() if key not in _UNHASHED}

    def config_hash(self) -> str:
        return stable_hash(self.hashed_settings())

    def stage_seed(self, stage: str, fold: int = 0) -> int:
        if stage not in STAGE_SEED_OFFSETS:
            raise ConfigurationError(f"Unknown seed stage: {stage}")
        return int(self.seed) + STAGE_SEED_OFFSETS[stage] + int(fold)


def _coerce_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean where integer expected")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"{value!r} is not an integer")
    return int(value)


def _coerce_bool(value: Any) -> bool:
    parsed = _parse_bool(value)
    if parsed is None:
        raise ValueError(f"{value!r} is not a boolean")
    return parsed


def _coerce_optional_str(value: Any) -> Optional[str]:
    if value is None:
        return None
    text = str(value).strip()
    return text or None


_COERCERS: dict[str, Callable[[Any], Any]] = {
    "nodes_path": _coerce_optional_str,
    "edges_path": _coerce_optional_str,
    "docs_path": _coerce_optional_str,
    "queries_path": _coerce_optional_str,
    "annotations_path": _coerce_optional_str,
    "qrels_path": _coerce_optional_str,
    "text_embeddings_path": _coerce_optional_str,
    "object_embeddings_path": _coerce_optional_str,
    "output_dir": lambda v: str(v).strip(),
    "relation_filter": lambda v: str(v).strip(),
    "annotations_include_queries": _coerce_bool,
    "dims": _coerce_int,
    "embedding_epochs": _coerce_int,
    "embedding_negatives": _coerce_int,
    "embedding_learning_rate": float,
    "embedding_min_learning_rate": float,
    "cotrain_queries": _coerce_bool,
    "k": _coerce_int,
    "strategy": lambda v: str(v).strip().lower(),
    "kmeans_max_iter": _coerce_int,
    "features": lambda v: str(v).strip().lower(),
    "alpha": float,
    "negatives": _coerce_int,
    "batch_size": _coerce_int,
    "dropout": float,
    "epochs": _coerce_int,
    "learning_rate": float,
    "average_negatives": _coerce_bool,
    "hidden_sizes": lambda v: _parse_list(v, _coerce_int),
    "output_size": _coerce_int,
    "validation_fraction": float,
    "folds": _coerce_int,
    "top_candidates": _coerce_int,
    "top_rerank": _coerce_int,
    "bm25_k1": float,
    "bm25_b": float,
    "run_tag": lambda v: str(v).strip(),
    "variants": lambda v: _parse_list(v, lambda s: str(s).strip().lower()),
    "analysis_k_values": lambda v: _parse_list(v, _coerce_int),
    "analysis_strategies": lambda v: _parse_list(v, lambda s: str(s).strip().lower()),
    "n_pivots": _coerce_int,
    "neighborhood": _coerce_int,
    "seed": _coerce_int,
    "verbose": _coerce_bool,
    "strict_config": _coerce_bool,
}


def _parse_key_value(text: str, path: str) -> dict[str, Any]:
    parsed: dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{path}: line {number}: expected `key = value`")
        parsed[key.strip().replace("-", "_")] = value.strip()
    return parsed


def _flatten_sections(data: Mapping[str, Any]) -> dict[str, Any]:
    # {"net": {"alpha": 2}} and {"alpha": 2} resolve identically.
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update(_flatten_sections(value))
        else:
            flat[str(key).replace("-", "_")] = value
    return flat


def _read_config_file(path: str) -> dict[str, Any]:
    try:
        data = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}") from exc
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        try:
            parsed = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    elif suffix in {".yml", ".yaml"}:
        try:
            import yaml  # type: ignore
        except ImportError as exc:
            raise ConfigurationError(
                "YAML config requested but PyYAML is not installed. "
                "Install `pyyaml` or use a key-value or JSON config."
            ) from exc
        parsed = yaml.safe_load(data) or {}
    else:
        parsed = _parse_key_value(data, path)
    if not isinstance(parsed, dict):
        raise ConfigurationError("Experiment config must be a mapping")
    return _flatten_sections(parsed)


def _apply_values(cfg: ExperimentConfig, values: Mapping[str, Any], origin: str) -> ExperimentConfig:
    for key, raw in values.items():
        coerce = _COERCERS.get(key)
        if coerce is None:
            if cfg.strict_config:
                raise ConfigurationError(f"Unknown config key {key!r} ({origin})")
            logger.warning("Ignoring unknown config key %r (%s)", key, origin)
            continue
        try:
            setattr(cfg, key, coerce(raw))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"Invalid value for {key!r} ({origin}): {raw!r}") from exc
    return cfg


def _apply_env(cfg: ExperimentConfig, env: Mapping[str, str]) -> ExperimentConfig:
    for key, coerce in _COERCERS.items():
        name = ENV_PREFIX + key.upper()
        raw = env.get(name)
        if raw is None or raw == "":
            continue
        try:
            setattr(cfg, key, coerce(raw))
        except (TypeError, ValueError):
            logger.warning("Ignoring invalid environment value %s=%r", name, raw)
    return cfg


def _apply_cli_overrides(cfg: ExperimentConfig, cli: Mapping[str, Any]) -> ExperimentConfig:
    present = {key: value for key, value in cli.items() if value is not None and key in _COERCERS}
    return _apply_values(cfg, present, "command line")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Raise ConfigurationError for any out-of-range setting."""
    checks = [
        (cfg.k >= 1, "k must be >= 1"),
        (cfg.strategy in STRATEGIES, f"Invalid strategy: {cfg.strategy}"),
        (cfg.dims >= 1, "dims must be >= 1"),
        (cfg.embedding_epochs >= 1, "embedding_epochs must be >= 1"),
        (cfg.embedding_negatives >= 1, "embedding_negatives must be >= 1"),
        (cfg.embedding_learning_rate > 0, "embedding_learning_rate must be > 0"),
        (0 <= cfg.embedding_min_learning_rate <= cfg.embedding_learning_rate,
         "embedding_min_learning_rate must lie in [0, embedding_learning_rate]"),
        (cfg.kmeans_max_iter >= 1, "kmeans_max_iter must be >= 1"),
        (cfg.features in FEATURE_SETS, f"Invalid feature set: {cfg.features}"),
        (cfg.alpha > 0, "alpha must be > 0"),
        (cfg.negatives >= 1, "negatives must be >= 1"),
        (cfg.batch_size >= 1, "batch_size must be >= 1"),
        (0 <= cfg.dropout < 1, "dropout must lie in [0, 1)"),
        (cfg.epochs >= 1, "epochs must be >= 1"),
        (cfg.learning_rate >= 0, "learning_rate must be >= 0"),
        (len(cfg.hidden_sizes) >= 1 and all(h >= 1 for h in cfg.hidden_sizes),
         "hidden_sizes must list positive layer sizes"),
        (cfg.output_size >= 1, "output_size must be >= 1"),
        (0 <= cfg.validation_fraction < 0.5, "validation_fraction must lie in [0, 0.5)"),
        (cfg.folds >= 2, "folds must be >= 2"),
        (cfg.top_candidates >= 1, "top_candidates must be >= 1"),
        (cfg.top_rerank >= 1, "top_rerank must be >= 1"),
        (cfg.bm25_k1 >= 0, "bm25_k1 must be >= 0"),
        (0 <= cfg.bm25_b <= 1, "bm25_b must lie in [0, 1]"),
        (bool(cfg.run_tag) and not any(c.isspace() for c in cfg.run_tag), "run_tag must be one word"),
        (len(cfg.variants) >= 1 and all(v in FEATURE_SETS for v in cfg.variants),
         f"variants must be drawn from {', '.join(FEATURE_SETS)}"),
        (len(cfg.analysis_k_values) >= 1 and all(v >= 1 for v in cfg.analysis_k_values),
         "analysis_k_values must list positive cluster counts"),
        (all(s in STRATEGIES for s in cfg.analysis_strategies), "Invalid analysis strategy"),
        (cfg.n_pivots >= 1, "n_pivots must be >= 1"),
        (cfg.neighborhood >= 1, "neighborhood must be >= 1"),
        (bool(cfg.output_dir), "output_dir must be set"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigurationError(message)
    return cfg


def load_experiment_config(
    config_path: Optional[str] = None,
    cli_overrides: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Resolve experiment config from defaults + file + env + CLI."""
    env_map = os.environ if env is None else env
    cli = dict(cli_overrides or {})
    cfg = ExperimentConfig()

    strict = _parse_bool(cli.get("strict_config"))
    if strict is None:
        strict = _parse_bool(env_map.get(ENV_PREFIX + "STRICT_CONFIG"), False)
    cfg.strict_config = bool(strict)

    resolved_path = config_path or cli.get("config_path") or env_map.get(ENV_PREFIX + "CONFIG")
    if resolved_path:
        cfg = _apply_values(cfg, _read_config_file(str(resolved_path)), str(resolved_path))
        cfg.source_path = str(resolved_path)
        base = Path(resolved_path).resolve().parent
        # Relative input paths in a config file are relative to that file.
        for key in ("nodes_path", "edges_path", "docs_path", "queries_path", "annotations_path",
                    "qrels_path", "text_embeddings_path", "object_embeddings_path"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                setattr(cfg, key, str(base / value))

    cfg = _apply_env(cfg, env_map)
    cfg = _apply_cli_overrides(cfg, cli)
    return validate_config(cfg)
