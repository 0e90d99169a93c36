"""Siamese ranker: shared ReLU projection, cosine score, pairwise hinge loss, SGD.

Query and documents go through the same layers (one weight set). For a
training instance the relevant document's similarity to the query must beat
the summed similarities of the n irrelevant ones by the margin alpha.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Optional, Sequence

import numpy as np

from .corpus import InputVector, TrainingInstance, VectorStore
from .errors import ConfigurationError, DimensionError, ParseError, TrainingDivergedError, UnknownObjectError
from .store import write_text_atomic

if TYPE_CHECKING:
    from .config import ExperimentConfig

logger = logging.getLogger("relmap_ranker.net")

CHECKPOINT_FORMAT = "relmap-ranker-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.weights.shape)  # type: ignore[return-value]


@dataclass
class SiameseParams:
    layers: list[Layer]
    features: str = "kr+p2v"

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionError("network needs at least one layer")
        prev: Optional[int] = None
        for i, layer in enumerate(self.layers):
            layer.weights = np.asarray(layer.weights, dtype=np.float64)
            layer.bias = np.asarray(layer.bias, dtype=np.float64)
            rows, cols = layer.weights.shape
            if layer.bias.shape != (rows,):
                raise DimensionError(f"layer {i}: bias has shape {layer.bias.shape}, expected ({rows},)")
            if prev is not None and cols != prev:
                raise DimensionError(f"layer {i}: expects {cols} inputs but previous layer gives {prev}")
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise DimensionError(f"layer {i}: non-finite parameters")
            prev = rows

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].weights.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].weights.shape[0])

    def copy(self) -> "SiameseParams":
        return SiameseParams([Layer(l.weights.copy(), l.bias.copy()) for l in self.layers], self.features)


@dataclass
class TrainConfig:
    alpha: float = 1.0
    n_negatives: int = 4
    batch_size: int = 5
    dropout: float = 0.3
    epochs: int = 50
    learning_rate: float = 0.01
    seed: int = 0
    average_negatives: bool = False

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be > 0")
        if self.n_negatives < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("n_negatives, batch_size and epochs must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")

    @classmethod
    def from_experiment(cls, cfg: "ExperimentConfig", fold: int = 0) -> "TrainConfig":
        return cls(
            alpha=cfg.alpha,
            n_negatives=cfg.negatives,
            batch_size=cfg.batch_size,
            dropout=cfg.dropout,
            epochs=cfg.epochs,
            learning_rate=cfg.learning_rate,
            seed=cfg.stage_seed("train", fold),
            average_negatives=cfg.average_negatives,
        )


@dataclass
class LossHistory:
    initial: float = 0.0
    eval_loss: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    # validation[0] scores the initial weights, validation[e] the weights after epoch e.
    validation: list[float] = field(default_factory=list)
    best_epoch: Optional[int] = None


def init_params(
    input_dim: int,
    seed: int,
    hidden_sizes: Sequence[int] = (64, 64),
    output_size: int = 32,
    features: str = "kr+p2v",
) -> SiameseParams:
    """Glorot-uniform weights, zero biases."""
    if input_dim <= 0:
        raise DimensionError("input_dim must be > 0")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden_sizes, output_size]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return SiameseParams(layers, features)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _as_array(p: SiameseParams, x: InputVector | np.ndarray) -> np.ndarray:
    arr = x.features(p.features) if isinstance(x, InputVector) else np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != p.input_dim:
        raise DimensionError(f"input has {arr.shape[-1]} components, network expects {p.input_dim}")
    return arr


def _dropout_masks(p: SiameseParams, rows: int, rate: float, rng: Optional[np.random.Generator]) -> list[Optional[np.ndarray]]:
    masks: list[Optional[np.ndarray]] = []
    for layer in p.layers[:-1]:
        if rng is None or rate <= 0:
            masks.append(None)
        else:
            masks.append((rng.random((rows, layer.weights.shape[0])) >= rate) / (1.0 - rate))
    return masks


def _forward_pass(p: SiameseParams, X: np.ndarray, masks: Sequence[Optional[np.ndarray]]):
    """Row-wise forward; returns (pre-activations, layer inputs, output)."""
    pre: list[np.ndarray] = []
    inputs: list[np.ndarray] = []
    h = X
    last = len(p.layers) - 1
    for i, layer in enumerate(p.layers):
        inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        pre.append(z)
        h = _relu(z)
        if i < last and masks[i] is not None:
            h = h * masks[i]
    return pre, inputs, h


def forward(
    p: SiameseParams,
    x: InputVector | np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.3,
) -> np.ndarray:
    """Latent vector(s) y; accepts one vector or a matrix of row vectors.

    In training mode hidden activations get inverted dropout drawn from
    ``rng``; evaluation mode is deterministic.
    """
    X = _as_array(p, x)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    masks = _dropout_masks(p, X2.shape[0], dropout, rng if training else None)
    _, _, y = _forward_pass(p, X2, masks)
    return y[0] if single else y


def _row_cosines(a: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    na = float(np.linalg.norm(a))
    nb = np.linalg.norm(B, axis=1)
    denom = na * nb
    cos = np.divide(B @ a, denom, out=np.zeros(B.shape[0]), where=denom > 0)
    return cos, na, nb


def score(p: SiameseParams, q: InputVector | np.ndarray, d: InputVector | np.ndarray) -> float:
    """Cosine of the evaluation-mode latent vectors; 0 if either is all-zero."""
    yq = forward(p, q)
    yd = forward(p, d)
    cos, _, _ = _row_cosines(yq, yd[None, :])
    return float(np.clip(cos[0], -1.0, 1.0))


def score_candidates(p: SiameseParams, q: InputVector | np.ndarray, docs: np.ndarray) -> np.ndarray:
    """Scores of one query against a matrix of candidate rows."""
    yq = forward(p, q)
    if docs.shape[0] == 0:
        return np.zeros(0)
    cos, _, _ = _row_cosines(yq, forward(p, docs))
    return np.clip(cos, -1.0, 1.0)


def instance_matrix(inst: TrainingInstance, vectors: VectorStore, feature_set: str) -> np.ndarray:
    """Rows: query, positive, then negatives."""
    rows = []
    for text_id in (inst.query_id, inst.positive, *inst.negatives):
        vec = vectors.get(text_id)
        if vec is None:
            raise UnknownObjectError(text_id, "vector store")
        rows.append(vec.features(feature_set))
    return np.vstack(rows)


def _delta_from_cos(cos: np.ndarray, average_negatives: bool) -> float:
    negs = cos[1:]
    total = negs.mean() if average_negatives else negs.sum()
    return float(cos[0] - total)


def delta(
    p: SiameseParams,
    inst: TrainingInstance,
    vectors: VectorStore,
    average_negatives: bool = False,
) -> float:
    """sim(Q, D+) minus the sum (or mean) of sim(Q, D-) over the negatives."""
    _, _, y = _forward_pass(p, instance_matrix(inst, vectors, p.features), [None] * len(p.layers))
    cos, _, _ = _row_cosines(y[0], y[1:])
    return _delta_from_cos(cos, average_negatives)


def hinge_loss(delta_value: float, alpha: float) -> float:
    if alpha <= 0:
        raise ConfigurationError("alpha must be > 0")
    return max(0.0, alpha - delta_value)


def _backprop(
    p: SiameseParams,
    X: np.ndarray,
    alpha: float,
    average_negatives: bool,
    masks: Sequence[Optional[np.ndarray]],
) -> tuple[float, float, list[Layer]]:
    pre, inputs, y = _forward_pass(p, X, masks)
    yq, ys = y[0], y[1:]
    cos, nq, nd = _row_cosines(yq, ys)
    d = _delta_from_cos(cos, average_negatives)
    loss = max(0.0, alpha - d)
    grads = [Layer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in p.layers]
    if loss == 0.0:
        return loss, d, grads

    # dL/dcos: -1 for the positive, +1 (or +1/n) for each negative.
    n = ys.shape[0] - 1
    coef = np.full(ys.shape[0], 1.0 / max(n, 1) if average_negatives else 1.0)
    coef[0] = -1.0

    dy = np.zeros_like(y)
    valid = (nd > 0) & (nq > 0)
    for j in np.flatnonzero(valid):
        c = coef[j]
        dy[0] += c * (ys[j] / (nq * nd[j]) - cos[j] * yq / nq**2)
        dy[j + 1] += c * (yq / (nq * nd[j]) - cos[j] * ys[j] / nd[j] ** 2)

    upstream = dy
    for i in range(len(p.layers) - 1, -1, -1):
        dz = upstream * (pre[i] > 0)
        grads[i].weights = dz.T @ inputs[i]
        grads[i].bias = dz.sum(axis=0)
        if i > 0:
            upstream = dz @ p.layers[i].weights
            if masks[i - 1] is not None:
                upstream = upstream * masks[i - 1]
    return loss, d, grads


def gradients(
    p: SiameseParams,
    inst: TrainingInstance,
    vectors: VectorStore,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> list[Layer]:
    """Subgradient of one instance's hinge loss w.r.t. every layer.

    With ``rng`` given, dropout masks are drawn once and shared by the forward
    and backward pass. Zero everywhere when delta >= alpha.
    """
    X = instance_matrix(inst, vectors, p.features)
    masks = _dropout_masks(p, X.shape[0], cfg.dropout, rng)
    _, _, grads = _backprop(p, X, cfg.alpha, cfg.average_negatives, masks)
    return grads


def _mean_eval_loss(p: SiameseParams, matrices: Sequence[np.ndarray], cfg: TrainConfig) -> float:
    no_masks = [None] * len(p.layers)
    total = 0.0
    for X in matrices:
        _, _, y = _forward_pass(p, X, no_masks)
        cos, _, _ = _row_cosines(y[0], y[1:])
        total += max(0.0, cfg.alpha - _delta_from_cos(cos, cfg.average_negatives))
    return total / len(matrices)


def train(
    p: SiameseParams,
    instances: Sequence[TrainingInstance],
    vectors: VectorStore,
    cfg: TrainConfig,
    validate: Optional[Callable[[SiameseParams], float]] = None,
) -> tuple[SiameseParams, LossHistory]:
    """Mini-batch SGD over shuffled instances; returns new params and the loss history.

    ``history.eval_loss`` holds the evaluation-mode mean hinge loss after each
    epoch, ``history.train_loss`` the dropout-mode mean seen while training.

    With ``validate`` given (higher is better) the initial weights and the
    weights after every epoch are scored, and the best-scoring ones are
    returned instead of the last; ties keep the earliest epoch.
    """
    if not instances:
        raise ConfigurationError("train needs at least one instance")
    params = p.copy()
    rng = np.random.default_rng(cfg.seed)
    matrices = [instance_matrix(inst, vectors, params.features) for inst in instances]
    history = LossHistory(initial=_mean_eval_loss(params, matrices, cfg))
    logger.info(
        "Training on %d instances: %d epochs, batch %d, dropout %.2f, lr %g",
        len(instances), cfg.epochs, cfg.batch_size, cfg.dropout, cfg.learning_rate,
    )
    best: Optional[SiameseParams] = None
    if validate is not None:
        history.validation.append(float(validate(params)))
        history.best_epoch = 0
        best = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(matrices))
        seen = 0.0
        batch = 0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            acc = [Layer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in params.layers]
            for i in idx:
                X = matrices[i]
                masks = _dropout_masks(params, X.shape[0], cfg.dropout, rng)
                loss, _, grads = _backprop(params, X, cfg.alpha, cfg.average_negatives, masks)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, batch, loss)
                seen += loss
                for a, g in zip(acc, grads):
                    a.weights += g.weights
                    a.bias += g.bias
            scale = cfg.learning_rate / len(idx)
            for layer, g in zip(params.layers, acc):
                layer.weights -= scale * g.weights
                layer.bias -= scale * g.bias
        eval_loss = _mean_eval_loss(params, matrices, cfg)
        if not np.isfinite(eval_loss):
            raise TrainingDivergedError(epoch, batch, eval_loss)
        history.eval_loss.append(eval_loss)
        history.train_loss.append(seen / len(matrices))
        logger.debug("Epoch %d/%d: eval loss %.6f, train loss %.6f", epoch, cfg.epochs, eval_loss, history.train_loss[-1])
        if validate is not None:
            value = float(validate(params))
            history.validation.append(value)
            if value > history.validation[history.best_epoch]:
                history.best_epoch = epoch
                best = params.copy()

    if best is not None:
        logger.info(
            "Keeping epoch %d of %d (validation %.4f)",
            history.best_epoch, cfg.epochs, history.validation[history.best_epoch],
        )
        return best, history
    return params, history


def save_checkpoint(p: SiameseParams, path: str | Path, config: Optional[dict[str, Any]] = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "features": p.features,
        "layers": [
            {
                "rows": int(l.weights.shape[0]),
                "cols": int(l.weights.shape[1]),
                "weights": l.weights.ravel().tolist(),
                "bias": l.bias.tolist(),
            }
            for l in p.layers
        ],
        "config": config or {},
    }
    write_text_atomic(path, json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[SiameseParams, dict[str, Any]]:
    source = str(path)
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid checkpoint JSON ({exc.msg})", line=exc.lineno, source=source) from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ParseError("not a relmap-ranker checkpoint", source=source)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {payload.get('version')!r}", source=source)
    layers = []
    try:
        for entry in payload["layers"]:
            weights = np.array(entry["weights"], dtype=np.float64).reshape(entry["rows"], entry["cols"])
            layers.append(Layer(weights, np.array(entry["bias"], dtype=np.float64)))
        params = SiameseParams(layers, payload.get("features", "kr+p2v"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed checkpoint layers ({exc})", source=source) from exc
    return params, dict(payload.get("config") or {})
