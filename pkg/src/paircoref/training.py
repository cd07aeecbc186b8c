"""Epoch-based minibatch training over feature shards.

Each epoch visits every shard once in seeded-shuffled order and shuffles
rows within a shard; only one shard's rows are resident at a time.  The
per-epoch record carries the train loss, the train precision/recall/F1
at the F1-tuned threshold, and the dev F1 at that same threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from typing import Sequence

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .evaluation import confusion, prf1, tune_threshold
from .features import FeatureSchema
from .models import (
    DEFAULT_HIDDEN,
    DropoutSpec,
    LossSpec,
    ModelParams,
    backward,
    forward,
    init_params,
    loss,
    sgd_step,
)
from .shardio import read_feature_shard, read_shard_header

INFER_BATCH = 4096


@dataclass
class TrainConfig:
    kind: str = "gated"
    epochs: int = 15
    learning_rate: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 64
    positive_weight: float = 1.0
    dropout_rate: float = 0.0
    dropout_layers: tuple[int, ...] = (0,)
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    seed: int = 0
    shard_paths: tuple[str, ...] = ()
    dev_paths: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not self.shard_paths:
            raise ConfigError("no training shards configured")


def load_train_config(path, overrides: dict | None = None) -> TrainConfig:
    """Read a JSON config whose keys mirror TrainConfig; unknown keys error."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("dropout_layers", "hidden", "shard_paths", "dev_paths"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return TrainConfig(**raw)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    threshold: float
    precision: float
    recall: float
    f1: float
    dev_f1: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.records], sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainHistory":
        return cls(records=[EpochRecord(**r) for r in json.loads(text)])


def _check_shards(paths: Sequence[str]) -> FeatureSchema:
    versions = {}
    for p in paths:
        header = read_shard_header(p)
        versions.setdefault(header.schema_version, []).append(str(p))
    if len(versions) != 1:
        raise ConfigError(f"shards disagree on schema version: {sorted(versions)}")
    return FeatureSchema.from_version(next(iter(versions)))


def score_shards(
    params: ModelParams, paths: Sequence[str], batch_size: int = INFER_BATCH
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Stream shards through the model in infer mode; one shard in memory at a time."""
    all_ids: list[str] = []
    prob_parts: list[np.ndarray] = []
    label_parts: list[np.ndarray] = []
    for path in paths:
        ids, X, y, _ = read_feature_shard(path)
        probs = np.zeros(len(y), dtype=np.float64)
        for start in range(0, len(y), batch_size):
            stop = min(start + batch_size, len(y))
            probs[start:stop] = forward(params, X[start:stop]).prob
        all_ids.extend(ids)
        prob_parts.append(probs)
        label_parts.append(y)
    return all_ids, np.concatenate(prob_parts), np.concatenate(label_parts)


def train(config: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    """Run the configured training; fully deterministic given the config."""
    config.validate()
    schema = _check_shards(config.shard_paths)
    if config.dev_paths:
        dev_schema = _check_shards(config.dev_paths)
        if dev_schema.version != schema.version:
            raise ConfigError("dev shards use a different schema version than training shards")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    params = init_params(config.kind, schema, seed=seeds[0], hidden=config.hidden)
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])
    dropout = (
        DropoutSpec(config.dropout_rate, frozenset(config.dropout_layers))
        if config.dropout_rate > 0
        else None
    )
    loss_spec = LossSpec(positive_weight=config.positive_weight)
    velocity = None
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        row_count = 0
        shard_order = shuffle_rng.permutation(len(config.shard_paths))
        for shard_pos, shard_idx in enumerate(shard_order):
            path = config.shard_paths[shard_idx]
            _, X, y, _ = read_feature_shard(path)
            perm = shuffle_rng.permutation(len(y))
            X, y = X[perm], y[perm].astype(np.float32)
            for batch_no, start in enumerate(range(0, len(y), config.batch_size)):
                xb = X[start : start + config.batch_size]
                yb = y[start : start + config.batch_size]
                fwd = forward(params, xb, mode="train", dropout=dropout, rng=dropout_rng)
                batch_loss = loss(fwd, yb, loss_spec)
                if not np.isfinite(batch_loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, shard {path}, batch {batch_no}"
                    )
                grads = backward(params, fwd.cache, yb, loss_spec)
                velocity = sgd_step(
                    params, grads, config.learning_rate, config.momentum, velocity
                )
                loss_sum += batch_loss * len(yb)
                row_count += len(yb)

        _, train_probs, train_labels = score_shards(params, config.shard_paths)
        threshold, _ = tune_threshold(train_probs, train_labels)
        precision, recall, f1 = prf1(confusion(train_probs, train_labels, threshold))
        dev_f1 = None
        if config.dev_paths:
            _, dev_probs, dev_labels = score_shards(params, config.dev_paths)
            _, _, dev_f1 = prf1(confusion(dev_probs, dev_labels, threshold))
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / max(row_count, 1),
                threshold=threshold,
                precision=precision,
                recall=recall,
                f1=f1,
                dev_f1=dev_f1,
            )
        )
    return params, history
