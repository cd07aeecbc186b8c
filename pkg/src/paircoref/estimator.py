"""Scikit-learn style front end for the pair classifiers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ConfigError
from .features import FeatureSchema
from .models import (
    DEFAULT_HIDDEN,
    DropoutSpec,
    LossSpec,
    backward,
    forward,
    init_params,
    loss,
    sgd_step,
)
from .training import EpochRecord, TrainHistory
from .evaluation import confusion, prf1, tune_threshold


class MentionPairClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier over mention-pair feature vectors.

    Wraps the hand-written dense networks behind the usual fit/predict
    surface so they compose with pipelines, grid search and cross
    validation.

    Parameters
    ----------
    kind : {"logreg", "mlp", "two_tower", "score_sum", "gated"}, default="gated"
        Architecture.  Tower-based kinds require the feature columns to
        follow the pair layout (see ``FeatureSchema``) so per-mention
        tower inputs can be sliced out; ``logreg`` and ``mlp`` accept any
        feature matrix.
    hidden : tuple of int, default=(500, 200, 100)
        Hidden layer sizes shared by the feed-forward scorer and towers.
    epochs : int, default=15
    learning_rate : float, default=1e-4
    momentum : float, default=0.9
    batch_size : int, default=64
    positive_weight : float, default=1.0
        Multiplier on the positive-class cross-entropy term.
    dropout_rate : float, default=0.0
        Inverted dropout on the configured hidden layers during training.
    dropout_layers : tuple of int, default=(0,)
    tune_decision_threshold : bool, default=False
        After fitting, tune the decision threshold for F1 on the training
        data; otherwise predict at 0.5.
    track_history : bool, default=False
        Record per-epoch train loss and tuned precision/recall/F1 in
        ``history_`` (costs one extra scoring pass per epoch).
    schema : FeatureSchema or None, default=None
        Explicit feature layout; inferred from ``n_features_in_`` when
        None and a tower-based kind is requested.
    random_state : int, default=0

    Attributes
    ----------
    params_ : ModelParams
    classes_ : ndarray of shape (2,)
    decision_threshold_ : float
    history_ : TrainHistory
    """

    def __init__(
        self,
        kind: str = "gated",
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        epochs: int = 15,
        learning_rate: float = 1e-4,
        momentum: float = 0.9,
        batch_size: int = 64,
        positive_weight: float = 1.0,
        dropout_rate: float = 0.0,
        dropout_layers: tuple[int, ...] = (0,),
        tune_decision_threshold: bool = False,
        track_history: bool = False,
        schema: FeatureSchema | None = None,
        random_state: int = 0,
    ):
        self.kind = kind
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.positive_weight = positive_weight
        self.dropout_rate = dropout_rate
        self.dropout_layers = dropout_layers
        self.tune_decision_threshold = tune_decision_threshold
        self.track_history = track_history
        self.schema = schema
        self.random_state = random_state

    def _resolve_schema(self, n_features: int) -> FeatureSchema | None:
        if self.schema is not None:
            if self.schema.total_dim != n_features:
                raise ConfigError(
                    f"schema expects {self.schema.total_dim} features, X has {n_features}"
                )
            return self.schema
        if self.kind in ("two_tower", "score_sum", "gated"):
            return FeatureSchema.from_total_dim(n_features)
        return None

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=[np.float32, np.float64], y_numeric=False)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(
                f"MentionPairClassifier is strictly binary, got classes {self.classes_}"
            )
        self.n_features_in_ = X.shape[1]
        y01 = (y == self.classes_[1]).astype(np.float32)

        schema = self._resolve_schema(X.shape[1])
        seeds = np.random.SeedSequence(self.random_state).spawn(3)
        params = init_params(
            self.kind,
            schema,
            seed=seeds[0],
            input_dim=X.shape[1],
            hidden=tuple(self.hidden),
        )
        shuffle_rng = np.random.default_rng(seeds[1])
        dropout_rng = np.random.default_rng(seeds[2])
        dropout = (
            DropoutSpec(self.dropout_rate, frozenset(self.dropout_layers))
            if self.dropout_rate > 0
            else None
        )
        loss_spec = LossSpec(positive_weight=self.positive_weight)
        velocity = None
        history = TrainHistory()
        for epoch in range(1, self.epochs + 1):
            perm = shuffle_rng.permutation(len(y01))
            Xs, ys = X[perm], y01[perm]
            loss_sum = 0.0
            for start in range(0, len(ys), self.batch_size):
                xb = Xs[start : start + self.batch_size]
                yb = ys[start : start + self.batch_size]
                fwd = forward(params, xb, mode="train", dropout=dropout, rng=dropout_rng)
                batch_loss = loss(fwd, yb, loss_spec)
                if not np.isfinite(batch_loss):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch}")
                grads = backward(params, fwd.cache, yb, loss_spec)
                velocity = sgd_step(params, grads, self.learning_rate, self.momentum, velocity)
                loss_sum += batch_loss * len(yb)
            if self.track_history:
                probs = self._probs(params, X)
                thr, _ = tune_threshold(probs, y01.astype(bool))
                p, r, f1 = prf1(confusion(probs, y01.astype(bool), thr))
                history.records.append(
                    EpochRecord(epoch, loss_sum / len(ys), thr, p, r, f1)
                )
        self.params_ = params
        self.history_ = history
        if self.tune_decision_threshold:
            probs = self._probs(params, X)
            thr, _ = tune_threshold(probs, y01.astype(bool))
            self.decision_threshold_ = float(thr)
        else:
            self.decision_threshold_ = 0.5
        return self

    @staticmethod
    def _probs(params, X, batch_size: int = 8192) -> np.ndarray:
        out = np.zeros(len(X), dtype=np.float64)
        for start in range(0, len(X), batch_size):
            stop = min(start + batch_size, len(X))
            out[start:stop] = forward(params, X[start:stop]).prob
        return out

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=[np.float32, np.float64])
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        pos = self._probs(self.params_, X)
        return np.column_stack([1.0 - pos, pos])

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[(proba[:, 1] >= self.decision_threshold_).astype(int)]
