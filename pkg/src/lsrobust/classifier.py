"""Scikit-learn style front end for the dense classifier.

Wraps the functional training loop in a fit/predict estimator so models plug
into the wider ecosystem (grid search, pipelines, cross-validation). The
fitted network itself is exposed as ``model_`` for the attack and evaluation
APIs, which operate on plain models.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import ValidationError, as_matrix, check_labels, check_unit_box
from .data import Dataset
from .losses import softmax
from .network import forward, init_model
from .training import TrainConfig, train


class DenseClassifier(BaseEstimator, ClassifierMixin):
    """Dense ReLU classifier trained with hard, smoothed, or adversarial labels.

    Parameters mirror :class:`~lsrobust.training.TrainConfig`; ``alpha`` is
    the label-smoothing factor (0 reproduces hard labels bit-for-bit) and
    ``label_mode='adversarial'`` trains on inner PGD examples.
    """

    def __init__(self, hidden_layer_sizes=(256,), label_mode="hard",
                 alpha=0.0, epochs=20, batch_size=64, learning_rate=0.1,
                 momentum=0.9, adv_eps=0.3, adv_steps=7, adv_step_size=None,
                 random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.label_mode = label_mode
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.adv_eps = adv_eps
        self.adv_steps = adv_steps
        self.adv_step_size = adv_step_size
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            label_mode=self.label_mode,
            alpha=self.alpha,
            adv_eps=self.adv_eps,
            adv_steps=self.adv_steps,
            adv_step_size=self.adv_step_size,
            rng_seed=self.random_state,
        )

    def fit(self, X, y):
        X = as_matrix(X, "X")
        check_unit_box(X, "X")
        classes = np.unique(np.asarray(y))
        num_classes = int(classes.max()) + 1
        if num_classes < 2:
            raise ValidationError("need at least 2 classes")
        y = check_labels(y, num_classes)
        cfg = self._train_config()
        dataset = Dataset(X, y, num_classes, name="fit", split="train")
        sizes = [X.shape[1], *self.hidden_layer_sizes, num_classes]
        model = init_model(sizes, seed=self.random_state)
        self.model_, self.history_ = train(model, dataset, cfg)
        self.classes_ = np.arange(num_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        self._check_fitted()
        return forward(self.model_, as_matrix(X, "X", self.n_features_in_))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def score(self, X, y):
        y = np.asarray(y)
        return float(np.mean(self.predict(X) == y))

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ValidationError("classifier is not fitted; call fit first")
