"""Training loop: hard labels, smoothed labels, or Madry-style adversarial.

Plain SGD with momentum. Everything is driven by one seeded generator
(batch order and inner-attack starts), so identical configs produce
bitwise-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_interval, check_positive
from .data import Dataset
from .losses import _ce_smoothed, ce_loss_onehot
from .network import DenseLayer, Model, _backward_cached, _forward_cached

LABEL_MODES = ("hard", "smoothed", "adversarial")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    label_mode: str = "hard"
    alpha: float = 0.0
    adv_eps: float = 0.3
    adv_steps: int = 7
    adv_step_size: float | None = None  # defaults to adv_eps / 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.label_mode not in LABEL_MODES:
            raise ValidationError(f"unknown label_mode {self.label_mode!r}")
        check_positive(self.learning_rate, "learning_rate")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        check_interval(self.momentum, 0.0, 1.0 - 1e-12, "momentum")
        if self.label_mode == "smoothed":
            check_interval(self.alpha, 0.0, 1.0, "alpha")
        if self.label_mode == "adversarial":
            check_positive(self.adv_eps, "adv_eps")
            if self.adv_steps < 1:
                raise ValidationError("adv_steps must be >= 1")

    @property
    def inner_step_size(self) -> float:
        return self.adv_eps / 4.0 if self.adv_step_size is None else self.adv_step_size


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None = None
    max_inner_perturbation: float = 0.0

    def as_line(self) -> str:
        test = "" if self.test_acc is None else f"{self.test_acc:.4f}"
        return f"{self.epoch}\t{self.loss:.6f}\t{self.train_acc:.4f}\t{test}"


def _loss_and_grad(layers, X, T, cfg: TrainConfig):
    pres, acts = _forward_cached(layers, X)
    Z = acts[-1]
    if not np.all(np.isfinite(Z)):
        raise TrainingDivergedError(
            "logits became non-finite; lower the learning rate "
            f"(lr={cfg.learning_rate})"
        )
    if cfg.label_mode == "smoothed":
        loss, gz = _ce_smoothed(Z, T, cfg.alpha)
    else:
        loss, gz = ce_loss_onehot(Z, T)
    param_grads, _ = _backward_cached(layers, pres, acts, gz / X.shape[0])
    return float(loss.mean()), param_grads, Z


def _batch_logits(weights, biases, activations, X):
    A = X
    for w, b, act in zip(weights, biases, activations):
        A = A @ w.T + b
        if act == "relu":
            A = np.maximum(A, 0.0)
    return A


def _inner_pgd(layers, X, T, eps, steps, step_size, rng):
    """Madry inner maximizer: random start + sign-gradient CE ascent in the
    L-inf ball intersected with the unit box."""
    lo = np.maximum(X - eps, 0.0)
    hi = np.minimum(X + eps, 1.0)
    adv = np.clip(X + rng.uniform(-eps, eps, size=X.shape), lo, hi)
    for _ in range(steps):
        pres, acts = _forward_cached(layers, adv)
        _, gz = ce_loss_onehot(acts[-1], T)
        _, gx = _backward_cached(layers, pres, acts, gz)
        adv = np.clip(adv + step_size * np.sign(gx), lo, hi)
    return adv


def train(model: Model, dataset: Dataset, cfg: TrainConfig,
          test_set: Dataset | None = None):
    """Train ``model`` on ``dataset``; returns ``(trained_model, log)``.

    The log is a list of per-epoch :class:`EpochRecord`. Deterministic for a
    fixed ``cfg.rng_seed`` (fixed batch order and inner-attack randomness).
    """
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    if dataset.dim != model.input_dim or dataset.num_classes != model.num_classes:
        raise ValidationError("model and dataset dimensions do not match")
    rng = np.random.default_rng(cfg.rng_seed)

    weights = [lay.weight.copy() for lay in model.layers]
    biases = [lay.bias.copy() for lay in model.layers]
    activations = [lay.activation for lay in model.layers]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    log: list[EpochRecord] = []
    n = len(dataset)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        max_inner = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, Tb = dataset.X[idx], dataset.y[idx]
            layers = list(zip(weights, biases, activations))
            if cfg.label_mode == "adversarial":
                Xadv = _inner_pgd(layers, Xb, Tb, cfg.adv_eps, cfg.adv_steps,
                                  cfg.inner_step_size, rng)
                max_inner = max(max_inner, float(np.abs(Xadv - Xb).max()))
                Xb = Xadv
            loss, grads, _ = _loss_and_grad(layers, Xb, Tb, cfg)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch} "
                    f"(lr={cfg.learning_rate}, batch at index {start})"
                )
            loss_sum += loss * len(idx)
            for i, (gw, gb) in enumerate(grads):
                vel_w[i] = cfg.momentum * vel_w[i] - cfg.learning_rate * gw
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * gb
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
        train_pred = np.argmax(
            _batch_logits(weights, biases, activations, dataset.X), axis=1)
        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / n,
            train_acc=float(np.mean(train_pred == dataset.y)),
            max_inner_perturbation=max_inner,
        )
        if test_set is not None:
            test_pred = np.argmax(
                _batch_logits(weights, biases, activations, test_set.X), axis=1)
            record.test_acc = float(np.mean(test_pred == test_set.y))
        log.append(record)

    trained = Model(tuple(
        DenseLayer(w, b, a) for w, b, a in zip(weights, biases, activations)
    ))
    return trained, log


@dataclass(frozen=True)
class LogitRangeStats:
    """Dataset-level logit extremes and margin summary."""

    logit_min: float
    logit_max: float
    logit_p01: float
    logit_p99: float
    mean_margin: float
    mean_min_margin: float
    n_examples: int

    @property
    def width(self) -> float:
        return self.logit_max - self.logit_min

    @property
    def robust_width(self) -> float:
        return self.logit_p99 - self.logit_p01

    def as_dict(self) -> dict:
        return {
            "logit_min": self.logit_min,
            "logit_max": self.logit_max,
            "logit_p01": self.logit_p01,
            "logit_p99": self.logit_p99,
            "width": self.width,
            "robust_width": self.robust_width,
            "mean_margin": self.mean_margin,
            "mean_min_margin": self.mean_min_margin,
            "n_examples": self.n_examples,
        }


def logit_range_stats(model: Model, dataset: Dataset) -> LogitRangeStats:
    """Aggregate logit extremes and margins of ``model`` over ``dataset``."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    from .network import forward

    Z = forward(model, dataset.X)
    n, K = Z.shape
    rows = np.arange(n)
    zt = Z[rows, dataset.y]
    mean_margin = (K * zt - Z.sum(axis=1)) / (K - 1)
    masked = Z.copy()
    masked[rows, dataset.y] = -np.inf
    min_margin = zt - masked.max(axis=1)
    return LogitRangeStats(
        logit_min=float(Z.min()),
        logit_max=float(Z.max()),
        logit_p01=float(np.percentile(Z, 1.0)),
        logit_p99=float(np.percentile(Z, 99.0)),
        mean_margin=float(mean_margin.mean()),
        mean_min_margin=float(min_margin.mean()),
        n_examples=n,
    )
