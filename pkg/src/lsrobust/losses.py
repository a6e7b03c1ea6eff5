"""Loss functions over logits, label smoothing, and margin identities.

Cross-entropy losses are evaluated in log-sum-exp form over logits (never as
log of the softmax output) so they stay finite and accurate for extreme
logits. All losses are shape-polymorphic: a (K,) logit vector gives a scalar
loss, an (n, K) batch gives an (n,) loss vector; gradients match the logits'
shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import (
    ValidationError,
    as_float_array,
    check_class_index,
    check_interval,
)


def _as_logits(z, num_classes: int | None = None):
    Z = as_float_array(z, "z")
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    if Z.ndim != 2:
        raise ValidationError(f"logits must be 1-D or 2-D, got shape {Z.shape}")
    if num_classes is not None and Z.shape[1] != num_classes:
        raise ValidationError(
            f"logits have {Z.shape[1]} classes, expected {num_classes}"
        )
    return Z, single


def _targets(t, n: int, num_classes: int) -> np.ndarray:
    T = np.asarray(t)
    if T.ndim == 0:
        T = np.full(n, int(T))
    T = T.astype(np.int64)
    if T.shape != (n,):
        raise ValidationError(f"targets shape {T.shape} does not match batch {n}")
    if T.size and (T.min() < 0 or T.max() >= num_classes):
        raise ValidationError(f"target class out of range [0, {num_classes})")
    return T


def softmax(z) -> np.ndarray:
    """Numerically stable softmax (max-subtraction); shift-invariant."""
    Z, single = _as_logits(z)
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    return s[0] if single else s


def _logsumexp(Z: np.ndarray) -> np.ndarray:
    m = Z.max(axis=1)
    return m + np.log(np.exp(Z - m[:, None]).sum(axis=1))


@dataclass(frozen=True)
class LabelVector:
    """Smoothed target distribution: (1 - alpha) one-hot plus alpha uniform."""

    num_classes: int
    true_class: int
    alpha: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.num_classes,):
            raise ValidationError(f"label values must have shape ({self.num_classes},)")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValidationError("label values must sum to 1")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def smooth_labels(t: int, num_classes: int, alpha: float) -> LabelVector:
    """Smoothed label for true class ``t``: y_k = (1-alpha)*[k==t] + alpha/K."""
    if num_classes < 2:
        raise ValidationError("need at least 2 classes")
    t = check_class_index(t, num_classes)
    alpha = check_interval(alpha, 0.0, 1.0, "alpha")
    if alpha == 0.0:
        values = np.zeros(num_classes)
        values[t] = 1.0
    else:
        values = np.full(num_classes, alpha / num_classes)
        values[t] = 1.0 - alpha + alpha / num_classes
    return LabelVector(num_classes, t, alpha, values)


def ce_loss_onehot(z, t):
    """Cross-entropy with a one-hot target, as logsumexp(z) - z_t.

    Returns ``(loss, grad_z)`` with grad_z = softmax(z) - onehot(t).
    """
    Z, single = _as_logits(z)
    n, K = Z.shape
    T = _targets(t, n, K)
    rows = np.arange(n)
    loss = _logsumexp(Z) - Z[rows, T]
    grad = softmax(Z)
    grad[rows, T] -= 1.0
    return (loss[0], grad[0]) if single else (loss, grad)


def _ce_smoothed(Z, T, alpha):
    """Batched smoothed CE in margin form; returns (loss, grad)."""
    n, K = Z.shape
    rows = np.arange(n)
    base = _logsumexp(Z) - Z[rows, T]
    margin_sum = K * Z[rows, T] - Z.sum(axis=1)  # sum over i != t of (z_t - z_i)
    loss = (alpha / K) * margin_sum + base
    target = np.full_like(Z, alpha / K)
    target[rows, T] += 1.0 - alpha
    grad = softmax(Z) - target
    return loss, grad


def ce_loss_smoothed(z, label: LabelVector):
    """Cross-entropy against a smoothed label, in logit (margin) form.

    loss = (alpha/K) * sum_{i != t} (z_t - z_i) + log(1 + sum_{i != t} e^{z_i - z_t});
    grad_z = softmax(z) - label.values. Reduces exactly to ``ce_loss_onehot``
    at alpha = 0.
    """
    Z, single = _as_logits(z, label.num_classes)
    T = _targets(label.true_class, Z.shape[0], label.num_classes)
    loss, grad = _ce_smoothed(Z, T, label.alpha)
    return (loss[0], grad[0]) if single else (loss, grad)


def margin_loss(z, t):
    """Margin loss -z_t + max_{i != t} z_i; positive iff the model misclassifies.

    The subgradient puts -1 at ``t`` and +1 at the maximal non-target class
    (lowest index on ties, so it is deterministic).
    """
    Z, single = _as_logits(z)
    n, K = Z.shape
    if K < 2:
        raise ValidationError("margin loss needs at least 2 classes")
    T = _targets(t, n, K)
    rows = np.arange(n)
    masked = Z.copy()
    masked[rows, T] = -np.inf
    runner = np.argmax(masked, axis=1)
    loss = Z[rows, runner] - Z[rows, T]
    grad = np.zeros_like(Z)
    grad[rows, T] = -1.0
    grad[rows, runner] += 1.0
    return (loss[0], grad[0]) if single else (loss, grad)


def margin_grad(margins, alpha: float, num_classes: int, u: int) -> float:
    """Partial derivative of the smoothed CE (margin form) w.r.t. margin u:

    alpha/K - e^{-M_u} / (1 + sum_i e^{-M_i}).
    """
    M = as_float_array(margins, "margins")
    if M.shape != (num_classes - 1,):
        raise ValidationError(
            f"margins must have length K-1 = {num_classes - 1}, got {M.shape}"
        )
    u = check_class_index(u, num_classes - 1, "u")
    a = -M
    shift = max(0.0, float(a.max()))
    denom = np.exp(-shift) + np.exp(a - shift).sum()
    return alpha / num_classes - float(np.exp(a[u] - shift) / denom)


def optimal_margin(alpha: float, num_classes: int) -> float:
    """Symmetric stationary margin m* = ln((K - alpha*(K-1)) / alpha).

    This is where the smoothed CE's margin derivative vanishes when all K-1
    margins are equal. At alpha = 0 the loss keeps pushing margins to grow
    without bound, so there is no finite optimum.
    """
    if num_classes < 2:
        raise ValidationError("need at least 2 classes")
    alpha = check_interval(alpha, 0.0, 1.0, "alpha")
    if alpha == 0.0:
        raise ValidationError(
            "alpha=0 has no finite optimal margin (margins grow unboundedly)"
        )
    K = num_classes
    return float(np.log((K - alpha * (K - 1)) / alpha))


def smoothed_ce_from_margins(margins, alpha: float) -> float:
    """Smoothed CE expressed through margins M_i = z_t - z_i:

    (alpha/K) * sum_i M_i + log(1 + sum_i e^{-M_i}), with K = len(margins)+1.
    """
    M = as_float_array(margins, "margins")
    if M.ndim != 1 or M.size < 1:
        raise ValidationError("margins must be a non-empty vector")
    K = M.size + 1
    a = -M
    shift = max(0.0, float(a.max()))
    lse = shift + np.log(np.exp(-shift) + np.exp(a - shift).sum())
    return float((alpha / K) * M.sum() + lse)


@dataclass(frozen=True)
class MarginStats:
    """Per-example margins z_t - z_i and the raw logit extremes."""

    true_class: int
    classes: np.ndarray   # non-target class indices, ascending
    margins: np.ndarray   # z_t - z_i for each entry of ``classes``
    logit_min: float
    logit_max: float

    @property
    def mean_margin(self) -> float:
        return float(self.margins.mean())

    @property
    def min_margin(self) -> float:
        return float(self.margins.min())


def margin_stats(model, x, t: int) -> MarginStats:
    """Margins of one example under ``model``; positive min margin means correct."""
    from .network import forward

    z = forward(model, np.asarray(x, dtype=np.float64).ravel())
    t = check_class_index(t, z.shape[0])
    classes = np.array([i for i in range(z.shape[0]) if i != t], dtype=np.int64)
    margins = z[t] - z[classes]
    return MarginStats(
        true_class=t,
        classes=classes,
        margins=margins,
        logit_min=float(z.min()),
        logit_max=float(z.max()),
    )
