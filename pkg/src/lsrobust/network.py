"""Minimal dense feed-forward network with hand-derived reverse-mode gradients.

The network is a plain stack of affine layers with ReLU or identity
activations; the final layer is always identity so the outputs are raw
logits. Gradients (for parameters and for the input) are computed by an
explicit chain-rule pass rather than an autodiff graph, which keeps them
exact and cheap for the small models this package targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, as_matrix

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class DenseLayer:
    """One affine layer: out = act(weight @ x + bias)."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray    # (out_dim,)
    activation: str

    def __post_init__(self):
        # always copy so freezing never mutates the caller's arrays
        w = np.array(self.weight, dtype=np.float64, order="C", copy=True)
        b = np.array(self.bias, dtype=np.float64, order="C", copy=True)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValidationError(
                f"layer shapes inconsistent: weight {w.shape}, bias {b.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("layer parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Model:
    """Immutable stack of dense layers ending in identity (raw logits)."""

    layers: tuple[DenseLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValidationError(
                    f"layer dimensions do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        if layers[-1].activation != "identity":
            raise ValidationError("final layer must have identity activation")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [lay.out_dim for lay in self.layers]

    def num_params(self) -> int:
        return sum(lay.weight.size + lay.bias.size for lay in self.layers)


def init_model(layer_sizes, seed: int = 0, hidden_activation: str = "relu") -> Model:
    """Build a model with seeded uniform(-s, s) init, s = sqrt(6/(fan_in+fan_out))."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValidationError(f"bad layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        act = "identity" if i == len(sizes) - 2 else hidden_activation
        layers.append(DenseLayer(w, b, act))
    return Model(tuple(layers))


def _as_triples(layers):
    """Normalize a layer sequence to (weight, bias, activation) triples."""
    if layers and isinstance(layers[0], DenseLayer):
        return [(lay.weight, lay.bias, lay.activation) for lay in layers]
    return list(layers)


def _forward_cached(layers, X):
    """Forward pass keeping pre-activations; X is (n, d)."""
    acts = [X]
    pres = []
    for w, b, act in _as_triples(layers):
        pre = acts[-1] @ w.T + b
        pres.append(pre)
        acts.append(np.maximum(pre, 0.0) if act == "relu" else pre)
    return pres, acts


def _backward_cached(layers, pres, acts, grad_logits):
    """Chain-rule pass; returns per-layer (dW, db) summed over the batch and
    the per-row input gradient."""
    triples = _as_triples(layers)
    g = grad_logits
    param_grads = [None] * len(triples)
    for i in range(len(triples) - 1, -1, -1):
        w, _, act = triples[i]
        if act == "relu":
            g = g * (pres[i] > 0.0)
        param_grads[i] = (g.T @ acts[i], g.sum(axis=0))
        g = g @ w
    return param_grads, g


def forward(model: Model, x) -> np.ndarray:
    """Logits for input ``x``; accepts a single (d,) input or an (n, d) batch."""
    X = as_matrix(x, "x", n_cols=model.input_dim)
    _, acts = _forward_cached(model.layers, X)
    logits = acts[-1]
    return logits[0] if np.asarray(x).ndim == 1 else logits


def backward(model: Model, x, loss_grad_z):
    """Exact gradients of a scalar loss given its gradient w.r.t. the logits.

    Returns ``(param_grads, grad_input)`` where ``param_grads`` is a list of
    (dW, db) pairs per layer. For a batch, parameter gradients are summed
    over rows (the loss is the sum of per-example losses) and ``grad_input``
    has one row per example.
    """
    single = np.asarray(x).ndim == 1
    X = as_matrix(x, "x", n_cols=model.input_dim)
    G = as_matrix(loss_grad_z, "loss_grad_z", n_cols=model.num_classes)
    if G.shape[0] != X.shape[0]:
        raise ValidationError(
            f"batch sizes differ: x has {X.shape[0]} rows, loss_grad_z {G.shape[0]}"
        )
    pres, acts = _forward_cached(model.layers, X)
    param_grads, grad_input = _backward_cached(model.layers, pres, acts, G)
    return param_grads, (grad_input[0] if single else grad_input)


def predict(model: Model, x) -> np.ndarray:
    """Predicted class index (argmax of logits); shape-polymorphic like forward."""
    logits = forward(model, x)
    return np.argmax(logits, axis=-1)
