"""Greedy layer-wise stacking, free-energy classification, and the
unrolled feedforward classifier with backprop fine-tuning.

Stacking feeds each layer's hidden activation probabilities (not sampled
bits) upward as the next layer's data. A discriminative RBM concatenates
a one-hot label block onto the visible layer; classification clamps each
candidate label in turn and picks the lowest free energy, which is the
exact posterior argmax because the partition function cancels between
candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream, log1p_exp, sigmoid
from .errors import TrainingDivergedError
from .model import BINARY, Hyperparams, RbmParams, init_params
from .trainer import STREAM_INIT, STREAM_SHUFFLE, train_rbm

__all__ = [
    "DbnModel", "FeedforwardNet",
    "one_hot", "propagate_up", "pretrain_stack",
    "train_discriminative_rbm", "classify_free_energy",
    "unroll_to_network", "net_forward", "cross_entropy", "net_gradients",
    "fine_tune",
]


@dataclass
class DbnModel:
    """Ordered stack of trained RBMs, bottom (data-facing) layer first.

    top_label_units > 0 means the top RBM's visible layer carries that
    many one-hot label units after the features coming up the stack.
    """

    layers: list
    top_label_units: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a DBN needs at least one layer")
        for lo, hi in zip(self.layers, self.layers[1:]):
            expected = lo.n_hidden + (hi.label_units if hi is self.layers[-1] else 0)
            if hi.n_visible != expected:
                raise ValueError(
                    f"layer dimensions do not chain: {lo.n_hidden} hidden "
                    f"feeding {hi.n_visible} visible")

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels outside [0, n_classes)")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _feature_hidden_probs(p: RbmParams, x: np.ndarray) -> np.ndarray:
    """Hidden probabilities driven by the feature block only; a label
    block, if present, is treated as clamped to zero."""
    d = p.n_visible - p.label_units
    return sigmoid(x @ p.w[:d] + p.b)


def propagate_up(dbn: DbnModel, v, upto: int) -> np.ndarray:
    """Deterministic upward pass of activation probabilities through
    layers 0..upto inclusive."""
    if not (0 <= upto < dbn.n_layers):
        raise IndexError(f"layer index {upto} out of range")
    x = np.asarray(v, dtype=np.float64)
    for layer in dbn.layers[:upto + 1]:
        x = _feature_hidden_probs(layer, x)
    return x


def pretrain_stack(sizes, data, hps, estimators, seed: int, threads: int = 1):
    """Greedy layer-wise pretraining; returns (DbnModel, per-layer metrics).

    sizes is [input_dim, h1, h2, ...]; hps and estimators give one entry
    per trained layer (a single Hyperparams or estimator name is broadcast
    to all layers). Layer L trains on the activation probabilities
    produced by the layers below it, with run seed seed+L so a one-layer
    stack is identical to a plain train_rbm run.
    """
    feats = np.atleast_2d(np.asarray(getattr(data, "features", data), dtype=np.float64))
    n_rbms = len(sizes) - 1
    if n_rbms < 1:
        raise ValueError("need at least one (visible, hidden) pair")
    if feats.shape[1] != sizes[0]:
        raise ValueError(f"data dimension {feats.shape[1]} != sizes[0] {sizes[0]}")
    if isinstance(hps, Hyperparams):
        hps = [hps] * n_rbms
    if isinstance(estimators, str):
        estimators = [estimators] * n_rbms
    if len(hps) != n_rbms or len(estimators) != n_rbms:
        raise ValueError("need one hyperparameter set and estimator per layer")

    layers = []
    all_metrics = []
    x = feats
    for idx in range(n_rbms):
        init = init_params(sizes[idx], sizes[idx + 1],
                           RngStream(seed + idx, STREAM_INIT))
        trained, metrics = train_rbm(init, x, hps[idx], estimators[idx],
                                     seed + idx, threads)
        layers.append(trained)
        all_metrics.append(metrics)
        x = sigmoid(x @ trained.w + trained.b)
    return DbnModel(layers), all_metrics


def train_discriminative_rbm(data, n_hidden: int, hp: Hyperparams,
                             estimator: str, seed: int,
                             visible_kind: str = BINARY, threads: int = 1,
                             epoch_callback=None):
    """Generative RBM over [features, one-hot label] visible vectors.

    Returns (RbmParams with label_units set, metrics). data must carry
    integer labels.
    """
    labels = getattr(data, "labels", None)
    if labels is None:
        raise ValueError("discriminative training requires labels")
    feats = np.atleast_2d(np.asarray(data.features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least two classes")
    x = np.hstack([feats, one_hot(labels, n_classes)])
    init = init_params(feats.shape[1] + n_classes, n_hidden,
                       RngStream(seed, STREAM_INIT), visible_kind,
                       label_units=n_classes)
    return train_rbm(init, x, hp, estimator, seed, threads, epoch_callback)


def _label_free_energies(p: RbmParams, v: np.ndarray) -> np.ndarray:
    """F([v, one_hot(c)]) for every class c; rows follow the batch."""
    if p.label_units < 2:
        raise ValueError("model has no label units")
    d = p.n_visible - p.label_units
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if v.shape[1] != d:
        raise ValueError(f"feature length {v.shape[1]} != {d}")
    base_input = v @ p.w[:d] + p.b                      # (m, n_hidden)
    f = np.empty((v.shape[0], p.label_units))
    eye = np.eye(p.label_units)
    for c in range(p.label_units):
        hidden_term = np.sum(log1p_exp(base_input + p.w[d + c]), axis=1)
        if p.visible_kind == BINARY:
            visible_term = -(v @ p.a[:d]) - p.a[d + c]
        else:
            visible_term = (0.5 * np.sum((v - p.a[:d]) ** 2, axis=1)
                            + 0.5 * np.sum((eye[c] - p.a[d:]) ** 2))
        f[:, c] = visible_term - hidden_term
    return f


def classify_free_energy(p: RbmParams, v):
    """Class prediction and posterior scores by clamped free energy.

    Scores are softmax(-F) over the classes, which equals the exact
    conditional P(y | v) since the partition function is shared. A single
    feature vector returns (int, scores); a batch returns arrays.
    """
    single = np.asarray(v).ndim == 1
    f = _label_free_energies(p, v)
    neg = -f
    neg -= neg.max(axis=1, keepdims=True)
    scores = np.exp(neg)
    scores /= scores.sum(axis=1, keepdims=True)
    pred = np.argmin(f, axis=1)
    if single:
        return int(pred[0]), scores[0]
    return pred, scores


@dataclass
class FeedforwardNet:
    """Logistic-hidden-layer classifier with a normalized-score output."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.size:
                raise ValueError("bias length must match weight columns")
        for w_lo, w_hi in zip(self.weights, self.weights[1:]):
            if w_lo.shape[1] != w_hi.shape[0]:
                raise ValueError("layer dimensions do not chain")

    @property
    def n_classes(self) -> int:
        return self.biases[-1].size

    def copy(self) -> "FeedforwardNet":
        return FeedforwardNet([w.copy() for w in self.weights],
                              [b.copy() for b in self.biases])


def unroll_to_network(dbn: DbnModel, n_classes: int, seed: int,
                      output_scale: float = 0.01) -> FeedforwardNet:
    """Copy the stack's weights into a feedforward net and append a fresh
    small-random output layer of n_classes units.

    Visible biases are discarded; on a label-augmented top layer only the
    feature rows of W survive (the generative label weights are dropped).
    """
    rng = RngStream(seed, STREAM_INIT)
    weights, biases = [], []
    for layer in dbn.layers:
        d = layer.n_visible - layer.label_units
        weights.append(layer.w[:d].copy())
        biases.append(layer.b.copy())
    top = weights[-1].shape[1]
    weights.append(output_scale * rng.normals((top, n_classes)))
    biases.append(np.zeros(n_classes))
    return FeedforwardNet(weights, biases)


def net_forward(net: FeedforwardNet, x: np.ndarray):
    """Activations of every layer; the last entry is the normalized
    class-score matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    acts = [x]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(sigmoid(acts[-1] @ w + b))
    z = acts[-1] @ net.weights[-1] + net.biases[-1]
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    acts.append(ez / ez.sum(axis=1, keepdims=True))
    return acts


def cross_entropy(net: FeedforwardNet, x: np.ndarray, labels) -> float:
    """Mean negative log score of the true class."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    acts = [x]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(sigmoid(acts[-1] @ w + b))
    z = acts[-1] @ net.weights[-1] + net.biases[-1]
    zmax = z.max(axis=1, keepdims=True)
    log_norm = zmax.squeeze(1) + np.log(np.exp(z - zmax).sum(axis=1))
    true_z = z[np.arange(labels.size), labels]
    return float(np.mean(log_norm - true_z))


def net_gradients(net: FeedforwardNet, x: np.ndarray, labels):
    """Cross-entropy gradients for every weight and bias, by reverse
    accumulation through the logistic layers and normalized output."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    m = x.shape[0]
    acts = net_forward(net, x)
    scores = acts[-1]
    delta = scores.copy()
    delta[np.arange(m), labels] -= 1.0
    delta /= m
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for layer in range(len(net.weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a = acts[layer]
            delta = (delta @ net.weights[layer].T) * a * (1.0 - a)
    return grad_w, grad_b


def fine_tune(net: FeedforwardNet, data, hp: Hyperparams, seed: int):
    """Minibatch cross-entropy descent; returns (tuned net, epoch losses).

    Momentum and weight decay follow the same hyperparameters as RBM
    training; epoch losses are the mean training cross-entropy measured
    after each epoch.
    """
    labels = getattr(data, "labels", None)
    if labels is None:
        raise ValueError("fine-tuning requires labels")
    hp.validate()
    feats = np.atleast_2d(np.asarray(data.features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    m = feats.shape[0]

    net = net.copy()
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    shuffle_rng = RngStream(seed, STREAM_SHUFFLE)
    losses = []
    for epoch in range(1, hp.epochs + 1):
        order = shuffle_rng.permutation(m)
        for start in range(0, m, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            gw, gb = net_gradients(net, feats[idx], labels[idx])
            with np.errstate(over="ignore"):
                # overflow lands as inf and trips the check below
                for layer in range(len(net.weights)):
                    vel_w[layer] = (hp.momentum * vel_w[layer]
                                    - hp.epsilon * (gw[layer] + hp.weight_decay * net.weights[layer]))
                    vel_b[layer] = hp.momentum * vel_b[layer] - hp.epsilon * gb[layer]
                    net.weights[layer] = net.weights[layer] + vel_w[layer]
                    net.biases[layer] = net.biases[layer] + vel_b[layer]
            if not all(np.all(np.isfinite(w)) for w in net.weights):
                raise TrainingDivergedError(
                    f"non-finite network weights at epoch {epoch}, "
                    f"batch offset {start}")
        losses.append(cross_entropy(net, feats, labels))
    return net, losses


def classify_net(net: FeedforwardNet, x: np.ndarray) -> np.ndarray:
    """Predicted class indices for a batch."""
    return np.argmax(net_forward(net, x)[-1], axis=1)
