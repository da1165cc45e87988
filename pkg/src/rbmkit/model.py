"""RBM parameters and every closed-form quantity defined on them.

An RBM with visible vector v (length n_visible) and binary hidden vector h
(length n_hidden) assigns the energy

    binary visibles:    E(v, h) = -v.W.h - a.v - b.h
    gaussian visibles:  E(v, h) = sum_i (v_i - a_i)^2 / 2 - v.W.h - b.h

with unit Gaussian variance fixed at 1 (inputs are expected in [0, 1]).
The free energy F(v) = -log sum_h exp(-E(v, h)) collapses to

    binary:    F(v) = -a.v - sum_j log(1 + exp(I_j))
    gaussian:  F(v) = sum_i (v_i - a_i)^2 / 2 - sum_j log(1 + exp(I_j))

where I_j = b_j + sum_i v_i W_ij is the total input to hidden unit j.

Vector-valued operations accept a single vector (1-D) or a batch of rows
(2-D) and return matching shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import log1p_exp, sigmoid

BINARY = "binary"
GAUSSIAN = "gaussian"

_VISIBLE_KINDS = (BINARY, GAUSSIAN)


@dataclass
class RbmParams:
    """Weights and biases of one RBM.

    w is n_visible x n_hidden (w[i, j] couples visible i to hidden j),
    a the visible biases, b the hidden biases. label_units > 0 marks the
    trailing label_units visible units as a one-hot label block of a
    discriminative RBM; it is 0 for plain generative models.
    """

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    visible_kind: str = BINARY
    label_units: int = 0

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.a.ndim != 1 or self.b.ndim != 1:
            raise ValueError("w must be a matrix, a and b vectors")
        if self.w.shape != (self.a.size, self.b.size):
            raise ValueError(
                f"shape mismatch: w {self.w.shape}, a {self.a.size}, b {self.b.size}"
            )
        if self.visible_kind not in _VISIBLE_KINDS:
            raise ValueError(f"unknown visible_kind {self.visible_kind!r}")
        if not (0 <= self.label_units <= self.a.size):
            raise ValueError("label_units out of range")
        for arr in (self.w, self.a, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameter entries")

    @property
    def n_visible(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size

    def copy(self) -> "RbmParams":
        return RbmParams(self.w.copy(), self.a.copy(), self.b.copy(),
                         self.visible_kind, self.label_units)


@dataclass
class GradientStats:
    """Sufficient statistics of one gradient phase, already averaged.

    vh[i, j] is the mean of v_i * h_j over the contributing samples, v and
    h the mean unit activities, count how many samples contributed.
    """

    vh: np.ndarray
    v: np.ndarray
    h: np.ndarray
    count: int


@dataclass
class Hyperparams:
    """Training knobs. Momentum and weight decay default off; the elite
    fraction only matters to the free-energy-selective estimator."""

    epsilon: float = 0.05
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: int = 20
    epochs: int = 10
    k: int = 1
    n_chains: int | None = None
    elite_fraction: float = 0.5

    def validate(self):
        if self.epsilon < 0:
            raise ValueError("learning rate must be >= 0")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be >= 0")
        if self.batch_size < 1 or self.k < 1 or self.epochs < 0:
            raise ValueError("batch_size and k must be >= 1, epochs >= 0")
        if not (0.0 < self.elite_fraction <= 1.0):
            raise ValueError("elite_fraction must be in (0, 1]")
        n_chains = self.batch_size if self.n_chains is None else self.n_chains
        if n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if int(np.ceil(self.elite_fraction * n_chains)) < 1:
            raise ValueError("elite_fraction * n_chains rounds to zero chains")


@dataclass
class UpdateState:
    """Momentum velocities carried between parameter updates."""

    vel_w: np.ndarray
    vel_a: np.ndarray
    vel_b: np.ndarray

    @classmethod
    def zeros_like(cls, p: RbmParams) -> "UpdateState":
        return cls(np.zeros_like(p.w), np.zeros_like(p.a), np.zeros_like(p.b))


def init_params(n_visible: int, n_hidden: int, rng, visible_kind: str = BINARY,
                label_units: int = 0, weight_scale: float = 0.01) -> RbmParams:
    """Fresh parameters: weights Normal(0, weight_scale^2), biases zero."""
    w = weight_scale * rng.normals((n_visible, n_hidden))
    return RbmParams(w, np.zeros(n_visible), np.zeros(n_hidden),
                     visible_kind, label_units)


def _check_visible(p: RbmParams, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != p.n_visible:
        raise ValueError(f"visible length {v.shape[-1]} != {p.n_visible}")
    return v


def _check_hidden(p: RbmParams, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != p.n_hidden:
        raise ValueError(f"hidden length {h.shape[-1]} != {p.n_hidden}")
    return h


def energy(p: RbmParams, v, h) -> float:
    """Joint energy of one configuration (v, h)."""
    v = _check_visible(p, v)
    h = _check_hidden(p, h)
    interaction = v @ p.w @ h
    if p.visible_kind == BINARY:
        return float(-interaction - p.a @ v - p.b @ h)
    return float(0.5 * np.sum((v - p.a) ** 2) - interaction - p.b @ h)


def hidden_input(p: RbmParams, v) -> np.ndarray:
    """Total input I_j = b_j + sum_i v_i W_ij to each hidden unit."""
    v = _check_visible(p, v)
    return v @ p.w + p.b


def hidden_probs(p: RbmParams, v) -> np.ndarray:
    """P(h_j = 1 | v), elementwise over a vector or batch of rows."""
    return sigmoid(hidden_input(p, v))


def visible_probs(p: RbmParams, h) -> np.ndarray:
    """Conditional visible activations given h.

    Binary: P(v_i = 1 | h). Gaussian: the conditional mean a_i + (W h)_i;
    sampling adds unit-variance noise downstream.
    """
    h = _check_hidden(p, h)
    mean = h @ p.w.T + p.a
    if p.visible_kind == BINARY:
        return sigmoid(mean)
    return mean


def free_energy(p: RbmParams, v):
    """F(v) = -log sum_h exp(-E(v, h)), in closed form.

    Returns a float for a single vector, a 1-D array for a batch.
    """
    v = _check_visible(p, v)
    hidden_term = np.sum(log1p_exp(v @ p.w + p.b), axis=-1)
    if p.visible_kind == BINARY:
        visible_term = -(v @ p.a)
    else:
        visible_term = 0.5 * np.sum((v - p.a) ** 2, axis=-1)
    out = visible_term - hidden_term
    if out.ndim == 0:
        return float(out)
    return out


def batch_stats(v_batch: np.ndarray, h_batch: np.ndarray) -> GradientStats:
    """Average sufficient statistics of paired visible/hidden rows."""
    v_batch = np.atleast_2d(np.asarray(v_batch, dtype=np.float64))
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=np.float64))
    if v_batch.shape[0] != h_batch.shape[0]:
        raise ValueError("visible and hidden batches disagree on row count")
    m = v_batch.shape[0]
    vh = v_batch.T @ h_batch / m
    return GradientStats(vh=vh, v=v_batch.mean(axis=0), h=h_batch.mean(axis=0), count=m)


def apply_update(p: RbmParams, pos: GradientStats, neg: GradientStats,
                 hp: Hyperparams, state: UpdateState) -> RbmParams:
    """One stochastic ascent step on the data log-probability.

    Raw steps are epsilon*(pos - neg), with epsilon*weight_decay*W pulled
    off the weights; each is folded through its momentum velocity, which
    is updated in place. Returns new parameters.
    """
    if pos.vh.shape != p.w.shape or neg.vh.shape != p.w.shape:
        raise ValueError("gradient statistics do not match parameter shape")
    with np.errstate(over="ignore"):
        # overflow lands as inf and trips the finiteness check below
        state.vel_w = hp.momentum * state.vel_w + hp.epsilon * (
            (pos.vh - neg.vh) - hp.weight_decay * p.w)
        state.vel_a = hp.momentum * state.vel_a + hp.epsilon * (pos.v - neg.v)
        state.vel_b = hp.momentum * state.vel_b + hp.epsilon * (pos.h - neg.h)
        return RbmParams(p.w + state.vel_w, p.a + state.vel_a, p.b + state.vel_b,
                         p.visible_kind, p.label_units)
