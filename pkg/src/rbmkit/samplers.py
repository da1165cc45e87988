"""Negative-phase estimators: CD-k, persistent chains, and persistent
chains filtered by free energy.

The persistent estimators keep a pool of fantasy particles, one Gibbs
chain per row, each owning a private RngStream. Chains are advanced one
row at a time so that a worker pool of any size produces bit-identical
results: chain c's draws come only from its own stream and land only in
its own row. Statistics are then reduced over the assembled matrices in
fixed index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, sigmoid
from .model import (BINARY, RbmParams, batch_stats, free_energy,
                    hidden_probs, visible_probs)

CHAIN_STREAM_BASE = 100

__all__ = [
    "CHAIN_STREAM_BASE",
    "ChainPool",
    "make_pool",
    "gibbs_step",
    "cd_k",
    "pcd_step",
    "select_elite",
    "fepcd_step",
]


@dataclass
class ChainPool:
    """Persistent fantasy-particle states plus their private streams."""

    states: np.ndarray
    streams: list = field(repr=False, default_factory=list)
    age: int = 0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        if self.states.shape[0] < 1:
            raise ValueError("a chain pool needs at least one chain")
        if len(self.streams) != self.states.shape[0]:
            raise ValueError("one RngStream per chain required")

    @property
    def n_chains(self) -> int:
        return self.states.shape[0]


def make_pool(init_states: np.ndarray, n_chains: int, seed: int,
              stream_base: int = CHAIN_STREAM_BASE) -> ChainPool:
    """Pool of n_chains chains seeded from the given states.

    Rows are recycled if fewer than n_chains are supplied. Chain c draws
    from stream_id stream_base + c for the pool's whole lifetime.
    """
    init_states = np.atleast_2d(np.asarray(init_states, dtype=np.float64))
    if init_states.shape[0] == 0:
        raise ValueError("need at least one initial state")
    rows = np.resize(init_states, (n_chains, init_states.shape[1]))
    streams = [RngStream(seed, stream_base + c) for c in range(n_chains)]
    return ChainPool(states=rows.copy(), streams=streams)


def gibbs_step(p: RbmParams, v, rng: RngStream):
    """One full Gibbs sweep: sample h given v, then v' given h.

    Works on a single vector or a batch of rows (one shared stream; draws
    are consumed row-major, hidden block first). Returns the new visible
    state and the hidden activation probabilities of that new state, which
    is what negative-phase statistics average.
    """
    ph = hidden_probs(p, v)
    h = (rng.uniforms(ph.shape) < ph).astype(np.float64)
    mean_v = visible_probs(p, h)
    if p.visible_kind == BINARY:
        v_new = (rng.uniforms(mean_v.shape) < mean_v).astype(np.float64)
    else:
        v_new = mean_v + rng.normals(mean_v.shape)
    return v_new, hidden_probs(p, v_new)


def cd_k(p: RbmParams, data_batch: np.ndarray, k: int, rng: RngStream):
    """Contrastive divergence with k Gibbs steps started from the data.

    Positive statistics pair the data with its hidden probabilities; the
    negative side pairs the k-step reconstruction with the hidden
    probabilities at the final step.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    data_batch = np.atleast_2d(np.asarray(data_batch, dtype=np.float64))
    if data_batch.shape[0] == 0:
        raise ValueError("empty batch")
    pos = batch_stats(data_batch, hidden_probs(p, data_batch))
    v = data_batch
    for _ in range(k):
        v, q = gibbs_step(p, v, rng)
    return pos, batch_stats(v, q)


def _advance_chains(p: RbmParams, pool: ChainPool, k: int, threads: int = 1):
    """Advance every chain k steps; returns (new states, hidden probs).

    Each chain is a single-row computation under its own stream, so the
    outcome is identical for any thread count. The loop body reuses each
    state's hidden probabilities instead of recomputing them, which is
    bit-identical to composing gibbs_step k times.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = pool.n_chains
    new_states = np.empty_like(pool.states)
    new_q = np.empty((n, p.n_hidden))
    w, a, b = p.w, p.a, p.b
    binary = p.visible_kind == BINARY
    n_visible, n_hidden = p.n_visible, p.n_hidden
    if pool.states.shape[1] != n_visible:
        raise ValueError("pool states do not match model dimensions")

    def advance(c: int):
        # same expressions as gibbs_step, with the hidden probabilities
        # carried over instead of recomputed between steps
        stream = pool.streams[c]
        v = pool.states[c]
        ph = sigmoid(v @ w + b)
        for _ in range(k):
            h = (stream.uniforms(n_hidden) < ph).astype(np.float64)
            mean_v = h @ w.T + a
            if binary:
                v = (stream.uniforms(n_visible) < sigmoid(mean_v)).astype(np.float64)
            else:
                v = mean_v + stream.normals(n_visible)
            ph = sigmoid(v @ w + b)
        new_states[c] = v
        new_q[c] = ph

    if threads <= 1 or n == 1:
        for c in range(n):
            advance(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            list(pool_exec.map(advance, range(n)))
    return new_states, new_q


def pcd_step(p: RbmParams, pool: ChainPool, k: int, threads: int = 1):
    """Advance the persistent chains k steps and average all of them.

    The pool is updated in place and also returned.
    """
    new_states, new_q = _advance_chains(p, pool, k, threads)
    neg = batch_stats(new_states, new_q)
    pool.states = new_states
    pool.age += 1
    return neg, pool


def select_elite(p: RbmParams, states: np.ndarray, elite_fraction: float) -> np.ndarray:
    """Indices of the ceil(fraction * n) rows with lowest free energy.

    Lower free energy means higher model probability, so these are the
    rows most representative of the model distribution. Returned ordered
    by (free energy, row index); ties break toward the lower index.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] == 0:
        raise ValueError("no states to select from")
    if not (0.0 < elite_fraction <= 1.0):
        raise ValueError("elite_fraction must be in (0, 1]")
    n_elite = int(np.ceil(elite_fraction * states.shape[0]))
    f = free_energy(p, states)
    order = np.argsort(f, kind="stable")
    return order[:n_elite]


def fepcd_step(p: RbmParams, pool: ChainPool, k: int, elite_fraction: float,
               threads: int = 1):
    """Persistent-chain step whose statistics use only the elite chains.

    All chains advance and persist exactly as in pcd_step; the free energy
    of each post-step state then decides which chains contribute to the
    negative statistics. With elite_fraction == 1 this is bit-identical to
    pcd_step.
    """
    new_states, new_q = _advance_chains(p, pool, k, threads)
    elite = np.sort(select_elite(p, new_states, elite_fraction))
    neg = batch_stats(new_states[elite], new_q[elite])
    pool.states = new_states
    pool.age += 1
    return neg, pool
