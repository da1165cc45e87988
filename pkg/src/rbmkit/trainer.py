"""Minibatch training loop for a single RBM with a pluggable estimator.

Every source of randomness is pinned to a dedicated stream id under the
run's seed, so a run is a pure function of (init, data, hyperparams,
estimator, seed) and is reproducible bit-for-bit — including across
different --threads settings, since chain advancement is per-chain (see
samplers). Wall-clock seconds are the single exception and are excluded
from reproducibility comparisons.

Stream layout under one seed:
    0 weight init | 1 epoch shuffling | 2 estimator data-side sampling
    3 metric probes | 4 subset selection | 5 ad-hoc sampling CLI
    100+c persistent chain c
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .errors import TrainingDivergedError
from .model import (Hyperparams, RbmParams, UpdateState, apply_update,
                    batch_stats, free_energy, hidden_probs, visible_probs)
from .samplers import cd_k, fepcd_step, make_pool, pcd_step

STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_DATA = 2
STREAM_EVAL = 3
STREAM_SUBSET = 4
STREAM_SAMPLE = 5

CD = "cd"
PCD = "pcd"
FEPCD = "fepcd"
ESTIMATORS = (CD, PCD, FEPCD)

METRICS_FIELDS = ("epoch", "recon_error", "mean_free_energy", "seconds",
                  "estimator", "seed")

__all__ = [
    "CD", "PCD", "FEPCD", "ESTIMATORS",
    "STREAM_INIT", "STREAM_SHUFFLE", "STREAM_DATA", "STREAM_EVAL",
    "STREAM_SUBSET", "STREAM_SAMPLE",
    "EpochMetrics", "reconstruction_error", "train_rbm",
    "metrics_csv_text", "write_metrics_csv", "read_metrics_csv",
]


@dataclass
class EpochMetrics:
    epoch: int
    recon_error: float
    mean_free_energy: float
    seconds: float
    estimator: str
    seed: int


def _features_of(data) -> np.ndarray:
    feats = getattr(data, "features", data)
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if feats.shape[0] == 0:
        raise ValueError("empty dataset")
    return feats


def reconstruction_error(p: RbmParams, batch: np.ndarray, rng: RngStream) -> float:
    """Mean squared gap between a batch and its one-step reconstruction means."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    q = hidden_probs(p, batch)
    h = (rng.uniforms(q.shape) < q).astype(np.float64)
    recon = visible_probs(p, h)
    return float(np.mean((batch - recon) ** 2))


def train_rbm(init: RbmParams, data, hp: Hyperparams, estimator: str, seed: int,
              threads: int = 1, epoch_callback=None):
    """Train one RBM; returns (trained params, per-epoch metrics).

    estimator is one of "cd", "pcd", "fepcd". The persistent estimators
    keep one chain pool alive across the whole run, initialized from the
    first minibatch. Per-epoch metrics (mean reconstruction error and mean
    data free energy) accumulate over the minibatches as they are
    processed, on post-update parameters. epoch_callback(epoch, params,
    metrics_row), when given, runs after each epoch off the training clock.
    """
    hp.validate()
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    feats = _features_of(data)
    m = feats.shape[0]
    n_chains = hp.batch_size if hp.n_chains is None else hp.n_chains

    shuffle_rng = RngStream(seed, STREAM_SHUFFLE)
    data_rng = RngStream(seed, STREAM_DATA)
    eval_rng = RngStream(seed, STREAM_EVAL)

    p = init
    vel = UpdateState.zeros_like(init)
    pool = None
    metrics: list[EpochMetrics] = []

    for epoch in range(1, hp.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(m)
        recon_sum = 0.0
        fe_sum = 0.0
        for start in range(0, m, hp.batch_size):
            batch = feats[order[start:start + hp.batch_size]]
            if estimator == CD:
                pos, neg = cd_k(p, batch, hp.k, data_rng)
            else:
                pos = batch_stats(batch, hidden_probs(p, batch))
                if pool is None:
                    pool = make_pool(batch, n_chains, seed)
                if estimator == PCD:
                    neg, pool = pcd_step(p, pool, hp.k, threads)
                else:
                    neg, pool = fepcd_step(p, pool, hp.k, hp.elite_fraction, threads)
            try:
                p = apply_update(p, pos, neg, hp, vel)
            except ValueError as exc:
                raise TrainingDivergedError(
                    f"non-finite parameters at epoch {epoch}, "
                    f"batch offset {start} ({estimator}, seed {seed})") from exc
            recon_sum += reconstruction_error(p, batch, eval_rng) * batch.shape[0]
            fe_sum += float(np.sum(free_energy(p, batch)))
        metrics.append(EpochMetrics(epoch, recon_sum / m, fe_sum / m,
                                    time.perf_counter() - t0, estimator, seed))
        if epoch_callback is not None:
            epoch_callback(epoch, p, metrics[-1])
    return p, metrics


def metrics_csv_text(metrics, config_line: str | None = None) -> str:
    """Metrics CSV body with the mandatory header row.

    An optional '# config: ...' comment line above the header echoes the
    producing configuration for reproducibility.
    """
    buf = io.StringIO()
    if config_line:
        buf.write(f"# config: {config_line}\n")
    writer = csv.writer(buf)
    writer.writerow(METRICS_FIELDS)
    for row in metrics:
        writer.writerow([
            row.epoch,
            format(row.recon_error, ".17g"),
            format(row.mean_free_energy, ".17g"),
            format(row.seconds, ".6f"),
            row.estimator,
            row.seed,
        ])
    return buf.getvalue()


def write_metrics_csv(path, metrics, config_line: str | None = None):
    with open(path, "w", newline="") as fh:
        fh.write(metrics_csv_text(metrics, config_line))


def read_metrics_csv(path) -> list[EpochMetrics]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for rec in reader:
        rows.append(EpochMetrics(
            epoch=int(rec["epoch"]),
            recon_error=float(rec["recon_error"]),
            mean_free_energy=float(rec["mean_free_energy"]),
            seconds=float(rec["seconds"]),
            estimator=rec["estimator"],
            seed=int(rec["seed"]),
        ))
    return rows
