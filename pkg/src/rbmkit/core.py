"""Elementary math and random-number streams shared by every module.

All floating point is 64-bit. Randomness flows exclusively through
:class:`RngStream` objects, each addressed by a (seed, stream_id) pair on
top of numpy's counter-based Philox generator, so that any computation is
reproducible bit-for-bit regardless of how work is scheduled across
threads. Streams are stateful and must never be shared between threads;
hand each worker its own.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream", "sigmoid", "log1p_exp", "bernoulli_sample", "gaussian_sample"]


class RngStream:
    """One independent, reproducible random stream.

    Two streams built from the same (seed, stream_id) yield bit-identical
    draw sequences; distinct stream_ids give statistically independent
    sequences. Chains, shuffling, initialization etc. each get their own
    stream_id so consumption in one never perturbs another.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed < 2**64) or not (0 <= stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self) -> float:
        """One uniform draw from [0, 1)."""
        return float(self._gen.random())

    def uniforms(self, shape) -> np.ndarray:
        """Array of uniform draws from [0, 1), filled in row-major order."""
        return self._gen.random(shape)

    def normal(self) -> float:
        """One standard normal draw."""
        return float(self._gen.standard_normal())

    def normals(self, shape) -> np.ndarray:
        """Array of standard normal draws."""
        return self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return self._gen.permutation(n)


def sigmoid(x):
    """Logistic function 1/(1+exp(-x)).

    Computed as exp(-log(1+exp(-x))), which never exponentiates a large
    positive argument: large |x| saturates to 0 or 1 instead of
    overflowing, for any float64 input. Accepts scalars or arrays.
    """
    out = np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))
    if out.ndim == 0:
        return float(out)
    return out


def log1p_exp(x):
    """Softplus log(1+exp(x)) via the stable form max(x,0)+log1p(exp(-|x|)).

    numpy's logaddexp(x, 0) computes exactly that branch. Accepts scalars
    or arrays.
    """
    out = np.logaddexp(x, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def bernoulli_sample(p, rng: RngStream):
    """Draw 0/1 with success probability p, consuming one uniform per element.

    Scalar p gives an int; an array gives a float64 0/1 array of the same
    shape (float so the result drops straight into matrix arithmetic).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("bernoulli probability outside [0, 1]")
    if p.ndim == 0:
        return int(rng.uniform() < p)
    return (rng.uniforms(p.shape) < p).astype(np.float64)


def gaussian_sample(mean, rng: RngStream):
    """Draw from Normal(mean, 1). Scalar mean gives a float, arrays elementwise."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.ndim == 0:
        return float(mean) + rng.normal()
    return mean + rng.normals(mean.shape)
