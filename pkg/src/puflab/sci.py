"""Power and reliability side-channel labels.

Power is the number of component chains answering 1. Reliability is the number
of 1s among ``m`` independent noisy evaluations of the composite response,
optionally binned into ``cn`` equal-width classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay import InvalidInput, NoiseSpec, as_challenges
from .variants import PreparedBatch, PufInstance, evaluate


@dataclass(frozen=True)
class SciConfig:
    use_power: bool = False
    use_reliability: bool = False
    m: int = 10
    cn: int = 11
    noisy_power: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInput(f"repeated-measurement count m must be >= 1, got {self.m}")
        if not 2 <= self.cn <= self.m + 1:
            raise InvalidInput(f"class count cn must satisfy 2 <= cn <= m + 1 = {self.m + 1}, got {self.cn}")


@dataclass(frozen=True)
class SciRecord:
    challenge: np.ndarray
    response: int
    power: int | None = None
    rel_count: int | None = None
    rel_class: int | None = None


def power_label(component_bits) -> int | np.ndarray:
    bits = np.asarray(component_bits)
    if bits.shape[-1] == 0:
        raise InvalidInput("power label of an empty component vector")
    out = bits.astype(np.int64).sum(axis=-1)
    return int(out) if out.ndim == 0 else out


def _check_m(m):
    if m < 1:
        raise InvalidInput(f"repeated-measurement count m must be >= 1, got {m}")


def measure_reliability(inst: PufInstance, c, m: int, noise: NoiseSpec, rng: np.random.Generator):
    """Count of 1 responses over ``m`` noisy evaluations (per challenge for a batch)."""
    _check_m(m)
    c = as_challenges(c)
    batch = np.atleast_2d(c)
    prep = PreparedBatch(inst, batch)
    count = np.zeros(batch.shape[0], dtype=np.int64)
    for _ in range(m):
        count += prep.sample(noise, rng)[0]
    return int(count[0]) if c.ndim == 1 else count


def bin_count(count, m: int, cn: int):
    """Equal-width binning of a count in ``[0, m]`` into ``cn`` classes."""
    if not 2 <= cn <= m + 1:
        raise InvalidInput(f"class count cn must satisfy 2 <= cn <= m + 1, got cn={cn}, m={m}")
    arr = np.asarray(count, dtype=np.int64)
    if np.any(arr < 0) or np.any(arr > m):
        raise InvalidInput(f"count outside [0, {m}]")
    out = arr * cn // (m + 1)
    return int(out) if out.ndim == 0 else out


def one_hot(class_index, class_count: int) -> np.ndarray:
    idx = np.asarray(class_index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= class_count):
        raise InvalidInput(f"class index outside [0, {class_count})")
    out = np.zeros(idx.shape + (class_count,), dtype=np.float64)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def majority_vote_response(inst: PufInstance, c, m: int, noise: NoiseSpec, rng: np.random.Generator):
    if m < 1 or m % 2 == 0:
        raise InvalidInput(f"majority vote needs an odd number of measurements, got {m}")
    count = measure_reliability(inst, c, m, noise, rng)
    return vote(count, m)


def vote(count, m: int):
    out = np.asarray(count) * 2 > m
    return int(out) if out.ndim == 0 else out.astype(np.uint8)


def unreliability(counts, m: int) -> float:
    """Fraction of challenges whose ``m`` repeated responses are not all equal.

    Counts of 0 and ``m`` are stable; every intermediate count is an unstable
    challenge.
    """
    counts = np.asarray(counts)
    return float(np.mean((counts > 0) & (counts < m)))


def flip_rate(inst: PufInstance, challenges, noise: NoiseSpec, rng: np.random.Generator, m: int = 1) -> float:
    """Mean per-query probability that a noisy response differs from the noise-free one."""
    ref, _ = evaluate(inst, challenges)
    count = measure_reliability(inst, challenges, m, noise, rng)
    flips = np.where(ref == 1, m - count, count)
    return float(np.mean(flips) / m)


def category_histogram(counts, m: int) -> np.ndarray:
    """Number of challenges in each reliability count category 0..m."""
    return np.bincount(np.asarray(counts, dtype=np.int64), minlength=m + 1)
