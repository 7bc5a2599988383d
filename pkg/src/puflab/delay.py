"""Linear additive delay model of a single arbiter chain.

A challenge ``c`` of ``n`` bits maps to a parity vector ``phi`` of length
``n + 1`` with ``phi[i] = prod_{j >= i} (1 - 2 c[j])`` and ``phi[n] = 1``; the
delay difference is ``w . phi`` and the arbiter outputs 1 iff it is negative.

All functions accept a single challenge (1-D) or a batch (2-D, one challenge
per row) and return matching shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class NoiseSpec:
    """Per-query Gaussian perturbation added to every weight of a chain."""

    mu_noise: float = 0.0
    sigma_noise: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.mu_noise) or not np.isfinite(self.sigma_noise):
            raise InvalidInput("noise parameters must be finite")
        if self.sigma_noise < 0:
            raise InvalidInput(f"sigma_noise must be >= 0, got {self.sigma_noise}")

    @property
    def is_null(self) -> bool:
        return self.sigma_noise == 0 and self.mu_noise == 0


def as_challenges(c) -> np.ndarray:
    arr = np.asarray(c)
    if arr.ndim not in (1, 2):
        raise InvalidInput(f"challenge must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[-1] == 0:
        raise InvalidInput("empty challenge")
    if arr.dtype != np.uint8:
        if not np.all((arr == 0) | (arr == 1)):
            raise InvalidInput("challenge entries must be 0 or 1")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max() > 1:
        raise InvalidInput("challenge entries must be 0 or 1")
    return arr


def parity_vector(c) -> np.ndarray:
    """Parity (feature) vector of one challenge or a batch of challenges."""
    c = as_challenges(c)
    signs = 1 - 2 * c.astype(np.int8)
    suffix = np.cumprod(signs[..., ::-1], axis=-1, dtype=np.int8)[..., ::-1]
    ones = np.ones(c.shape[:-1] + (1,), dtype=np.int8)
    return np.concatenate([suffix, ones], axis=-1).astype(np.float64)


def sample_apuf_weights(n: int, mu: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise InvalidInput(f"stage count must be >= 1, got {n}")
    if not sigma > 0:
        raise InvalidInput(f"sigma must be > 0, got {sigma}")
    return rng.normal(mu, sigma, size=n + 1)


def delay_difference(w, phi) -> np.ndarray | float:
    w = np.asarray(w, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if w.ndim != 1 or phi.shape[-1] != w.shape[0]:
        raise InvalidInput(f"length mismatch: weights {w.shape}, parity {phi.shape}")
    out = phi @ w
    return float(out) if np.ndim(out) == 0 else out


def _sign_bit(delta):
    # 1 only for a strictly negative delay; a tie maps to 0.
    if np.ndim(delta) == 0:
        return int(delta < 0)
    return (np.asarray(delta) < 0).astype(np.uint8)


def respond(w, c):
    w = np.asarray(w, dtype=np.float64)
    c = as_challenges(c)
    if c.shape[-1] + 1 != w.shape[0]:
        raise InvalidInput(f"challenge length {c.shape[-1]} does not match {w.shape[0] - 1} stages")
    return _sign_bit(delay_difference(w, parity_vector(c)))


def respond_noisy(w, c, noise: NoiseSpec | None, rng: np.random.Generator):
    """Response under a freshly drawn weight vector ``w + eps`` per query."""
    w = np.asarray(w, dtype=np.float64)
    c = as_challenges(c)
    if noise is None or noise.is_null:
        return respond(w, c)
    phi = parity_vector(c)
    if phi.shape[-1] != w.shape[0]:
        raise InvalidInput(f"challenge length {c.shape[-1]} does not match {w.shape[0] - 1} stages")
    eps = rng.normal(noise.mu_noise, noise.sigma_noise, size=phi.shape)
    return _sign_bit(np.sum((w + eps) * phi, axis=-1))


def random_challenges(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=(count, n), dtype=np.uint8)
