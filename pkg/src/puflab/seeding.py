"""Deterministic seed derivation.

Every experiment has one master seed. Sub-streams (per APUF instance, per
challenge stream, per noise stream, per training run) are derived from it with
a splitmix64 mix of the master seed and a tuple of string/int keys, so any
single stream can be regenerated without replaying the others.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _key_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & _MASK


def derive_seed(master: int, *keys: int | str) -> int:
    """Mix ``master`` with ``keys`` into a fresh 63-bit seed."""
    state = splitmix64(int(master) & _MASK)
    for key in keys:
        state = splitmix64(state ^ _key_int(key))
    return state >> 1


def rng_for(master: int, *keys: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
