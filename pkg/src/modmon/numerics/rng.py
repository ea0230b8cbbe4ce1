"""Seedable random streams and the distribution samplers used by the generator.

Streams are backed by numpy's Philox counter-based bit generator, keyed by a
``SeedSequence`` built from ``(seed, stream_id, *path)``. Child streams are
derived by extending the path, so substreams never share state with their
parent or with each other.
"""

from __future__ import annotations

import zlib
from typing import Optional, Union

import numpy as np

from modmon.errors import InvalidBounds, InvalidMean, InvalidScale

Key = Union[int, str]


def _key_word(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError("stream keys must be nonnegative")
    return int(key)


class RngStream:
    """A reproducible random stream identified by (seed, stream_id, path)."""

    def __init__(self, seed: int, stream_id: int = 0, path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id)
        self.path = tuple(path)
        words = (self.stream_id, len(self.path)) + tuple(_key_word(k) for k in self.path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=words)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: Key) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + keys)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path!r})"


def sample_gaussian_vector(mean, variance_scale: float, rng: RngStream, size=None) -> np.ndarray:
    """Independent Normal(mean_i, variance_scale) draws, one per entry of ``mean``.

    ``size`` prepends extra leading dimensions for batched draws.
    """
    if not variance_scale > 0:
        raise InvalidScale(f"variance_scale must be positive, got {variance_scale}")
    mean = np.asarray(mean, dtype=np.float64)
    shape = mean.shape if size is None else tuple(np.atleast_1d(size)) + mean.shape
    noise = rng.generator.standard_normal(shape)
    return mean + np.sqrt(variance_scale) * noise


def sample_poisson(mean, rng: RngStream, size=None):
    mean_arr = np.asarray(mean, dtype=np.float64)
    if mean_arr.size and (np.isnan(mean_arr).any() or mean_arr.min() < 0):
        raise InvalidMean("Poisson mean must be nonnegative")
    draws = rng.generator.poisson(mean_arr, size=size)
    if np.ndim(draws) == 0:
        return int(draws)
    return draws


def sample_bounded_power_law(
    lower: float, upper: float, exponent: float, rng: RngStream, size: Optional[int] = None
):
    """Inverse-CDF draws from a density proportional to x**-exponent on [lower, upper]."""
    if not 0 < lower < upper:
        raise InvalidBounds(f"need 0 < lower < upper, got [{lower}, {upper}]")
    u = rng.generator.random(size)
    if np.isclose(exponent, 1.0, rtol=0, atol=1e-12):
        x = lower * (upper / lower) ** u
    else:
        a = 1.0 - exponent
        lo, hi = lower**a, upper**a
        x = (lo + u * (hi - lo)) ** (1.0 / a)
    x = np.clip(x, lower, upper)
    return float(x) if size is None else x


def bounded_power_law_cdf(x, lower: float, upper: float, exponent: float):
    """Analytic CDF of the truncated power law, used for distribution checks."""
    x = np.clip(np.asarray(x, dtype=np.float64), lower, upper)
    if np.isclose(exponent, 1.0, rtol=0, atol=1e-12):
        return np.log(x / lower) / np.log(upper / lower)
    a = 1.0 - exponent
    return (x**a - lower**a) / (upper**a - lower**a)
