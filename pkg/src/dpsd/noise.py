"""Seeded randomness and the Laplace mechanism.

Streams are derived with :class:`numpy.random.SeedSequence`: a source with seed ``s``
and key path ``(k1, k2, ...)`` draws from ``SeedSequence(entropy=s, spawn_key=(k1, k2, ...))``.
String key components are mapped to integers with CRC-32, so the stream used for, say,
the counts of level 3 is ``child("count", 3)`` no matter how many other streams were
consumed before it. This keeps ablations reproducible when the tree shape changes.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_SEED_MASK = (1 << 64) - 1


def _key_component(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        raise TypeError("boolean stream keys are ambiguous")
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError(f"stream key components must be non-negative, got {k}")
        return int(k)
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    raise TypeError(f"unsupported stream key component {k!r}")


class RandomSource:
    """A reproducible random stream identified by a 64-bit seed and a key path.

    ``noiseless=True`` is a test hook: every mechanism that consults the source then
    behaves as in the ε → ∞ limit (Laplace noise is exactly zero, private medians
    return the exact median). It propagates to derived children.

    A source is single-owner. Use :meth:`child` to obtain independent streams for
    parallel work.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = (), noiseless: bool = False):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed) & _SEED_MASK
        self.key = tuple(key)
        self.noiseless = noiseless

    def __repr__(self) -> str:
        flag = ", noiseless=True" if self.noiseless else ""
        return f"RandomSource(seed={self.seed}, key={self.key}{flag})"

    @cached_property
    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *key) -> RandomSource:
        return RandomSource(self.seed, self.key + tuple(_key_component(k) for k in key), self.noiseless)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)


@dataclass(frozen=True)
class LaplaceParams:
    sensitivity: float
    epsilon: float

    def __post_init__(self):
        if not self.sensitivity >= 0 or math.isinf(self.sensitivity):
            raise ValueError(f"sensitivity must be finite and >= 0, got {self.sensitivity}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2


def standard_laplace(src: RandomSource, size=None):
    """Laplace(0, 1) draws by inverting the CDF of one uniform per sample."""
    u = src.generator.uniform(-0.5, 0.5, size)
    # uniform() may return exactly -0.5; cap |u| one ulp below 0.5 so the log stays finite
    a = np.minimum(np.abs(u), 0.5 - 2.0**-54)
    return -np.sign(u) * np.log1p(-2.0 * a)


def laplace_sample(src: RandomSource, params: LaplaceParams, size=None):
    """Draw Laplace noise with scale ``sensitivity / epsilon``.

    Returns a float, or an array when ``size`` is given. A zero scale (zero sensitivity
    or infinite epsilon) and a noiseless source both yield exact zeros without consuming
    the stream.
    """
    scale = params.scale
    if src.noiseless or scale == 0:
        return 0.0 if size is None else np.zeros(size)
    x = scale * standard_laplace(src, size)
    return float(x) if size is None else x


def noisy_count(src: RandomSource, true_count, epsilon: float):
    """Release ``true_count + Lap(1/epsilon)``; vectorised over arrays of counts.

    The result is never clamped or rounded, so it may be negative.
    """
    counts = np.asarray(true_count, dtype=float)
    if np.any(counts < 0):
        raise ValueError("true counts must be non-negative")
    params = LaplaceParams(1.0, epsilon)
    if counts.ndim == 0:
        return float(counts) + laplace_sample(src, params)
    return counts + laplace_sample(src, params, size=counts.shape)
