"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator seeded by a
``SeedSequence`` built from a root seed plus integer keys. Streams for
different keys are statistically independent, so per-sample streams can be
derived as ``make_rng(seed, index)`` and consumed in any order or process.
"""

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``.

    String keys are mapped through CRC-32 so named sub-streams
    (e.g. ``"scene"``) are stable across runs and platforms.
    """
    entropy = [int(seed) & MASK64] + [_key(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit integer seed for a sub-stream, for passing across APIs."""
    return int(make_rng(seed, *keys).integers(0, 2**63, dtype=np.int64))
