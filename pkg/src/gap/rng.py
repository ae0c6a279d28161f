"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, position)``: a Philox-4x64 block keyed
by ``(seed, stream)`` produces four 64-bit words per counter value, so any
slice of a stream can be regenerated without touching the rest.  Normals come
from the inverse CDF, which keeps the position-to-value map fixed across
platforms and worker counts.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["STREAM_DATA_X", "STREAM_DATA_Y", "normals", "uniforms"]

_MASK64 = (1 << 64) - 1
_WORDS_PER_COUNTER = 4

# Stream ids reserved for synthetic data; optimizer iterations use ids 0, 1, 2, ...
STREAM_DATA_X = (1 << 63) | 1
STREAM_DATA_Y = (1 << 63) | 2


def uniforms(seed: int, stream: int, n: int, start: int = 0) -> np.ndarray:
    """``n`` uniforms in the open interval (0, 1) from positions ``start .. start+n-1``."""
    if n < 0 or start < 0:
        raise ValueError("n and start must be nonnegative")
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    block, offset = divmod(start, _WORDS_PER_COUNTER)
    counter = np.array([block & _MASK64, block >> 64, 0, 0], dtype=np.uint64)
    gen = np.random.Philox(key=key, counter=counter)
    raw = gen.random_raw(n + offset)[offset:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, shape: tuple[int, ...] | int, start: int = 0) -> np.ndarray:
    """Standard normals laid out row-major from stream position ``start``."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    n = int(np.prod(shape, dtype=np.int64))
    return ndtri(uniforms(seed, stream, n, start)).reshape(shape)
