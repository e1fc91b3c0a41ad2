"""Counter-based random streams.

Every random draw in the package is addressed by ``(seed, stage tag, item
index)`` through numpy's Philox generator, so any ray, molecule or pixel can
be regenerated in isolation and chunked or threaded evaluation reproduces
serial results bit for bit.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(seed, tag):
    """Philox key for a (seed, stage tag) pair."""
    digest = hashlib.blake2b(str(tag).encode(), digest_size=8).digest()
    return np.array([int(seed) & _MASK64, int.from_bytes(digest, "little")],
                    dtype=np.uint64)


def raw_blocks(seed, tag, start, count, attempt=0):
    """Four 64-bit words per item for items ``start .. start + count - 1``."""
    bitgen = np.random.Philox(key=stream_key(seed, tag),
                              counter=[int(start), int(attempt), 0, 0])
    return bitgen.random_raw(4 * int(count)).reshape(int(count), 4)


def uniforms(seed, tag, start, count, attempt=0):
    """Open-interval uniforms, shape ``(count, 4)``; row ``i`` belongs to item ``start + i``."""
    words = raw_blocks(seed, tag, start, count, attempt)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed, tag, start, count):
    """Standard normal deviates, shape ``(count, 4)``, via Box-Muller on the same streams."""
    u = uniforms(seed, tag, start, count)
    r1 = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    ang = 2.0 * np.pi * u[:, 1::2]
    return np.concatenate((r1 * np.cos(ang), r1 * np.sin(ang)), axis=1)
