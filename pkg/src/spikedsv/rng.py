"""Counter-based uniform streams and seed splitting.

Every random entry is a pure function of ``(seed, position)``: position ``k``
of the stream keyed by ``seed`` is lane ``k % 4`` of the Philox4x64 block at
counter ``k // 4``.  Any sub-range can therefore be produced independently of
the others, which is what makes matrix sampling reproducible under arbitrary
parallel decompositions.
"""

import numpy as np
from numpy.random import Philox

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LANES = 4


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def split_seed(master: int, index: int) -> int:
    """Derive the 64-bit seed of work unit ``index`` from ``master``.

    ``splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15 mod 2**64)``.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    return splitmix64((int(master) + (int(index) + 1) * _GOLDEN) & MASK64)


def raw_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words ``start .. start+count-1`` of the stream keyed by ``seed``."""
    if not 0 <= int(seed) <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if count <= 0:
        return np.empty(0, dtype=np.uint64)
    block, offset = divmod(int(start), _LANES)
    nwords = -(-(offset + count) // _LANES) * _LANES
    bitgen = Philox(key=int(seed) & MASK64, counter=block)
    return bitgen.random_raw(nwords)[offset:offset + count]


def uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Doubles in the open interval (0, 1) at stream positions ``start ..``.

    The top 53 bits of each word are used with a half-ulp offset, so 0 and 1
    are never produced and inverse-CDF transforms stay finite.
    """
    raw = raw_stream(seed, start, count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
