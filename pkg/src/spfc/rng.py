"""Deterministic, splittable random streams.

Every (master seed, layer, column) triple maps to its own Philox
counter-based generator.  The triple is folded into a 64-bit key with the
SplitMix64 finaliser, so streams can be created independently on any worker
and still reproduce a serial run bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """SplitMix64 output function applied to ``x + golden``."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Fold integer indices into a 64-bit seed, one SplitMix64 round each."""
    state = splitmix64(int(master_seed) & _MASK)
    for idx in indices:
        state = splitmix64(state ^ (int(idx) & _MASK))
    return state


class RngStream:
    """Uniform [0, 1) doubles from a Philox generator keyed by a 64-bit state.

    A stream is owned by one task at a time; it is not thread safe.
    """

    __slots__ = ("state", "_gen")

    def __init__(self, state: int):
        self.state = state & _MASK
        self._gen = np.random.Generator(np.random.Philox(key=self.state))

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def __repr__(self) -> str:
        return f"RngStream(state=0x{self.state:016x})"


def derive_stream(master_seed: int, layer: int, column: int) -> RngStream:
    return RngStream(derive_seed(master_seed, layer, column))


def synthetic_data(seed: int, m: int, n: int, distribution: str = "uniform") -> np.ndarray:
    """An m x n data matrix, i.i.d. uniform(-1, 1) or standard normal entries."""
    stream = RngStream(derive_seed(seed, m, n))
    if distribution == "uniform":
        return 2.0 * stream.uniform((m, n)) - 1.0
    if distribution == "gaussian":
        return stream.normal((m, n))
    raise ValueError(f"distribution must be 'uniform' or 'gaussian', got {distribution!r}")
