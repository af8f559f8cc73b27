"""Splittable deterministic random state.

All randomness in the package flows from one top-level seed.  ``RngState``
wraps a counter-based Philox generator: splitting derives an independent
child seed from (seed, counter) with a splitmix64 mix, so the same seed and
the same sequence of split/draw calls always reproduce bit-identical
streams, regardless of how much randomness each child consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass
class RngState:
    """Seed plus split counter; children are derived, never shared."""

    seed: int
    counter: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    def split(self) -> "RngState":
        """Return an independent child stream; advances this state's counter."""
        child_seed = _splitmix64(self.seed ^ _splitmix64(self.counter + 1))
        self.counter += 1
        return RngState(child_seed)

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy generator (created lazily, then reused)."""
        if self._gen is None:
            self._gen = np.random.Generator(np.random.Philox(key=self.seed))
        return self._gen

    def normal(self, shape: tuple[int, ...], std: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, std, size=shape)

    def integers(self, low: int, high: int, size: int | None = None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def choice(self, seq):
        return seq[int(self.generator.integers(0, len(seq)))]
