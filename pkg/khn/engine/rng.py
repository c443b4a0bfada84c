"""Random number generation with seed control."""

from typing import Sequence

import numpy as np

from khn.errors import ConfigError


class SeededRNG:
    """Seeded random stream for deterministic behavior.

    Child streams are derived from the root seed plus integer keys, so that
    e.g. the episode for iteration 17 does not depend on how many draws
    earlier iterations consumed.
    """

    def __init__(self, seed: int, *keys: int):
        """
        Initialize RNG.

        Args:
            seed: Root seed
            keys: Optional path of integer keys identifying a child stream
        """
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        if self.seed < 0 or any(k < 0 for k in self.keys):
            raise ConfigError(f"seeds must be non-negative, got {(self.seed, *self.keys)}")
        self.generator = np.random.default_rng([self.seed, *self.keys])

    def derive(self, *keys: int) -> "SeededRNG":
        """Independent child stream identified by keys."""
        return SeededRNG(self.seed, *self.keys, *keys)

    def choice(self, items: Sequence, size: int) -> list:
        """Sample size distinct items in random order."""
        picked = self.generator.choice(len(items), size=size, replace=False)
        return [items[i] for i in picked]

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return self.generator.permutation(n)

    def normal(self, shape: Sequence[int]) -> np.ndarray:
        """Standard-normal draws of the given shape."""
        return self.generator.standard_normal(tuple(shape))

    def uniform(self, low: float, high: float, shape: Sequence[int]) -> np.ndarray:
        """Uniform draws in [low, high)."""
        return self.generator.uniform(low, high, size=tuple(shape))

    def integers(self, high: int) -> int:
        """Single integer in [0, high)."""
        return int(self.generator.integers(high))
