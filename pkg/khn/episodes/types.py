"""Few-shot episode data types."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from khn.errors import DataError


@dataclass(frozen=True)
class Example:
    """One input with its class label (episode index or source class id)."""

    input: np.ndarray
    label: int


@dataclass
class Episode:
    """An N-way K-shot task: a labeled support set and a query set."""

    support: list[Example]
    query: list[Example]
    way: int
    shot: int
    queries_per_class: int
    class_ids: Optional[list] = field(default=None)  # source class behind each episode index

    def __post_init__(self):
        self._check_balance(self.support, self.shot, "support")
        self._check_balance(self.query, self.queries_per_class, "query")

    def _check_balance(self, examples: list[Example], per_class: int, part: str):
        if len(examples) != self.way * per_class:
            raise DataError(f"{part} holds {len(examples)} examples, expected {self.way} x {per_class}")
        counts = Counter(example.label for example in examples)
        if set(counts) != set(range(self.way)):
            raise DataError(f"{part} labels {sorted(counts)} are not exactly 0..{self.way - 1}")
        unbalanced = {label: n for label, n in counts.items() if n != per_class}
        if unbalanced:
            raise DataError(f"{part} class counts {unbalanced} differ from {per_class}")

    def support_inputs(self) -> np.ndarray:
        return np.stack([example.input for example in self.support])

    def support_labels(self) -> list[int]:
        return [example.label for example in self.support]

    def query_inputs(self) -> np.ndarray:
        return np.stack([example.input for example in self.query])

    def query_labels(self) -> list[int]:
        return [example.label for example in self.query]
