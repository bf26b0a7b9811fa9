"""
The on-device snapshot ring buffer and the prior-fall report built from it.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from fallalert.models.labels import ActivityLabel, activity_order
from fallalert.models.recording import SAMPLE_COLUMNS, Sample

SNAPSHOT_CAPACITY = 200


class SnapshotBuffer:
    """Keeps the latest `capacity` samples (4 s at 50 Hz) as rows of an (capacity, 7) matrix."""

    __slots__ = ("data", "ptr", "capacity", "full")

    def __init__(self, capacity: int = SNAPSHOT_CAPACITY):
        if capacity < 1:
            raise ValueError(f"Snapshot capacity must be positive - got {capacity}.")
        self.capacity = capacity
        self.data = np.zeros((capacity, len(SAMPLE_COLUMNS)))
        self.ptr = 0
        self.full = False

    def __len__(self):
        return self.capacity if self.full else self.ptr

    @property
    def is_full(self) -> bool:
        return self.full

    def append(self, sample):
        self.data[self.ptr] = sample
        self.ptr = (self.ptr + 1) % self.capacity
        if self.ptr == 0:
            self.full = True

    def clear(self):
        self.ptr = 0
        self.full = False

    def view(self) -> np.ndarray:
        """Chronological copy of whatever is buffered (may be shorter than capacity)."""
        if self.full:
            return np.concatenate((self.data[self.ptr :], self.data[: self.ptr]))
        return self.data[: self.ptr].copy()

    def snapshot(self) -> Optional[Tuple[Sample, ...]]:
        """The buffered samples oldest first, or None until the buffer has filled once."""
        if not self.full:
            return None
        return tuple(Sample(*row) for row in self.view().tolist())


class WindowPrediction(NamedTuple):
    offset: int
    label: ActivityLabel
    score: float


@dataclass(frozen=True)
class PriorFallReport:
    """The per-window predictions of one snapshot and their majority-vote winner."""

    window_predictions: Tuple[WindowPrediction, ...]
    winner: ActivityLabel
    vote_counts: Dict[ActivityLabel, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "window_predictions", tuple(WindowPrediction(*p) for p in self.window_predictions))
        if not self.vote_counts:
            counts = Counter(p.label for p in self.window_predictions)
            ordered = {label: counts[label] for label in activity_order(counts)}
            object.__setattr__(self, "vote_counts", ordered)

    @property
    def votes(self) -> int:
        return sum(self.vote_counts.values())

    def asdict(self):
        return {
            "winner": self.winner.value,
            "vote_counts": {label.value: n for label, n in self.vote_counts.items()},
            "windows": [{"offset": p.offset, "label": p.label.value, "score": p.score} for p in self.window_predictions],
        }
