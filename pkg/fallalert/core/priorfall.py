"""
Prior-fall activity identification: the 4-second snapshot is cut into five overlapping
2-second windows, each window is classified and the labels are majority-voted.
"""

import logging
from collections import Counter
from typing import List, Optional, Sequence

import numpy as np

from fallalert.core import classify
from fallalert.core.signal import extract_features
from fallalert.models.classifier import TrainedModel
from fallalert.models.labels import ActivityLabel, CoordinateSystem
from fallalert.models.snapshot import SNAPSHOT_CAPACITY, PriorFallReport, SnapshotBuffer, WindowPrediction
from fallalert.models.window import DEFAULT_WINDOW_LEN, Window

# Window starts inside the snapshot: 4.0, 3.8, 3.6, 3.4 & 3.2 seconds before its end.
# Samples 140-199 (the fall itself) are never classified.
PRIOR_OFFSETS = (0, 10, 20, 30, 40)


def push_sample(buffer: SnapshotBuffer, sample) -> SnapshotBuffer:
    """Appends one sample (t, ax, ay, az, gx, gy, gz), evicting the oldest once full."""
    buffer.append(sample)
    return buffer


def snapshot_channels(snapshot) -> np.ndarray:
    """The (n, 6) channel matrix of a snapshot given as Samples, (n, 7) rows or (n, 6) rows."""
    values = np.asarray(snapshot, dtype=float)
    if values.ndim != 2 or values.shape[1] not in (6, 7):
        raise ValueError(f"A snapshot must be rows of 6 channels (or 7 with a timestamp) - got {values.shape}.")
    return values[:, -6:]


def split_prior_windows(snapshot, window_len: int = DEFAULT_WINDOW_LEN, offsets: Sequence[int] = PRIOR_OFFSETS) -> List[Window]:
    """Cuts a 200-sample snapshot into the five prior-fall windows.

    Args:
        snapshot: 200 chronological samples
        window_len: samples per window
        offsets: window starts within the snapshot

    Returns:
        windows: one Window per offset, each window_len samples long
    """
    channels = snapshot_channels(snapshot)
    if len(channels) != SNAPSHOT_CAPACITY:
        raise ValueError(f"A prior-fall snapshot holds exactly {SNAPSHOT_CAPACITY} samples - got {len(channels)}.")
    if max(offsets) + window_len > len(channels):
        raise ValueError(f"Window offsets {list(offsets)} overrun the snapshot.")

    return [Window(channels[offset : offset + window_len], recording_id="snapshot", start=offset) for offset in offsets]


def majority_vote(labels: Sequence[ActivityLabel]) -> ActivityLabel:
    """Most frequent of the five window labels; a tie goes to the tied label that occurs last (closest to the fall)."""
    if len(labels) != len(PRIOR_OFFSETS):
        raise ValueError(f"A prior-fall vote takes exactly {len(PRIOR_OFFSETS)} labels - got {len(labels)}.")

    counts = Counter(labels)
    top = max(counts.values())
    tied = {label for label, n in counts.items() if n == top}
    for label in reversed(labels):
        if label in tied:
            return label


def identify_prior_activity(model: TrainedModel, snapshot, system: Optional[CoordinateSystem] = None) -> PriorFallReport:
    """Classifies the five prior-fall windows of a snapshot and majority-votes the result.

    Args:
        model: TrainedModel used for every window
        snapshot: 200 chronological samples
        system: coordinate system of the features (defaults to the model's)

    Returns:
        PriorFallReport
    """
    system = system or model.feature_config.system
    predictions = []
    for window in split_prior_windows(snapshot):
        label, scores = classify.predict(model, extract_features(window, system))
        predictions.append(WindowPrediction(window.start, label, scores[label]))

    winner = majority_vote([p.label for p in predictions])
    report = PriorFallReport(tuple(predictions), winner)
    logging.debug("Prior-fall windows %s -> %s.", [p.label.value for p in predictions], winner.value)
    return report
