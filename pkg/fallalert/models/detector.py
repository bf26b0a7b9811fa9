"""
Fall detector parameter sets, detected fall events & detector metrics.

The parameter classes double as configured detectors: `detect(series)` returns the
events of a G-force series and `flags(series)` answers whether a series holds a fall.
"""

from dataclasses import dataclass, fields
from typing import Optional

from fallalert.models.errors import ConfigError
from fallalert.models.labels import DetectorKind, FallKind
from fallalert.models.window import CroppedFall


def tunable_fields(params):
    """Names of the numeric fields of a detector (the ones a grid may vary), in field order."""
    return [f.name for f in fields(params) if f.type in (float, int, "float", "int")]


@dataclass(frozen=True)
class TwoPhaseParams:
    """Lower / upper fall thresholds (G) & the max sample gap between the two crossings."""

    lft: float = 0.6
    uft: float = 2.0
    max_gap: int = 50
    kind: FallKind = FallKind.FALL

    detector_id = DetectorKind.TWO_PHASE

    def __post_init__(self):
        if not 0 < self.lft < 1 < self.uft:
            raise ConfigError(f"2-phase thresholds need 0 < lft < 1 < uft - got lft={self.lft}, uft={self.uft}.")
        if self.max_gap < 1:
            raise ConfigError(f"max_gap must be at least 1 - got {self.max_gap}.")

    def detect(self, series, recording_id=""):
        from fallalert.core import falldetect

        return falldetect.detect_two_phase(series, self, recording_id)

    def flags(self, series) -> bool:
        return bool(self.detect(series))


@dataclass(frozen=True)
class ThreePhaseParams:
    """Dip (t1), impact (t2) & post-impact settling bounds of the 3-phase detector.

    gap12 bounds the samples from the dip to the impact, gap23 the samples from the impact
    peak to the start of settling, and settle_len is how many consecutive samples must stay
    within [settle_low, settle_high].
    """

    t1: float = 0.6
    t2: float = 2.0
    settle_low: float = 0.8
    settle_high: float = 1.2
    gap12: int = 25
    gap23: int = 50
    settle_len: int = 25
    kind: FallKind = FallKind.FALL

    detector_id = DetectorKind.THREE_PHASE

    def __post_init__(self):
        if not 0 < self.t1 < 1 < self.t2:
            raise ConfigError(f"3-phase thresholds need 0 < t1 < 1 < t2 - got t1={self.t1}, t2={self.t2}.")
        if not self.settle_low < 1 < self.settle_high:
            raise ConfigError(
                f"3-phase settle bounds need settle_low < 1 < settle_high - got {self.settle_low}, {self.settle_high}."
            )
        if min(self.gap12, self.gap23, self.settle_len) < 1:
            raise ConfigError("gap12, gap23 and settle_len must all be at least 1.")

    def detect(self, series, recording_id=""):
        from fallalert.core import falldetect

        return falldetect.detect_three_phase(series, self, recording_id)

    def flags(self, series) -> bool:
        return bool(self.detect(series))


@dataclass(frozen=True)
class DtwDetector:
    """A fall template & the DTW distance at or under which a candidate counts as a fall.

    mode "offline" judges a whole (pre-segmented) series by its single crop; "streaming"
    slides over every candidate peak above peak_height.
    """

    template: CroppedFall
    threshold: float
    peak_height: float = 1.3
    filter_after_crop: bool = True
    order: int = 2
    cutoff_hz: float = 5.0
    mode: str = "offline"
    kind: FallKind = FallKind.FALL

    detector_id = DetectorKind.DTW

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError(f"DTW threshold must be positive - got {self.threshold}.")
        if self.mode not in ("offline", "streaming"):
            raise ConfigError(f"DTW mode must be offline or streaming - got {self.mode!r}.")

    def detect(self, series, recording_id=""):
        from fallalert.core import falldetect

        return falldetect.detect_dtw(series, self, recording_id)

    def flags(self, series) -> bool:
        from fallalert.core import falldetect

        if self.mode == "offline":
            return falldetect.dtw_flags_segment(series, self)
        return bool(self.detect(series))


@dataclass(frozen=True)
class FallEvent:
    """A detected fall.

    Attributes:
        kind: FALL or FALL_KNEES_FIRST (the kind the detector was calibrated for)
        index: sample index of the impact peak
        detector: algorithm id
        recording_id: source recording (may be empty for bare series)
        confirmed_at: last sample index the decision depended on
    """

    kind: FallKind
    index: int
    detector: DetectorKind
    recording_id: str = ""
    confirmed_at: Optional[int] = None

    def __post_init__(self):
        if self.confirmed_at is None:
            object.__setattr__(self, "confirmed_at", self.index)


@dataclass(frozen=True)
class DetectorMetrics:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def sensitivity(self) -> float:
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0

    @property
    def specificity(self) -> float:
        negatives = self.tn + self.fp
        return self.tn / negatives if negatives else 0.0

    def __add__(self, other):
        return DetectorMetrics(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    def asdict(self):
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }
