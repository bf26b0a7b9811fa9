"""
Signal level types: windows, spherical triples, feature vectors, G-force series & fall crops.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from fallalert.models.labels import ActivityLabel, CoordinateSystem

DEFAULT_WINDOW_LEN = 100
CROP_SIZE = 20

# Bump whenever the order or definition of the features below changes - serialized
# models record the version they were trained with.
FEATURE_VERSION = 1

CARTESIAN_CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
SPHERICAL_CHANNELS = ("acc_r", "acc_theta", "acc_phi", "gyro_r", "gyro_theta", "gyro_phi")

# Correlated channel pairs (indices into the six channels) - within-sensor pairs only.
CORRELATION_PAIRS = ((0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5))


def _feature_names(channels):
    means = [f"mean_{c}" for c in channels]
    stds = [f"std_{c}" for c in channels]
    corrs = [f"corr_{channels[i]}_{channels[j]}" for i, j in CORRELATION_PAIRS]
    return tuple(means + stds + corrs)


FEATURE_NAMES = {
    CoordinateSystem.CARTESIAN: _feature_names(CARTESIAN_CHANNELS),
    CoordinateSystem.SPHERICAL: _feature_names(SPHERICAL_CHANNELS),
}
FEATURE_COUNT = 18


@dataclass(frozen=True, eq=False)
class Window:
    """A fixed-length contiguous slice of a recording's six channels."""

    values: np.ndarray
    recording_id: str = ""
    start: int = 0
    label: Optional[ActivityLabel] = None
    subject_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 6 or len(values) < 2:
            raise ValueError(f"A window must be an (n >= 2, 6) matrix - got {values.shape}.")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def origin(self) -> Tuple[str, int]:
        return self.recording_id, self.start


class SphericalTriple(NamedTuple):
    r: float
    theta: float
    phi: float


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 18 statistical features of one window, in FEATURE_NAMES order."""

    values: np.ndarray
    system: CoordinateSystem = CoordinateSystem.CARTESIAN
    version: int = FEATURE_VERSION

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (FEATURE_COUNT,):
            raise ValueError(f"A feature vector has {FEATURE_COUNT} values - got {values.shape}.")
        object.__setattr__(self, "values", values)

    @property
    def names(self) -> Tuple[str, ...]:
        return FEATURE_NAMES[self.system]

    def asdict(self):
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True, eq=False)
class GForceSeries:
    """Unitless G-force values at a sampling rate. Raw series are non-negative; a
    low-passed series may undershoot slightly."""

    values: np.ndarray
    rate_hz: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class CroppedFall:
    """Exactly CROP_SIZE G-force values cut around the highest value of a series.

    Attributes:
        values: the cropped values
        mark_index: index of the peak within the source series
        start: index of values[0] within the source series
    """

    values: np.ndarray
    mark_index: int = 0
    start: int = 0
    subject_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(values) != CROP_SIZE:
            raise ValueError(f"A cropped fall holds exactly {CROP_SIZE} values - got {len(values)}.")
        object.__setattr__(self, "values", values)

    @property
    def stop(self) -> int:
        return self.start + CROP_SIZE
