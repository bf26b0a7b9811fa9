"""
This module contains the Sample, Recording & Dataset types - the raw sensor data model.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from fallalert.models.errors import ValidationError
from fallalert.models.labels import ActivityLabel, BodyLocation, FallKind

GRAVITY = 9.8
ACCEL_FULL_SCALE = 16 * GRAVITY
GYRO_FULL_SCALE = 2000.0
DEFAULT_RATE_HZ = 50.0
SCHEMA_VERSION = 1

# Column order of Recording.values
SAMPLE_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz")


class Sample(NamedTuple):
    """One timestamped 6-axis IMU reading (m/s² & °/s)."""

    t: float
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float


def check_sample_ranges(values: np.ndarray, where: str = "recording"):
    """Raises ValidationError if any row of an (n, 7) sample matrix exceeds the sensor full scale."""
    accel = np.abs(values[:, 1:4])
    gyro = np.abs(values[:, 4:7])

    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{where} contains non-finite values.")

    bad_accel = np.flatnonzero(np.any(accel > ACCEL_FULL_SCALE, axis=1))
    if bad_accel.size:
        raise ValidationError(
            f"{where}: acceleration beyond ±{ACCEL_FULL_SCALE:.1f} m/s² at sample {bad_accel[0]}."
        )

    bad_gyro = np.flatnonzero(np.any(gyro > GYRO_FULL_SCALE, axis=1))
    if bad_gyro.size:
        raise ValidationError(
            f"{where}: angular velocity beyond ±{GYRO_FULL_SCALE:.0f} °/s at sample {bad_gyro[0]}."
        )


@dataclass(frozen=True, eq=False)
class Recording:
    """One contiguous session of samples for a (subject, location, label, session) group.

    The samples are held as an (n, 7) float matrix in SAMPLE_COLUMNS order.
    """

    subject_id: str
    location: BodyLocation
    label: Union[ActivityLabel, FallKind]
    values: np.ndarray
    session: str = "1"
    sample_rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(SAMPLE_COLUMNS):
            raise ValidationError(f"Recording values must be (n, 7) - got {values.shape}.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        if len(values) < 1:
            raise ValidationError(f"Recording {self.recording_id} has no samples.")
        if self.sample_rate_hz <= 0:
            raise ValidationError(f"Recording {self.recording_id} has a non-positive sample rate.")

        check_sample_ranges(values, where=f"Recording {self.recording_id}")

        steps = np.diff(values[:, 0])
        if np.any(steps < 0):
            raise ValidationError(f"Recording {self.recording_id} timestamps decrease.")

        if len(steps):
            spacing = float(np.median(steps))
            if spacing <= 0 or abs(1.0 / spacing - self.sample_rate_hz) > 0.1 * self.sample_rate_hz:
                raise ValidationError(
                    f"Recording {self.recording_id} median spacing {spacing:.4f}s does not match "
                    f"the declared {self.sample_rate_hz} Hz."
                )

    @property
    def recording_id(self) -> str:
        return f"{self.subject_id}/{self.location.value}/{self.label.value}/{self.session}"

    @property
    def t(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def accel(self) -> np.ndarray:
        return self.values[:, 1:4]

    @property
    def gyro(self) -> np.ndarray:
        return self.values[:, 4:7]

    @property
    def channels(self) -> np.ndarray:
        """The (n, 6) matrix of ax, ay, az, gx, gy, gz."""
        return self.values[:, 1:7]

    @property
    def samples(self) -> Tuple[Sample, ...]:
        return tuple(Sample(*row) for row in self.values.tolist())

    @property
    def is_fall(self) -> bool:
        return isinstance(self.label, FallKind)

    def __len__(self):
        return len(self.values)

    def slice(self, start: int, stop: Optional[int] = None) -> "Recording":
        """Returns a new Recording holding samples [start:stop]."""
        return Recording(
            subject_id=self.subject_id,
            location=self.location,
            label=self.label,
            values=self.values[start:stop],
            session=self.session,
            sample_rate_hz=self.sample_rate_hz,
        )


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of recordings plus where they came from."""

    recordings: Tuple[Recording, ...]
    provenance: str = ""
    schema_version: int = SCHEMA_VERSION
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))

    def __len__(self):
        return len(self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    def select(self, location=None, label=None, falls=None) -> "Dataset":
        """Returns the recordings matching a location, a label and/or fall-ness."""
        recordings = [
            r
            for r in self.recordings
            if (location is None or r.location == location)
            and (label is None or r.label == label)
            and (falls is None or r.is_fall == falls)
        ]
        return Dataset(recordings, provenance=self.provenance, schema_version=self.schema_version)

    @property
    def locations(self):
        present = {r.location for r in self.recordings}
        return [location for location in BodyLocation if location in present]
