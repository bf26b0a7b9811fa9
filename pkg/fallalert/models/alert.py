"""
Alert messages exchanged between a device and the alert server, and the notification
sink the server reports prior-fall activities to.
"""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, Optional, Tuple

import numpy as np
import pytz
import requests
from requests.exceptions import RequestException

from fallalert.models.errors import ConfigError, PayloadError
from fallalert.models.labels import ActivityLabel, DetectorKind, FallKind, SinkKind
from fallalert.models.recording import ACCEL_FULL_SCALE, GYRO_FULL_SCALE
from fallalert.models.snapshot import SNAPSHOT_CAPACITY, PriorFallReport, WindowPrediction

PROTOCOL_VERSION = 1
SUPPORTED_VERSIONS = (PROTOCOL_VERSION,)
MAX_DEVICE_ID = 64


def as_utc(moment: datetime) -> datetime:
    """Naive datetimes are taken to be UTC; aware ones are converted to it."""
    if moment.tzinfo is None:
        return pytz.utc.localize(moment)
    return moment.astimezone(pytz.utc)


def utcnow() -> datetime:
    return datetime.now(pytz.utc)


@dataclass(frozen=True, eq=False)
class AlertPayload:
    """A fall alert: who detected what, when, plus the 200-sample snapshot (ax, ay, az, gx, gy, gz)."""

    device_id: str
    detected_at: datetime
    fall_kind: FallKind
    detector: DetectorKind
    samples: np.ndarray
    sample_rate_hz: float = 50.0
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        try:
            object.__setattr__(self, "fall_kind", FallKind(self.fall_kind))
            object.__setattr__(self, "detector", DetectorKind(self.detector))
            samples = np.array(self.samples, dtype=float)
        except (TypeError, ValueError) as e:
            raise PayloadError(f"Invalid alert payload field: {e}") from e

        if not isinstance(self.device_id, str) or not 0 < len(self.device_id) <= MAX_DEVICE_ID:
            raise PayloadError(f"device_id must be a string of 1 to {MAX_DEVICE_ID} characters.")
        if not isinstance(self.detected_at, datetime):
            raise PayloadError(f"detected_at must be a datetime - got {type(self.detected_at).__name__}.")
        object.__setattr__(self, "detected_at", as_utc(self.detected_at))

        if samples.shape != (SNAPSHOT_CAPACITY, 6):
            raise PayloadError(f"An alert carries exactly {SNAPSHOT_CAPACITY} six-axis samples - got shape {samples.shape}.")
        if not np.all(np.isfinite(samples)):
            raise PayloadError("Alert samples must be finite numbers.")
        if np.any(np.abs(samples[:, :3]) > ACCEL_FULL_SCALE) or np.any(np.abs(samples[:, 3:]) > GYRO_FULL_SCALE):
            raise PayloadError("Alert samples exceed the sensor full scale.")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

        if isinstance(self.sample_rate_hz, bool) or not isinstance(self.sample_rate_hz, (int, float)) or not self.sample_rate_hz > 0:
            raise PayloadError(f"sample_rate_hz must be a positive number - got {self.sample_rate_hz!r}.")
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __eq__(self, other):
        if not isinstance(other, AlertPayload):
            return NotImplemented
        return (
            self.version == other.version
            and self.device_id == other.device_id
            and self.detected_at == other.detected_at
            and self.fall_kind == other.fall_kind
            and self.detector == other.detector
            and self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class AlertResponse:
    """The server's answer to an alert: the identified prior-fall activity & its votes."""

    payload_digest: str
    device_id: str
    prior_activity: ActivityLabel
    vote_counts: Dict[ActivityLabel, int]
    served_at: datetime = field(default_factory=utcnow)
    window_predictions: Tuple[WindowPrediction, ...] = ()

    @classmethod
    def from_report(cls, payload_digest: str, device_id: str, report: PriorFallReport, served_at: Optional[datetime] = None):
        return cls(
            payload_digest=payload_digest,
            device_id=device_id,
            prior_activity=report.winner,
            vote_counts=dict(report.vote_counts),
            served_at=as_utc(served_at) if served_at else utcnow(),
            window_predictions=report.window_predictions,
        )

    @property
    def report(self) -> PriorFallReport:
        return PriorFallReport(self.window_predictions, self.prior_activity, dict(self.vote_counts))


@dataclass(frozen=True)
class ErrorReply:
    """In-band answer to a message the server could not process."""

    error: str
    message: str


@dataclass(frozen=True)
class NotificationSink:
    """Where identified prior-fall activities are reported: STDOUT (log) or a webhook URL."""

    kind: SinkKind = SinkKind.STDOUT
    target: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SinkKind(self.kind))
        if self.kind != SinkKind.WEBHOOK:
            return

        if not self.target:
            raise ConfigError("A webhook sink needs a target URL.")
        try:
            requests.Request("POST", self.target).prepare()
        except RequestException as e:
            raise ConfigError(f"Invalid webhook URL {self.target!r}: {e}") from e
        if not self.target.lower().startswith(("http://", "https://")):
            raise ConfigError(f"Webhook URL must be http(s) - got {self.target!r}.")
