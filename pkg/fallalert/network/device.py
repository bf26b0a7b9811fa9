"""
The device simulator: replays a recording sample by sample, keeps the 4-second snapshot
buffer, runs the on-device fall detector and sends an alert payload for every fall.
"""

import logging
import socket
import time
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import List, Optional, Tuple

from fallalert.core.priorfall import push_sample
from fallalert.core.signal import gforce_series
from fallalert.models.alert import AlertPayload, AlertResponse, ErrorReply, as_utc, utcnow
from fallalert.models.detector import FallEvent
from fallalert.models.errors import ProtocolError
from fallalert.models.recording import Recording
from fallalert.models.snapshot import SNAPSHOT_CAPACITY, SnapshotBuffer
from fallalert.network import codec

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.5
DEFAULT_TIMEOUT_S = 5.0


class TcpTransport:
    """Sends each alert over one persistent TCP connection and reads the in-band reply.

    Connection failures are retried `retries` times, sleeping backoff_s, 2*backoff_s, ...
    in between; after that the last error is raised.
    """

    def __init__(self, address: Tuple[str, int], retries=DEFAULT_RETRIES, backoff_s=DEFAULT_BACKOFF_S, timeout_s=DEFAULT_TIMEOUT_S):
        self.address = address
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.sock = None
        self.reader = None

    def _connect(self):
        self.sock = socket.create_connection(self.address, timeout=self.timeout_s)
        self.reader = self.sock.makefile("rb")
        logging.info("Connected to alert server %s:%s.", *self.address)

    def close(self):
        if self.reader is not None:
            self.reader.close()
        if self.sock is not None:
            self.sock.close()
        self.sock = None
        self.reader = None

    def send(self, message: bytes) -> bytes:
        for attempt in range(self.retries + 1):
            try:
                if self.sock is None:
                    self._connect()
                self.sock.sendall(message)
                reply = self.reader.readline(codec.MAX_MESSAGE_BYTES + 1)
                if not reply:
                    raise ConnectionError("Alert server closed the connection without replying.")
                return reply
            except OSError as e:
                self.close()
                if attempt == self.retries:
                    logging.error("Giving up on %s:%s after %s attempt(s): %s", *self.address, attempt + 1, e)
                    raise
                delay = self.backoff_s * 2 ** attempt
                logging.warning("Alert server %s:%s unavailable (%s) - retrying in %.2fs.", *self.address, e, delay)
                time.sleep(delay)


class FileTransport:
    """Dry-run transport: appends every encoded payload to a file and gets no reply."""

    def __init__(self, path):
        self.path = path

    def send(self, message: bytes):
        with open(self.path, "ab") as dry_run_file:
            dry_run_file.write(message)
        return None

    def close(self):
        pass


class LocalTransport:
    """Hands payloads straight to an in-process AlertService."""

    def __init__(self, service):
        self.service = service

    def send(self, message: bytes) -> bytes:
        return self.service.handle_message(message)

    def close(self):
        pass


@dataclass
class Dispatch:
    """One alert sent for a detected fall and the reply it got (None in dry-run mode)."""

    event: FallEvent
    digest: str
    response: Optional[object] = None


@dataclass
class SessionSummary:
    """What one simulated device session detected, sent & got back."""

    recording_id: str
    device_id: str
    samples_replayed: int = 0
    events: List[FallEvent] = field(default_factory=list)
    dispatches: List[Dispatch] = field(default_factory=list)
    suppressed: List[FallEvent] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def payloads_sent(self) -> int:
        return len(self.dispatches)

    @property
    def responses(self):
        return [d.response for d in self.dispatches if d.response is not None]

    @property
    def prior_activities(self):
        return [r.prior_activity for r in self.responses if isinstance(r, AlertResponse)]


def run_device_sim(
    recording: Recording,
    detector,
    transport,
    speed: float = 0.0,
    device_id: str = "device-1",
    started_at: Optional[datetime] = None,
    capacity: int = SNAPSHOT_CAPACITY,
) -> SessionSummary:
    """Replays a recording through the on-device pipeline.

    An event is dispatched when the replay reaches its `confirmed_at` sample, with the
    snapshot of the `capacity` samples ending there. Events found before the buffer has
    filled are logged and suppressed.

    Args:
        recording: the Recording to replay
        detector: configured fall detector (usually ThreePhaseParams)
        transport: TcpTransport, FileTransport or LocalTransport
        speed: replay multiplier (1.0 = real time, 0 = as fast as possible)
        device_id: id reported in every payload
        started_at: wall-clock time of the first sample (detected_at = started_at + sample time)

    Returns:
        SessionSummary
    """
    started_at = as_utc(started_at) if started_at else utcnow()
    summary = SessionSummary(recording.recording_id, device_id)

    events = detector.detect(gforce_series(recording), recording.recording_id)
    summary.events.extend(events)
    by_sample = defaultdict(list)
    for event in events:
        by_sample[event.confirmed_at].append(event)

    buffer = SnapshotBuffer(capacity)
    interval = 1.0 / (recording.sample_rate_hz * speed) if speed and speed > 0 else 0.0
    t0 = float(recording.values[0, 0])
    clock_start = time.monotonic()

    logging.info("Replaying %s (%s samples, speed %s) as %s.", recording.recording_id, len(recording), speed or "max", device_id)
    for i, row in enumerate(recording.values):
        if interval:
            delay = clock_start + i * interval - time.monotonic()
            if delay > 0:
                time.sleep(delay)

        push_sample(buffer, row)
        summary.samples_replayed += 1

        for event in by_sample.get(i, ()):
            if not buffer.is_full:
                logging.warning(
                    "Fall at sample %s of %s detected before the snapshot buffer filled - payload suppressed.",
                    event.index,
                    recording.recording_id,
                )
                summary.suppressed.append(event)
                continue

            payload = AlertPayload(
                device_id=device_id,
                detected_at=started_at + timedelta(seconds=float(row[0]) - t0),
                fall_kind=event.kind,
                detector=detector.detector_id,
                samples=buffer.view()[:, 1:],
                sample_rate_hz=recording.sample_rate_hz,
            )
            message = codec.encode_payload(payload)

            try:
                reply = transport.send(message)
            except OSError as e:
                summary.failures.append(f"sample {event.index}: {e}")
                continue
            dispatch = Dispatch(event, codec.digest(message))
            summary.dispatches.append(dispatch)

            if reply is None:
                continue
            try:
                dispatch.response, _ = codec.decode_response(reply)
            except ProtocolError as e:
                logging.error("Unreadable reply from the alert server: %s", e)
                summary.failures.append(f"sample {event.index}: {e}")
                continue

            if isinstance(dispatch.response, ErrorReply):
                logging.error("Alert server rejected the payload: %s - %s", dispatch.response.error, dispatch.response.message)
                summary.failures.append(f"sample {event.index}: {dispatch.response.error}")

    logging.info(
        "Replay of %s done: %s event(s), %s payload(s) sent, %s suppressed, %s failure(s).",
        recording.recording_id,
        len(summary.events),
        summary.payloads_sent,
        len(summary.suppressed),
        len(summary.failures),
    )
    return summary
