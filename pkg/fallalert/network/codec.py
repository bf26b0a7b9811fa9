"""
The newline-delimited wire format shared by the device simulator and the alert server.

Every message is one JSON object on one line, terminated by a single newline byte:

    {"type":"alert","version":1,"device_id":"dev-1","detected_at":"2026-10-18T09:30:00.000000+00:00",
     "fall_kind":"FALL","detector":"3-phase","sample_rate_hz":50.0,"samples":[[0.1,9.8,0.0,1.5,0.0,-2.0],...]}\n

    {"type":"response","version":1,"payload_digest":"<sha256 of the alert line>","device_id":"dev-1",
     "prior_activity":"WALK","vote_counts":{"WALK":4,"RUN":1},"served_at":"...",
     "windows":[{"offset":0,"label":"WALK","score":0.93},...]}\n

    {"type":"error","version":1,"error":"FrameError","message":"..."}\n

Numbers are written in their shortest round-trip decimal form so decoding reproduces every
sample bit for bit. A line (without its newline) never exceeds MAX_MESSAGE_BYTES.
"""

import hashlib
import json
from numbers import Real
from typing import Tuple, Union

from dateutil.parser import isoparse

from fallalert.models.alert import (
    SUPPORTED_VERSIONS,
    AlertPayload,
    AlertResponse,
    ErrorReply,
    as_utc,
)
from fallalert.models.errors import FrameError, PayloadError, ProtocolError, VersionError
from fallalert.models.labels import ActivityLabel
from fallalert.models.snapshot import WindowPrediction

MAX_MESSAGE_BYTES = 32768
DELIMITER = b"\n"

PAYLOAD_FIELDS = ("version", "device_id", "detected_at", "fall_kind", "detector", "sample_rate_hz", "samples")
RESPONSE_FIELDS = ("payload_digest", "device_id", "prior_activity", "vote_counts", "served_at", "windows")


def _timestamp(moment) -> str:
    return as_utc(moment).isoformat(timespec="microseconds")


def _parse_timestamp(text):
    if not isinstance(text, str):
        raise PayloadError(f"Timestamps must be ISO 8601 strings - got {text!r}.")
    try:
        return as_utc(isoparse(text))
    except (ValueError, OverflowError) as e:
        raise PayloadError(f"Invalid timestamp {text!r}: {e}") from e


def _frame(document: dict) -> bytes:
    line = json.dumps(document, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(line) > MAX_MESSAGE_BYTES:
        raise PayloadError(f"Message of {len(line)} bytes exceeds the {MAX_MESSAGE_BYTES} byte limit.")
    return line + DELIMITER


def digest(message: bytes) -> str:
    """sha256 of one framed message (newline included) - the payload reference of a response."""
    return hashlib.sha256(message).hexdigest()


def encode_payload(payload: AlertPayload) -> bytes:
    """Serializes one alert. Raises PayloadError / VersionError before emitting anything."""
    if not isinstance(payload, AlertPayload):
        raise PayloadError(f"Expected an AlertPayload - got {type(payload).__name__}.")
    if payload.version not in SUPPORTED_VERSIONS:
        raise VersionError(payload.version, SUPPORTED_VERSIONS)

    return _frame(
        {
            "type": "alert",
            "version": payload.version,
            "device_id": payload.device_id,
            "detected_at": _timestamp(payload.detected_at),
            "fall_kind": payload.fall_kind.value,
            "detector": payload.detector.value,
            "sample_rate_hz": payload.sample_rate_hz,
            "samples": payload.samples.tolist(),
        }
    )


def encode_response(response: AlertResponse) -> bytes:
    return _frame(
        {
            "type": "response",
            "version": SUPPORTED_VERSIONS[-1],
            "payload_digest": response.payload_digest,
            "device_id": response.device_id,
            "prior_activity": response.prior_activity.value,
            "vote_counts": {label.value: count for label, count in response.vote_counts.items()},
            "served_at": _timestamp(response.served_at),
            "windows": [
                {"offset": p.offset, "label": p.label.value, "score": p.score} for p in response.window_predictions
            ],
        }
    )


def encode_error(error: Exception) -> bytes:
    return _frame({"type": "error", "version": SUPPORTED_VERSIONS[-1], "error": type(error).__name__, "message": str(error)})


def split_frame(data: bytes) -> Tuple[dict, bytes]:
    """Parses the first line of `data` into a JSON object.

    Returns:
        (document, remainder) - remainder holds every byte after the first newline
    """
    if not isinstance(data, (bytes, bytearray)):
        raise FrameError(f"Expected bytes - got {type(data).__name__}.")

    end = data.find(DELIMITER)
    if end < 0:
        if len(data) > MAX_MESSAGE_BYTES:
            raise FrameError(f"No message delimiter within {MAX_MESSAGE_BYTES} bytes.")
        raise FrameError(f"Truncated message - {len(data)} bytes without a delimiter.")
    if end > MAX_MESSAGE_BYTES:
        raise FrameError(f"Message of {end} bytes exceeds the {MAX_MESSAGE_BYTES} byte limit.")

    try:
        document = json.loads(bytes(data[:end]).decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as e:
        raise FrameError(f"Malformed message: {e}") from e
    if not isinstance(document, dict):
        raise FrameError(f"A message must be a JSON object - got {type(document).__name__}.")
    return document, bytes(data[end + 1 :])


def _check_version(document: dict):
    version = document.get("version")
    if isinstance(version, bool) or not isinstance(version, int):
        raise PayloadError(f"Message version must be an integer - got {version!r}.")
    if version not in SUPPORTED_VERSIONS:
        raise VersionError(version, SUPPORTED_VERSIONS)


def _require(document: dict, fields):
    missing = [name for name in fields if name not in document]
    if missing:
        raise PayloadError(f"Message is missing field(s) {missing}.")


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise PayloadError(f"{what} must be a number - got {value!r}.")
    try:
        return float(value)
    except OverflowError as e:
        raise PayloadError(f"{what} is out of range.") from e


def _samples(rows):
    if not isinstance(rows, list):
        raise PayloadError("samples must be an array of six-number arrays.")
    parsed = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 6:
            raise PayloadError(f"Sample {i} is not an array of six numbers.")
        parsed.append([_number(v, f"Sample {i}") for v in row])
    return parsed


def payload_from_document(document: dict) -> AlertPayload:
    if document.get("type") != "alert":
        raise PayloadError(f"Expected an alert message - got type {document.get('type')!r}.")
    _check_version(document)
    _require(document, PAYLOAD_FIELDS)

    try:
        return AlertPayload(
            device_id=document["device_id"],
            detected_at=_parse_timestamp(document["detected_at"]),
            fall_kind=document["fall_kind"],
            detector=document["detector"],
            samples=_samples(document["samples"]),
            sample_rate_hz=_number(document["sample_rate_hz"], "sample_rate_hz"),
            version=document["version"],
        )
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise PayloadError(f"Invalid alert payload: {e}") from e


def decode_payload(data: bytes) -> Tuple[AlertPayload, bytes]:
    """Parses exactly one alert from the front of `data`.

    Returns:
        (AlertPayload, remainder)

    Raises:
        FrameError for broken framing, VersionError for unknown versions & PayloadError for
        invalid fields (including a sample count other than 200).
    """
    document, remainder = split_frame(data)
    return payload_from_document(document), remainder


def _response_from_document(document: dict) -> AlertResponse:
    _require(document, RESPONSE_FIELDS)
    try:
        votes = {ActivityLabel(label): int(count) for label, count in document["vote_counts"].items()}
        windows = tuple(
            WindowPrediction(int(w["offset"]), ActivityLabel(w["label"]), _number(w["score"], "score"))
            for w in document["windows"]
        )
        return AlertResponse(
            payload_digest=str(document["payload_digest"]),
            device_id=str(document["device_id"]),
            prior_activity=ActivityLabel(document["prior_activity"]),
            vote_counts=votes,
            served_at=_parse_timestamp(document["served_at"]),
            window_predictions=windows,
        )
    except ProtocolError:
        raise
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise PayloadError(f"Invalid alert response: {e}") from e


def decode_response(data: bytes) -> Tuple[Union[AlertResponse, ErrorReply], bytes]:
    """Parses one server reply: an AlertResponse or an in-band ErrorReply."""
    document, remainder = split_frame(data)
    _check_version(document)

    kind = document.get("type")
    if kind == "error":
        return ErrorReply(str(document.get("error", "")), str(document.get("message", ""))), remainder
    if kind == "response":
        return _response_from_document(document), remainder
    raise PayloadError(f"Expected a response or error message - got type {kind!r}.")
