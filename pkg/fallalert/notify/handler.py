"""
A notification wrapper that routes an identified prior-fall activity to the configured sink.
"""

import logging

from fallalert.models.alert import AlertPayload, AlertResponse, NotificationSink
from fallalert.models.labels import SinkKind
from fallalert.notify import webhook


def format_message(response: AlertResponse, payload: AlertPayload = None) -> str:
    """The caretaker-facing text of one alert."""
    votes = response.vote_counts.get(response.prior_activity, 0)
    total = sum(response.vote_counts.values())
    msg = f"Fall alert from {response.device_id}"
    if payload is not None:
        msg += f": {payload.fall_kind.value} detected at {payload.detected_at:%Y-%m-%d %H:%M:%S %Z} by {payload.detector.value}"
    return f"{msg} - prior activity {response.prior_activity.value} ({votes}/{total} windows)."


def send(response: AlertResponse, sink: NotificationSink, payload: AlertPayload = None):
    """Notifies the sink about one served alert.

    Args:
        response: the AlertResponse sent back to the device
        sink: NotificationSink (STDOUT logs the message, WEBHOOK posts it)
        payload: the alert the response answers, for richer messages

    Returns:
        dict with the message sent & the webhook status codes (None for STDOUT)

    Raises:
        SinkError if the webhook cannot be reached or rejects the message
    """
    msg = format_message(response, payload)
    return_dict = {"message": msg, "webhook": None}

    if sink.kind == SinkKind.STDOUT:
        logging.info("[ALERT] %s", msg)
        print(msg, flush=True)
        return return_dict

    alert = {
        "device_id": response.device_id,
        "payload_digest": response.payload_digest,
        "prior_activity": response.prior_activity.value,
        "vote_counts": {label.value: n for label, n in response.vote_counts.items()},
    }
    if payload is not None:
        alert["fall_kind"] = payload.fall_kind.value
        alert["detected_at"] = payload.detected_at.isoformat()
    return_dict["webhook"] = webhook.send_webhook(sink.target, msg, alert=alert)
    return return_dict
