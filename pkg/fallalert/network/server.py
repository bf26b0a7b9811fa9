"""
The alert server: decodes alert payloads, identifies the prior-fall activity, answers the
device in-band, notifies the caretaker sink and appends everything to an audit log.

AlertService holds the transport-independent logic; AlertServer serves it over TCP with one
thread per device connection.
"""

import json
import logging
import socketserver
import threading
import time
from collections import deque
from typing import Optional

from fallalert.core.priorfall import identify_prior_activity
from fallalert.models.alert import AlertResponse, NotificationSink, utcnow
from fallalert.models.classifier import TrainedModel
from fallalert.models.errors import FallAlertError, FrameError, InternalError, SinkError
from fallalert.network import codec
from fallalert.notify import handler

# Audit records kept in memory by default - the audit file holds every one
RECORDS_KEPT = 1000


class AlertService:
    """Serves alerts for any number of concurrent connections; the model is shared read-only.

    Messages are numbered as they arrive and audited in that order, whichever finishes first.

    Args:
        model: TrainedModel used for prior-fall identification
        sink: NotificationSink that receives every identified activity (None: no notifications)
        audit_path: newline-delimited JSON audit log (appended to), or None
        records_kept: how many of the latest audit records stay in memory
    """

    def __init__(self, model: TrainedModel, sink: Optional[NotificationSink] = None, audit_path=None, records_kept: int = RECORDS_KEPT):
        self.model = model
        self.sink = sink
        self.audit_path = audit_path
        self.records = deque(maxlen=records_kept)
        self._lock = threading.Lock()
        self._received = 0
        self._audited = 0
        self._pending = {}

    def _receive(self):
        with self._lock:
            self._received += 1
            return self._received, utcnow()

    def _audit(self, sequence: int, record: dict):
        """Holds a record back until every earlier arrival has been audited."""
        with self._lock:
            self._pending[sequence] = dict(record, sequence=sequence)
            while self._audited + 1 in self._pending:
                self._audited += 1
                ready = self._pending.pop(self._audited)
                self.records.append(ready)
                if self.audit_path:
                    with open(self.audit_path, "a") as audit_file:
                        audit_file.write(json.dumps(ready, sort_keys=True) + "\n")

    def _error(self, error: Exception, message_digest: str, received_at, started: float):
        record = {
            "kind": "error",
            "received_at": received_at.isoformat(),
            "message_digest": message_digest,
            "error": type(error).__name__,
            "message": str(error),
            "latency_ms": round((time.monotonic() - started) * 1000, 3),
        }
        return codec.encode_error(error), record

    def handle_message(self, message: bytes) -> bytes:
        """Processes one framed message and returns the framed reply (response or error)."""
        started = time.monotonic()
        message_digest = codec.digest(message)
        sequence, received_at = self._receive()

        try:
            reply, record = self._process(message, message_digest, received_at, started)
        except FallAlertError as e:
            logging.warning("Rejected message %s: %s", message_digest[:12], e)
            reply, record = self._error(e, message_digest, received_at, started)
        except Exception as e:  # pylint: disable=broad-except
            logging.exception("Failed to serve message %s.", message_digest[:12])
            reply, record = self._error(InternalError(f"{type(e).__name__}: {e}"), message_digest, received_at, started)

        self._audit(sequence, record)
        return reply

    def _process(self, message: bytes, message_digest: str, received_at, started: float):
        payload, remainder = codec.decode_payload(message)
        if remainder:
            raise FrameError(f"{len(remainder)} byte(s) after the message delimiter.")
        report = identify_prior_activity(self.model, payload.samples)

        response = AlertResponse.from_report(message_digest, payload.device_id, report)
        reply = codec.encode_response(response)

        notified = None
        if self.sink is not None:
            try:
                handler.send(response, self.sink, payload)
                notified = True
            except SinkError as e:
                logging.warning("Notification failed for %s - response still sent: %s", payload.device_id, e)
                notified = False

        logging.info(
            "Alert %s from %s - prior activity %s %s.",
            message_digest[:12],
            payload.device_id,
            report.winner.value,
            {label.value: n for label, n in report.vote_counts.items()},
        )
        record = {
            "kind": "alert",
            "received_at": received_at.isoformat(),
            "payload_digest": message_digest,
            "device_id": payload.device_id,
            "detected_at": payload.detected_at.isoformat(),
            "fall_kind": payload.fall_kind.value,
            "detector": payload.detector.value,
            "response": report.asdict(),
            "served_at": response.served_at.isoformat(),
            "notified": notified,
            "latency_ms": round((time.monotonic() - started) * 1000, 3),
        }
        return reply, record


class AlertRequestHandler(socketserver.StreamRequestHandler):
    """Reads newline-delimited messages from one connection and replies to each in order."""

    def _read_line(self):
        """Returns (line, oversized). An oversized line is discarded up to its delimiter."""
        line = self.rfile.readline(codec.MAX_MESSAGE_BYTES + 1)
        if line.endswith(codec.DELIMITER) or len(line) <= codec.MAX_MESSAGE_BYTES:
            return line, False

        while True:
            rest = self.rfile.readline(codec.MAX_MESSAGE_BYTES + 1)
            if not rest or rest.endswith(codec.DELIMITER):
                return line, True

    def handle(self):
        service = self.server.service
        peer = "%s:%s" % self.client_address[:2]
        logging.info("Device connected from %s.", peer)

        while True:
            line, oversized = self._read_line()
            if oversized:
                error = FrameError(f"Message exceeds the {codec.MAX_MESSAGE_BYTES} byte limit.")
                self.wfile.write(codec.encode_error(error))
                continue
            if not line:
                break
            if not line.endswith(codec.DELIMITER):
                error = FrameError(f"Connection closed mid-message after {len(line)} byte(s).")
                self.wfile.write(codec.encode_error(error))
                break

            try:
                reply = service.handle_message(line)
            except Exception as e:  # pylint: disable=broad-except
                logging.exception("Failed to answer a message from %s.", peer)
                reply = codec.encode_error(InternalError(f"{type(e).__name__}: {e}"))
            self.wfile.write(reply)
        logging.info("Device %s disconnected.", peer)


class AlertServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind_addr, service: AlertService):
        self.service = service
        super().__init__(bind_addr, AlertRequestHandler)


def start_server_thread(bind_addr, service: AlertService):
    """Starts an AlertServer on a background thread. Returns (server, thread); stop with server.shutdown()."""
    server = AlertServer(bind_addr, service)
    thread = threading.Thread(target=server.serve_forever, name="alert-server", daemon=True)
    thread.start()
    logging.info("Alert server listening on %s:%s.", *server.server_address[:2])
    return server, thread


def run_server(
    bind_addr, model: TrainedModel, sink: Optional[NotificationSink] = None, audit_path=None, records_kept: int = RECORDS_KEPT
):
    """Serves alerts until interrupted."""
    service = AlertService(model, sink or NotificationSink(), audit_path, records_kept)
    with AlertServer(bind_addr, service) as server:
        host, port = server.server_address[:2]
        logging.info("Alert server listening on %s:%s (audit log: %s).", host, port, audit_path)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            logging.info("Alert server interrupted - shutting down.")
    return service
