"""
All functions related to posting alert notifications to a webhook.
"""

import logging

from requests.exceptions import ConnectionError, RequestException

from fallalert.models.errors import SinkError
from fallalert.notify.sessions import sessions

DEFAULT_TIMEOUT_S = 5


def send_webhook(url, msg, alert=None, timeout=DEFAULT_TIMEOUT_S):
    """Posts a notification message (and the alert details) as JSON to a webhook.

    Args:
        url: webhook URL (or a list of URLs)
        msg: human readable notification text
        alert: optional dictionary of alert details sent alongside the text

    Returns:
        list of HTTP status codes, one per URL
    """
    urls = [url] if not isinstance(url, list) else url
    body = {"content": msg}
    if alert:
        body["alert"] = alert

    session = sessions.get()
    statuses = []
    for target in urls:
        try:
            logging.info("Sending webhook notification - %s", target)
            response = session.post(target, json=body, timeout=timeout)
        except ConnectionError as ce:
            logging.error(ce)
            raise SinkError(f"Webhook {target} unreachable: {ce}") from ce
        except RequestException as re:
            logging.error(re)
            raise SinkError(f"Webhook {target} request failed: {re}") from re

        # If we get a non-OK code back from the webhook endpoint, log it.
        if not response.ok:
            logging.warning("Webhook %s answered %s: %s", target, response.status_code, response.text[:200])
            raise SinkError(f"Webhook {target} answered HTTP {response.status_code}.")
        statuses.append(response.status_code)
    return statuses
