"""
This module contains all utility functions such as
log management, file digests & address parsing.
"""

import hashlib
import logging
import os
from datetime import datetime

from fallalert.definitions import LOGS_PATH
from fallalert.helpers import arguments
from fallalert.models.errors import ConfigError

LOG_FORMAT = "%(asctime)s - %(module)s.%(funcName)s (%(lineno)d) - %(levelname)s - %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


def setup_logging(args=None, log_file_name="fallalert"):
    """Configures application logging (console or a timestamped file under logs/)."""
    args = args or arguments.get_arguments()

    # Reset root handler to default so BasicConfig is respected
    root = logging.getLogger()
    if root.handlers:
        for handler in list(root.handlers):
            root.removeHandler(handler)

    logger_level = logging.DEBUG if args.debug else logging.INFO
    if args.console:
        logging.basicConfig(level=logger_level, datefmt=LOG_DATEFMT, format=LOG_FORMAT)
    else:
        # Create logs directory if not present
        if not os.path.exists(LOGS_PATH):
            os.makedirs(LOGS_PATH)
        log_file = os.path.join(LOGS_PATH, datetime.now().strftime(log_file_name + "-%Y%m%d%H%M%S.log"))
        logging.basicConfig(filename=log_file, level=logger_level, datefmt=LOG_DATEFMT, format=LOG_FORMAT)

    # Reset logging level (outside of Basic Config)
    logging.getLogger().setLevel(logger_level)


def file_digest(path, chunk_size=1 << 16) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as digest_file:
        for chunk in iter(lambda: digest_file.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_address(text, default_host="127.0.0.1"):
    """Converts "host:port" (or ":port" / "port") into a (host, port) tuple.

    Args:
        text: address string

    Returns:
        (host, port)
    """
    host, sep, port = str(text).strip().rpartition(":")
    if not sep:
        host = ""
    try:
        port = int(port)
    except ValueError:
        raise ConfigError(f"Invalid address {text!r} - expected host:port.")
    if not 0 <= port <= 65535:
        raise ConfigError(f"Invalid port {port} in address {text!r}.")
    return host or default_host, port


def parse_assignments(pairs):
    """Parses repeated name=value command line options (numbers become int / float)."""
    parsed = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise ConfigError(f"Expected name=value - got {pair!r}.")
        for kind in (int, float):
            try:
                parsed[name.strip()] = kind(value)
                break
            except ValueError:
                continue
        else:
            parsed[name.strip()] = value.strip()
    return parsed


def ensure_directory(path):
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path
