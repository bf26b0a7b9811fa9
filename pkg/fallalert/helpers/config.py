"""
This module contains a single Configuration class - the YAML defaults plus any key=value
override file named by --config.
"""

# pylint: disable=too-few-public-methods

import copy
import logging

import yaml

from fallalert.definitions import CONFIG_PATH
from fallalert.models.errors import ConfigError


def load_overrides(path):
    """Reads a key=value override file.

    Keys are dotted paths into the YAML document (falldetect.three_phase.base.t1); values are
    parsed as YAML so numbers, booleans and flow lists keep their types.

    Returns:
        list of (dotted key, value) in file order
    """
    overrides = []
    with open(path) as override_file:
        for lineno, raw in enumerate(override_file, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path} line {lineno} is not key=value: {line!r}")
            try:
                overrides.append((key.strip(), yaml.safe_load(value.strip())))
            except yaml.YAMLError as e:
                raise ConfigError(f"{path} line {lineno}: cannot parse value {value.strip()!r} ({e}).") from e
    return overrides


def apply_override(document: dict, key: str, value):
    """Sets a dotted key in a nested dict. Only keys already present in the defaults are accepted."""
    parts = key.split(".")
    node = document
    for depth, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"Unknown configuration key {'.'.join(parts[: depth + 1])!r} (in override {key!r}).")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"Unknown configuration key {key!r}.")
    node[parts[-1]] = value


class _Config:
    """ A configuration class that converts the YAML configuration file into
        class attributes (one level deep).

    Args:
        path: YAML defaults (the packaged config.yaml)
        override_path: optional key=value override file

    Returns:
        config object consisting of attributes & then sub-dictionaries
    """

    def __init__(self, path=CONFIG_PATH, override_path=None):
        with open(path) as ymlfile:
            self._document = yaml.load(ymlfile, Loader=yaml.FullLoader)

        if override_path:
            for key, value in load_overrides(override_path):
                apply_override(self._document, key, value)
                logging.debug("Configuration override %s=%r", key, value)

        for k, v in self._document.items():
            setattr(self, k, v)

    def __getitem__(self, key):
        return self._document[key]

    def as_dict(self):
        """A deep copy of the resolved configuration (written into manifests)."""
        return copy.deepcopy(self._document)


config = _Config()


def load_config(override_path=None):
    """Resolves the defaults plus an optional override file and makes it the shared config."""
    global config  # pylint: disable=global-statement
    config = _Config(override_path=override_path)
    return config
