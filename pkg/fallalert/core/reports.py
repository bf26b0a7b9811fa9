"""
Report files: every table is written as delimited text (.csv) plus an aligned, human readable
rendering (.txt), and every command leaves a manifest.yaml describing how it was produced.
"""

import logging
import os
from datetime import datetime
from importlib import metadata

import pandas as pd
import pytz
import yaml

from fallalert.definitions import VERSION
from fallalert.helpers import utils

MANIFEST_NAME = "manifest.yaml"
REPORTED_PACKAGES = ("numpy", "pandas", "scipy", "scikit-learn", "PyYAML", "requests", "python-dateutil", "pytz")

# Classifier families reported as excluded in every activity grid manifest
EXCLUDED_FAMILIES = {"SVM": "not implemented - support vector machines are out of scope for the self-contained learners"}


def write_table(frame: pd.DataFrame, out_dir, name, float_format="%.6f"):
    """Writes <name>.csv and <name>.txt into out_dir. Returns both paths."""
    utils.ensure_directory(out_dir)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    txt_path = os.path.join(out_dir, f"{name}.txt")

    frame.to_csv(csv_path, index=False, lineterminator="\n", float_format=float_format)
    with open(txt_path, "w") as txt_file:
        txt_file.write(frame.to_string(index=False, float_format=lambda v: float_format % v) + "\n")

    logging.info("Wrote report %s (%s row(s)).", csv_path, len(frame))
    return csv_path, txt_path


def package_versions():
    versions = {"fallalert": VERSION}
    for package in REPORTED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return versions


def write_manifest(out_dir, command, seed, settings, inputs=None, outputs=None, notes=None, status="OK"):
    """Writes manifest.yaml: command, creation time, input digests, resolved config & versions.

    Args:
        out_dir: directory the outputs were written to
        command: subcommand name
        seed: run seed
        settings: the resolved configuration (defaults + overrides + environment)
        inputs: {name: path} of input files (digested) - None values are skipped
        outputs: list of output file paths
        notes: free-form strings (exclusions, absent cells, ...)
        status: exit code name

    Returns:
        the manifest path
    """
    utils.ensure_directory(out_dir)
    manifest = {
        "command": command,
        "created_at": datetime.now(pytz.utc).isoformat(),
        "status": status,
        "seed": seed,
        "inputs": {
            name: {"path": os.fspath(path), "sha256": utils.file_digest(path)}
            for name, path in (inputs or {}).items()
            if path and os.path.isfile(path)
        },
        "outputs": [os.path.basename(p) for p in (outputs or [])],
        "notes": list(notes or []),
        "config": settings,
        "versions": package_versions(),
    }

    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w") as manifest_file:
        yaml.safe_dump(manifest, manifest_file, sort_keys=False, default_flow_style=False)
    logging.info("Wrote manifest %s.", path)
    return path
