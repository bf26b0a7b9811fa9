"""
This module handles dataset ingestion & serialization (the flat delimited sample table),
column / label remapping and the train-validation splits.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fallalert.models.errors import EmptyDatasetError, ParseError, SchemaError
from fallalert.models.labels import ActivityLabel, BodyLocation, FallKind, parse_label
from fallalert.models.recording import DEFAULT_RATE_HZ, SAMPLE_COLUMNS, Dataset, Recording

KEY_COLUMNS = ("subject", "location", "label", "session")
DATASET_COLUMNS = KEY_COLUMNS + SAMPLE_COLUMNS
DEFAULT_SESSION_GAP_S = 0.5

LABEL_ORDER = list(ActivityLabel) + list(FallKind)


@dataclass(frozen=True)
class Remap:
    """Foreign column / label / location names mapped onto the canonical ones."""

    columns: Dict[str, str] = field(default_factory=dict)
    labels: Dict[str, str] = field(default_factory=dict)
    locations: Dict[str, str] = field(default_factory=dict)


def load_remap(path) -> Remap:
    """Parses a key=value remap file.

    Keys are `column.<foreign>`, `label.<foreign>` or `location.<foreign>`; blank lines and
    lines starting with # are skipped.

    Args:
        path: remap file location

    Returns:
        Remap: the parsed mappings
    """
    sections = {"column": {}, "label": {}, "location": {}}

    with open(path) as remap_file:
        for lineno, raw in enumerate(remap_file, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue

            key, sep, value = line.partition("=")
            section, dot, foreign = key.strip().partition(".")
            if not sep or not dot or section not in sections or not foreign:
                raise SchemaError(f"Remap file {path} line {lineno} is not a valid mapping: {line!r}")
            sections[section][foreign.strip()] = value.strip()

    return Remap(columns=sections["column"], labels=sections["label"], locations=sections["location"])


def _parse_location(text, remap, row):
    value = remap.locations.get(text, text)
    try:
        return BodyLocation(value.strip().upper())
    except ValueError:
        raise ParseError(f"Row {row}: unknown body location {text!r} (add a location remap).", row=row)


def _parse_label(text, remap, row):
    value = remap.labels.get(text, text)
    try:
        return parse_label(value)
    except ValueError:
        raise ParseError(f"Row {row}: unknown label {text!r} (add a label remap).", row=row)


def _parse_float(text: str) -> float:
    """Exact (round-trip) float of a cell, NaN when it is not a number."""
    try:
        return float(text)
    except ValueError:
        return math.nan


def _split_sessions(values: np.ndarray, session: str, gap_s: float):
    """Splits a time-ordered sample block wherever consecutive timestamps are more than gap_s apart."""
    cuts = np.flatnonzero(np.diff(values[:, 0]) > gap_s) + 1
    if not cuts.size:
        return [(session, values)]
    blocks = np.split(values, cuts)
    return [(f"{session}-{k}", block) for k, block in enumerate(blocks, start=1)]


def load_dataset(
    path,
    remap: Optional[Remap] = None,
    sample_rate_hz: float = DEFAULT_RATE_HZ,
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
) -> Dataset:
    """Loads a delimited sample table into a Dataset.

    One Recording is built per (subject, location, label, session) group in the order the
    groups first appear; samples are stably ordered by t and timestamp gaps longer than
    session_gap_s split a session into `<session>-1`, `<session>-2`, ...

    Args:
        path: dataset file location
        remap: optional Remap for foreign column names, labels & locations
        sample_rate_hz: declared sampling rate of every recording
        session_gap_s: gap that starts a new session

    Returns:
        Dataset: the loaded recordings (provenance = path)
    """
    remap = remap or Remap()
    logging.info("Loading dataset from %s.", path)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(f"Dataset file {path} is empty.")

    frame = frame.rename(columns=lambda c: remap.columns.get(c.strip(), c.strip()))
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"Dataset file {path} is missing column(s) {missing} - header: {list(frame.columns)}")
    if frame.empty:
        raise EmptyDatasetError(f"Dataset file {path} has a header but no rows.")

    numeric = frame[list(SAMPLE_COLUMNS)].apply(lambda col: col.str.strip().map(_parse_float))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row_idx, col_idx = np.argwhere(bad)[0]
        row = int(row_idx) + 2  # 1-based, after the header
        column = SAMPLE_COLUMNS[col_idx]
        cell = frame.iloc[row_idx][column]
        raise ParseError(f"Row {row}: column {column} is not a number ({cell!r}).", row=row)

    keys = frame[list(KEY_COLUMNS)].apply(lambda col: col.str.strip())
    samples = numeric.to_numpy(dtype=float)

    recordings = []
    for (subject, location_text, label_text, session), group in keys.groupby(list(KEY_COLUMNS), sort=False):
        index = group.index
        first_row = int(index[0]) + 2
        location = _parse_location(location_text, remap, first_row)
        label = _parse_label(label_text, remap, first_row)

        block = samples[np.asarray(index)]
        block = block[np.argsort(block[:, 0], kind="stable")]

        for session_id, values in _split_sessions(block, session, session_gap_s):
            recordings.append(
                Recording(
                    subject_id=subject,
                    location=location,
                    label=label,
                    values=values,
                    session=session_id,
                    sample_rate_hz=sample_rate_hz,
                )
            )

    logging.info("Loaded %s recording(s) / %s sample(s) from %s.", len(recordings), len(frame), path)
    return Dataset(recordings, provenance=os.fspath(path))


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    """The canonical table of a dataset - recordings in order, samples in order."""
    frames = []
    for recording in dataset:
        block = pd.DataFrame(np.asarray(recording.values), columns=list(SAMPLE_COLUMNS))
        block.insert(0, "session", recording.session)
        block.insert(0, "label", recording.label.value)
        block.insert(0, "location", recording.location.value)
        block.insert(0, "subject", recording.subject_id)
        frames.append(block)

    if not frames:
        return pd.DataFrame(columns=list(DATASET_COLUMNS))
    return pd.concat(frames, ignore_index=True)


def write_dataset(dataset: Dataset, path):
    """Writes a dataset in canonical form (header order, shortest round-trip floats)."""
    frame = dataset_frame(dataset)
    frame.to_csv(path, index=False, lineterminator="\n")
    logging.info("Wrote %s recording(s) / %s sample(s) to %s.", len(dataset), len(frame), path)


def _label_rank(label):
    return LABEL_ORDER.index(label) if label in LABEL_ORDER else len(LABEL_ORDER)


def _train_count(n: int, ratio: float) -> int:
    return min(max(int(math.floor(ratio * n + 0.5)), 1), n - 1)


def stratified_split_indices(labels: Sequence, ratio: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-label shuffled split of item indices into (train, validation).

    Each label contributes round(ratio * n) items to training (at least one item on each
    side). A label with fewer than 2 items cannot be stratified - it is logged and its item
    goes to training.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"Split ratio must be strictly between 0 and 1 - got {ratio}.")

    labels = list(labels)
    rng = np.random.default_rng(seed)
    train, validation = [], []

    for label in sorted(set(labels), key=_label_rank):
        idx = np.array([i for i, item in enumerate(labels) if item == label])
        if len(idx) < 2:
            logging.warning("Label %s has %s item(s) - cannot stratify, assigning to training.", label, len(idx))
            train.extend(idx.tolist())
            continue

        shuffled = rng.permutation(idx)
        n_train = _train_count(len(idx), ratio)
        train.extend(shuffled[:n_train].tolist())
        validation.extend(shuffled[n_train:].tolist())

    return np.array(sorted(train), dtype=int), np.array(sorted(validation), dtype=int)


def subject_disjoint_split(labels: Sequence, subjects: Sequence[str], ratio: float, seed: int):
    """Splits item indices so no subject contributes to both training & validation.

    Subjects (not items) are shuffled and round(ratio * subjects) go to training.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"Split ratio must be strictly between 0 and 1 - got {ratio}.")
    if len(labels) != len(subjects):
        raise ValueError("labels and subjects must have the same length.")

    unique = sorted(set(subjects))
    if len(unique) < 2:
        logging.warning("Only %s subject(s) - cannot split by subject, assigning all to training.", len(unique))
        return np.arange(len(subjects)), np.array([], dtype=int)

    rng = np.random.default_rng(seed)
    shuffled = [unique[i] for i in rng.permutation(len(unique))]
    train_subjects = set(shuffled[: _train_count(len(unique), ratio)])

    subjects = np.asarray(subjects)
    mask = np.isin(subjects, list(train_subjects))
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def split_train_validation(dataset: Dataset, ratio: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified (by label) split of the recordings of a dataset.

    Args:
        dataset: Dataset to split
        ratio: training fraction, 0 < ratio < 1
        seed: shuffle seed

    Returns:
        (train, validation): two Datasets partitioning the input, input order preserved
    """
    train_idx, val_idx = stratified_split_indices([r.label for r in dataset], ratio, seed)
    recordings = dataset.recordings
    return (
        Dataset([recordings[i] for i in train_idx], provenance=dataset.provenance),
        Dataset([recordings[i] for i in val_idx], provenance=dataset.provenance),
    )
