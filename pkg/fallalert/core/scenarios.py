"""
Scripted prior-fall scenarios: "this recording, then a fall at t seconds".

A scenario file is delimited text with the columns
scenario,subject,location,label,session,fall_kind,fall_at_s - each row names one recording
of a dataset and the point where a fall is injected into it.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from fallalert.core.synthetic import inject_fall
from fallalert.models.errors import DatasetError, EmptyDatasetError, ParseError, SchemaError
from fallalert.models.labels import ActivityLabel, BodyLocation, FallKind
from fallalert.models.recording import Dataset, Recording

SCENARIO_COLUMNS = ("scenario", "subject", "location", "label", "session", "fall_kind", "fall_at_s")


@dataclass(frozen=True)
class Scenario:
    scenario: str
    subject_id: str
    location: BodyLocation
    label: ActivityLabel
    session: str
    fall_kind: FallKind
    fall_at_s: float

    @property
    def recording_id(self) -> str:
        return f"{self.subject_id}/{self.location.value}/{self.label.value}/{self.session}"

    def asdict(self):
        return {
            "scenario": self.scenario,
            "subject": self.subject_id,
            "location": self.location.value,
            "label": self.label.value,
            "session": self.session,
            "fall_kind": self.fall_kind.value,
            "fall_at_s": self.fall_at_s,
        }


def load_scenarios(path) -> List[Scenario]:
    """Reads a scenario file. Raises SchemaError / ParseError (with the file row) on bad input."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(f"Scenario file {path} is empty.")

    missing = [c for c in SCENARIO_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"Scenario file {path} is missing column(s) {missing}.")

    scenarios = []
    for idx, row in frame.iterrows():
        file_row = idx + 2
        try:
            scenarios.append(
                Scenario(
                    scenario=row["scenario"].strip(),
                    subject_id=row["subject"].strip(),
                    location=BodyLocation(row["location"].strip().upper()),
                    label=ActivityLabel(row["label"].strip().upper()),
                    session=row["session"].strip(),
                    fall_kind=FallKind(row["fall_kind"].strip().upper()),
                    fall_at_s=float(row["fall_at_s"]),
                )
            )
        except ValueError as e:
            raise ParseError(f"Scenario file {path} row {file_row}: {e}", row=file_row) from e

    if not scenarios:
        raise EmptyDatasetError(f"Scenario file {path} holds no scenarios.")
    return scenarios


def write_scenarios(scenarios: Sequence[Scenario], path):
    frame = pd.DataFrame([s.asdict() for s in scenarios], columns=list(SCENARIO_COLUMNS))
    frame.to_csv(path, index=False, lineterminator="\n")
    logging.info("Wrote %s scenario(s) to %s.", len(scenarios), path)


def generate_scenarios(
    dataset: Dataset,
    trials: int,
    seed: int,
    location: BodyLocation = BodyLocation.LEFT_CHEST,
    fall_at_min_s: float = 5.0,
    fall_at_max_s: float = 8.0,
    fall_kind: FallKind = FallKind.FALL,
) -> List[Scenario]:
    """`trials` scenarios per activity, cycling through that activity's recordings at `location`.

    The injection point is drawn uniformly from [fall_at_min_s, fall_at_max_s], clipped to
    the recording length. Activities without a recording at the location are skipped.
    """
    rng = np.random.default_rng(seed)
    scenarios = []
    for activity in ActivityLabel:
        recordings = list(dataset.select(location=location, label=activity))
        if not recordings:
            logging.warning("No %s recording at %s - no scenarios for it.", activity.value, location.value)
            continue

        for trial in range(trials):
            recording = recordings[trial % len(recordings)]
            duration = len(recording) / recording.sample_rate_hz
            high = min(fall_at_max_s, duration)
            low = min(fall_at_min_s, high)
            scenarios.append(
                Scenario(
                    scenario=f"{activity.value}-{trial + 1:02d}",
                    subject_id=recording.subject_id,
                    location=location,
                    label=activity,
                    session=recording.session,
                    fall_kind=fall_kind,
                    fall_at_s=round(float(rng.uniform(low, high)), 2),
                )
            )
    return scenarios


def scenario_recordings(dataset: Dataset, scenarios: Sequence[Scenario], seed: int, fall_s: float = 4.0) -> List[Tuple[Scenario, Recording]]:
    """Builds the replayable recording of every scenario (dataset recording + injected fall)."""
    by_id = {r.recording_id: r for r in dataset}
    built = []
    for i, scenario in enumerate(scenarios):
        recording = by_id.get(scenario.recording_id)
        if recording is None:
            raise DatasetError(f"Scenario {scenario.scenario} names recording {scenario.recording_id}, which is not in the dataset.")
        built.append((scenario, inject_fall(recording, scenario.fall_kind, scenario.fall_at_s, seed + i, fall_s)))
    return built
