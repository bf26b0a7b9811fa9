"""
This module holds the run configuration shared by every command plus the three evaluation
harnesses: the activity accuracy grid, the fall detector table & the prior-fall table.
"""

import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import pytz

from fallalert.core import classify, falldetect, reports, signal
from fallalert.core.dataset import load_dataset, load_remap, split_train_validation, subject_disjoint_split
from fallalert.core.scenarios import Scenario, generate_scenarios, load_scenarios, scenario_recordings, write_scenarios
from fallalert.core.synthetic import synthetic_corpus
from fallalert.helpers import utils
from fallalert.models.alert import AlertResponse
from fallalert.models.classifier import ClassifierSpec, FeatureConfig
from fallalert.models.detector import ThreePhaseParams, TwoPhaseParams
from fallalert.models.errors import ConfigError, EmptyDatasetError
from fallalert.models.labels import ActivityLabel, BodyLocation, ClassifierFamily, CoordinateSystem, DetectorKind, ExitCode, FallKind
from fallalert.models.recording import Dataset
from fallalert.network.device import LocalTransport, run_device_sim
from fallalert.network.server import AlertService

NOT_DETECTED = "cannot detect falling"
ABSENT = "absent"

# Replays of the prior-fall evaluation start at a fixed wall-clock time so payloads are reproducible
REPLAY_EPOCH = datetime(2021, 1, 1, tzinfo=pytz.utc)


@dataclass
class RunConfig:
    """Everything one command run needs: the resolved settings and the command options.

    Attributes:
        command: subcommand name
        seed: run seed (--seed, else script.seed)
        out_dir: directory for reports & the manifest (--out, else script.out)
        settings: resolved configuration (helpers.config._Config)
        workers: worker thread count
        dataset: dataset file, or None for the synthetic corpus
        remap: remap file for a foreign dataset
        synthetic: use the seeded synthetic corpus
        options: the remaining command specific options
    """

    command: str
    seed: int
    out_dir: str
    settings: object
    workers: int = 1
    dataset: Optional[str] = None
    remap: Optional[str] = None
    synthetic: bool = False
    options: Dict[str, object] = field(default_factory=dict)

    COMMON = ("command", "seed", "config", "out", "workers", "console", "debug", "dataset", "remap", "synthetic")

    @classmethod
    def from_arguments(cls, args, settings):
        script = settings.script
        values = vars(args)
        run = cls(
            command=args.command,
            seed=script["seed"] if values.get("seed") is None else args.seed,
            out_dir=values.get("out") or script["out"],
            settings=settings,
            workers=values.get("workers") or script["workers"],
            dataset=values.get("dataset"),
            remap=values.get("remap"),
            synthetic=bool(values.get("synthetic")),
            options={k: v for k, v in values.items() if k not in cls.COMMON},
        )
        run.validate()
        return run

    def validate(self):
        if self.seed < 0:
            raise ConfigError(f"--seed must not be negative - got {self.seed}.")
        if self.workers < 1:
            raise ConfigError(f"--workers must be at least 1 - got {self.workers}.")
        for name in ("dataset", "remap"):
            path = getattr(self, name)
            if path and not os.path.isfile(path):
                raise ConfigError(f"--{name} file {path} does not exist.")
        for name in ("model", "calibration", "scenarios"):
            path = self.options.get(name)
            if path and not os.path.isfile(path):
                raise ConfigError(f"--{name} file {path} does not exist.")

    def option(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value

    def resolved(self):
        """The configuration written into the manifest (config.yaml + overrides + run options)."""
        document = self.settings.as_dict()
        document["run"] = {
            "command": self.command,
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out_dir,
            "dataset": self.dataset,
            "remap": self.remap,
            "synthetic": self.synthetic,
            "options": dict(self.options),
        }
        return document

    def inputs(self):
        names = {"dataset": self.dataset, "remap": self.remap}
        names.update({name: self.options.get(name) for name in ("model", "calibration", "scenarios")})
        return names

    def manifest(self, outputs, notes=(), status=ExitCode.OK):
        return reports.write_manifest(
            self.out_dir, self.command, self.seed, self.resolved(), self.inputs(), outputs, notes, status.name
        )


# ------------------------------------------------------------------------------
# SHARED DATA HELPERS
# ------------------------------------------------------------------------------


def load_source(run: RunConfig) -> Dataset:
    """The dataset a command works on: a dataset file or the seeded synthetic corpus."""
    if run.dataset:
        data = run.settings.dataset
        remap = load_remap(run.remap) if run.remap else None
        return load_dataset(run.dataset, remap, data["sample_rate_hz"], data["session_gap_s"])

    synthetic = run.settings.synthetic
    return synthetic_corpus(
        run.seed,
        subjects=synthetic["subjects"],
        sessions=synthetic["sessions"],
        duration_s=synthetic["duration_s"],
        falls_per_subject=synthetic["falls_per_subject"],
        knee_falls_per_subject=synthetic["knee_falls_per_subject"],
        fall_duration_s=synthetic["fall_duration_s"],
        sample_rate_hz=run.settings.dataset["sample_rate_hz"],
    )


def split_dataset(run: RunConfig, dataset: Dataset) -> Tuple[Dataset, Dataset]:
    """70:30 (dataset.train_ratio) split, stratified by label or subject-disjoint (dataset.split)."""
    data = run.settings.dataset
    mode = data["split"]
    if mode == "stratified":
        return split_train_validation(dataset, data["train_ratio"], run.seed)
    if mode != "subject":
        raise ConfigError(f"dataset.split must be stratified or subject - got {mode!r}.")

    recordings = dataset.recordings
    train_idx, val_idx = subject_disjoint_split(
        [r.label for r in recordings], [r.subject_id for r in recordings], data["train_ratio"], run.seed
    )
    return (
        Dataset([recordings[i] for i in train_idx], provenance=dataset.provenance),
        Dataset([recordings[i] for i in val_idx], provenance=dataset.provenance),
    )


def activity_windows(run: RunConfig, dataset: Dataset):
    """Labelled windows of every non-fall recording. Returns (windows, labels)."""
    sig = run.settings.signal
    windows = []
    for recording in dataset.select(falls=False):
        windows.extend(signal.segment_windows(recording, sig["window_len"], sig["stride"]))
    return windows, [w.label for w in windows]


def location_option(run: RunConfig, section: str) -> BodyLocation:
    return BodyLocation(run.option("location", run.settings[section]["location"]))


def system_option(run: RunConfig) -> CoordinateSystem:
    return CoordinateSystem(run.option("system", run.settings.signal["system"]))


def fall_series(dataset: Dataset):
    """G-force series of the fall recordings as {FallKind: {subject: [series]}}."""
    grouped = {kind: {} for kind in FallKind}
    for recording in dataset.select(falls=True):
        grouped[recording.label].setdefault(recording.subject_id, []).append(signal.gforce_series(recording))
    return grouped


def flatten(by_subject) -> List:
    return [series for subject in sorted(by_subject) for series in by_subject[subject]]


def nonfall_series(run: RunConfig, dataset: Dataset, seed: int, name: str):
    fd = run.settings.falldetect
    try:
        return falldetect.sample_nonfall_series(list(dataset.select(falls=False)), fd["nonfall_count"], fd["nonfall_length"], seed)
    except ValueError as e:
        raise EmptyDatasetError(f"The {name} non-fall set is empty: {e}") from e


def calibrate_detectors(run: RunConfig, falls, nonfalls, algorithms=tuple(DetectorKind), kinds=tuple(FallKind)):
    """Calibrates the requested algorithms for the requested fall kinds.

    2-phase & 3-phase detectors come from the threshold grid searches, the DTW detector from
    template selection & the k-means seam.

    Returns:
        {(FallKind, DetectorKind): detector}
    """
    fd, sig = run.settings.falldetect, run.settings.signal
    detectors = {}
    for kind in kinds:
        series = flatten(falls[kind])
        if not series:
            logging.warning("No %s recordings - its detectors are not calibrated.", kind.value)
            continue

        if DetectorKind.TWO_PHASE in algorithms:
            base = TwoPhaseParams(**fd["two_phase"]["base"], kind=kind)
            detectors[(kind, DetectorKind.TWO_PHASE)], _ = falldetect.grid_search_thresholds(
                DetectorKind.TWO_PHASE, series, nonfalls, fd["two_phase"]["grid"], base, run.workers
            )
        if DetectorKind.THREE_PHASE in algorithms:
            base = ThreePhaseParams(**fd["three_phase"]["base"], kind=kind)
            detectors[(kind, DetectorKind.THREE_PHASE)], _ = falldetect.grid_search_thresholds(
                DetectorKind.THREE_PHASE, series, nonfalls, fd["three_phase"]["grid"], base, run.workers
            )
        if DetectorKind.DTW in algorithms:
            try:
                detectors[(kind, DetectorKind.DTW)] = falldetect.calibrate_dtw(
                    falls[kind],
                    k=fd["kmeans_k"],
                    kind=kind,
                    peak_height=fd["peak_height"],
                    filter_after_crop=sig["filter_after_crop"],
                    order=sig["butterworth_order"],
                    cutoff_hz=sig["cutoff_hz"],
                    mode=fd["dtw_mode"],
                )
            except ValueError as e:
                logging.warning("DTW detector for %s not calibrated: %s", kind.value, e)
    return detectors


def _require(sets: Dict[str, object]):
    missing = [name for name, items in sets.items() if not items]
    if missing:
        raise EmptyDatasetError(f"Empty corpus: no {', '.join(missing)}.")


# ------------------------------------------------------------------------------
# ACTIVITY CLASSIFIER GRID
# ------------------------------------------------------------------------------


@dataclass
class ActivityCell:
    location: BodyLocation
    system: CoordinateSystem
    family: ClassifierFamily
    accuracy: Optional[float] = None
    cv_accuracy: Optional[float] = None
    best_spec: str = ""
    confusion: object = None

    @property
    def present(self) -> bool:
        return self.accuracy is not None

    @property
    def name(self) -> str:
        return f"{self.location.value}_{self.system.value}_{self.family.value}".lower()


def _run_activity_cell(run: RunConfig, cell: ActivityCell, train_data, val_data):
    X, y = train_data
    Xv, yv = val_data
    classify_cfg = run.settings.classify
    space = classify_cfg["spaces"][cell.family.value]
    report = classify.randomized_search(
        cell.family,
        space,
        X,
        y,
        folds=run.option("folds", classify_cfg["folds"]),
        iterations=run.option("iterations", classify_cfg["iterations"]),
        seed=run.seed,
    )
    model = classify.train(report.best_spec, X, y, run.seed, FeatureConfig(cell.system))
    confusion = classify.evaluate(model, Xv, yv)

    cell.accuracy = confusion.accuracy
    cell.cv_accuracy = report.best.mean
    cell.best_spec = report.best_spec.describe()
    cell.confusion = confusion
    logging.info("Cell %s: validation accuracy %.4f with %s.", cell.name, cell.accuracy, cell.best_spec)
    return cell


def cmd_eval_activity(run: RunConfig) -> ExitCode:
    """Location x coordinate system x family accuracy grid (search, train, validate per cell)."""
    dataset = load_source(run)
    locations = [BodyLocation(v) for v in run.option("locations", [loc.value for loc in BodyLocation])]
    systems = [CoordinateSystem(v) for v in run.option("systems", [s.value for s in CoordinateSystem])]
    families = [ClassifierFamily(v) for v in run.option("families", [f.value for f in ClassifierFamily])]

    cells, tasks, notes = [], [], []
    for location in locations:
        train, validation = split_dataset(run, dataset.select(location=location, falls=False))
        train_windows, train_labels = activity_windows(run, train)
        val_windows, val_labels = activity_windows(run, validation)
        usable = train_windows and val_windows and len(set(train_labels)) >= 2

        if not usable:
            logging.warning("No usable activity windows at %s - its cells are marked absent.", location.value)
            notes.append(f"{location.value}: no usable activity data - cells absent")

        for system in systems:
            if usable:
                train_data = (signal.features_matrix(train_windows, system), train_labels)
                val_data = (signal.features_matrix(val_windows, system), val_labels)
            for family in families:
                cell = ActivityCell(location, system, family)
                cells.append(cell)
                if usable:
                    tasks.append((cell, train_data, val_data))

    with ThreadPoolExecutor(max_workers=run.workers) as pool:
        list(pool.map(lambda task: _run_activity_cell(run, *task), tasks))

    outputs = []
    long_rows = [
        {
            "location": c.location.value,
            "system": c.system.value,
            "family": c.family.value,
            "status": "ok" if c.present else ABSENT,
            "accuracy": c.accuracy if c.present else np.nan,
            "cv_accuracy": c.cv_accuracy if c.present else np.nan,
            "best_spec": c.best_spec,
        }
        for c in cells
    ]
    cells_frame = pd.DataFrame(long_rows)

    # Rows = location x system, one accuracy column per family
    grid_rows = []
    for location in locations:
        for system in systems:
            row = {"location": location.value, "system": system.value}
            for cell in cells:
                if cell.location == location and cell.system == system:
                    row[cell.family.value] = cell.accuracy if cell.present else np.nan
            grid_rows.append(row)
    grid = pd.DataFrame(grid_rows, columns=["location", "system"] + [f.value for f in families])

    outputs.extend(reports.write_table(grid, run.out_dir, "activity_accuracy"))
    outputs.extend(reports.write_table(cells_frame, run.out_dir, "activity_cells"))
    for cell in cells:
        if cell.present:
            outputs.extend(reports.write_table(cell.confusion.to_frame().reset_index(), run.out_dir, f"confusion_{cell.name}"))

    notes.extend(f"{family}: {reason}" for family, reason in reports.EXCLUDED_FAMILIES.items())
    status = ExitCode.OK if all(c.present for c in cells) else ExitCode.PARTIAL
    run.manifest(outputs, notes, status)
    return status


# ------------------------------------------------------------------------------
# FALL DETECTOR TABLE
# ------------------------------------------------------------------------------


def cmd_eval_fall(run: RunConfig) -> ExitCode:
    """Calibrates the three detectors on the training split & evaluates them on validation.

    Produces one row per (algorithm, fall kind) with accuracy, sensitivity & specificity.
    """
    location = location_option(run, "falldetect")
    train, validation = split_dataset(run, load_source(run).select(location=location))

    train_falls, val_falls = fall_series(train), fall_series(validation)
    _require(
        {
            f"training fall recordings at {location.value}": any(train_falls[k] for k in FallKind),
            f"validation fall recordings at {location.value}": any(val_falls[k] for k in FallKind),
        }
    )
    val_nonfalls = nonfall_series(run, validation, run.seed + 1, "validation")

    outputs, notes = [], []
    calibration = run.option("calibration")
    if calibration:
        detectors, _ = falldetect.read_calibration(calibration)
    else:
        train_nonfalls = nonfall_series(run, train, run.seed, "training")
        detectors = calibrate_detectors(run, train_falls, train_nonfalls)
        path = os.path.join(utils.ensure_directory(run.out_dir), "calibration.txt")
        falldetect.write_calibration(path, detectors, {"command": run.command, "seed": run.seed, "location": location.value, "split": "train"})
        outputs.append(path)

    rows = []
    for algo in DetectorKind:
        by_kind = {kind: det for (kind, a), det in detectors.items() if a == algo}
        metrics = falldetect.evaluate_detector(
            by_kind, flatten(val_falls[FallKind.FALL]), flatten(val_falls[FallKind.FALL_KNEES_FIRST]), val_nonfalls
        )
        for kind in FallKind:
            if kind in metrics:
                rows.append((algo, kind, metrics[kind]))
            else:
                notes.append(f"{algo.value} / {kind.value}: no detector or no validation falls - row missing")

    outputs.extend(reports.write_table(falldetect.metrics_frame(rows), run.out_dir, "fall_detectors"))
    status = ExitCode.OK if len(rows) == len(DetectorKind) * len(FallKind) else ExitCode.PARTIAL
    run.manifest(outputs, notes, status)
    return status


# ------------------------------------------------------------------------------
# PRIOR-FALL TABLE
# ------------------------------------------------------------------------------


@dataclass
class ScenarioOutcome:
    scenario: Scenario
    fall_sample: int
    events: int = 0
    false_alarms: int = 0
    predicted: Optional[ActivityLabel] = None
    vote_counts: str = ""
    failures: int = 0

    @property
    def detected(self) -> bool:
        return self.predicted is not None

    @property
    def correct(self) -> bool:
        return self.predicted == self.scenario.label

    def asdict(self):
        return {
            "scenario": self.scenario.scenario,
            "recording_id": self.scenario.recording_id,
            "activity": self.scenario.label.value,
            "fall_kind": self.scenario.fall_kind.value,
            "fall_at_s": self.scenario.fall_at_s,
            "events": self.events,
            "false_alarms": self.false_alarms,
            "detected": self.detected,
            "predicted": self.predicted.value if self.detected else "",
            "correct": self.detected and self.correct,
            "vote_counts": self.vote_counts,
            "failures": self.failures,
        }


def replay_scenario(service: AlertService, detector, scenario: Scenario, recording, device_id: str) -> ScenarioOutcome:
    """Replays one scenario in-process and picks the first alert at or after the injected fall."""
    fall_sample = int(round(scenario.fall_at_s * recording.sample_rate_hz))
    summary = run_device_sim(recording, detector, LocalTransport(service), device_id=device_id, started_at=REPLAY_EPOCH)

    outcome = ScenarioOutcome(scenario, fall_sample, events=len(summary.events), failures=len(summary.failures))
    for dispatch in summary.dispatches:
        if dispatch.event.index < fall_sample:
            outcome.false_alarms += 1
            continue
        response = dispatch.response
        if outcome.predicted is None and isinstance(response, AlertResponse):
            outcome.predicted = response.prior_activity
            outcome.vote_counts = " ".join(f"{label.value}:{n}" for label, n in response.vote_counts.items())
    return outcome


def prior_table(outcomes: List[ScenarioOutcome]) -> pd.DataFrame:
    """Per prior activity: trials, detections, correct identifications, accuracy & false labels."""
    rows = []
    for activity in ActivityLabel:
        mine = [o for o in outcomes if o.scenario.label == activity]
        if not mine:
            continue
        detected = [o for o in mine if o.detected]
        correct = sum(1 for o in detected if o.correct)
        wrong = Counter(o.predicted for o in detected if not o.correct)
        rows.append(
            {
                "activity": activity.value,
                "trials": len(mine),
                "detected": len(detected),
                "correct": correct,
                "accuracy": correct / len(detected) if detected else np.nan,
                "false_detections": " ".join(f"{label.value}({wrong[label]})" for label in ActivityLabel if label in wrong),
                "note": "" if detected else NOT_DETECTED,
            }
        )

    frame = pd.DataFrame(rows, columns=["activity", "trials", "detected", "correct", "accuracy", "false_detections", "note"])
    mean = frame["accuracy"].mean() if frame["accuracy"].notna().any() else np.nan
    total = {
        "activity": "MEAN",
        "trials": int(frame["trials"].sum()),
        "detected": int(frame["detected"].sum()),
        "correct": int(frame["correct"].sum()),
        "accuracy": mean,
        "false_detections": "",
        "note": "",
    }
    return pd.concat([frame, pd.DataFrame([total])], ignore_index=True)


def prior_model(run: RunConfig, train: Dataset):
    path = run.option("model")
    if path:
        return classify.load_model(path)

    prior = run.settings.priorfall
    system = CoordinateSystem(run.settings.signal["system"])
    windows, labels = activity_windows(run, train)
    _require({"training activity windows": windows})
    spec = ClassifierSpec(ClassifierFamily(prior["family"]), prior["hyperparameters"] or {})
    return classify.train(spec, signal.features_matrix(windows, system), labels, run.seed, FeatureConfig(system))


def prior_detector(run: RunConfig, train: Dataset):
    path = run.option("calibration")
    if path:
        detectors, _ = falldetect.read_calibration(path)
        if (FallKind.FALL, DetectorKind.THREE_PHASE) not in detectors:
            raise ConfigError(f"Calibration file {path} holds no {FallKind.FALL.value} 3-phase detector.")
        return detectors[(FallKind.FALL, DetectorKind.THREE_PHASE)]

    falls = fall_series(train)
    _require({"training fall recordings": falls[FallKind.FALL]})
    nonfalls = nonfall_series(run, train, run.seed, "training")
    detectors = calibrate_detectors(run, falls, nonfalls, (DetectorKind.THREE_PHASE,), (FallKind.FALL,))
    return detectors[(FallKind.FALL, DetectorKind.THREE_PHASE)]


def cmd_eval_prior(run: RunConfig) -> ExitCode:
    """Replays activity-then-fall scenarios through detector, device, server & classifier."""
    prior = run.settings.priorfall
    location = BodyLocation(run.settings.classify["location"])
    dataset = load_source(run)
    train, validation = split_dataset(run, dataset.select(location=location))

    model = prior_model(run, train)
    detector = prior_detector(run, train)

    outputs = []
    scenario_file = run.option("scenarios")
    if scenario_file:
        scenarios = load_scenarios(scenario_file)
    else:
        scenarios = generate_scenarios(
            validation,
            run.option("trials", prior["trials"]),
            run.seed,
            location,
            prior["fall_at_min_s"],
            prior["fall_at_max_s"],
        )
        _require({f"validation activity recordings at {location.value}": scenarios})
        path = os.path.join(utils.ensure_directory(run.out_dir), "scenarios.csv")
        write_scenarios(scenarios, path)
        outputs.append(path)

    built = scenario_recordings(dataset, scenarios, run.seed, prior["fall_s"])
    service = AlertService(model)
    device_id = run.settings.alertnet["device_id"]
    with ThreadPoolExecutor(max_workers=run.workers) as pool:
        outcomes = list(pool.map(lambda item: replay_scenario(service, detector, item[0], item[1], device_id), built))

    outputs.extend(reports.write_table(pd.DataFrame([o.asdict() for o in outcomes]), run.out_dir, "prior_scenarios"))
    table = prior_table(outcomes)
    outputs.extend(reports.write_table(table, run.out_dir, "prior_activity"))
    logging.info("Prior-fall mean accuracy: %s", table["accuracy"].iloc[-1])

    failures = sum(o.failures for o in outcomes)
    notes = [f"{failures} replay failure(s)"] if failures else []
    status = ExitCode.PARTIAL if failures else ExitCode.OK
    run.manifest(outputs, notes, status)
    return status
