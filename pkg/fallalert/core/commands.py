"""
This module contains the dataset, training, calibration, simulation & serving commands.
The evaluation harnesses live in core.evaluation.
"""

import logging
import os

import pandas as pd
from dateutil import parser as date_parser

from fallalert.core import classify, falldetect, reports, signal
from fallalert.core.dataset import write_dataset
from fallalert.core.evaluation import (
    RunConfig,
    activity_windows,
    calibrate_detectors,
    fall_series,
    load_source,
    location_option,
    nonfall_series,
    split_dataset,
    system_option,
)
from fallalert.core.scenarios import generate_scenarios, load_scenarios, scenario_recordings
from fallalert.helpers import utils
from fallalert.models.alert import NotificationSink
from fallalert.models.classifier import ClassifierSpec, FeatureConfig
from fallalert.models.detector import ThreePhaseParams
from fallalert.models.errors import ConfigError, EmptyDatasetError
from fallalert.models.labels import ClassifierFamily, DetectorKind, ExitCode, FallKind, SinkKind
from fallalert.network.device import FileTransport, TcpTransport, run_device_sim
from fallalert.network.server import run_server


def cmd_ingest(run: RunConfig) -> ExitCode:
    """Validates a dataset (or generates the synthetic corpus) & writes it in canonical form."""
    dataset = load_source(run)
    path = os.path.join(utils.ensure_directory(run.out_dir), "dataset.csv")
    write_dataset(dataset, path)

    summary = pd.DataFrame(
        [
            {
                "recording_id": r.recording_id,
                "subject": r.subject_id,
                "location": r.location.value,
                "label": r.label.value,
                "session": r.session,
                "samples": len(r),
                "duration_s": len(r) / r.sample_rate_hz,
            }
            for r in dataset
        ]
    )
    outputs = [path, *reports.write_table(summary, run.out_dir, "recordings")]
    run.manifest(outputs)
    return ExitCode.OK


def cmd_features(run: RunConfig) -> ExitCode:
    dataset = load_source(run)
    location = run.option("location")
    if location:
        dataset = dataset.select(location=location_option(run, "classify"))

    system = system_option(run)
    windows, labels = activity_windows(run, dataset)
    if not windows:
        raise EmptyDatasetError("No activity recording is long enough for a single window.")

    frame = pd.DataFrame(signal.features_matrix(windows, system), columns=list(FeatureConfig(system).names))
    frame.insert(0, "label", [label.value for label in labels])
    frame.insert(0, "start", [w.start for w in windows])
    frame.insert(0, "recording_id", [w.recording_id for w in windows])

    outputs = reports.write_table(frame, run.out_dir, "features", float_format="%.9g")
    run.manifest(outputs, [f"{len(windows)} window(s), {system.value} features"])
    return ExitCode.OK


def _training_data(run: RunConfig):
    location = location_option(run, "classify")
    system = system_option(run)
    train, validation = split_dataset(run, load_source(run).select(location=location, falls=False))

    train_windows, train_labels = activity_windows(run, train)
    if not train_windows:
        raise EmptyDatasetError(f"No training activity windows at {location.value}.")
    val_windows, val_labels = activity_windows(run, validation)
    return system, (signal.features_matrix(train_windows, system), train_labels), (signal.features_matrix(val_windows, system), val_labels)


def cmd_train(run: RunConfig) -> ExitCode:
    """Trains one classifier on the training split, reports validation accuracy & saves it."""
    family = ClassifierFamily(run.option("family", run.settings.classify["family"]))
    spec = ClassifierSpec(family, utils.parse_assignments(run.option("param", [])))
    system, (X, y), (Xv, yv) = _training_data(run)

    model = classify.train(spec, X, y, run.seed, FeatureConfig(system))
    model_path = run.option("model_out") or os.path.join(utils.ensure_directory(run.out_dir), "model.json")
    classify.save_model(model, model_path)

    outputs, notes = [model_path], []
    if len(Xv):
        confusion = classify.evaluate(model, Xv, yv)
        logging.info("%s validation accuracy: %.4f over %s window(s).", spec.describe(), confusion.accuracy, confusion.total)
        outputs.extend(reports.write_table(confusion.to_frame().reset_index(), run.out_dir, "confusion"))
        notes.append(f"validation accuracy {confusion.accuracy:.6f}")
    else:
        notes.append("no validation windows")

    run.manifest(outputs, notes)
    return ExitCode.OK


def cmd_search(run: RunConfig) -> ExitCode:
    classify_cfg = run.settings.classify
    family = ClassifierFamily(run.option("family", classify_cfg["family"]))
    _, (X, y), _ = _training_data(run)

    report = classify.randomized_search(
        family,
        classify_cfg["spaces"][family.value],
        X,
        y,
        folds=run.option("folds", classify_cfg["folds"]),
        iterations=run.option("iterations", classify_cfg["iterations"]),
        seed=run.seed,
        workers=run.workers,
    )
    outputs = reports.write_table(report.to_frame(), run.out_dir, "search")
    run.manifest(outputs, [f"best {report.best_spec.describe()} mean accuracy {report.best.mean:.6f}"])
    return ExitCode.OK


def cmd_calibrate_fall(run: RunConfig) -> ExitCode:
    """Calibrates all three detectors on every fall recording of the location."""
    location = location_option(run, "falldetect")
    dataset = load_source(run).select(location=location)

    falls = fall_series(dataset)
    if not any(falls[kind] for kind in FallKind):
        raise EmptyDatasetError(f"Empty corpus: no fall recordings at {location.value}.")
    detectors = calibrate_detectors(run, falls, nonfall_series(run, dataset, run.seed, "calibration"))

    path = run.option("calibration_out") or os.path.join(utils.ensure_directory(run.out_dir), "calibration.txt")
    provenance = {"command": run.command, "seed": run.seed, "location": location.value, "dataset": dataset.provenance}
    falldetect.write_calibration(path, detectors, provenance)

    missing = [f"{k.value} / {a.value}" for k in FallKind for a in DetectorKind if (k, a) not in detectors]
    status = ExitCode.PARTIAL if missing else ExitCode.OK
    run.manifest([path], [f"{m}: not calibrated" for m in missing], status)
    return status


def simulation_detector(run: RunConfig):
    """The FALL 3-phase detector of a calibration file, or the configured base parameters."""
    path = run.option("calibration")
    if not path:
        return ThreePhaseParams(**run.settings.falldetect["three_phase"]["base"])

    detectors, _ = falldetect.read_calibration(path)
    detector = detectors.get((FallKind.FALL, DetectorKind.THREE_PHASE))
    if detector is None:
        raise ConfigError(f"Calibration file {path} holds no {FallKind.FALL.value} 3-phase detector.")
    return detector


def cmd_simulate(run: RunConfig) -> ExitCode:
    """Replays scenarios through the device simulator against a server (or into a dry-run file)."""
    net, prior = run.settings.alertnet, run.settings.priorfall
    dataset = load_source(run)
    detector = simulation_detector(run)

    scenario_file = run.option("scenarios")
    if scenario_file:
        scenarios = load_scenarios(scenario_file)
    else:
        location = location_option(run, "classify")
        scenarios = generate_scenarios(dataset, prior["trials"], run.seed, location, prior["fall_at_min_s"], prior["fall_at_max_s"])
        if not scenarios:
            raise EmptyDatasetError(f"No activity recordings at {location.value} to build scenarios from.")

    dry_run = run.option("dry_run")
    if dry_run:
        transport = FileTransport(dry_run)
    else:
        address = utils.parse_address(run.option("server", net["server"]))
        transport = TcpTransport(address, net["retries"], net["backoff_s"], net["timeout_s"])

    start_at = run.option("start_at")
    started_at = date_parser.isoparse(start_at) if start_at else None
    device_id = run.option("device_id", net["device_id"])
    speed = run.option("speed", net["speed"])

    rows = []
    try:
        for scenario, recording in scenario_recordings(dataset, scenarios, run.seed, prior["fall_s"]):
            summary = run_device_sim(recording, detector, transport, speed=speed, device_id=device_id, started_at=started_at)
            rows.append(
                {
                    "scenario": scenario.scenario,
                    "recording_id": summary.recording_id,
                    "samples": summary.samples_replayed,
                    "events": len(summary.events),
                    "payloads_sent": summary.payloads_sent,
                    "suppressed": len(summary.suppressed),
                    "failures": len(summary.failures),
                    "prior_activities": " ".join(label.value for label in summary.prior_activities),
                }
            )
    finally:
        transport.close()

    outputs = list(reports.write_table(pd.DataFrame(rows), run.out_dir, "simulation"))
    if dry_run:
        outputs.append(dry_run)

    failures = sum(row["failures"] for row in rows)
    status = ExitCode.NETWORK if failures else ExitCode.OK
    run.manifest(outputs, [f"{failures} failed payload(s)"] if failures else [], status)
    return status


def notification_sink(run: RunConfig) -> NotificationSink:
    net = run.settings.alertnet
    webhook = run.option("webhook", net["webhook"])
    if webhook:
        return NotificationSink(SinkKind.WEBHOOK, webhook)
    return NotificationSink(SinkKind(net["sink"]), None)


def cmd_serve(run: RunConfig) -> ExitCode:
    """Loads a model & serves alerts until interrupted."""
    net = run.settings.alertnet
    model = classify.load_model(run.options["model"])
    bind = utils.parse_address(run.option("bind", net["bind"]))
    sink = notification_sink(run)
    audit = run.option("audit") or os.path.join(utils.ensure_directory(run.out_dir), net["audit"])

    run.manifest([audit], [f"serving {model.spec.describe()} on {bind[0]}:{bind[1]} - sink {sink.kind.value}"])
    run_server(bind, model, sink, audit, net["records_kept"])
    return ExitCode.OK
