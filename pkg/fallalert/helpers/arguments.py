"""
This module deals with parsing of command line arguments
or environment variables (for containers & test rigs).
"""

# Disable global statement warnings as we use it for "singletone" Arguments
# pylint: disable=global-statement

import argparse
import os

from fallalert.models.labels import BodyLocation, ClassifierFamily, CoordinateSystem

# Set global ARGS to None until parsed
CONSOLE_ARGS = None

ENV_PREFIX = "FALLALERT_"


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="random seed (defaults to script.seed in config.yaml)", type=int)
    common.add_argument("--config", help="key=value file overriding config.yaml entries", action="store")
    common.add_argument("--out", help="output directory for reports & manifests", action="store")
    common.add_argument("--workers", help="parallel worker count", type=int)
    common.add_argument("--console", help="log to console instead of file", action="store_true")
    common.add_argument("--debug", help="print debug log items", action="store_true")
    return common


def _dataset_arguments(parser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", help="canonical (or remapped) dataset CSV", action="store")
    source.add_argument("--synthetic", help="use the seeded synthetic corpus", action="store_true")
    parser.add_argument("--remap", help="key=value remap file for foreign datasets", action="store")


def _parse_local_arguments(sysargs):
    """
    Parses arguments passed into the python script on the command line.

    Input:
    sysargs - list of arguments (None reads sys.argv)

    Output:
    args - argument Namespace
    """
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="fallalert", description="Fall detection & prior-fall activity alerts.")
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)

    families = [f.value for f in ClassifierFamily]
    systems = [s.value for s in CoordinateSystem]
    locations = [loc.value for loc in BodyLocation]

    ingest = subparsers.add_parser("ingest", parents=[common], help="validate a dataset & write it in canonical form")
    _dataset_arguments(ingest)

    features = subparsers.add_parser("features", parents=[common], help="write window feature vectors")
    _dataset_arguments(features)
    features.add_argument("--system", choices=systems, help="coordinate system of the features")
    features.add_argument("--location", choices=locations, help="only this sensor location")

    train = subparsers.add_parser("train", parents=[common], help="train one activity classifier")
    _dataset_arguments(train)
    train.add_argument("--family", choices=families, help="classifier family")
    train.add_argument("--system", choices=systems, help="coordinate system of the features")
    train.add_argument("--location", choices=locations, help="sensor location")
    train.add_argument("--param", help="hyperparameter as name=value (repeatable)", action="append", default=[])
    train.add_argument("--model-out", help="model file (defaults to <out>/model.json)", action="store")

    search = subparsers.add_parser("search", parents=[common], help="randomized hyperparameter search")
    _dataset_arguments(search)
    search.add_argument("--family", choices=families, help="classifier family")
    search.add_argument("--system", choices=systems, help="coordinate system of the features")
    search.add_argument("--location", choices=locations, help="sensor location")
    search.add_argument("--iterations", type=int, help="sampled candidates")
    search.add_argument("--folds", type=int, help="cross-validation folds")

    eval_activity = subparsers.add_parser("eval-activity", parents=[common], help="location x system x family accuracy grid")
    _dataset_arguments(eval_activity)
    eval_activity.add_argument("--families", nargs="+", choices=families, help="classifier families")
    eval_activity.add_argument("--systems", nargs="+", choices=systems, help="coordinate systems")
    eval_activity.add_argument("--locations", nargs="+", choices=locations, help="sensor locations")
    eval_activity.add_argument("--iterations", type=int, help="sampled candidates per cell")
    eval_activity.add_argument("--folds", type=int, help="cross-validation folds")

    calibrate = subparsers.add_parser("calibrate-fall", parents=[common], help="calibrate the three fall detectors")
    _dataset_arguments(calibrate)
    calibrate.add_argument("--location", choices=locations, help="sensor location of the fall recordings")
    calibrate.add_argument("--calibration-out", help="calibration file (defaults to <out>/calibration.txt)", action="store")

    eval_fall = subparsers.add_parser("eval-fall", parents=[common], help="fall detector evaluation table")
    _dataset_arguments(eval_fall)
    eval_fall.add_argument("--location", choices=locations, help="sensor location of the fall recordings")
    eval_fall.add_argument("--calibration", help="use these detectors instead of calibrating", action="store")

    simulate = subparsers.add_parser("simulate", parents=[common], help="replay scenarios through the device simulator")
    _dataset_arguments(simulate)
    simulate.add_argument("--calibration", help="calibration file holding the 3-phase detector", action="store")
    simulate.add_argument("--scenarios", help="scenario file (generated when omitted)", action="store")
    target = simulate.add_mutually_exclusive_group()
    target.add_argument("--server", help="alert server host:port", action="store")
    target.add_argument("--dry-run", help="write payloads to this file instead of a socket", action="store")
    simulate.add_argument("--speed", type=float, help="replay speed multiplier (0 = as fast as possible)")
    simulate.add_argument("--device-id", help="device id reported in payloads", action="store")
    simulate.add_argument("--start-at", help="ISO timestamp of the first replayed sample", action="store")

    serve = subparsers.add_parser("serve", parents=[common], help="run the alert server")
    serve.add_argument("--model", help="trained model file", action="store", required=True)
    serve.add_argument("--bind", help="host:port to listen on", action="store")
    serve.add_argument("--audit", help="audit log file", action="store")
    serve.add_argument("--webhook", help="notify this webhook URL instead of stdout", action="store")

    eval_prior = subparsers.add_parser("eval-prior", parents=[common], help="prior-fall activity evaluation")
    _dataset_arguments(eval_prior)
    eval_prior.add_argument("--model", help="trained model file (trained on the fly when omitted)", action="store")
    eval_prior.add_argument("--calibration", help="calibration file (calibrated on the fly when omitted)", action="store")
    eval_prior.add_argument("--scenarios", help="scenario file (generated when omitted)", action="store")
    eval_prior.add_argument("--trials", type=int, help="generated scenarios per activity")

    arguments = parser.parse_args() if sysargs is None else parser.parse_args(sysargs)
    return arguments


def _parse_env_variables(args):
    """
    Parse FALLALERT_* environment variables.
    Environment variables replace command line arguments.

    Args:
        args - argument Namespace

    Returns:
        None
    """

    if os.environ.get(f"{ENV_PREFIX}DEBUG") == "TRUE":
        args.debug = True

    if f"{ENV_PREFIX}WORKERS" in os.environ:
        args.workers = int(os.environ[f"{ENV_PREFIX}WORKERS"])

    if f"{ENV_PREFIX}BIND" in os.environ and hasattr(args, "bind"):
        args.bind = os.environ[f"{ENV_PREFIX}BIND"]

    if f"{ENV_PREFIX}SERVER" in os.environ and hasattr(args, "server") and not getattr(args, "dry_run", None):
        args.server = os.environ[f"{ENV_PREFIX}SERVER"]


def parse_arguments(sysargs=None):
    """Executes local argument parsing and then checks for environment overrides.

    Args:
        sysargs: list of arguments (None reads sys.argv)

    Returns:
        args: Arguments Namespace
    """
    args = _parse_local_arguments(sysargs)
    _parse_env_variables(args)

    global CONSOLE_ARGS
    CONSOLE_ARGS = args
    return CONSOLE_ARGS


def get_arguments():
    global CONSOLE_ARGS
    if CONSOLE_ARGS is None:
        parse_arguments()
    return CONSOLE_ARGS
