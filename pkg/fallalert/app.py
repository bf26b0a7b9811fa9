"""
The main application entrypoint of the fallalert script!
"""

# pylint: disable=broad-except

import logging
import os
import sys
from datetime import datetime

# If running as app.py directly, we may need to import the module manually.
try:
    import fallalert  # pylint: disable=unused-import
except ImportError:
    sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir))

from fallalert.core import commands, evaluation
from fallalert.definitions import VERSION
from fallalert.helpers import arguments, config, utils
from fallalert.models.errors import ConfigError, DatasetError, FallAlertError, FeatureConfigError, ProtocolError, SinkError
from fallalert.models.labels import ExitCode

COMMANDS = {
    "ingest": commands.cmd_ingest,
    "features": commands.cmd_features,
    "train": commands.cmd_train,
    "search": commands.cmd_search,
    "eval-activity": evaluation.cmd_eval_activity,
    "calibrate-fall": commands.cmd_calibrate_fall,
    "eval-fall": evaluation.cmd_eval_fall,
    "simulate": commands.cmd_simulate,
    "serve": commands.cmd_serve,
    "eval-prior": evaluation.cmd_eval_prior,
}


def exit_code_for(error: Exception) -> ExitCode:
    """Maps a failure to the exit code of its class."""
    if isinstance(error, (ConfigError, FeatureConfigError)):
        return ExitCode.USAGE
    if isinstance(error, (DatasetError, FileNotFoundError)):
        return ExitCode.DATA
    if isinstance(error, (ProtocolError, SinkError, OSError)):
        return ExitCode.NETWORK
    return ExitCode.DATA


def run(sysargs=None) -> int:
    """The main script runner - everything starts here!

    Args:
        sysargs: command line arguments (None reads sys.argv)

    Returns:
        the process exit code
    """
    args = arguments.parse_arguments(sysargs)

    # Setup the logging for this script run (console, file, etc)
    utils.setup_logging(args)

    try:
        settings = config.load_config(args.config)
        run_config = evaluation.RunConfig.from_arguments(args, settings)
    except (FallAlertError, OSError) as e:
        logging.error("Invalid configuration: %s", e)
        return int(ExitCode.USAGE)

    # Log script start lines
    logging.info("#" * 80)
    logging.info("New instance of fallalert (V%s) started - command %s.", VERSION, args.command)
    logging.info("TIME: %s", datetime.now())
    logging.info("ARGS - seed: %s, out: %s, workers: %s, config: %s", run_config.seed, run_config.out_dir, run_config.workers, args.config)
    logging.info("DATA - dataset: %s, remap: %s, synthetic: %s", run_config.dataset, run_config.remap, run_config.synthetic)
    logging.info("OPTIONS - %s", run_config.options)
    logging.info("%s\n", "#" * 80)

    try:
        status = COMMANDS[args.command](run_config)
    except (FallAlertError, OSError, ValueError) as e:
        status = exit_code_for(e)
        logging.error("%s failed (%s): %s", args.command, status.name, e)
        return int(status)

    logging.info("%s finished with %s.", args.command, status.name)
    return int(status)
