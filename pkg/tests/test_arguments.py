""" Tests for 'helpers.arguments' module. """

# pylint: disable=protected-access

import logging

import pytest

from fallalert.helpers import arguments, utils


def test_invalid_arguments():
    with pytest.raises(SystemExit):
        assert arguments.parse_arguments(["--invalidargument"])
    with pytest.raises(SystemExit):
        assert arguments.parse_arguments(["ingest", "--synthetic", "--invalidkey", "value"])


def test_command_required():
    with pytest.raises(SystemExit):
        arguments.parse_arguments([])


def test_dataset_source_required():
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["ingest"])
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["ingest", "--synthetic", "--dataset", "data.csv"])


def test_no_optional_arguments():
    args = arguments.parse_arguments(["eval-fall", "--synthetic"])
    default_args = [args.seed, args.config, args.out, args.workers, args.console, args.debug, args.location, args.calibration]
    assert args.command == "eval-fall"
    assert args.synthetic
    assert not any(default_args)


def test_invalid_choices():
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["train", "--synthetic", "--family", "SVM"])
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["features", "--synthetic", "--location", "LEFT_KNEE"])


def test_train_params_repeat():
    args = arguments.parse_arguments(["train", "--synthetic", "--param", "k=3", "--param", "max_depth=4"])
    assert args.param == ["k=3", "max_depth=4"]
    assert utils.parse_assignments(args.param) == {"k": 3, "max_depth": 4}


def test_simulate_targets_exclusive():
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["simulate", "--synthetic", "--server", "127.0.0.1:9", "--dry-run", "out.jsonl"])


def test_serve_needs_model():
    with pytest.raises(SystemExit):
        arguments.parse_arguments(["serve"])
    args = arguments.parse_arguments(["serve", "--model", "model.json", "--bind", ":9000"])
    assert args.model == "model.json"
    assert args.bind == ":9000"


def test_env_variables_replace_arguments(monkeypatch):
    monkeypatch.setenv("FALLALERT_BIND", "0.0.0.0:7000")
    monkeypatch.setenv("FALLALERT_WORKERS", "3")
    monkeypatch.setenv("FALLALERT_DEBUG", "TRUE")
    args = arguments.parse_arguments(["serve", "--model", "m.json", "--bind", "127.0.0.1:1", "--workers", "1"])

    assert args.bind == "0.0.0.0:7000"
    assert args.workers == 3
    assert args.debug


def test_env_server_ignored_for_dry_run(monkeypatch):
    monkeypatch.setenv("FALLALERT_SERVER", "10.0.0.1:7000")
    args = arguments.parse_arguments(["simulate", "--synthetic", "--dry-run", "payloads.jsonl"])
    assert args.server is None

    args = arguments.parse_arguments(["simulate", "--synthetic"])
    assert args.server == "10.0.0.1:7000"


def test_get_arguments_returns_parsed():
    args = arguments.parse_arguments(["ingest", "--synthetic", "--seed", "9"])
    assert arguments.get_arguments() is args
    assert arguments.get_arguments().seed == 9


def test_debug_logging():
    args = arguments.parse_arguments(["ingest", "--synthetic", "--debug", "--console"])
    utils.setup_logging(args)
    assert logging.getLogger().getEffectiveLevel() == logging.DEBUG


def test_default_logging():
    args = arguments.parse_arguments(["ingest", "--synthetic", "--console"])
    utils.setup_logging(args)
    assert logging.getLogger().getEffectiveLevel() == logging.INFO
