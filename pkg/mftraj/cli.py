"""Command-line entry point."""

from __future__ import annotations

import argparse
from collections.abc import Mapping, Sequence
from dataclasses import fields
import logging
import os

import colorlog

from . import numpy_supported
from .config import load_config_file
from .const import (
    DOMAIN,
    ENV_LOG_LEVEL,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    LOG_LEVELS,
    VERSION,
)
from .exceptions import ConfigError, MFTrajError, ParseError
from .model import ModelConfig
from .services import COMMAND_MAP, run_command

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s"

FLAG_ALIASES = {
    "learning_rate": ["--lr"],
    "batch_size": ["--batch"],
    "radius_m": ["--radius"],
    "verbose": ["-v"],
}
BOOLEAN_SETTINGS = {
    "verbose",
    "retrain",
    "features",
    "adjacency",
    *(field.name for field in fields(ModelConfig) if isinstance(field.default, bool)),
}


def _setting_names(schema) -> list[str]:
    return [str(marker) for marker in schema.schema]


def build_parser() -> argparse.ArgumentParser:
    """One subcommand per COMMAND_MAP entry, one flag per schema key."""
    parser = argparse.ArgumentParser(
        prog=DOMAIN, description="Multi-feature trajectory prediction"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMAND_MAP.items():
        subparser = subparsers.add_parser(name, help=command["help"])
        for setting in _setting_names(command["schema"]):
            options = [f"--{setting.replace('_', '-')}", *FLAG_ALIASES.get(setting, [])]
            if setting in BOOLEAN_SETTINGS:
                subparser.add_argument(
                    *options,
                    dest=setting,
                    action=argparse.BooleanOptionalAction,
                    default=argparse.SUPPRESS,
                )
            else:
                subparser.add_argument(*options, dest=setting, default=argparse.SUPPRESS)
    return parser


def log_level(flags: Mapping, environ: Mapping = os.environ) -> int:
    """Level from --verbose, then --log-level, then MFTRAJ_LOG, else info."""
    if flags.get("verbose"):
        return logging.DEBUG
    name = flags.get("log_level") or environ.get(ENV_LOG_LEVEL, "info")
    if name.lower() not in LOG_LEVELS:
        _LOGGER.warning(
            "Ignoring log level %s; expected one of %s", name, list(LOG_LEVELS)
        )
        return logging.INFO
    return getattr(logging, LOG_LEVELS[name.lower()])


def setup_logging(level: int) -> None:
    """Install the coloured stream handler on the package logger."""
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    logger = logging.getLogger(DOMAIN)
    logger.handlers[:] = [handler]
    logger.setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; return the process exit code."""
    flags = vars(build_parser().parse_args(argv))
    command = flags.pop("command")
    setup_logging(log_level(flags))
    if not numpy_supported():
        return EXIT_RUNTIME_ERROR
    try:
        file_values = {}
        if "config" in flags:
            try:
                file_values = load_config_file(flags["config"])
            except ParseError as err:
                raise ConfigError(f"{flags['config']}: {err}") from err
        run_command(command, file_values, flags)
    except ConfigError as err:
        _LOGGER.error("Configuration error: %s", err)
        return EXIT_CONFIG_ERROR
    except (MFTrajError, OSError) as err:
        _LOGGER.error("%s failed: %s", command, err)
        return EXIT_RUNTIME_ERROR
    except Exception as err:  # pylint: disable=broad-except
        _LOGGER.error("%s failed unexpectedly: %s: %s", command, type(err).__name__, err)
        _LOGGER.debug("Traceback of the failure", exc_info=True)
        return EXIT_RUNTIME_ERROR
    return EXIT_OK
