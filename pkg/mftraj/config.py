"""Configuration schemas, flat config files and seed streams."""

from __future__ import annotations

from collections.abc import Mapping
import logging
from pathlib import Path

import numpy as np
import voluptuous as vol

from .const import (
    ABLATION_FLAGS,
    DEFAULT_BEHAVIOR_HIDDEN,
    DEFAULT_DROPS,
    DEFAULT_HORIZONS_S,
    DEFAULT_MISS_THRESHOLD_M,
    DEFAULT_NOISE_STD_M,
    DEFAULT_POSITION_HIDDEN,
    DEFAULT_SWEEP_SEEDS,
    DEFAULT_TRAIN_FRACTION,
    LOG_LEVELS,
    SCENARIO_KINDS,
    SEED_STREAMS,
    SEGMENT_PRESETS,
)
from .exceptions import ConfigError, ParseError

_LOGGER = logging.getLogger(__name__)

DTYPES = ["float64", "float32"]


def _positive(kind):
    return vol.All(vol.Coerce(kind), vol.Range(min=kind(0), min_included=False))


def _non_negative(kind):
    return vol.All(vol.Coerce(kind), vol.Range(min=kind(0)))


def _at_least_one():
    return vol.All(vol.Coerce(int), vol.Range(min=1))


def _fraction(value):
    return vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))(value)


def comma_list(kind):
    """Accept a list or a comma separated string of ``kind`` values."""

    def coerce(value):
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        try:
            return [kind(str(part).strip()) for part in value]
        except (TypeError, ValueError) as err:
            raise vol.Invalid(f"Expected a comma separated list of {kind.__name__}") from err

    return coerce


def divides(numerator: str, denominator: str):
    """Ensure config[denominator] divides config[numerator]."""

    def check(config):
        if config.get(numerator) is None or config.get(denominator) is None:
            return config
        if config[numerator] % config[denominator]:
            raise vol.Invalid(
                f"{denominator}={config[denominator]} must divide {numerator}={config[numerator]}"
            )
        return config

    return check


def _attention_width(config):
    heads = config.get("attention_heads")
    if heads is None:
        return config
    position = config.get("position_hidden", DEFAULT_POSITION_HIDDEN)
    behavior = (
        0
        if config.get("disable_behavior")
        else config.get("behavior_hidden", DEFAULT_BEHAVIOR_HIDDEN)
    )
    if (position + behavior) % heads:
        raise vol.Invalid(
            f"attention_heads={heads} must divide the interaction width {position + behavior}"
        )
    return config


MODEL_FIELDS = {
    vol.Optional("t_h"): _at_least_one(),
    vol.Optional("t_f"): _at_least_one(),
    vol.Optional("sample_rate_hz"): _positive(float),
    vol.Optional("radius_m"): _positive(float),
    vol.Optional("k_max"): _at_least_one(),
    vol.Optional("alpha_frac"): vol.All(
        vol.Coerce(float), vol.Range(min=0.0, max=1.0, max_included=False)
    ),
    vol.Optional("katz_beta"): _positive(float),
    vol.Optional("instantaneous_degree"): vol.Boolean(),
    vol.Optional("behavior_hidden"): _at_least_one(),
    vol.Optional("position_hidden"): _at_least_one(),
    vol.Optional("latent_dim"): _at_least_one(),
    vol.Optional("attention_heads"): _at_least_one(),
    vol.Optional("proj_dim"): vol.All(vol.Coerce(int), vol.Range(min=1, msg="proj_dim must be at least 1")),
    vol.Optional("max_agents"): _at_least_one(),
    vol.Optional("gn_groups"): _at_least_one(),
    vol.Optional("decoder_hidden"): _at_least_one(),
    vol.Optional("gcn_layers"): _at_least_one(),
    vol.Optional("lstm_layers"): _at_least_one(),
    vol.Optional("beta_kl"): _non_negative(float),
    vol.Optional("epochs"): _non_negative(int),
    vol.Optional("learning_rate"): _positive(float),
    vol.Optional("learning_rate_final"): _positive(float),
    vol.Optional("lr_decay_fraction"): _fraction,
    vol.Optional("batch_size"): _at_least_one(),
    vol.Optional("seed"): _non_negative(int),
    vol.Optional("dtype"): vol.In(DTYPES),
    **{vol.Optional(flag): vol.Boolean() for flag in ABLATION_FLAGS},
}

MODEL_CONFIG_SCHEMA = vol.All(
    vol.Schema(MODEL_FIELDS),
    divides("decoder_hidden", "gn_groups"),
    _attention_width,
)

RUN_FIELDS = {
    vol.Optional("config"): str,
    vol.Optional("workers", default=1): _at_least_one(),
    vol.Optional("verbose", default=False): vol.Boolean(),
    vol.Optional("log_level"): vol.In(list(LOG_LEVELS)),
}

GENERATE_FIELDS = {
    vol.Required("out"): str,
    vol.Optional("kind", default=SCENARIO_KINDS[0]): vol.In(SCENARIO_KINDS),
    vol.Optional("scenes", default=100): _non_negative(int),
    vol.Optional("agents", default=3): _non_negative(int),
    vol.Optional("history_frames", default=20): _at_least_one(),
    vol.Optional("future_frames", default=30): _non_negative(int),
    vol.Optional("noise_std", default=DEFAULT_NOISE_STD_M): _non_negative(float),
    vol.Optional("speed_jitter", default=0.0): _non_negative(float),
    vol.Optional("val_fraction", default=0.1): _fraction,
    vol.Optional("test_fraction", default=0.1): _fraction,
}

DATA_FIELDS = {
    vol.Required("data"): str,
    vol.Optional("preset"): vol.In(list(SEGMENT_PRESETS)),
    vol.Optional("stride", default=1): _at_least_one(),
}

EVAL_FIELDS = {
    vol.Optional("miss_threshold", default=DEFAULT_MISS_THRESHOLD_M): _non_negative(float),
    vol.Optional("horizons", default=DEFAULT_HORIZONS_S): comma_list(float),
}

SWEEP_FIELDS = {
    vol.Optional("drops", default=DEFAULT_DROPS): comma_list(int),
    vol.Optional("seeds", default=DEFAULT_SWEEP_SEEDS): comma_list(int),
    vol.Optional("retrain", default=False): vol.Boolean(),
    vol.Optional("train_data"): str,
}


def _command_schema(*groups: Mapping) -> vol.Schema:
    fields = dict(RUN_FIELDS)
    fields.update(MODEL_FIELDS)
    for group in groups:
        fields.update(group)
    return vol.Schema(fields)


GENERATE_SCHEMA = _command_schema(GENERATE_FIELDS)
TRAIN_SCHEMA = _command_schema(
    DATA_FIELDS,
    {
        vol.Required("out"): str,
        vol.Optional("val_data"): str,
    },
)
EVAL_SCHEMA = _command_schema(
    DATA_FIELDS, EVAL_FIELDS, {vol.Required("checkpoint"): str, vol.Required("out"): str}
)
PREDICT_SCHEMA = _command_schema(
    DATA_FIELDS,
    {
        vol.Required("checkpoint"): str,
        vol.Required("out"): str,
        vol.Optional("drop", default=0): _non_negative(int),
    },
)
ABLATE_SCHEMA = _command_schema(
    DATA_FIELDS,
    EVAL_FIELDS,
    {
        vol.Required("out"): str,
        vol.Optional("train_fraction", default=DEFAULT_TRAIN_FRACTION): _fraction,
    },
)
ROBUSTNESS_SCHEMA = _command_schema(
    DATA_FIELDS,
    EVAL_FIELDS,
    SWEEP_FIELDS,
    {vol.Required("checkpoint"): str, vol.Required("out"): str},
)
DUMP_SCHEMA = _command_schema(
    DATA_FIELDS,
    {
        vol.Required("out"): str,
        vol.Optional("features", default=False): vol.Boolean(),
        vol.Optional("adjacency", default=False): vol.Boolean(),
    },
)


def validate(schema, mapping: Mapping) -> dict:
    """Run a voluptuous schema, converting failures to ConfigError."""
    try:
        return schema(dict(mapping))
    except vol.Invalid as err:
        raise ConfigError(f"Invalid configuration: {err}") from err


def model_keys() -> set[str]:
    """Names accepted by ModelConfig."""
    return {str(key) for key in MODEL_FIELDS}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        key = key.strip()
        if not separator or not key:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=number)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line=number)
        values[key] = value.strip()
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Cannot read config file {path}: {err}") from err
    values = parse_config_text(text)
    _LOGGER.debug("Read %d settings from %s", len(values), path)
    return values


def format_config_text(values: Mapping) -> str:
    """Render sorted ``key = value`` lines that parse back to the same values."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if value is None:
            continue
        if isinstance(value, list | tuple):
            text = ",".join(repr(item) for item in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = value
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def merge_settings(file_values: Mapping, flag_values: Mapping) -> dict:
    """Layer flags over config-file values, logging every override."""
    merged = dict(file_values)
    for key, value in flag_values.items():
        if value is None:
            continue
        if key in file_values and str(file_values[key]) != str(value):
            _LOGGER.info(
                "Flag %s=%s overrides config file value %s", key, value, file_values[key]
            )
        merged[key] = value
    return merged


def derive_seed(root_seed: int, stream: str) -> int:
    """Independent deterministic seed for a subsystem of the root seed."""
    if stream not in SEED_STREAMS:
        raise ConfigError(f"Unknown seed stream {stream!r}")
    sequence = np.random.SeedSequence([int(root_seed), SEED_STREAMS[stream]])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])
