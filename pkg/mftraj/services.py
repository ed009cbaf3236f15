"""MFTraj commands: one handler and one schema per CLI subcommand."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import asdict
import logging
from pathlib import Path
import sys

from . import config as cfg
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .const import DEFAULT_SAMPLE_RATE_HZ, SEGMENT_PRESETS
from .diagnostics import scene_diagnostics, write_adjacency_dump, write_feature_dump
from .evaluation import ablation_matrix, evaluate, robustness_sweep, write_report_csv
from .exceptions import ConfigError
from .model import MFTrajModel, ModelConfig, predict, write_predictions_csv
from .scene import (
    SyntheticSpec,
    TrajectoryScene,
    generate_synthetic,
    load_scenes,
    save_scenes,
    segment,
)
from .trainer import train, write_loss_curve

_LOGGER = logging.getLogger(__name__)

SPLIT_SUFFIXES = {"val": ".val.csv", "test": ".test.csv"}


def sidecar(path: str | Path, suffix: str) -> Path:
    """``path`` with ``suffix`` appended to its full name."""
    return Path(f"{path}{suffix}")


def echo_settings(
    settings: Mapping, out: str | Path | None = None, writer: Callable[[str], object] | None = None
) -> str:
    """Print the effective configuration and store it next to ``out``."""
    text = cfg.format_config_text(settings)
    (writer or sys.stdout.write)(text)
    if out is not None:
        sidecar(out, ".config.txt").write_text(text, encoding="utf-8")
    return text


def apply_preset(settings: dict) -> dict:
    """Default t_h, t_f and the sample rate from the segmentation preset."""
    preset = settings.get("preset")
    if preset is None:
        return settings
    values = SEGMENT_PRESETS[preset]
    settings.setdefault("t_h", values["obs_frames"] - 1)
    settings.setdefault("t_f", values["pred_frames"])
    settings.setdefault("sample_rate_hz", values["sample_rate_hz"])
    return settings


def model_config(settings: Mapping) -> ModelConfig:
    """ModelConfig from the model keys present in ``settings``."""
    keys = cfg.model_keys()
    return ModelConfig.from_mapping(
        {key: value for key, value in settings.items() if key in keys}
    )


def load_data(
    settings: Mapping, config: ModelConfig, key: str = "data", labeled: bool = True
) -> list[TrajectoryScene]:
    """Load scenes for a model, segmenting full tracks when a preset is set."""
    path = settings.get(key)
    if path is None:
        raise ConfigError(f"Missing required setting {key!r}")
    if not Path(path).is_file():
        raise ConfigError(f"Data file {path} does not exist")
    preset = settings.get("preset")
    if preset is not None:
        values = SEGMENT_PRESETS[preset]
        tracks = load_scenes(path, sample_rate_hz=values["sample_rate_hz"])
        scenes = segment(
            tracks,
            values["obs_frames"],
            values["pred_frames"] if labeled else 0,
            settings.get("stride", 1),
        )
    else:
        scenes = load_scenes(
            path,
            sample_rate_hz=config.sample_rate_hz,
            future_frames=config.t_f if labeled else 0,
        )
    _LOGGER.info("Loaded %d scenes from %s", len(scenes), path)
    return scenes


def load_model(settings: Mapping) -> MFTrajModel:
    """Rebuild the model stored at settings["checkpoint"]."""
    model = load_checkpoint(settings["checkpoint"]).to_model()
    _LOGGER.info(
        "Loaded %s with %d parameters", settings["checkpoint"], model.parameter_count()
    )
    return model


def checkpoint_settings(settings: Mapping, config: ModelConfig) -> dict:
    """Settings with the model part taken from a checkpoint's config.

    Model flags that disagree with the checkpoint are logged and ignored;
    ``seed`` stays a run setting since it seeds the frame drops.
    """
    stored = asdict(config)
    ignored = cfg.model_keys() - {"seed"}
    for key in sorted(ignored & settings.keys()):
        if settings[key] != stored[key]:
            _LOGGER.warning(
                "Ignoring %s=%s; the checkpoint was trained with %s",
                key,
                settings[key],
                stored[key],
            )
    effective = {key: value for key, value in stored.items() if key in ignored}
    effective.update((key, value) for key, value in settings.items() if key not in ignored)
    return effective


def cmd_generate(settings: dict) -> None:
    """Write synthetic train/val/test scene CSVs with disjoint seeds."""
    echo_settings(settings, settings["out"])
    seed = int(settings.get("seed", 0))
    counts = {
        "train": settings["scenes"],
        "val": round(settings["scenes"] * settings["val_fraction"]),
        "test": round(settings["scenes"] * settings["test_fraction"]),
    }
    out = Path(settings["out"])
    for offset, (split, count) in enumerate(counts.items()):
        if split != "train" and not count:
            continue
        spec = SyntheticSpec(
            settings["kind"],
            scenes=count,
            agents=settings["agents"],
            history_frames=settings["history_frames"],
            future_frames=settings["future_frames"],
            sample_rate_hz=settings.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ),
            noise_std=settings["noise_std"],
            seed=3 * seed + offset,
            speed_jitter=settings["speed_jitter"],
        )
        path = out if split == "train" else out.with_suffix(SPLIT_SUFFIXES[split])
        save_scenes(generate_synthetic(spec), path)


def cmd_train(settings: dict) -> None:
    """Train a model; write the checkpoint, its loss curve and the effective config."""
    apply_preset(settings)
    config = model_config(settings)
    echo_settings({**settings, **asdict(config)}, settings["out"])
    scenes = load_data(settings, config)
    val_scenes = load_data(settings, config, "val_data") if settings.get("val_data") else []
    result = train(scenes, config, val_scenes=val_scenes, workers=settings["workers"])
    sys.stdout.write(f"parameters = {result.model.parameter_count()}\n")
    save_checkpoint(Checkpoint.from_training(result), settings["out"])
    write_loss_curve(result.curve, sidecar(settings["out"], ".loss.csv"))


def cmd_eval(settings: dict) -> None:
    """Evaluate a checkpoint and write a one-row report."""
    model = load_model(settings)
    settings = checkpoint_settings(settings, model.config)
    echo_settings(settings, settings["out"])
    scenes = load_data(settings, model.config)
    report = evaluate(
        model,
        scenes,
        Path(settings["checkpoint"]).stem,
        settings["miss_threshold"],
        settings["horizons"],
        workers=settings["workers"],
    )
    write_report_csv([report], settings["out"])


def cmd_predict(settings: dict) -> None:
    """Write eval-mode predictions, optionally on drop-then-impute inputs."""
    model = load_model(settings)
    settings = checkpoint_settings(settings, model.config)
    echo_settings(settings, settings["out"])
    scenes = load_data(settings, model.config, labeled=False)
    predictions = predict(
        model,
        scenes,
        drop=settings["drop"],
        seed=cfg.derive_seed(settings.get("seed", 0), "drops"),
        workers=settings["workers"],
    )
    write_predictions_csv(scenes, predictions, settings["out"])


def cmd_ablate(settings: dict) -> None:
    """Train and evaluate ablation models A..F on one split."""
    apply_preset(settings)
    config = model_config(settings)
    echo_settings({**settings, **asdict(config)}, settings["out"])
    reports = ablation_matrix(
        load_data(settings, config),
        config,
        train_fraction=settings["train_fraction"],
        miss_threshold_m=settings["miss_threshold"],
        horizons_s=settings["horizons"],
        workers=settings["workers"],
    )
    write_report_csv(reports, settings["out"])


def cmd_robustness(settings: dict) -> None:
    """Sweep drop counts over seeds and write one row per drop count."""
    model = load_model(settings)
    settings = checkpoint_settings(settings, model.config)
    echo_settings(settings, settings["out"])
    scenes = load_data(settings, model.config)
    retrain_scenes = None
    if settings["retrain"]:
        if not settings.get("train_data"):
            raise ConfigError("retrain needs train_data")
        retrain_scenes = load_data(settings, model.config, "train_data")
    reports = robustness_sweep(
        model,
        scenes,
        settings["drops"],
        settings["seeds"],
        retrain_scenes,
        settings["miss_threshold"],
        settings["horizons"],
        settings["workers"],
    )
    write_report_csv(reports, settings["out"])


def cmd_dump(settings: dict) -> None:
    """Dump behavior features and/or per-frame adjacency of the scenes."""
    apply_preset(settings)
    config = model_config(settings)
    echo_settings(settings, settings["out"])
    scenes = load_data(settings, config)
    for scene in scenes:
        _LOGGER.debug("Scene diagnostics: %s", scene_diagnostics(scene))
    both = not settings["features"] and not settings["adjacency"]
    if settings["features"] or both:
        write_feature_dump(
            scenes, sidecar(settings["out"], ".features.csv"), config.behavior_config()
        )
    if settings["adjacency"] or both:
        write_adjacency_dump(scenes, sidecar(settings["out"], ".adjacency.csv"), config.radius_m)


COMMAND_MAP = {
    "generate": {
        "handler": cmd_generate,
        "schema": cfg.GENERATE_SCHEMA,
        "help": "Generate synthetic scene CSVs",
    },
    "train": {
        "handler": cmd_train,
        "schema": cfg.TRAIN_SCHEMA,
        "help": "Train a model and write a checkpoint",
    },
    "eval": {
        "handler": cmd_eval,
        "schema": cfg.EVAL_SCHEMA,
        "help": "Evaluate a checkpoint",
    },
    "predict": {
        "handler": cmd_predict,
        "schema": cfg.PREDICT_SCHEMA,
        "help": "Write predicted trajectories",
    },
    "ablate": {
        "handler": cmd_ablate,
        "schema": cfg.ABLATE_SCHEMA,
        "help": "Train and evaluate ablation models A..F",
    },
    "robustness": {
        "handler": cmd_robustness,
        "schema": cfg.ROBUSTNESS_SCHEMA,
        "help": "Missing-frame robustness sweep",
    },
    "dump": {
        "handler": cmd_dump,
        "schema": cfg.DUMP_SCHEMA,
        "help": "Dump behavior features and proximity graphs",
    },
}


def run_command(name: str, file_values: Mapping, flag_values: Mapping) -> None:
    """Merge settings, validate them against the command schema and run it."""
    command = COMMAND_MAP[name]
    settings = cfg.validate(command["schema"], cfg.merge_settings(file_values, flag_values))
    _LOGGER.debug("Running %s with %s", name, settings)
    command["handler"](settings)
