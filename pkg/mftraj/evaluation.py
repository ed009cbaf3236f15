"""Trajectory metrics, robustness sweeps and the ablation matrix."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import hashlib
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .config import derive_seed
from .const import (
    ABLATION_MODELS,
    DEFAULT_DROPS,
    DEFAULT_HORIZONS_S,
    DEFAULT_MISS_THRESHOLD_M,
    DEFAULT_SWEEP_SEEDS,
    DEFAULT_TRAIN_FRACTION,
    FLOAT_FORMAT,
    REPORT_COLUMNS,
)
from .exceptions import BoundsError, InputError, ShapeError
from .model import MFTrajModel, ModelConfig, predict, prepare_for_prediction
from .scene import TrajectoryScene
from .trainer import train

_LOGGER = logging.getLogger(__name__)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeError(f"metrics: prediction {pred.shape} and ground truth {gt.shape}")
    return pred, gt


def ade(pred, gt) -> float:
    """Mean Euclidean error over the prediction steps."""
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def fde(pred, gt) -> float:
    """Euclidean error at the final step."""
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm(pred[-1] - gt[-1]))


def miss_rate(
    preds: Sequence, gts: Sequence, threshold_m: float = DEFAULT_MISS_THRESHOLD_M
) -> float:
    """Fraction of scenes whose final-step error exceeds ``threshold_m``."""
    if len(preds) == 0:
        raise InputError("miss_rate: no scenes")
    if len(preds) != len(gts):
        raise ShapeError(f"miss_rate: {len(preds)} predictions for {len(gts)} ground truths")
    misses = sum(fde(pred, gt) > threshold_m for pred, gt in zip(preds, gts))
    return misses / len(preds)


def horizon_index(horizon_s: float, sample_rate_hz: float) -> int:
    """Prediction step closest to ``horizon_s`` seconds (0-based)."""
    return int(round(horizon_s * sample_rate_hz)) - 1


def rmse_by_horizon(
    preds: Sequence,
    gts: Sequence,
    sample_rate_hz: float,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
) -> dict[float, float]:
    """RMSE over both coordinates and all scenes at each horizon."""
    if len(preds) == 0:
        raise InputError("rmse_by_horizon: no scenes")
    pairs = [_pair(pred, gt) for pred, gt in zip(preds, gts)]
    errors = np.stack([pred - gt for pred, gt in pairs])
    steps = errors.shape[1]
    result = {}
    for horizon in horizons_s:
        index = horizon_index(horizon, sample_rate_hz)
        if not 0 <= index < steps:
            raise BoundsError(
                f"Horizon {horizon} s is step {index + 1}, outside 1..{steps}"
            )
        result[float(horizon)] = float(np.sqrt(np.mean(errors[:, index, :] ** 2)))
    return result


def horizon_column(horizon_s: float) -> str:
    """Report column name of a horizon."""
    return f"rmse_{horizon_s:g}s"


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metrics over a scene set."""

    label: str
    min_ade_m: float
    min_fde_m: float
    miss_rate: float
    rmse_by_horizon: Mapping[float, float] = field(default_factory=dict)
    scene_count: int = 0

    def as_row(self) -> dict:
        """Row keyed by report column; horizons not evaluated are NaN."""
        row = dict.fromkeys(REPORT_COLUMNS, math.nan)
        row.update(
            label=self.label,
            min_ade=self.min_ade_m,
            min_fde=self.min_fde_m,
            miss_rate=self.miss_rate,
            scene_count=self.scene_count,
        )
        for horizon, value in self.rmse_by_horizon.items():
            row[horizon_column(horizon)] = value
        return row


def report_from_predictions(
    label: str,
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    sample_rate_hz: float,
    miss_threshold_m: float = DEFAULT_MISS_THRESHOLD_M,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
) -> MetricReport:
    """Compute every metric; horizons beyond the prediction length are skipped."""
    if not preds:
        raise InputError("No scenes to evaluate")
    steps = np.asarray(preds[0]).shape[0]
    usable = [h for h in horizons_s if 0 <= horizon_index(h, sample_rate_hz) < steps]
    skipped = sorted(set(horizons_s) - set(usable))
    if skipped:
        _LOGGER.warning("Skipping horizons %s beyond %d prediction steps", skipped, steps)
    return MetricReport(
        label,
        float(np.mean([ade(pred, gt) for pred, gt in zip(preds, gts)])),
        float(np.mean([fde(pred, gt) for pred, gt in zip(preds, gts)])),
        miss_rate(preds, gts, miss_threshold_m),
        rmse_by_horizon(preds, gts, sample_rate_hz, usable) if usable else {},
        len(preds),
    )


def average_reports(label: str, reports: Sequence[MetricReport]) -> MetricReport:
    """Field-wise mean of reports over the same scene set."""
    horizons = reports[0].rmse_by_horizon.keys()
    return MetricReport(
        label,
        float(np.mean([report.min_ade_m for report in reports])),
        float(np.mean([report.min_fde_m for report in reports])),
        float(np.mean([report.miss_rate for report in reports])),
        {h: float(np.mean([report.rmse_by_horizon[h] for report in reports])) for h in horizons},
        reports[0].scene_count,
    )


def _ground_truth(scenes: Sequence[TrajectoryScene]) -> list[np.ndarray]:
    missing = [scene.scene_id for scene in scenes if scene.target_future is None]
    if missing:
        raise InputError(f"Scenes without a ground-truth future: {missing[:5]}")
    return [np.asarray(scene.target_future) for scene in scenes]


def evaluate(
    model: MFTrajModel,
    scenes: Sequence[TrajectoryScene],
    label: str = "",
    miss_threshold_m: float = DEFAULT_MISS_THRESHOLD_M,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
    drop: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> MetricReport:
    """Eval-mode metrics of a model, optionally on drop-then-impute inputs."""
    gts = _ground_truth(scenes)
    preds = predict(model, scenes, drop=drop, seed=seed, workers=workers)
    report = report_from_predictions(
        label, preds, gts, model.config.sample_rate_hz, miss_threshold_m, horizons_s
    )
    _LOGGER.info(
        "%s: minADE=%.4f minFDE=%.4f MR=%.4f over %d scenes",
        label or "eval",
        report.min_ade_m,
        report.min_fde_m,
        report.miss_rate,
        report.scene_count,
    )
    return report


def robustness_sweep(
    model: MFTrajModel,
    scenes: Sequence[TrajectoryScene],
    drops: Sequence[int] = DEFAULT_DROPS,
    seeds: Sequence[int] = DEFAULT_SWEEP_SEEDS,
    retrain_scenes: Sequence[TrajectoryScene] | None = None,
    miss_threshold_m: float = DEFAULT_MISS_THRESHOLD_M,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
    workers: int = 1,
) -> list[MetricReport]:
    """One report per drop count, averaged over drop seeds.

    By default the given model is evaluated on dropped inputs. With
    ``retrain_scenes`` a model is retrained per drop count on those scenes
    after the same drop-then-impute treatment.
    """
    if not scenes:
        raise InputError("Robustness sweep needs scenes")
    shortest = min(scene.t_h for scene in scenes)
    if drops and shortest < max(drops) + 2:
        raise BoundsError(
            f"Dropping {max(drops)} frames needs t_h >= {max(drops) + 2}, shortest scene has {shortest}"
        )
    reports = []
    for drop in drops:
        evaluated = model
        if retrain_scenes is not None and drop:
            drop_seed = derive_seed(model.config.seed, "drops")
            treated = [
                prepare_for_prediction(scene, index, drop, drop_seed)
                for index, scene in enumerate(retrain_scenes)
            ]
            _LOGGER.info("Retraining on %d scenes with %d dropped frames", len(treated), drop)
            evaluated = train(treated, model.config, workers=workers).model
        per_seed = [
            evaluate(
                evaluated,
                scenes,
                f"drop{drop}/seed{seed}",
                miss_threshold_m,
                horizons_s,
                drop=drop,
                seed=seed,
                workers=workers,
            )
            for seed in seeds
        ]
        reports.append(average_reports(f"drop{drop}", per_seed))
    return reports


def split_scenes(
    scenes: Sequence[TrajectoryScene], train_fraction: float = DEFAULT_TRAIN_FRACTION
) -> tuple[list[TrajectoryScene], list[TrajectoryScene]]:
    """Deterministic split by the SHA-1 of each scene id."""
    train_set, test_set = [], []
    for scene in scenes:
        digest = hashlib.sha1(scene.scene_id.encode("utf-8")).hexdigest()
        bucket = int(digest[:8], 16) / 0x100000000
        (train_set if bucket < train_fraction else test_set).append(scene)
    return train_set, test_set


def ablation_matrix(
    scenes: Sequence[TrajectoryScene],
    base_config: ModelConfig,
    labels: Sequence[str] = tuple(ABLATION_MODELS),
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    miss_threshold_m: float = DEFAULT_MISS_THRESHOLD_M,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
    workers: int = 1,
) -> list[MetricReport]:
    """Train and evaluate each ablation model with identical data, epochs and seed."""
    train_set, test_set = split_scenes(scenes, train_fraction)
    if not train_set or not test_set:
        raise InputError(
            f"Split of {len(scenes)} scenes left {len(train_set)} train / {len(test_set)} test"
        )

    def run(label: str) -> MetricReport:
        config = base_config.with_ablation(label)
        _LOGGER.info("Training ablation model %s", label)
        model = train(train_set, config).model
        return evaluate(model, test_set, label, miss_threshold_m, horizons_s)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(run, labels))
    return [run(label) for label in labels]


def write_report_csv(reports: Sequence[MetricReport], path: str | Path) -> None:
    """Write one row per report; horizons not evaluated are left empty."""
    table = pd.DataFrame([report.as_row() for report in reports], columns=REPORT_COLUMNS)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    _LOGGER.info("Wrote %d report rows to %s", len(table), path)
