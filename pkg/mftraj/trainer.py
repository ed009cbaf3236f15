"""Adam training loop with deterministic per-scene gradient reduction."""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .autodiff import Tape
from .behavior import FeatureStandardizer
from .config import derive_seed
from .const import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    FLOAT_FORMAT,
    LOSS_CURVE_COLUMNS,
)
from .exceptions import InputError, TrainingError
from .model import MODE_EVAL, MODE_TRAIN, MFTrajModel, ModelConfig, PreparedScene
from .scene import TrajectoryScene

_LOGGER = logging.getLogger(__name__)


class Adam:
    """Adam optimizer over a fixed, ordered list of named parameters."""

    def __init__(
        self,
        named_parameters: Sequence[tuple[str, object]],
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        epsilon: float = ADAM_EPSILON,
    ) -> None:
        """Initialize zero moments for every parameter."""
        self.names = [name for name, _ in named_parameters]
        self.parameters = [tensor for _, tensor in named_parameters]
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first = [np.zeros_like(tensor.values) for tensor in self.parameters]
        self.second = [np.zeros_like(tensor.values) for tensor in self.parameters]

    def step(self, gradients: Sequence[np.ndarray], learning_rate: float) -> None:
        """Apply one update in place."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for index, (tensor, grad) in enumerate(zip(self.parameters, gradients)):
            self.first[index] = self.beta1 * self.first[index] + (1.0 - self.beta1) * grad
            self.second[index] = self.beta2 * self.second[index] + (1.0 - self.beta2) * grad**2
            update = (self.first[index] / correction1) / (
                np.sqrt(self.second[index] / correction2) + self.epsilon
            )
            tensor.values = (tensor.values - learning_rate * update).astype(tensor.values.dtype)

    def state(self) -> dict[str, np.ndarray]:
        """Moments by parameter name."""
        state = {}
        for name, first, second in zip(self.names, self.first, self.second):
            state[f"adam.m.{name}"] = first
            state[f"adam.v.{name}"] = second
        return state

    def load_state(self, state: dict[str, np.ndarray], step_count: int) -> None:
        """Restore moments saved by state()."""
        for index, name in enumerate(self.names):
            if f"adam.m.{name}" in state:
                self.first[index] = np.array(state[f"adam.m.{name}"])
                self.second[index] = np.array(state[f"adam.v.{name}"])
        self.step_count = step_count


@dataclass(frozen=True)
class EpochRecord:
    """One row of the loss curve."""

    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingResult:
    """Trained model, its optimizer and the loss curve."""

    model: MFTrajModel
    optimizer: Adam
    curve: list[EpochRecord] = field(default_factory=list)

    @property
    def step(self) -> int:
        """Optimizer steps taken."""
        return self.optimizer.step_count

    @property
    def final_loss(self) -> float:
        """Train loss of the last epoch (NaN when no epoch ran)."""
        return self.curve[-1].train_loss if self.curve else math.nan


def learning_rate_at(config: ModelConfig, epoch: int, epochs: int) -> float:
    """Step schedule: initial rate until the decay fraction of epochs, then final rate."""
    boundary = math.floor(config.lr_decay_fraction * epochs)
    return config.learning_rate if epoch < boundary else config.learning_rate_final


def scene_gradients(
    model: MFTrajModel, prepared: PreparedScene, rng: np.random.Generator
) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients of one scene on a private tape."""
    parameters = model.parameters()
    with Tape() as tape:
        result = model.forward(prepared, MODE_TRAIN, rng)
        loss = model.loss(result, prepared.future)
        gradients = tape.gradients(loss, parameters)
    return loss.item(), gradients


def evaluation_loss(model: MFTrajModel, prepared: Sequence[PreparedScene]) -> float:
    """Mean eval-mode loss (NaN for an empty set)."""
    if not prepared:
        return math.nan
    losses = [model.loss(model.forward(item, MODE_EVAL), item.future).item() for item in prepared]
    return float(np.mean(losses))


def _prepare_all(model: MFTrajModel, scenes: Sequence[TrajectoryScene]) -> list[PreparedScene]:
    prepared = [model.prepare(scene) for scene in scenes]
    unlabeled = [item.scene_id for item in prepared if item.future is None]
    if unlabeled:
        raise InputError(f"Scenes without a ground-truth future: {unlabeled[:5]}")
    return prepared


def train(
    scenes: Sequence[TrajectoryScene],
    config: ModelConfig,
    epochs: int | None = None,
    val_scenes: Sequence[TrajectoryScene] = (),
    workers: int = 1,
) -> TrainingResult:
    """Train a fresh model on ``scenes``.

    The behavior standardizer is fitted on the training scenes first. Batches
    are visited in a seeded order; per-scene gradients are summed in scene
    order and averaged, so results do not depend on ``workers``.
    """
    if not scenes:
        raise InputError("Training set is empty")
    epochs = config.epochs if epochs is None else epochs
    model = MFTrajModel(config)
    prepared = _prepare_all(model, scenes)
    if not config.disable_behavior:
        model.standardizer = FeatureStandardizer.fit(
            (item.behavior, item.present) for item in prepared
        )
    validation = _prepare_all(model, val_scenes) if val_scenes else []
    optimizer = Adam(list(model.named_parameters()))
    result = TrainingResult(model, optimizer)
    train_seed = derive_seed(config.seed, "train")
    order_rng = np.random.default_rng(train_seed)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    _LOGGER.info(
        "Training %d parameters on %d scenes for %d epochs",
        model.parameter_count(),
        len(prepared),
        epochs,
    )
    try:
        for epoch in range(epochs):
            lr = learning_rate_at(config, epoch, epochs)
            order = order_rng.permutation(len(prepared))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = order[start : start + config.batch_size]
                jobs = [
                    (prepared[index], np.random.default_rng([train_seed, epoch, int(index)]))
                    for index in batch
                ]
                if executor is None:
                    outputs = [scene_gradients(model, item, rng) for item, rng in jobs]
                else:
                    outputs = list(
                        executor.map(lambda job: scene_gradients(model, *job), jobs)
                    )
                batch_losses = [loss for loss, _ in outputs]
                if not all(math.isfinite(loss) for loss in batch_losses):
                    raise TrainingError(
                        f"non-finite loss in epoch {epoch}", optimizer.step_count + 1
                    )
                totals = [np.zeros_like(tensor.values) for tensor in optimizer.parameters]
                for _, gradients in outputs:
                    for total, grad in zip(totals, gradients):
                        total += grad
                optimizer.step([total / len(outputs) for total in totals], lr)
                losses.extend(batch_losses)
                _LOGGER.debug(
                    "Step %d: batch loss %.6f", optimizer.step_count, np.mean(batch_losses)
                )
            record = EpochRecord(
                epoch + 1, float(np.mean(losses)), evaluation_loss(model, validation), lr
            )
            result.curve.append(record)
            _LOGGER.info(
                "Epoch %d/%d train_loss=%.6f val_loss=%.6f lr=%g",
                record.epoch,
                epochs,
                record.train_loss,
                record.val_loss,
                lr,
            )
    finally:
        if executor is not None:
            executor.shutdown()
    return result


def write_loss_curve(curve: Sequence[EpochRecord], path: str | Path) -> None:
    """Write the (epoch, train_loss, val_loss, lr) CSV."""
    table = pd.DataFrame(
        [(r.epoch, r.train_loss, r.val_loss, r.lr) for r in curve], columns=LOSS_CURVE_COLUMNS
    )
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
