"""MFTraj network: configuration, input preparation, forward pass, loss and prediction."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from . import config as cfg
from .autodiff import Tensor, concat, mean, smooth_l1, stack, tensor_sum
from .behavior import BehaviorConfig, FeatureStandardizer, behavior_tensor
from .const import (
    ABLATION_FLAGS,
    ABLATION_MODELS,
    BEHAVIOR_FEATURES,
    DEFAULT_ALPHA_FRAC,
    DEFAULT_ATTENTION_HEADS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BEHAVIOR_HIDDEN,
    DEFAULT_DECODER_HIDDEN,
    DEFAULT_EPOCHS,
    DEFAULT_GCN_LAYERS,
    DEFAULT_GN_GROUPS,
    DEFAULT_K_MAX,
    DEFAULT_KATZ_BETA,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LEARNING_RATE_FINAL,
    DEFAULT_LR_DECAY_FRACTION,
    DEFAULT_LSTM_LAYERS,
    DEFAULT_MAX_AGENTS,
    DEFAULT_POSITION_HIDDEN,
    DEFAULT_PROJ_DIM,
    DEFAULT_RADIUS_M,
    DEFAULT_SAMPLE_RATE_HZ,
    DEFAULT_VRNN_LATENT,
    EDGE_FEATURES,
    FLOAT_FORMAT,
    POSITION_FEATURES,
    PREDICTION_COLUMNS,
    SMOOTH_L1_BETA,
)
from .exceptions import CheckpointError, ConfigError, InputError
from .graph import build_graph
from .layers import (
    AdaptiveGCNLayer,
    GRUEncoder,
    Initializer,
    LinearAttention,
    LSTMEncoder,
    Module,
    PlainGCNLayer,
    ResidualDecoder,
    VRNNCell,
)
from .scene import TrajectoryScene, drop_frames, impute_linear

_LOGGER = logging.getLogger(__name__)

MODE_TRAIN = "train"
MODE_EVAL = "eval"


@dataclass(frozen=True)
class ModelConfig:
    """Every hyperparameter of the network and its training run."""

    t_h: int = 19
    t_f: int = 30
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    radius_m: float = DEFAULT_RADIUS_M
    k_max: int = DEFAULT_K_MAX
    alpha_frac: float = DEFAULT_ALPHA_FRAC
    katz_beta: float = DEFAULT_KATZ_BETA
    instantaneous_degree: bool = False
    behavior_hidden: int = DEFAULT_BEHAVIOR_HIDDEN
    position_hidden: int = DEFAULT_POSITION_HIDDEN
    latent_dim: int = DEFAULT_VRNN_LATENT
    attention_heads: int = DEFAULT_ATTENTION_HEADS
    proj_dim: int = DEFAULT_PROJ_DIM
    max_agents: int = DEFAULT_MAX_AGENTS
    gn_groups: int = DEFAULT_GN_GROUPS
    decoder_hidden: int = DEFAULT_DECODER_HIDDEN
    gcn_layers: int = DEFAULT_GCN_LAYERS
    lstm_layers: int = DEFAULT_LSTM_LAYERS
    beta_kl: float = 0.0
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    learning_rate_final: float = DEFAULT_LEARNING_RATE_FINAL
    lr_decay_fraction: float = DEFAULT_LR_DECAY_FRACTION
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    dtype: str = "float64"
    disable_behavior: bool = False
    absolute_coords: bool = False
    disable_interaction: bool = False
    disable_linformer: bool = False
    plain_gcn: bool = False

    def __post_init__(self) -> None:
        """Validate the complete set of values and normalize their types."""
        for name, value in cfg.validate(cfg.MODEL_CONFIG_SCHEMA, asdict(self)).items():
            object.__setattr__(self, name, value)

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> ModelConfig:
        """Build from (possibly string) values; unknown keys are rejected."""
        return cls(**cfg.validate(cfg.MODEL_CONFIG_SCHEMA, mapping))

    @classmethod
    def from_text(cls, text: str) -> ModelConfig:
        """Parse the output of to_text()."""
        return cls.from_mapping(cfg.parse_config_text(text))

    def to_text(self) -> str:
        """Sorted ``key = value`` lines that round-trip exactly."""
        return cfg.format_config_text(asdict(self))

    def with_ablation(self, label: str) -> ModelConfig:
        """Copy with the flags of an ablation model switched on (others off)."""
        if label not in ABLATION_MODELS:
            raise ConfigError(
                f"Unknown ablation model {label!r}; expected one of {list(ABLATION_MODELS)}"
            )
        flags = {flag: False for flag in ABLATION_FLAGS}
        flags.update(ABLATION_MODELS[label])
        return replace(self, **flags)

    def behavior_config(self) -> BehaviorConfig:
        """Centrality parameters."""
        return BehaviorConfig(
            self.radius_m,
            self.k_max,
            self.alpha_frac,
            self.katz_beta,
            self.instantaneous_degree,
        )

    @property
    def history_frames(self) -> int:
        """Frames per history."""
        return self.t_h + 1

    @property
    def interaction_width(self) -> int:
        """Width of the per-agent feature entering the interaction module."""
        behavior = 0 if self.disable_behavior else self.behavior_hidden
        return self.position_hidden + behavior


MODEL_CONFIG_KEYS = {field.name for field in fields(ModelConfig)}


def position_features(scene: TrajectoryScene) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent displacement [n+1, T, 2] and pairwise offset p_i - p_j [n+1, n+1, T, 2].

    Entries involving an unobserved frame are zero; the first displacement is zero.
    """
    positions = np.nan_to_num(scene.all_positions())
    valid = scene.all_valid()
    displacements = np.zeros_like(positions)
    step_valid = valid[:, 1:] & valid[:, :-1]
    displacements[:, 1:] = np.where(
        step_valid[..., None], positions[:, 1:] - positions[:, :-1], 0.0
    )
    pair_valid = valid[:, None, :] & valid[None, :, :]
    offsets = np.where(
        pair_valid[..., None], positions[:, None, :, :] - positions[None, :, :, :], 0.0
    )
    return displacements, offsets


def proximity_mask(scene: TrajectoryScene, radius_m: float) -> np.ndarray:
    """Binary [n+1, n+1] adjacency of the last history frame, no self loops."""
    valid = scene.all_valid()[:, -1]
    graph = build_graph(
        scene.all_positions()[:, -1], valid, radius_m, int(scene.frames[-1])
    )
    mask = np.zeros((valid.size, valid.size), dtype=bool)
    nodes = list(graph.node_ids)
    mask[np.ix_(nodes, nodes)] = graph.binary() > 0
    return mask


@dataclass(frozen=True)
class PreparedScene:
    """Network inputs of one scene, computed once and reused every epoch."""

    scene_id: str
    behavior: np.ndarray | None
    present: np.ndarray
    position_inputs: np.ndarray
    edges: np.ndarray
    mask: np.ndarray
    anchor: np.ndarray
    future: np.ndarray | None

    @property
    def agent_count(self) -> int:
        """Agents including the target."""
        return self.present.shape[0]


@dataclass
class ForwardResult:
    """Prediction [t_f, 2] and mean VRNN KL (None without the behavior branch)."""

    prediction: Tensor
    kl: Tensor | None


class MFTrajModel(Module):
    """Behavior and position encoders, interaction GCN, linear attention, residual decoder."""

    def __init__(self, config: ModelConfig) -> None:
        """Initialize every layer from the config's init seed stream."""
        self.config = config
        init = Initializer(
            np.random.default_rng(cfg.derive_seed(config.seed, "init")), config.dtype
        )
        width = config.interaction_width
        self.vrnn = None
        self.behavior_gru = None
        if not config.disable_behavior:
            self.vrnn = VRNNCell(
                init, len(BEHAVIOR_FEATURES), config.behavior_hidden, config.latent_dim
            )
            self.behavior_gru = GRUEncoder(init, config.behavior_hidden, config.behavior_hidden)
        self.position_lstm = LSTMEncoder(
            init, POSITION_FEATURES, config.position_hidden, config.lstm_layers
        )
        self.interaction = []
        if not config.disable_interaction:
            self.interaction = [
                PlainGCNLayer(init, width)
                if config.plain_gcn
                else AdaptiveGCNLayer(init, width, EDGE_FEATURES)
                for _ in range(config.gcn_layers)
            ]
        self.attention = None
        if not config.disable_linformer:
            self.attention = LinearAttention(
                init, width, config.attention_heads, config.proj_dim, config.max_agents
            )
        self.decoder = ResidualDecoder(
            init, width, config.decoder_hidden, config.t_f, config.gn_groups
        )
        self.standardizer = FeatureStandardizer.identity()
        self._accumulate = np.tril(np.ones((config.t_f, config.t_f), dtype=config.dtype))
        _LOGGER.debug("Built model with %d parameters", self.parameter_count())

    def prepare(self, scene: TrajectoryScene) -> PreparedScene:
        """Check horizons and compute network inputs for a scene."""
        config = self.config
        if scene.frames.size != config.history_frames:
            raise ConfigError(
                f"Scene {scene.scene_id}: history has {scene.frames.size} frames, "
                f"model expects {config.history_frames}"
            )
        if scene.target_future is not None and scene.t_f != config.t_f:
            raise ConfigError(
                f"Scene {scene.scene_id}: future has {scene.t_f} frames, model predicts {config.t_f}"
            )
        if not scene.target.valid.all():
            raise InputError(
                f"Scene {scene.scene_id}: target history has unobserved frames; impute first"
            )

        valid = scene.all_valid()
        displacements, offsets = position_features(scene)
        if config.absolute_coords:
            positions = np.where(valid[..., None], np.nan_to_num(scene.all_positions()), 0.0)
            target = np.broadcast_to(positions[:1], positions.shape)
            inputs = np.concatenate([positions, target], axis=-1)
        else:
            inputs = np.concatenate([displacements, offsets[:, 0]], axis=-1)
        last = valid[:, -1]
        if config.plain_gcn:
            mask = proximity_mask(scene, config.radius_m)
        else:
            mask = last[:, None] & last[None, :] & ~np.eye(last.size, dtype=bool)
        behavior = (
            None
            if config.disable_behavior
            else behavior_tensor(scene, config.behavior_config())
        )
        dtype = config.dtype
        return PreparedScene(
            scene.scene_id,
            None if behavior is None else behavior.astype(dtype),
            valid,
            np.ascontiguousarray(inputs.transpose(1, 0, 2), dtype=dtype),
            offsets[:, :, -1, :].astype(dtype),
            mask,
            scene.last_observed_position().astype(dtype),
            None if scene.target_future is None else scene.target_future.astype(dtype),
        )

    def _behavior_branch(
        self, prepared: PreparedScene, mode: str, rng: np.random.Generator | None
    ) -> tuple[Tensor, Tensor]:
        features = self.standardizer.transform(prepared.behavior, prepared.present)
        features = features.astype(self.config.dtype).transpose(1, 0, 2)
        rows = prepared.agent_count
        hidden = self.vrnn.initial_hidden(rows, self.config.dtype)
        outputs = []
        kl_total = None
        for frame in features:
            if mode == MODE_TRAIN:
                noise = rng.standard_normal((rows, self.config.latent_dim)).astype(self.config.dtype)
            else:
                noise = np.zeros((rows, self.config.latent_dim), dtype=self.config.dtype)
            step = self.vrnn.step(Tensor(frame), hidden, noise)
            hidden = step.hidden
            outputs.append(step.features)
            kl_sum = tensor_sum(step.kl)
            kl_total = kl_sum if kl_total is None else kl_total + kl_sum
        encoded = self.behavior_gru(stack(outputs, axis=0))
        return encoded[-1], kl_total / (rows * features.shape[0])

    def forward(
        self,
        prepared: PreparedScene | TrajectoryScene,
        mode: str = MODE_EVAL,
        rng: np.random.Generator | None = None,
    ) -> ForwardResult:
        """Predict the target trajectory [t_f, 2] in absolute coordinates.

        Train mode samples VRNN latents from ``rng``; eval mode uses the
        posterior mean and is deterministic.
        """
        if isinstance(prepared, TrajectoryScene):
            prepared = self.prepare(prepared)
        if mode not in (MODE_TRAIN, MODE_EVAL):
            raise ConfigError(f"Unknown mode {mode!r}")
        if mode == MODE_TRAIN and rng is None and self.vrnn is not None:
            raise ConfigError("Train mode needs a noise generator")

        position = self.position_lstm(Tensor(prepared.position_inputs))[-1]
        kl = None
        if self.vrnn is not None:
            behavior, kl = self._behavior_branch(prepared, mode, rng)
            features = concat([behavior, position], axis=-1)
        else:
            features = position
        edges = Tensor(prepared.edges)
        for layer in self.interaction:
            features = layer(features, edges, prepared.mask)
        if self.attention is not None:
            features = self.attention(features)
        steps = self.decoder(features[0])
        if self.config.absolute_coords:
            return ForwardResult(steps, kl)
        return ForwardResult(Tensor(self._accumulate) @ steps + prepared.anchor, kl)

    __call__ = forward

    def loss(self, result: ForwardResult, target: np.ndarray) -> Tensor:
        """Training loss of a forward result against the ground-truth future."""
        return trajectory_loss(result.prediction, target, result.kl, self.config.beta_kl)

    def state(self) -> dict[str, np.ndarray]:
        """Parameters and standardizer statistics by name."""
        state = {name: tensor.values for name, tensor in self.named_parameters()}
        state.update(self.standardizer.state())
        return state

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        """Replace parameters and standardizer statistics."""
        expected = dict(self.named_parameters())
        missing = [name for name in expected if name not in state]
        if missing:
            raise CheckpointError(f"Checkpoint lacks parameters {missing[:5]}")
        for name, tensor in expected.items():
            values = np.asarray(state[name])
            if values.shape != tensor.shape:
                raise CheckpointError(
                    f"Parameter {name}: checkpoint shape {values.shape}, model {tensor.shape}"
                )
            tensor.values = values.astype(tensor.values.dtype, copy=True)
        self.standardizer = FeatureStandardizer.from_state(state)


def trajectory_loss(
    prediction: Tensor, target, kl: Tensor | None = None, beta_kl: float = 0.0
) -> Tensor:
    """Mean smooth-L1 over all coordinates, plus beta_kl times the KL term."""
    value = mean(smooth_l1(prediction, Tensor(np.asarray(target)), SMOOTH_L1_BETA))
    if kl is not None and beta_kl:
        value = value + kl * beta_kl
    return value


def prepare_for_prediction(
    scene: TrajectoryScene, index: int, drop: int = 0, seed: int = 0
) -> TrajectoryScene:
    """Apply drop-then-impute when ``drop`` is set, else return the scene."""
    if not drop:
        return scene
    dropped, mask = drop_frames(scene, drop, [seed, index])
    return impute_linear(dropped, mask)


def predict(
    model: MFTrajModel,
    scenes: Sequence[TrajectoryScene],
    drop: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> list[np.ndarray]:
    """Eval-mode trajectories [t_f, 2] per scene, optionally on dropped inputs."""

    def run(item: tuple[int, TrajectoryScene]) -> np.ndarray:
        index, scene = item
        scene = prepare_for_prediction(scene, index, drop, seed)
        return model.forward(scene, MODE_EVAL).prediction.values

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(run, enumerate(scenes)))
    return [run(item) for item in enumerate(scenes)]


def write_predictions_csv(
    scenes: Sequence[TrajectoryScene], predictions: Sequence[np.ndarray], path: str | Path
) -> None:
    """Write (scene_id, step, x, y) rows, steps numbered from 1."""
    records = [
        (scene.scene_id, step, float(x), float(y))
        for scene, trajectory in zip(scenes, predictions)
        for step, (x, y) in enumerate(trajectory, start=1)
    ]
    pd.DataFrame.from_records(records, columns=PREDICTION_COLUMNS).to_csv(
        path, index=False, float_format=FLOAT_FORMAT
    )
    _LOGGER.info("Wrote %d predictions to %s", len(predictions), path)
