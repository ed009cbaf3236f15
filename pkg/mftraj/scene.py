"""Trajectory scenes: data model, CSV ingestion, windows and missing frames."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .const import (
    COL_AGENT_ID,
    COL_FRAME,
    COL_ROLE,
    COL_SCENE_ID,
    COL_X,
    COL_Y,
    DEFAULT_NOISE_STD_M,
    DEFAULT_SAMPLE_RATE_HZ,
    FLOAT_FORMAT,
    KIND_CAR_FOLLOW,
    KIND_CONSTANT_VELOCITY,
    KIND_LANE_CHANGE,
    KIND_MERGE,
    LANE_WIDTH_M,
    MASK_COLUMNS,
    MIN_VALID_AGENT_FRAMES,
    ROLE_AGENT,
    ROLE_TARGET,
    ROLES,
    SCENARIO_KINDS,
    SCENE_COLUMNS,
)
from .exceptions import (
    BoundsError,
    ConfigError,
    InputError,
    ParseError,
    SchemaError,
    TimingError,
)

_LOGGER = logging.getLogger(__name__)


def _frozen(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Positions of one agent over the history frames of a scene."""

    agent_id: str
    positions: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        """Freeze and check the arrays."""
        positions = _frozen(self.positions, np.float64)
        valid = _frozen(self.valid, bool)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise SchemaError(
                f"Agent {self.agent_id}: positions must be [frames, 2], got {positions.shape}"
            )
        if valid.shape != positions.shape[:1]:
            raise SchemaError(
                f"Agent {self.agent_id}: {valid.shape[0]} validity flags for {positions.shape[0]} frames"
            )
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "valid", valid)

    @property
    def valid_count(self) -> int:
        """Number of frames in which the agent is observed."""
        return int(self.valid.sum())

    def __eq__(self, other: object) -> bool:
        """Compare id, flags and positions (NaN equal to NaN)."""
        if not isinstance(other, AgentTrack):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.positions, other.positions, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrajectoryScene:
    """One prediction instance: target and surrounding agent histories.

    Row 0 of every per-agent array is the target; rows 1..n follow the order of
    ``agents``.
    """

    scene_id: str
    sample_rate_hz: float
    frames: np.ndarray
    target: AgentTrack
    agents: tuple[AgentTrack, ...] = ()
    target_future: np.ndarray | None = None

    def __post_init__(self) -> None:
        """Check timing and shape invariants."""
        if not self.sample_rate_hz > 0:
            raise ConfigError(
                f"Scene {self.scene_id}: sample rate must be positive, got {self.sample_rate_hz}"
            )
        frames = _frozen(self.frames, np.int64)
        if frames.ndim != 1 or frames.size == 0:
            raise SchemaError(f"Scene {self.scene_id}: history needs at least one frame")
        if frames.size > 1 and np.any(np.diff(frames) != 1):
            raise TimingError(f"Scene {self.scene_id}: frames are not uniformly spaced")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "agents", tuple(self.agents))
        for track in (self.target, *self.agents):
            if track.positions.shape[0] != frames.size:
                raise SchemaError(
                    f"Scene {self.scene_id}: agent {track.agent_id} covers "
                    f"{track.positions.shape[0]} frames, expected {frames.size}"
                )
        if self.target_future is not None:
            future = _frozen(self.target_future, np.float64)
            if future.ndim != 2 or future.shape[1] != 2:
                raise SchemaError(
                    f"Scene {self.scene_id}: future must be [frames, 2], got {future.shape}"
                )
            object.__setattr__(self, "target_future", future)

    @property
    def t_h(self) -> int:
        """Index of the last history frame (history holds t_h + 1 frames)."""
        return int(self.frames.size - 1)

    @property
    def t_f(self) -> int:
        """Number of future frames (0 in inference mode)."""
        return 0 if self.target_future is None else int(self.target_future.shape[0])

    @property
    def n(self) -> int:
        """Number of surrounding agents."""
        return len(self.agents)

    @property
    def dt(self) -> float:
        """Seconds between frames."""
        return 1.0 / self.sample_rate_hz

    @property
    def timestamps(self) -> np.ndarray:
        """History timestamps in seconds."""
        return self.frames / self.sample_rate_hz

    @property
    def target_history(self) -> np.ndarray:
        """Target history as rows of (t, x, y)."""
        return np.column_stack([self.timestamps, self.target.positions])

    @property
    def agent_ids(self) -> list[str]:
        """Agent ids, target first."""
        return [self.target.agent_id] + [track.agent_id for track in self.agents]

    @property
    def tracks(self) -> tuple[AgentTrack, ...]:
        """All tracks, target first."""
        return (self.target, *self.agents)

    def all_positions(self) -> np.ndarray:
        """Positions of every agent, shape [n + 1, t_h + 1, 2]."""
        return np.stack([track.positions for track in self.tracks])

    def all_valid(self) -> np.ndarray:
        """Validity flags of every agent, shape [n + 1, t_h + 1]."""
        return np.stack([track.valid for track in self.tracks])

    def last_observed_position(self) -> np.ndarray:
        """Target position at the final history frame."""
        return np.array(self.target.positions[-1])

    def with_tracks(self, positions: np.ndarray, valid: np.ndarray) -> TrajectoryScene:
        """Return a copy with replaced per-agent positions and flags."""
        tracks = [
            AgentTrack(track.agent_id, positions[row], valid[row])
            for row, track in enumerate(self.tracks)
        ]
        return replace(self, target=tracks[0], agents=tuple(tracks[1:]))

    def __eq__(self, other: object) -> bool:
        """Compare every field; arrays compare element-wise."""
        if not isinstance(other, TrajectoryScene):
            return NotImplemented
        if (self.target_future is None) != (other.target_future is None):
            return False
        return (
            self.scene_id == other.scene_id
            and self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.frames, other.frames)
            and self.target == other.target
            and self.agents == other.agents
            and (
                self.target_future is None
                or np.array_equal(self.target_future, other.target_future)
            )
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """Per-agent, per-frame observation flags (True = observed)."""

    scene_id: str
    agent_ids: tuple[str, ...]
    frames: np.ndarray
    flags: np.ndarray

    def __post_init__(self) -> None:
        """Freeze the arrays."""
        object.__setattr__(self, "frames", _frozen(self.frames, np.int64))
        object.__setattr__(self, "flags", _frozen(self.flags, bool))
        object.__setattr__(self, "agent_ids", tuple(self.agent_ids))
        if self.flags.shape != (len(self.agent_ids), self.frames.size):
            raise SchemaError(
                f"Mask {self.scene_id}: flags shape {self.flags.shape} does not match "
                f"{len(self.agent_ids)} agents x {self.frames.size} frames"
            )

    @classmethod
    def from_scene(cls, scene: TrajectoryScene) -> ObservationMask:
        """Mask reflecting the scene's own validity flags."""
        return cls(scene.scene_id, tuple(scene.agent_ids), scene.frames, scene.all_valid())

    @property
    def target_flags(self) -> np.ndarray:
        """Flags of the target row."""
        return self.flags[0]

    @property
    def dropped_count(self) -> int:
        """Unobserved target frames."""
        return int((~self.target_flags).sum())

    def __eq__(self, other: object) -> bool:
        """Compare ids, frames and flags."""
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.agent_ids == other.agent_ids
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.flags, other.flags)
        )

    __hash__ = None


@dataclass(frozen=True)
class ColumnSchema:
    """Maps the canonical column names to the names used in a file."""

    scene_id: str = COL_SCENE_ID
    frame: str = COL_FRAME
    agent_id: str = COL_AGENT_ID
    role: str = COL_ROLE
    x: str = COL_X
    y: str = COL_Y

    def rename_map(self) -> dict[str, str]:
        """File column name -> canonical name."""
        return {
            self.scene_id: COL_SCENE_ID,
            self.frame: COL_FRAME,
            self.agent_id: COL_AGENT_ID,
            self.role: COL_ROLE,
            self.x: COL_X,
            self.y: COL_Y,
        }


def load_scenes(
    path: str | Path,
    schema: ColumnSchema | None = None,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    future_frames: int = 0,
) -> list[TrajectoryScene]:
    """Load scenes from a scene CSV.

    The target's frames define the scene's frame range. When ``future_frames`` is
    set, the last ``future_frames`` target frames become ``target_future`` and
    surrounding agents' rows in those frames are ignored.
    """
    schema = schema or ColumnSchema()
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise SchemaError(f"{path}: file has no header") from err
    except ValueError as err:
        raise ParseError(f"{path}: {err}") from err

    rename = schema.rename_map()
    missing = [column for column in rename if column not in table.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    table = table.rename(columns=rename)[SCENE_COLUMNS]

    frames = pd.to_numeric(table[COL_FRAME], errors="coerce")
    xs = pd.to_numeric(table[COL_X], errors="coerce")
    ys = pd.to_numeric(table[COL_Y], errors="coerce")
    malformed = (
        frames.isna()
        | (frames != frames.round())
        | ~np.isfinite(xs.to_numpy(dtype=float, na_value=np.nan))
        | ~np.isfinite(ys.to_numpy(dtype=float, na_value=np.nan))
        | ~table[COL_ROLE].isin(ROLES)
        | (table[COL_SCENE_ID] == "")
        | (table[COL_AGENT_ID] == "")
    )
    if malformed.any():
        row = int(np.flatnonzero(malformed.to_numpy())[0])
        raise ParseError(
            f"{path}: malformed row {table.iloc[row].to_dict()}", line=row + 2
        )
    table = table.assign(**{COL_FRAME: frames.astype(np.int64), COL_X: xs, COL_Y: ys})

    duplicated = table.duplicated([COL_SCENE_ID, COL_FRAME, COL_AGENT_ID])
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise ParseError(
            f"{path}: duplicate (scene, frame, agent) row", line=row + 2
        )

    scenes = [
        _build_scene(str(scene_id), rows, sample_rate_hz, future_frames)
        for scene_id, rows in table.groupby(COL_SCENE_ID, sort=False)
    ]
    _LOGGER.info("Loaded %d scenes from %s", len(scenes), path)
    return scenes


def _build_scene(
    scene_id: str, rows: pd.DataFrame, sample_rate_hz: float, future_frames: int
) -> TrajectoryScene:
    roles = rows.groupby(COL_AGENT_ID, sort=False)[COL_ROLE].nunique()
    if (roles > 1).any():
        raise SchemaError(
            f"Scene {scene_id}: agent {roles[roles > 1].index[0]} has both roles"
        )
    target_rows = rows[rows[COL_ROLE] == ROLE_TARGET].sort_values(COL_FRAME)
    target_ids = target_rows[COL_AGENT_ID].unique()
    if len(target_ids) != 1:
        raise SchemaError(
            f"Scene {scene_id}: expected exactly one target, found {len(target_ids)}"
        )
    all_frames = target_rows[COL_FRAME].to_numpy()
    if all_frames.size > 1 and np.any(np.diff(all_frames) != 1):
        raise TimingError(f"Scene {scene_id}: target frames are not uniformly spaced")
    history_size = all_frames.size - future_frames
    if history_size < 1:
        raise SchemaError(
            f"Scene {scene_id}: {all_frames.size} frames cannot hold {future_frames} future frames"
        )
    frames = all_frames[:history_size]
    target_xy = target_rows[[COL_X, COL_Y]].to_numpy(dtype=np.float64)
    target = AgentTrack(str(target_ids[0]), target_xy[:history_size], np.ones(history_size, bool))
    future = target_xy[history_size:] if future_frames else None

    agents = []
    excluded = 0
    agent_rows = rows[rows[COL_ROLE] == ROLE_AGENT]
    for agent_id, track_rows in agent_rows.groupby(COL_AGENT_ID, sort=False):
        index = track_rows[COL_FRAME].to_numpy() - frames[0]
        inside = (index >= 0) & (index < history_size)
        positions = np.zeros((history_size, 2))
        valid = np.zeros(history_size, bool)
        positions[index[inside]] = track_rows[[COL_X, COL_Y]].to_numpy(dtype=np.float64)[inside]
        valid[index[inside]] = True
        if valid.sum() < MIN_VALID_AGENT_FRAMES:
            excluded += 1
            continue
        agents.append(AgentTrack(str(agent_id), positions, valid))
    if excluded:
        _LOGGER.warning(
            "Scene %s: excluded %d agents with fewer than %d valid frames",
            scene_id,
            excluded,
            MIN_VALID_AGENT_FRAMES,
        )
    return TrajectoryScene(scene_id, sample_rate_hz, frames, target, tuple(agents), future)


def scenes_to_frame(scenes: Iterable[TrajectoryScene]) -> pd.DataFrame:
    """Flatten scenes to canonical CSV rows (invalid frames are omitted)."""
    records = []
    for scene in scenes:
        for frame_index, frame in enumerate(scene.frames):
            for row, track in enumerate(scene.tracks):
                if not track.valid[frame_index]:
                    continue
                x, y = track.positions[frame_index]
                role = ROLE_TARGET if row == 0 else ROLE_AGENT
                records.append((scene.scene_id, int(frame), track.agent_id, role, x, y))
        if scene.target_future is not None:
            for step, (x, y) in enumerate(scene.target_future, start=1):
                records.append(
                    (
                        scene.scene_id,
                        int(scene.frames[-1]) + step,
                        scene.target.agent_id,
                        ROLE_TARGET,
                        x,
                        y,
                    )
                )
    return pd.DataFrame.from_records(records, columns=SCENE_COLUMNS)


def save_scenes(scenes: Iterable[TrajectoryScene], path: str | Path) -> None:
    """Write scenes to a scene CSV with round-trip float precision."""
    table = scenes_to_frame(scenes)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    _LOGGER.info("Wrote %d rows to %s", len(table), path)


def segment(
    scenes: Iterable[TrajectoryScene],
    obs_frames: int,
    pred_frames: int,
    stride: int,
) -> list[TrajectoryScene]:
    """Cut full tracks into observation/prediction windows.

    A window spans ``obs_frames + pred_frames`` consecutive target frames;
    windows start at 0, stride, 2 * stride, ... while the window still fits.
    Tracks too short for one window produce nothing, so with a 50-frame
    window a 100-frame track at stride 25 yields starts 0, 25 and 50.
    """
    if obs_frames < 1 or pred_frames < 0 or stride < 1:
        raise ConfigError(
            f"Invalid window: obs={obs_frames} pred={pred_frames} stride={stride}"
        )
    width = obs_frames + pred_frames
    windows = []
    for scene in scenes:
        positions = scene.all_positions()
        valid = scene.all_valid()
        frames = scene.frames
        if scene.target_future is not None:
            extra = scene.t_f
            frames = np.concatenate([frames, frames[-1] + 1 + np.arange(extra)])
            padded = np.zeros((positions.shape[0], extra, 2))
            padded[0] = scene.target_future
            positions = np.concatenate([positions, padded], axis=1)
            pad_valid = np.zeros((valid.shape[0], extra), bool)
            pad_valid[0] = True
            valid = np.concatenate([valid, pad_valid], axis=1)
        for start in range(0, frames.size - width + 1, stride):
            history = slice(start, start + obs_frames)
            future = positions[0, start + obs_frames : start + width]
            target = AgentTrack(
                scene.target.agent_id, positions[0, history], valid[0, history]
            )
            agents = tuple(
                AgentTrack(track.agent_id, positions[row, history], valid[row, history])
                for row, track in enumerate(scene.agents, start=1)
                if valid[row, history].sum() >= MIN_VALID_AGENT_FRAMES
            )
            windows.append(
                TrajectoryScene(
                    f"{scene.scene_id}_w{int(frames[start])}",
                    scene.sample_rate_hz,
                    frames[history],
                    target,
                    agents,
                    future if pred_frames else None,
                )
            )
    _LOGGER.debug("Segmented into %d windows of %d frames", len(windows), width)
    return windows


def drop_frames(
    scene: TrajectoryScene,
    k: int,
    seed: int | Sequence[int],
    all_agents: bool = False,
) -> tuple[TrajectoryScene, ObservationMask]:
    """Flag k interior target-history frames as unobserved.

    First and last frames are never dropped. With ``all_agents`` every
    surrounding agent also loses up to k interior frames of its observed span.
    Dropped positions are set to NaN.
    """
    size = scene.frames.size
    interior = max(size - 2, 0)
    if k < 0 or k > interior:
        raise BoundsError(
            f"Scene {scene.scene_id}: cannot drop {k} of {interior} interior frames"
        )
    rng = np.random.default_rng(seed)
    flags = scene.all_valid().copy()
    if k:
        flags[0, rng.choice(np.arange(1, size - 1), size=k, replace=False)] = False
    if all_agents:
        for row in range(1, flags.shape[0]):
            observed = np.flatnonzero(flags[row])[1:-1]
            count = min(k, observed.size)
            if count:
                flags[row, rng.choice(observed, size=count, replace=False)] = False

    positions = scene.all_positions().copy()
    dropped = scene.all_valid() & ~flags
    positions[dropped] = np.nan
    mask = ObservationMask(scene.scene_id, tuple(scene.agent_ids), scene.frames, flags)
    return scene.with_tracks(positions, flags), mask


def impute_linear(scene: TrajectoryScene, mask: ObservationMask) -> TrajectoryScene:
    """Fill unobserved frames by linear interpolation between observed neighbours.

    Only frames bracketed by observed frames are filled; surrounding agents stay
    invalid outside their observed span.
    """
    flags = mask.flags
    if not (flags[0, 0] and flags[0, -1]):
        raise InputError(
            f"Scene {scene.scene_id}: first and last target frames must be observed"
        )
    positions = scene.all_positions().copy()
    valid = flags.copy()
    for row in range(flags.shape[0]):
        observed = np.flatnonzero(flags[row])
        if observed.size < 2:
            continue
        span = np.arange(observed[0], observed[-1] + 1)
        missing = span[~flags[row, span]]
        if missing.size == 0:
            continue
        for axis in range(2):
            positions[row, missing, axis] = np.interp(
                missing, observed, positions[row, observed, axis]
            )
        valid[row, missing] = True
    return scene.with_tracks(positions, valid)


def save_masks(masks: Iterable[ObservationMask], path: str | Path) -> None:
    """Write the mask sidecar CSV."""
    records = [
        (mask.scene_id, agent_id, int(frame), int(mask.flags[row, column]))
        for mask in masks
        for row, agent_id in enumerate(mask.agent_ids)
        for column, frame in enumerate(mask.frames)
    ]
    pd.DataFrame.from_records(records, columns=MASK_COLUMNS).to_csv(path, index=False)


def load_masks(path: str | Path) -> list[ObservationMask]:
    """Read a mask sidecar CSV."""
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise SchemaError(f"{path}: file has no header") from err
    except ValueError as err:
        raise ParseError(f"{path}: {err}") from err
    missing = [column for column in MASK_COLUMNS if column not in table.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")

    frame_numbers = pd.to_numeric(table[COL_FRAME], errors="coerce")
    malformed = (
        frame_numbers.isna()
        | (frame_numbers != frame_numbers.round())
        | ~table["observed"].isin(["0", "1"])
        | (table[COL_SCENE_ID] == "")
        | (table[COL_AGENT_ID] == "")
    )
    if malformed.any():
        row = int(np.flatnonzero(malformed.to_numpy())[0])
        raise ParseError(f"{path}: malformed row {table.iloc[row].to_dict()}", line=row + 2)
    table = table.assign(**{COL_FRAME: frame_numbers.astype(np.int64)})

    masks = []
    for scene_id, rows in table.groupby(COL_SCENE_ID, sort=False):
        agent_ids = list(dict.fromkeys(rows[COL_AGENT_ID]))
        frames = np.sort(rows[COL_FRAME].unique())
        flags = np.zeros((len(agent_ids), frames.size), bool)
        agent_index = {agent_id: row for row, agent_id in enumerate(agent_ids)}
        columns = np.searchsorted(frames, rows[COL_FRAME].to_numpy())
        row_index = rows[COL_AGENT_ID].map(agent_index).to_numpy()
        flags[row_index, columns] = rows["observed"].to_numpy() == "1"
        masks.append(ObservationMask(str(scene_id), tuple(agent_ids), frames, flags))
    return masks


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic scenario batch."""

    kind: str
    scenes: int = 1
    agents: int = 3
    history_frames: int = 20
    future_frames: int = 30
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    noise_std: float = DEFAULT_NOISE_STD_M
    seed: int = 0
    velocity: tuple[float, float] = (10.0, 0.0)
    speed_jitter: float = 0.0
    lateral_amplitude: float = LANE_WIDTH_M
    extra: dict = field(default_factory=dict)


class IntelligentDriver:
    """Intelligent Driver Model for the follower in car_follow scenes."""

    def __init__(
        self,
        desired_speed: float,
        headway: float = 1.5,
        min_gap: float = 2.0,
        max_accel: float = 1.5,
        comfort_decel: float = 2.0,
        delta: float = 4.0,
    ) -> None:
        """Initialize the model parameters."""
        self.desired_speed = desired_speed
        self.headway = headway
        self.min_gap = min_gap
        self.max_accel = max_accel
        self.comfort_decel = comfort_decel
        self.delta = delta

    def acceleration(self, speed: float, gap: float, closing_speed: float) -> float:
        """Acceleration given own speed, gap to leader and speed difference."""
        desired_gap = self.min_gap + max(
            0.0,
            speed * self.headway
            + speed * closing_speed / (2.0 * np.sqrt(self.max_accel * self.comfort_decel)),
        )
        return self.max_accel * (
            1.0
            - (speed / self.desired_speed) ** self.delta
            - (desired_gap / max(gap, 0.1)) ** 2
        )

    def follow(
        self, times: np.ndarray, leader_x: np.ndarray, leader_v: np.ndarray, x0: float, v0: float
    ) -> np.ndarray:
        """Follower longitudinal positions by forward Euler."""
        positions = np.empty_like(times)
        position, speed = x0, v0
        for step, _ in enumerate(times):
            positions[step] = position
            if step + 1 == times.size:
                break
            dt = times[step + 1] - times[step]
            accel = self.acceleration(
                speed, leader_x[step] - position, speed - leader_v[step]
            )
            position += speed * dt
            speed = max(speed + accel * dt, 0.0)
        return positions


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-values))


def _lateral_shift(times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    duration = max(times[-1], 1e-9)
    center = duration * rng.uniform(0.35, 0.65)
    return _sigmoid((times - center) / (duration / 25.0))


def _traffic(
    spec: SyntheticSpec, times: np.ndarray, count: int, lanes: Sequence[float], rng: np.random.Generator
) -> list[np.ndarray]:
    speed = spec.velocity[0]
    tracks = []
    for index in range(count):
        lane = lanes[index % len(lanes)]
        x0 = rng.uniform(-30.0, 30.0)
        v = speed + rng.uniform(-2.0, 2.0)
        tracks.append(np.column_stack([x0 + v * times, np.full_like(times, lane)]))
    return tracks


def _synthetic_tracks(
    spec: SyntheticSpec, times: np.ndarray, rng: np.random.Generator
) -> list[np.ndarray]:
    vx, vy = spec.velocity
    if spec.speed_jitter:
        vx += rng.uniform(-spec.speed_jitter, spec.speed_jitter)
    amplitude = spec.lateral_amplitude

    if spec.kind == KIND_CONSTANT_VELOCITY:
        target = np.column_stack([vx * times, vy * times])
        return [target, *_traffic(spec, times, spec.agents, [amplitude, -amplitude], rng)]

    if spec.kind == KIND_LANE_CHANGE:
        target = np.column_stack([vx * times, amplitude * _lateral_shift(times, rng)])
        return [target, *_traffic(spec, times, spec.agents, [amplitude, 0.0, -amplitude], rng)]

    if spec.kind == KIND_MERGE:
        lateral = -amplitude + amplitude * _lateral_shift(times, rng)
        target = np.column_stack([vx * times, lateral])
        return [target, *_traffic(spec, times, spec.agents, [0.0, amplitude], rng)]

    assert spec.kind == KIND_CAR_FOLLOW
    # The first surrounding agent leads; the target follows it.
    phase = rng.uniform(0.0, 2.0 * np.pi)
    leader_v = vx + 2.0 * np.sin(2.0 * np.pi * times / 4.0 + phase)
    dt = np.diff(times, prepend=times[0])
    leader_x = rng.uniform(20.0, 30.0) + np.cumsum(leader_v * dt)
    driver = IntelligentDriver(desired_speed=1.2 * vx)
    follower_x = driver.follow(times, leader_x, leader_v, 0.0, vx)
    target = np.column_stack([follower_x, np.zeros_like(times)])
    leader = np.column_stack([leader_x, np.zeros_like(times)])
    others = _traffic(spec, times, max(spec.agents - 1, 0), [amplitude, -amplitude], rng)
    return [target, leader, *others][: spec.agents + 1]


def generate_synthetic(spec: SyntheticSpec) -> list[TrajectoryScene]:
    """Generate deterministic synthetic scenes.

    Scene ``i`` depends only on ``(seed, i)`` so batches of different sizes
    share their leading scenes.
    """
    if spec.kind not in SCENARIO_KINDS:
        raise ConfigError(
            f"Unknown scenario kind {spec.kind!r}; expected one of {SCENARIO_KINDS}"
        )
    if spec.history_frames < 1 or spec.future_frames < 0 or spec.agents < 0:
        raise ConfigError(f"Invalid synthetic frame/agent counts in {spec}")
    total = spec.history_frames + spec.future_frames
    times = np.arange(total) / spec.sample_rate_hz
    scenes = []
    for index in range(spec.scenes):
        rng = np.random.default_rng([spec.seed, index])
        tracks = _synthetic_tracks(spec, times, rng)
        if spec.noise_std > 0:
            tracks = [track + rng.normal(0.0, spec.noise_std, track.shape) for track in tracks]
        history = slice(0, spec.history_frames)
        valid = np.ones(spec.history_frames, bool)
        target = AgentTrack("target", tracks[0][history], valid)
        agents = tuple(
            AgentTrack(f"agent{row}", track[history], valid)
            for row, track in enumerate(tracks[1:], start=1)
        )
        future = tracks[0][spec.history_frames :] if spec.future_frames else None
        scenes.append(
            TrajectoryScene(
                f"{spec.kind}-{spec.seed}-{index:05d}",
                spec.sample_rate_hz,
                np.arange(spec.history_frames),
                target,
                agents,
                future,
            )
        )
    _LOGGER.debug("Generated %d %s scenes", len(scenes), spec.kind)
    return scenes
