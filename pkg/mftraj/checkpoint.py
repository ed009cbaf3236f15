"""Self-describing binary checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import logging
from pathlib import Path
import struct

from awesomeversion import AwesomeVersion
import numpy as np

from .config import format_config_text, parse_config_text
from .const import (
    CHECKPOINT_FORMAT_VERSION,
    CHECKPOINT_MAGIC,
    MIN_CHECKPOINT_FORMAT_VERSION,
    VERSION,
)
from .exceptions import CheckpointError
from .model import MFTrajModel, ModelConfig
from .trainer import Adam, TrainingResult

_LOGGER = logging.getLogger(__name__)

# Layout, all integers little-endian:
#   magic | u32 len + header text | u32 len + config text | u32 tensor count
#   per tensor: u16 len + name | u8 len + dtype str | u8 ndim | u64 dims | u64 len + payload
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class Checkpoint:
    """Config snapshot, named tensors and the training step counter."""

    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def from_model(
        cls, model: MFTrajModel, optimizer: Adam | None = None, step: int = 0
    ) -> Checkpoint:
        """Snapshot a model and, when given, its optimizer moments."""
        tensors = dict(model.state())
        if optimizer is not None:
            tensors.update(optimizer.state())
            step = optimizer.step_count
        return cls(model.config, tensors, step)

    @classmethod
    def from_training(cls, result: TrainingResult) -> Checkpoint:
        """Snapshot a training result."""
        return cls.from_model(result.model, result.optimizer)

    def to_model(self) -> MFTrajModel:
        """Rebuild the model with the stored parameters."""
        model = MFTrajModel(self.config)
        model.load_state(self.tensors)
        return model

    def to_optimizer(self, model: MFTrajModel) -> Adam:
        """Rebuild the optimizer of ``model`` with the stored moments."""
        optimizer = Adam(list(model.named_parameters()))
        optimizer.load_state(self.tensors, self.step)
        return optimizer

    def to_bytes(self) -> bytes:
        """Serialize; tensors are written sorted by name."""
        buffer = io.BytesIO()
        buffer.write(CHECKPOINT_MAGIC)
        header = format_config_text(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "package_version": VERSION,
                "step": self.step,
            }
        )
        _write_text(buffer, header)
        _write_text(buffer, self.config.to_text())
        buffer.write(_U32.pack(len(self.tensors)))
        for name in sorted(self.tensors):
            values = np.ascontiguousarray(self.tensors[name])
            dtype = values.dtype.newbyteorder("<")
            encoded = name.encode("utf-8")
            buffer.write(_U16.pack(len(encoded)))
            buffer.write(encoded)
            dtype_text = dtype.str.encode("ascii")
            buffer.write(_U8.pack(len(dtype_text)))
            buffer.write(dtype_text)
            buffer.write(_U8.pack(values.ndim))
            for size in values.shape:
                buffer.write(_U64.pack(size))
            payload = values.astype(dtype, copy=False).tobytes(order="C")
            buffer.write(_U64.pack(len(payload)))
            buffer.write(payload)
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> Checkpoint:
        """Parse bytes written by to_bytes()."""
        reader = io.BytesIO(data)
        if reader.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise CheckpointError("Not an mftraj checkpoint (bad magic)")
        try:
            header = parse_config_text(_read_text(reader))
            _check_format(header.get("format_version", "0"))
            config = ModelConfig.from_text(_read_text(reader))
            tensors = {}
            for _ in range(_read(reader, _U32)):
                name = _read_exact(reader, _read(reader, _U16)).decode("utf-8")
                dtype = np.dtype(_read_exact(reader, _read(reader, _U8)).decode("ascii"))
                shape = tuple(_read(reader, _U64) for _ in range(_read(reader, _U8)))
                payload = _read_exact(reader, _read(reader, _U64))
                tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
        except (struct.error, ValueError, UnicodeDecodeError, TypeError) as err:
            raise CheckpointError(f"Corrupt checkpoint: {err}") from err
        if reader.read(1):
            raise CheckpointError("Trailing bytes after the tensor table")
        return cls(config, tensors, int(header.get("step", 0)))


def _check_format(version_text: str) -> None:
    version = AwesomeVersion(version_text)
    current = AwesomeVersion(CHECKPOINT_FORMAT_VERSION)
    if version < AwesomeVersion(MIN_CHECKPOINT_FORMAT_VERSION) or version.major != current.major:
        raise CheckpointError(
            f"Checkpoint format {version} is not supported (need {MIN_CHECKPOINT_FORMAT_VERSION}"
            f" up to {current.major}.x)"
        )


def _write_text(buffer: io.BytesIO, text: str) -> None:
    encoded = text.encode("utf-8")
    buffer.write(_U32.pack(len(encoded)))
    buffer.write(encoded)


def _read_exact(reader: io.BytesIO, size: int) -> bytes:
    data = reader.read(size)
    if len(data) != size:
        raise CheckpointError(f"Truncated checkpoint: wanted {size} bytes, got {len(data)}")
    return data


def _read(reader: io.BytesIO, layout: struct.Struct) -> int:
    return layout.unpack(_read_exact(reader, layout.size))[0]


def _read_text(reader: io.BytesIO) -> str:
    return _read_exact(reader, _read(reader, _U32)).decode("utf-8")


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint file."""
    data = checkpoint.to_bytes()
    Path(path).write_bytes(data)
    _LOGGER.info("Wrote checkpoint %s (%d tensors, %d bytes)", path, len(checkpoint.tensors), len(data))


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint file."""
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"Cannot read checkpoint {path}: {err}") from err
    checkpoint = Checkpoint.from_bytes(data)
    _LOGGER.debug("Loaded checkpoint %s at step %d", path, checkpoint.step)
    return checkpoint
