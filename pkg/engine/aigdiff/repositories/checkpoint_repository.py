"""
Checkpoint Repository - binary persistence for denoiser weights

Layout:
  8 bytes  magic "SEADAGCK"
  u32      format version (little-endian)
  u32      manifest length in bytes
  JSON     manifest: model config, tensor table (name, shape, offset, nbytes)
           and optional run metadata (training config, noise model, level stats)
  data     raw little-endian float32 tensors at the manifest offsets
"""

import json
import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch
from pydantic import ValidationError

from aigdiff.exceptions import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from aigdiff.models.configs import ModelConfig
from aigdiff.services.denoiser import GraphTransformer
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.noise_model import NoiseModel

logger = logging.getLogger(__name__)

MAGIC = b"SEADAGCK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")
_LAYER_NAME = re.compile(r"^layers\.(\d+)\.")


@dataclass
class Checkpoint:
    """Loaded model plus the manifest metadata stored alongside it."""

    model: GraphTransformer
    metadata: Dict[str, Any] = field(default_factory=dict)

    def noise_model(self) -> NoiseModel:
        if "noise" not in self.metadata:
            raise CheckpointFormatError("checkpoint metadata carries no noise model")
        return NoiseModel.from_dict(self.metadata["noise"])

    def level_stats(self) -> LevelStructureStats:
        if "level_stats" not in self.metadata:
            raise CheckpointFormatError("checkpoint metadata carries no level statistics")
        return LevelStructureStats.from_dict(self.metadata["level_stats"])


class CheckpointRepository:
    """Save and load denoiser checkpoints."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def save(self, model: GraphTransformer, metadata: Optional[Dict[str, Any]] = None) -> Path:
        """
        Write model weights and metadata.

        Args:
            model: Denoiser to persist
            metadata: JSON-serializable run metadata

        Returns:
            Path written
        """
        tensors = []
        blobs = []
        offset = 0
        for name, tensor in model.state_dict().items():
            data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4").tobytes()
            tensors.append(
                {"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data)}
            )
            blobs.append(data)
            offset += len(data)

        manifest = {
            "config": model.config.model_dump(),
            "layers": model.config.layers,
            "tensors": tensors,
            "metadata": metadata or {},
        }
        manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")

        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("wb") as handle:
            handle.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest_bytes)))
            handle.write(manifest_bytes)
            for blob in blobs:
                handle.write(blob)

        logger.info(
            f"[CheckpointRepository] Saved {len(tensors)} tensors ({offset} bytes) to {self.path}"
        )
        return self.path

    def load(self) -> Checkpoint:
        """
        Read a checkpoint.

        Raises:
            CheckpointFormatError: Bad magic or unreadable manifest
            CheckpointVersionError: Unsupported format version
            CheckpointTruncatedError: File ends before the declared data
            CheckpointShapeError: Tensor table disagrees with the model config
        """
        raw = self.path.read_bytes()
        if len(raw) < len(MAGIC) and raw == MAGIC[: len(raw)]:
            raise CheckpointTruncatedError(f"{self.path}: file ends inside the magic bytes")
        if raw[: len(MAGIC)] != MAGIC:
            raise CheckpointFormatError(f"{self.path}: not a checkpoint (bad magic bytes)")
        if len(raw) < _HEADER.size:
            raise CheckpointTruncatedError(f"{self.path}: file ends inside the header")

        _, version, manifest_len = _HEADER.unpack_from(raw)
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"{self.path}: format version {version}, expected {FORMAT_VERSION}"
            )
        start = _HEADER.size
        if len(raw) < start + manifest_len:
            raise CheckpointTruncatedError(f"{self.path}: file ends inside the manifest")
        try:
            manifest = json.loads(raw[start : start + manifest_len].decode("utf-8"))
            config = ModelConfig.model_validate(manifest["config"])
            table = manifest["tensors"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError) as exc:
            raise CheckpointFormatError(f"{self.path}: unreadable manifest ({exc})") from exc

        self._check_layers(manifest, config, table)

        model = GraphTransformer(config)
        expected = model.state_dict()
        names = [entry["name"] for entry in table]
        if sorted(names) != sorted(expected.keys()):
            missing = sorted(set(expected) - set(names))
            extra = sorted(set(names) - set(expected))
            raise CheckpointShapeError(
                f"{self.path}: tensor table mismatch (missing={missing}, unexpected={extra})"
            )

        data_start = start + manifest_len
        state = {}
        for entry in table:
            shape = tuple(entry["shape"])
            if shape != tuple(expected[entry["name"]].shape):
                raise CheckpointShapeError(
                    f"{self.path}: tensor '{entry['name']}' has shape {shape}, "
                    f"model expects {tuple(expected[entry['name']].shape)}"
                )
            count = int(np.prod(shape, dtype=np.int64))
            if entry["nbytes"] != 4 * count:
                raise CheckpointShapeError(
                    f"{self.path}: tensor '{entry['name']}' declares {entry['nbytes']} bytes "
                    f"for {count} values"
                )
            begin = data_start + entry["offset"]
            end = begin + entry["nbytes"]
            if end > len(raw):
                raise CheckpointTruncatedError(
                    f"{self.path}: tensor '{entry['name']}' needs bytes up to {end}, "
                    f"file has {len(raw)}"
                )
            values = np.frombuffer(raw[begin:end], dtype="<f4").reshape(shape)
            state[entry["name"]] = torch.from_numpy(values.astype(np.float32))

        model.load_state_dict(state)
        model.eval()
        logger.info(f"[CheckpointRepository] Loaded {len(table)} tensors from {self.path}")
        return Checkpoint(model=model, metadata=manifest.get("metadata", {}))

    def _check_layers(self, manifest: Dict[str, Any], config: ModelConfig, table: Any) -> None:
        declared = manifest.get("layers", config.layers)
        present = {
            int(match.group(1))
            for entry in table
            if (match := _LAYER_NAME.match(entry.get("name", "")))
        }
        if declared != config.layers or len(present) != declared:
            raise CheckpointShapeError(
                f"{self.path}: manifest declares {declared} layers, "
                f"tensor table holds {len(present)}"
            )
