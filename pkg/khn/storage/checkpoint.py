"""Binary checkpoint codec.

Layout (all integers little-endian):

    magic        8 bytes   b"KHNCKPT\\0"
    version      uint32
    header_len   uint64
    header       header_len bytes of UTF-8 JSON (run config + parameter manifest)
    payload      float64 little-endian buffers, row-major, in manifest order
"""

import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import Field, ValidationError

from khn.errors import CheckpointError, IncompatibleCheckpointError
from khn.models.schemas import RunConfig, StrictModel
from khn.networks.model import HypernetModel

logger = logging.getLogger(__name__)

MAGIC = b"KHNCKPT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class ManifestEntry(StrictModel):
    name: str
    shape: list[int]
    offset: int = Field(ge=0)  # bytes into the payload


class CheckpointHeader(StrictModel):
    format_version: int
    run_config: RunConfig
    manifest: list[ManifestEntry]
    payload_bytes: int = Field(ge=0)


def encode_checkpoint(model: HypernetModel, run_config: RunConfig) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in model.named_parameters():
        chunk = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        manifest.append(ManifestEntry(name=name, shape=list(tensor.shape), offset=offset))
        chunks.append(chunk)
        offset += len(chunk)
    header = CheckpointHeader(
        format_version=FORMAT_VERSION,
        run_config=run_config,
        manifest=manifest,
        payload_bytes=offset,
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> tuple[HypernetModel, RunConfig]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError("checkpoint is truncated (incomplete prefix)")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    header_end = _PREFIX.size + header_len
    if len(blob) < header_end:
        raise CheckpointError("checkpoint is truncated (incomplete header)")
    try:
        header = CheckpointHeader.model_validate_json(blob[_PREFIX.size : header_end])
    except ValidationError as e:
        raise CheckpointError(f"checkpoint header is corrupt: {e.error_count()} validation errors") from e
    if header.format_version != version:
        raise CheckpointError("checkpoint header and prefix disagree on the format version")

    payload = blob[header_end:]
    if len(payload) != header.payload_bytes:
        raise CheckpointError(
            f"checkpoint payload holds {len(payload)} bytes, "
            f"header declares {header.payload_bytes}"
        )

    model = HypernetModel.from_config(header.run_config)
    expected = model.named_parameters()
    if [(e.name, tuple(e.shape)) for e in header.manifest] != [(n, t.shape) for n, t in expected]:
        raise CheckpointError("checkpoint manifest does not match the parameters of its run config")

    for entry, (_, tensor) in zip(header.manifest, expected):
        count = int(np.prod(entry.shape, dtype=np.int64))
        end = entry.offset + 8 * count
        if end > len(payload):
            raise CheckpointError(f"parameter {entry.name} extends past the payload")
        values = np.frombuffer(payload, dtype="<f8", count=count, offset=entry.offset)
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"parameter {entry.name} holds non-finite values")
        tensor.data = values.astype(np.float64).reshape(entry.shape)
    return model, header.run_config


def save_checkpoint(path: Path, model: HypernetModel, run_config: RunConfig) -> Path:
    """Write model parameters and the resolved run config to path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(model, run_config)
    path.write_bytes(blob)
    logger.info("saved checkpoint (%d parameters, %d bytes) to %s", model.parameter_count(), len(blob), path)
    return path


def load_checkpoint(path: Path) -> tuple[HypernetModel, RunConfig]:
    """Load a checkpoint; nothing is returned unless the whole file is valid."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(blob)
