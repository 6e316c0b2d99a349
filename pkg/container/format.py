"""
The BCQ1 checkpoint format.

    offset  size  field
    0       4     magic b"BCQ1"
    4       4     version, uint32 little-endian
    8       8     metadata length N, uint64 little-endian
    16      N     metadata, UTF-8 JSON (CheckpointMetadata)
    16+N    ...   payload: tensor payloads back to back

Entry offsets are relative to the start of the payload. The payload region
is exactly the sum of the entry lengths, with no gaps or trailing bytes.

Dense payload: rows*cols little-endian float32, row-major.

Quantized payload: for each plane i = 0..q_max-1, for each row owning plane i
(rows with more than i bits, in row order), ceil(cols/32) little-endian
uint32 words; then every row's scales as little-endian float32, row-major
and plane-minor (q(row) values per row, no padding).
"""

import json
import logging
import struct
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from bcq.quantized import QuantizedTensor
from container.errors import (
    BadMagicError,
    BoundsError,
    CheckpointError,
    DuplicateNameError,
    NonFiniteError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from container.tensors import DenseTensor
from kernel.gemv import footprint_bytes
from kernel.packing import words_per_row

logger = logging.getLogger(__name__)

MAGIC = b"BCQ1"
VERSION = 1
HEADER = struct.Struct("<4sIQ")

Tensor = DenseTensor | QuantizedTensor


class TensorKind(Enum):
    DENSE = "dense"
    QUANTIZED = "quantized"


class TensorEntry(BaseModel):
    name: str
    kind: TensorKind
    rows: int = Field(ge=0)
    cols: int = Field(ge=0)
    bits: list[tuple[int, int]] | None = None  # (row_count, bits) runs, quantized only
    offset: int = Field(ge=0)
    length: int = Field(ge=0)

    def expected_length(self) -> int:
        if self.kind == TensorKind.DENSE:
            return 4 * self.rows * self.cols
        return footprint_bytes(self.bits or [], self.cols)


class CheckpointMetadata(BaseModel):
    tensors: list[TensorEntry] = Field(default_factory=list)
    attributes: dict[str, Any] = Field(default_factory=dict)


def _encode(tensor: Tensor) -> tuple[TensorEntry, bytes]:
    if isinstance(tensor, DenseTensor):
        if not tensor.is_finite():
            raise NonFiniteError(f"{tensor.name}: dense data contains NaN or Inf")
        payload = tensor.data.astype("<f4").tobytes()
        entry = TensorEntry(
            name=tensor.name,
            kind=TensorKind.DENSE,
            rows=tensor.rows,
            cols=tensor.cols,
            offset=0,
            length=len(payload),
        )
        return entry, payload

    scales = tensor.owned_scales()
    if not np.isfinite(scales).all():
        raise NonFiniteError(f"{tensor.name}: scales contain NaN or Inf")
    chunks = [plane.astype("<u4").tobytes() for plane in tensor.planes]
    chunks.append(scales.astype("<f4").tobytes())
    payload = b"".join(chunks)
    entry = TensorEntry(
        name=tensor.name,
        kind=TensorKind.QUANTIZED,
        rows=tensor.rows,
        cols=tensor.cols,
        bits=[tuple(cluster) for cluster in tensor.clusters],
        offset=0,
        length=len(payload),
    )
    return entry, payload


def write_checkpoint(
    tensors: Sequence[Tensor],
    path: str | Path,
    attributes: dict[str, Any] | None = None,
) -> int:
    """Write tensors to path, returning the number of bytes written"""
    seen: set[str] = set()
    for tensor in tensors:
        if tensor.name in seen:
            raise DuplicateNameError(f"Tensor name {tensor.name!r} appears twice")
        seen.add(tensor.name)

    entries: list[TensorEntry] = []
    payloads: list[bytes] = []
    offset = 0
    for tensor in tensors:
        entry, payload = _encode(tensor)
        entry.offset = offset
        offset += entry.length
        entries.append(entry)
        payloads.append(payload)

    metadata = CheckpointMetadata(tensors=entries, attributes=attributes or {})
    meta_bytes = metadata.model_dump_json().encode("utf-8")

    header = HEADER.pack(MAGIC, VERSION, len(meta_bytes))
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(meta_bytes)
        for payload in payloads:
            handle.write(payload)

    written = len(header) + len(meta_bytes) + offset
    logger.info("wrote %d tensors (%d bytes) to %s", len(tensors), written, path)
    return written


def read_metadata(raw: bytes) -> tuple[CheckpointMetadata, int]:
    """Parse the header and metadata block; returns metadata and payload start"""
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"Not a BCQ1 file (magic {raw[:4]!r})")
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError("File ends inside the header")

    _, version, meta_len = HEADER.unpack_from(raw)
    if version != VERSION:
        raise VersionMismatchError(f"Unsupported BCQ1 version {version}, expected {VERSION}")

    start = HEADER.size + meta_len
    if start > len(raw):
        raise TruncatedPayloadError("File ends inside the metadata block")

    try:
        metadata = CheckpointMetadata.model_validate_json(raw[HEADER.size : start])
    except (ValidationError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"Malformed metadata block: {e}") from e

    return metadata, start


def _check_layout(entries: list[TensorEntry], payload_size: int) -> None:
    names = [entry.name for entry in entries]
    if len(set(names)) != len(names):
        raise DuplicateNameError("Metadata lists the same tensor name twice")

    for entry in entries:
        if entry.kind == TensorKind.QUANTIZED and entry.bits is None:
            raise CheckpointError(f"{entry.name}: quantized entry without bits")
        if entry.length != entry.expected_length():
            raise BoundsError(
                f"{entry.name}: declared length {entry.length}, "
                f"shape implies {entry.expected_length()}"
            )

    previous_end = 0
    for entry in sorted(entries, key=lambda e: e.offset):
        if entry.offset < previous_end:
            raise BoundsError(f"{entry.name}: payload overlaps the previous tensor")
        previous_end = entry.offset + entry.length

    if previous_end > payload_size:
        raise TruncatedPayloadError(
            f"Payload holds {payload_size} bytes, entries need {previous_end}"
        )
    declared = sum(entry.length for entry in entries)
    if declared != payload_size:
        raise BoundsError(
            f"Payload holds {payload_size} bytes, entries declare {declared}"
        )


def _decode(entry: TensorEntry, payload: memoryview) -> Tensor:
    chunk = payload[entry.offset : entry.offset + entry.length]

    if entry.kind == TensorKind.DENSE:
        data = np.frombuffer(chunk, dtype="<f4").astype(np.float32)
        if not np.isfinite(data).all():
            raise NonFiniteError(f"{entry.name}: dense data contains NaN or Inf")
        return DenseTensor(entry.name, entry.rows, entry.cols, data)

    clusters = [(int(count), int(bits)) for count, bits in entry.bits or []]
    row_bits = np.repeat(
        np.asarray([b for _, b in clusters], dtype=np.int64),
        [count for count, _ in clusters],
    )
    q_max = int(row_bits.max()) if row_bits.size else 0
    n_words = words_per_row(entry.cols)

    planes: list[np.ndarray] = []
    cursor = 0
    for plane in range(q_max):
        owners = int((row_bits > plane).sum())
        size = owners * n_words * 4
        words = np.frombuffer(chunk[cursor : cursor + size], dtype="<u4")
        planes.append(words.astype(np.uint32).reshape(owners, n_words))
        cursor += size

    owned = np.frombuffer(chunk[cursor:], dtype="<f4").astype(np.float32)
    if not np.isfinite(owned).all():
        raise NonFiniteError(f"{entry.name}: scales contain NaN or Inf")
    scales = np.zeros((entry.rows, q_max), dtype=np.float32)
    scales[np.arange(q_max)[None, :] < row_bits[:, None]] = owned

    return QuantizedTensor(
        entry.name, entry.rows, entry.cols, tuple(clusters), tuple(planes), scales
    )


def read_checkpoint_with_attributes(
    path: str | Path,
) -> tuple[list[Tensor], dict[str, Any]]:
    raw = Path(path).read_bytes()
    metadata, start = read_metadata(raw)
    payload = memoryview(raw)[start:]
    _check_layout(metadata.tensors, len(payload))

    tensors = [_decode(entry, payload) for entry in metadata.tensors]
    logger.info("read %d tensors from %s", len(tensors), path)
    return tensors, metadata.attributes


def read_checkpoint(path: str | Path) -> list[Tensor]:
    tensors, _ = read_checkpoint_with_attributes(path)
    return tensors
