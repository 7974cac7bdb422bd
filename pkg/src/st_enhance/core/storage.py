"""
Binary containers shared by dataset files ("C3DF") and checkpoints ("C3CK").

Every container starts with four magic bytes and a little-endian u16 format
version. Tensors are stored as a u8 rank, one u32 per extent and the data as
little-endian float32 in row-major order. Strings are a u16 byte length plus
UTF-8 bytes; JSON blocks are a u32 byte length plus canonical UTF-8 JSON.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import FormatError, StorageIOError, TruncatedFileError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DATASET_MAGIC = b"C3DF"
CHECKPOINT_MAGIC = b"C3CK"
FORMAT_VERSION = 1

_FLOAT = np.dtype("<f4")


def canonical_json(payload: Dict[str, Any]) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


class ContainerWriter:
    """Accumulates a container in memory and writes it in one call."""

    def __init__(self, magic: bytes, version: int = FORMAT_VERSION):
        self._chunks = [magic, struct.pack("<H", version)]

    def u8(self, value: int) -> None:
        self._chunks.append(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self._chunks.append(struct.pack("<I", value))

    def string(self, value: str) -> None:
        raw = value.encode("utf-8")
        self._chunks.append(struct.pack("<H", len(raw)))
        self._chunks.append(raw)

    def json_block(self, payload: Dict[str, Any]) -> None:
        raw = canonical_json(payload)
        self.u32(len(raw))
        self._chunks.append(raw)

    def tensor(self, array: np.ndarray) -> None:
        array = np.asarray(array)
        if array.ndim > 255:
            raise FormatError(f"Cannot store a rank-{array.ndim} tensor")
        self.u8(array.ndim)
        for extent in array.shape:
            self.u32(extent)
        self._chunks.append(np.ascontiguousarray(array, dtype=_FLOAT).tobytes())

    def to_bytes(self) -> bytes:
        return b"".join(self._chunks)

    def save(self, path: PathLike) -> int:
        payload = self.to_bytes()
        target = Path(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
        except OSError as e:
            raise StorageIOError(f"Failed to write {target}: {e}") from e
        return len(payload)


class ContainerReader:
    """Cursor over a container file; every read checks the remaining length."""

    def __init__(self, path: PathLike, magic: bytes, supported_versions: Tuple[int, ...] = (FORMAT_VERSION,)):
        self.path = str(path)
        try:
            self._data = Path(path).read_bytes()
        except OSError as e:
            raise StorageIOError(f"Failed to read {path}: {e}") from e
        self._offset = 0
        found = self._take(len(magic))
        if found != magic:
            raise FormatError(
                f"{self.path} is not a {magic.decode('ascii')} file (magic {found!r})"
            )
        self.version = struct.unpack("<H", self._take(2))[0]
        if self.version not in supported_versions:
            raise FormatError(f"{self.path}: unsupported format version {self.version}")

    def _take(self, count: int) -> bytes:
        end = self._offset + count
        if end > len(self._data):
            raise TruncatedFileError(self.path, end, len(self._data))
        chunk = self._data[self._offset:end]
        self._offset = end
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def string(self) -> str:
        length = struct.unpack("<H", self._take(2))[0]
        return self._take(length).decode("utf-8")

    def json_block(self) -> Dict[str, Any]:
        raw = self._take(self.u32())
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{self.path}: corrupt JSON block: {e}") from e

    def tensor(self) -> np.ndarray:
        rank = self.u8()
        shape = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        raw = self._take(count * _FLOAT.itemsize)
        return np.frombuffer(raw, dtype=_FLOAT).astype(np.float32).reshape(shape)

    def finish(self) -> None:
        if self._offset != len(self._data):
            raise FormatError(
                f"{self.path}: {len(self._data) - self._offset} unexpected trailing bytes"
            )


def save_checkpoint(path: PathLike, tensors: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> int:
    """Write named tensors plus a JSON metadata block; returns the byte count."""
    writer = ContainerWriter(CHECKPOINT_MAGIC)
    writer.json_block(metadata)
    writer.u32(len(tensors))
    for name in sorted(tensors):
        writer.string(name)
        writer.tensor(tensors[name])
    size = writer.save(path)
    logger.info(f"Checkpoint written to {path} ({len(tensors)} tensors, {size} bytes)")
    return size


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    reader = ContainerReader(path, CHECKPOINT_MAGIC)
    metadata = reader.json_block()
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.string()
        tensors[name] = reader.tensor()
    reader.finish()
    return tensors, metadata
