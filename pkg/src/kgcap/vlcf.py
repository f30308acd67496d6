"""VLCF binary feature files: id -> fixed-dimension float32 vector.

Layout (little-endian throughout):
    magic   4 bytes  ``VLCF`` (56 4C 43 46)
    version 1 byte   currently 1
    dim     u32      vector dimensionality
    count   u32      number of records
    records count times:
        id_len  u16      byte length of the UTF-8 id
        id      id_len bytes
        vector  dim * f32

The format is bit-exact: writing a loaded store reproduces the input
byte-for-byte, which is what the round-trip tests assert.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConflictError, DataError, FormatError

MAGIC = b"VLCF"
VERSION = 1

_HEADER = struct.Struct("<4sBII")
_IDLEN = struct.Struct("<H")


@dataclass
class FeatureStore:
    """Immutable id -> vector map with a single shared dimensionality."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, image_id: str) -> np.ndarray | None:
        return self.entries.get(image_id)

    def ids(self) -> list[str]:
        return list(self.entries)

    def add(self, image_id: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise DataError(
                f"feature for {image_id!r} has shape {vec.shape}, expected ({self.dim},)"
            )
        if not np.isfinite(vec).all():
            raise DataError(f"feature for {image_id!r} has non-finite components")
        if image_id in self.entries:
            raise ConflictError(f"duplicate feature id {image_id!r}")
        self.entries[image_id] = vec


def load_feature_store(path: str | Path) -> FeatureStore:
    """Read a VLCF file, validating magic, version, counts and finiteness."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a VLCF header")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported VLCF version {version}")
    if dim == 0:
        raise FormatError(f"{path}: dim must be positive")

    store = FeatureStore(dim=int(dim))
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for i in range(count):
        if offset + _IDLEN.size > len(raw):
            raise FormatError(f"{path}: truncated at record {i} (id length)")
        (id_len,) = _IDLEN.unpack_from(raw, offset)
        offset += _IDLEN.size
        if offset + id_len + vec_bytes > len(raw):
            raise FormatError(f"{path}: truncated at record {i}")
        image_id = raw[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.isfinite(vec).all():
            raise DataError(f"{path}: non-finite component in record {image_id!r}")
        if image_id in store.entries:
            raise ConflictError(f"{path}: duplicate id {image_id!r}")
        store.entries[image_id] = vec
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after {count} records")
    return store


def write_feature_store(store: FeatureStore, path: str | Path) -> None:
    """Write ``store`` in VLCF format (records in insertion order)."""
    out = bytearray()
    out += _HEADER.pack(MAGIC, VERSION, store.dim, len(store.entries))
    for image_id, vec in store.entries.items():
        encoded = image_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise DataError(f"id too long to serialize: {image_id[:32]!r}...")
        out += _IDLEN.pack(len(encoded))
        out += encoded
        out += np.asarray(vec, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def write_vectors(path: str | Path, dim: int, items: list[tuple[str, np.ndarray]]) -> None:
    """Convenience writer used by checkpointing code."""
    store = FeatureStore(dim=dim)
    for key, vec in items:
        store.add(key, vec)
    write_feature_store(store, path)
