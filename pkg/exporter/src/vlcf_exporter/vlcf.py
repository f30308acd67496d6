"""Writer for the VLCF feature-file format.

This mirrors the consumer's documented layout bit for bit: magic
``VLCF``, version byte 1, little-endian u32 dim and count, then records
of (u16 id length, UTF-8 id, dim float32 values).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"VLCF"
VERSION = 1

_HEADER = struct.Struct("<4sBII")
_IDLEN = struct.Struct("<H")


def write_vlcf(path: str | Path, dim: int, records: list[tuple[str, np.ndarray]]) -> None:
    out = bytearray()
    out += _HEADER.pack(MAGIC, VERSION, dim, len(records))
    for record_id, vector in records:
        vec = np.asarray(vector, dtype="<f4")
        if vec.shape != (dim,):
            raise ValueError(f"record {record_id!r} has shape {vec.shape}, expected ({dim},)")
        if not np.isfinite(vec).all():
            raise ValueError(f"record {record_id!r} has non-finite components")
        encoded = record_id.encode("utf-8")
        out += _IDLEN.pack(len(encoded))
        out += encoded
        out += vec.tobytes()
    Path(path).write_bytes(bytes(out))
