"""Binary tensor container.

A file is a sequence of records. Each record is::

    b"BRALIGN1" | u32 little-endian header length | UTF-8 JSON header | payload

The header carries ``name``, ``shape`` and ``dtype`` (``"f32"`` or ``"f64"``),
plus an optional ``meta`` object. The payload is little-endian IEEE-754 in
row-major order. A single-tensor file is one record.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np

MAGIC = b"BRALIGN1"
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class TensorFormatError(ValueError):
    pass


def encode_record(name: str, array, dtype: str = "f32", meta: dict | None = None) -> bytes:
    if dtype not in DTYPES:
        raise TensorFormatError(f"unsupported dtype {dtype!r}")
    arr = np.asarray(array, dtype=DTYPES[dtype])
    header = {"name": name, "shape": list(arr.shape), "dtype": dtype}
    if meta is not None:
        header["meta"] = meta
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(raw)) + raw + arr.tobytes(order="C")


def decode_records(blob: bytes) -> List[Tuple[dict, np.ndarray]]:
    out = []
    pos = 0
    while pos < len(blob):
        if blob[pos:pos + 8] != MAGIC:
            raise TensorFormatError(f"bad magic at byte {pos}")
        pos += 8
        if pos + 4 > len(blob):
            raise TensorFormatError("truncated header length")
        (hlen,) = struct.unpack("<I", blob[pos:pos + 4])
        pos += 4
        try:
            header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TensorFormatError(f"unreadable header: {exc}") from exc
        pos += hlen
        dtype = DTYPES.get(header.get("dtype"))
        if dtype is None or "shape" not in header or "name" not in header:
            raise TensorFormatError(f"incomplete header {header}")
        shape = tuple(int(s) for s in header["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(blob):
            raise TensorFormatError(f"truncated payload for {header['name']!r}")
        arr = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos).reshape(shape)
        out.append((header, arr.astype(np.float64)))
        pos += nbytes
    return out


def write_tensors(path, tensors: Dict[str, np.ndarray] | Iterable[Tuple[str, np.ndarray]],
                  dtype: str = "f32", meta: dict | None = None) -> None:
    """Write named tensors; ``meta`` is attached to the first record's header."""
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    blob = b"".join(
        encode_record(name, arr, dtype, meta if i == 0 else None) for i, (name, arr) in enumerate(items)
    )
    Path(path).write_bytes(blob)


def read_tensors(path) -> Tuple[Dict[str, np.ndarray], dict]:
    """Return ``(name -> float64 array, meta of the first record)``."""
    records = decode_records(Path(path).read_bytes())
    meta = records[0][0].get("meta", {}) if records else {}
    return {h["name"]: a for h, a in records}, meta
