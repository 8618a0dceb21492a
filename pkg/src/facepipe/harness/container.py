"""Binary container for fitted models and feature matrices.

Layout (all little-endian): magic "FCV1", u16 version, u32 record count,
then records sorted by name. Each record is a u8 kind, a u32 name length and
the UTF-8 name, followed by the payload:

  kind 1: u32 ndim, u32 dims..., float32 data
  kind 2: u32 byte length, UTF-8 text
  kind 3: u32 ndim, u32 dims..., int64 data

Float payloads are stored as 32-bit; consumers accumulate in 64-bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"FCV1"
VERSION = 1

_KIND_F32 = 1
_KIND_TEXT = 2
_KIND_I64 = 3


def write_container(
    path: str | Path,
    arrays: dict[str, np.ndarray] | None = None,
    texts: dict[str, str] | None = None,
) -> None:
    arrays = arrays or {}
    texts = texts or {}
    overlap = set(arrays) & set(texts)
    if overlap:
        raise FormatError(f"duplicate record names: {sorted(overlap)}")
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(arrays) + len(texts))]
    for name in sorted(set(arrays) | set(texts)):
        encoded = name.encode("utf-8")
        if name in arrays:
            arr = np.asarray(arrays[name])
            if np.issubdtype(arr.dtype, np.integer):
                kind, payload = _KIND_I64, np.ascontiguousarray(arr, dtype="<i8")
            else:
                kind, payload = _KIND_F32, np.ascontiguousarray(arr, dtype="<f4")
            chunks.append(struct.pack("<BI", kind, len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<I", payload.ndim))
            chunks.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
            chunks.append(payload.tobytes())
        else:
            blob = texts[name].encode("utf-8")
            chunks.append(struct.pack("<BI", _KIND_TEXT, len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<I", len(blob)))
            chunks.append(blob)
    Path(path).write_bytes(b"".join(chunks))


class _Cursor:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.source}: truncated container")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    source = str(path)
    cur = _Cursor(Path(path).read_bytes(), source)
    if cur.take(4) != MAGIC:
        raise FormatError(f"{source}: bad magic, not a model container")
    (version, count) = cur.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported container version {version}")
    arrays: dict[str, np.ndarray] = {}
    texts: dict[str, str] = {}
    for _ in range(count):
        (kind, name_len) = cur.unpack("<BI")
        name = cur.take(name_len).decode("utf-8")
        if kind in (_KIND_F32, _KIND_I64):
            (ndim,) = cur.unpack("<I")
            shape = cur.unpack(f"<{ndim}I") if ndim else ()
            dtype = "<f4" if kind == _KIND_F32 else "<i8"
            n_elems = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = cur.take(n_elems * np.dtype(dtype).itemsize)
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        elif kind == _KIND_TEXT:
            (blob_len,) = cur.unpack("<I")
            texts[name] = cur.take(blob_len).decode("utf-8")
        else:
            raise FormatError(f"{source}: unknown record kind {kind}")
    if cur.pos != len(cur.data):
        raise FormatError(f"{source}: trailing bytes after last record")
    return arrays, texts
