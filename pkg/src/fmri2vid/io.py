"""``NCT1`` tensor container and ``key=value`` text files.

Layout (little-endian)::

    b"NCT1" | u32 count | count x (u32 name_len | utf-8 name | u8 dtype | u32 rank
                                   | rank x u64 extent | row-major payload)

dtype tag 0 is float64, 1 is int64.  String metadata is stored as int64
tensors named ``meta:<key>`` holding the UTF-8 bytes.
"""
from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"NCT1"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
META_PREFIX = "meta:"


class ContainerError(ValueError):
    pass


def _tag(arr: np.ndarray) -> int:
    if np.issubdtype(arr.dtype, np.floating):
        return 0
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        return 1
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def encode(tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> bytes:
    items = list(tensors.items())
    for k, v in (meta or {}).items():
        items.append((META_PREFIX + k, np.frombuffer(str(v).encode("utf-8"), dtype=np.uint8)))
    parts = [MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        arr = np.asarray(arr)
        tag = _tag(arr)
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[tag])
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BI", tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    if buf[:4] != MAGIC:
        raise ContainerError("bad magic; not an NCT1 container")
    pos = 4
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        tag, rank = struct.unpack_from("<BI", buf, pos)
        pos += 5
        if tag not in _DTYPES:
            raise ContainerError(f"unknown dtype tag {tag} for {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        dt = _DTYPES[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(buf):
            raise ContainerError(f"truncated payload for {name!r}")
        arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape)
        pos += nbytes
        if name.startswith(META_PREFIX):
            meta[name[len(META_PREFIX):]] = arr.astype(np.uint8).tobytes().decode("utf-8")
        else:
            tensors[name] = arr.copy()
    return tensors, meta


def save(path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(tensors, meta))
    os.replace(tmp, path)


def load(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    return decode(Path(path).read_bytes())


def write_kv(path, values: Mapping[str, object]) -> None:
    lines = [f"{k}={v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_kv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
