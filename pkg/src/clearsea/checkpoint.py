"""Versioned binary archive for training state.

Layout: 4-byte magic, u32 format version, u64 header length, a JSON
header, then the raw bytes of every array back to back.  The header
lists arrays in sorted-name order with dtype and shape, plus a JSON
``meta`` blob (config echo, step counter, RNG state).  Every field is
written deterministically, so save -> load -> save reproduces the file
byte for byte.  Writes go through a temp file and an atomic rename.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import DataError

MAGIC = b"CSCK"
VERSION = 1


def save_archive(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(arrays)
    index = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        index.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"arrays": index, "meta": meta}, sort_keys=True, separators=(",", ":")).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_archive(path: str) -> tuple[dict[str, np.ndarray], dict]:
    if not os.path.exists(path):
        raise DataError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path} is not a checkpoint archive (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"corrupt checkpoint header in {path}: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataError(f"truncated checkpoint {path} at array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return arrays, header["meta"]
