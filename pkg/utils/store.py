"""
LFLOW1 array container (checkpoints and sample stores).

LAYOUT (LOCKED):
- 6 bytes magic b"LFLOW1"
- 8 bytes little-endian uint64 header length
- UTF-8 JSON header: {"arrays": [{name, shape, offset}], "meta": {...}}
- raw little-endian float64 bytes, arrays back to back
"""

import json
import struct
from pathlib import Path

import numpy as np

from utils.errors import ValidationError

MAGIC = b"LFLOW1"
_DTYPE = np.dtype("<f8")


def write_store(path, arrays: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    blobs = []
    offset = 0
    for name, values in arrays.items():
        data = np.asarray(values, dtype=_DTYPE)
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        blob = data.tobytes()
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)

    return path


def read_header(path) -> dict:
    with open(path, "rb") as f:
        header, _ = _read_header(f, path)
    return header


def read_store(path) -> tuple[dict, dict]:
    """Returns (arrays, meta)."""
    with open(path, "rb") as f:
        header, start = _read_header(f, path)
        payload = f.read()

    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = entry["offset"]
        end = begin + count * _DTYPE.itemsize
        if end > len(payload):
            raise ValidationError(f"{path}: array '{entry['name']}' is truncated")
        arrays[entry["name"]] = (
            np.frombuffer(payload[begin:end], dtype=_DTYPE).reshape(shape).astype(np.float64)
        )

    return arrays, header.get("meta", {})


def _read_header(f, path):
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise ValidationError(f"{path} is not an LFLOW1 store")
    (length,) = struct.unpack("<Q", f.read(8))
    header = json.loads(f.read(length).decode("utf-8"))
    return header, len(MAGIC) + 8 + length
