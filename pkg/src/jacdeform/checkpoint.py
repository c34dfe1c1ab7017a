"""Versioned binary checkpoints for trained parameters.

Layout: magic ``JDCK``, format version, a JSON config block, then two
array sections (parameters, optimizer state). Every array is float64
row-major, preceded by its name and shape, so files are byte-stable for
identical training runs.
"""

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"JDCK"
_VERSION = 1


def _write_section(fh, arrays):
    fh.write(struct.pack("<I", len(arrays)))
    for name in arrays:
        data = np.ascontiguousarray(arrays[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", data.ndim))
        for dim in data.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(data.tobytes())


def _read_section(raw, offset):
    (count,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}Q", raw, offset) if ndim else ()
        offset += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = (
            np.frombuffer(raw, dtype=np.float64, count=size, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += 8 * size
    return arrays, offset


def save_checkpoint(path, config, arrays, optimizer_state=None):
    """Write config, parameter arrays, and optional optimizer state.

    Parameters
    ----------
    config : dict
        JSON-serializable metadata (architecture, seeds, hyperparameters).
    arrays : dict of str -> ndarray
    optimizer_state : dict of str -> ndarray, optional
    """
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        _write_section(fh, arrays)
        _write_section(fh, optimizer_state or {})


def load_checkpoint(path):
    """Read a checkpoint; returns ``(config, arrays, optimizer_state)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<Q", raw, 8)
    offset = 16
    config = json.loads(raw[offset : offset + blob_len].decode("utf-8"))
    offset += blob_len
    arrays, offset = _read_section(raw, offset)
    optimizer_state, _ = _read_section(raw, offset)
    return config, arrays, optimizer_state
