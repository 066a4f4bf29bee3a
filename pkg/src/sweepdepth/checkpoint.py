"""Flat binary archive of named float32 arrays.

Entry layout, repeated until end of file (all integers little-endian u32):
    name length | name bytes (utf-8) | rank | dims... | float32 payload
"""

from __future__ import annotations

import struct
from typing import Dict

import numpy as np


def write_arrays(path, arrays: Dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def read_arrays(path) -> Dict[str, np.ndarray]:
    arrays: Dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise ValueError(f"{path}: truncated entry header")
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(dims)) if rank else 1
            payload = f.read(4 * count)
            if len(payload) != 4 * count:
                raise ValueError(f"{path}: truncated payload for '{name}'")
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return arrays
