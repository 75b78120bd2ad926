"""Parameter checkpoints: little-endian float64 blob plus a JSON shape header.

File layout:
    bytes 0..4    uint32 little-endian, length L of the JSON header
    bytes 4..4+L  UTF-8 JSON: {"dtype": "<f8", "params": [{"name", "shape"}...]}
    remainder     the parameter arrays, in header order, flattened C-order,
                  as little-endian float64
"""
from __future__ import annotations

import json
import struct

import numpy as np


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate([np.asarray(v, dtype="<f8").ravel() for v in params.values()]) \
        if params else np.zeros(0)


def save_params(path, params: dict) -> None:
    header = {"dtype": "<f8",
              "params": [{"name": k, "shape": list(np.shape(v))}
                         for k, v in params.items()]}
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(flatten_params(params).astype("<f8").tobytes())


def load_params(path) -> dict:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        data = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    out = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        out[entry["name"]] = data[offset:offset + n].reshape(shape).copy()
        offset += n
    if offset != data.size:
        raise ValueError(f"checkpoint size mismatch: header wants {offset} "
                         f"doubles, file has {data.size}")
    return out
