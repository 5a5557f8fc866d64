"""Executor input files: a JSON header line followed by raw f32 payloads.

Header: {"count": N, "shape": [...]}. Payload: count tensors of the given
shape, little-endian float32, concatenated row-major.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_inputs(path, tensors) -> None:
    tensors = [np.ascontiguousarray(t, dtype="<f4") for t in tensors]
    if not tensors:
        raise ValueError("no input tensors")
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ValueError("input tensors must share a shape")
    header = json.dumps({"count": len(tensors), "shape": list(shape)}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        for t in tensors:
            f.write(t.tobytes())


def load_inputs(path) -> list[np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
            count = int(header["count"])
            shape = tuple(int(d) for d in header["shape"])
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise ValueError(f"malformed input header in {path}: {exc}") from exc
        payload = f.read()
    per = int(np.prod(shape)) * 4
    if len(payload) != count * per:
        raise ValueError(f"input payload size mismatch in {path}")
    out = []
    for i in range(count):
        arr = np.frombuffer(payload[i * per : (i + 1) * per], dtype="<f4")
        out.append(arr.reshape(shape).copy())
    return out
