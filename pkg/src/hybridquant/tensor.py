"""Dense float32 tensors, element statistics, and reconstruction-error metrics.

All tensors are plain numpy arrays in row-major layout. Statistics and error
metrics accumulate in float64 to avoid drift on large tensors; stored values
stay float32.
"""

from __future__ import annotations

import numpy as np


def as_tensor(data, shape=None) -> np.ndarray:
    """Validate and return a contiguous float32 array.

    Rejects empty tensors and any NaN/Inf element; quantization is undefined
    for both.
    """
    arr = np.asarray(data, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    arr = np.ascontiguousarray(arr)
    if arr.size == 0:
        raise ValueError("empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value")
    return arr


def min_max(t) -> tuple[float, float]:
    """Exact elementwise minimum and maximum of a tensor."""
    arr = as_tensor(t)
    return float(arr.min()), float(arr.max())


def error_metrics(original, reconstructed) -> dict:
    """Reconstruction error between two same-shaped tensors.

    Returns mse, max_abs_err and cosine_sim; cosine_sim is defined as 1.0
    when both inputs are all-zero.
    """
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    mse = float(np.mean(diff * diff))
    max_abs_err = float(np.max(np.abs(diff))) if a.size else 0.0
    na = float(np.linalg.norm(a.ravel()))
    nb = float(np.linalg.norm(b.ravel()))
    if na == 0.0 and nb == 0.0:
        cos = 1.0
    elif na == 0.0 or nb == 0.0:
        cos = 0.0
    elif np.array_equal(a, b):
        cos = 1.0
    else:
        cos = float(np.clip(np.dot(a.ravel(), b.ravel()) / (na * nb), -1.0, 1.0))
    return {"mse": mse, "max_abs_err": max_abs_err, "cosine_sim": cos}
