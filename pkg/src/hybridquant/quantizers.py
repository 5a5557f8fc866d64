"""Numerical quantization core.

Two schemes:

* uniform affine quantization for convolutional weights:
  delta = (w_max - w_min) / (2^b - 1), Z = round(-w_min / delta),
  q = clamp(round(w / delta) + Z), w' = (q - Z) * delta
* log2 quantization for post-softmax activations (values in [0, 1]):
  bounds and codes live in the log2 domain, with a small epsilon added
  before the log so zeros are representable:
  q = clamp(round(log2(a + eps) / delta) + Z), a' = 2^((q - Z) * delta)

Rounding is half-away-from-zero everywhere so codes are bit-exact and
monotone. Degenerate ranges (min == max) fall back to parameters chosen so
the constant reconstructs instead of dividing by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .tensor import as_tensor

# smallest positive normal float32, used for zero-width ranges around 0
TINY = float(np.finfo(np.float32).tiny)

SOFTMAX_TOL = 1e-6


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class QuantConfig:
    bits: int = 8
    epsilon: float = 1e-5

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class AffineParams:
    delta: float
    zero_point: int
    w_min: float
    w_max: float
    bits: int = 8
    degenerate: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.w_min > self.w_max:
            raise ValueError("w_min > w_max")
        if not 0 <= self.zero_point <= self.qmax:
            raise ValueError(f"zero_point {self.zero_point} outside [0, {self.qmax}]")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class LogParams:
    delta: float
    zero_point: int
    log_min: float
    log_max: float
    a_min: float
    a_max: float
    epsilon: float = 1e-5
    bits: int = 8
    degenerate: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.log_min > self.log_max:
            raise ValueError("log_min > log_max")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1


Params = Union[AffineParams, LogParams]


@dataclass(frozen=True)
class QuantTensor:
    """Integer codes plus the parameters needed to invert them."""

    codes: np.ndarray
    params: Params

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        object.__setattr__(self, "codes", codes)
        if codes.size == 0:
            raise ValueError("empty tensor")
        if int(codes.max(initial=0)) > self.params.qmax:
            raise ValueError(f"code outside [0, {self.params.qmax}]")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.codes.shape


def affine_params(w_min: float, w_max: float, cfg: QuantConfig = QuantConfig()) -> AffineParams:
    """Scale and zero point for uniform affine quantization of [w_min, w_max]."""
    if not (math.isfinite(w_min) and math.isfinite(w_max)):
        raise ValueError("non-finite value")
    if w_min > w_max:
        raise ValueError("w_min > w_max")
    qmax = cfg.qmax
    if w_min == w_max:
        # zero-width range: pick delta/Z so the constant round-trips exactly
        c = w_min
        if c == 0.0:
            return AffineParams(TINY, 0, w_min, w_max, cfg.bits, degenerate=True)
        delta = abs(c) / qmax or TINY  # subnormal constants underflow to 0
        zero_point = 0 if c > 0 else qmax
        return AffineParams(delta, zero_point, w_min, w_max, cfg.bits, degenerate=True)
    delta = (w_max - w_min) / qmax
    if delta == 0.0:  # subnormal width underflow
        return AffineParams(TINY, 0, w_min, w_max, cfg.bits, degenerate=True)
    zero_point = int(min(max(round_half_away(-w_min / delta), 0.0), float(qmax)))
    return AffineParams(delta, zero_point, w_min, w_max, cfg.bits)


def quantize_uniform(w, p: AffineParams) -> QuantTensor:
    """Map float weights to integer codes; out-of-range values saturate."""
    arr = as_tensor(w)
    if not p.delta > 0:
        raise ValueError("delta must be positive")
    q = round_half_away(arr.astype(np.float64) / p.delta) + p.zero_point
    q = np.clip(q, 0, p.qmax)
    return QuantTensor(q.astype(np.uint8), p)


def dequantize_uniform(q: QuantTensor) -> np.ndarray:
    """Invert uniform quantization: (code - Z) * delta."""
    if not isinstance(q.params, AffineParams):
        raise ValueError("tensor does not carry affine parameters")
    p = q.params
    return ((q.codes.astype(np.float64) - p.zero_point) * p.delta).astype(np.float32)


def log2_params(a_min: float, a_max: float, cfg: QuantConfig = QuantConfig()) -> LogParams:
    """Scale and zero point for log2 quantization of [a_min, a_max] ⊂ [0, 1]."""
    if not (math.isfinite(a_min) and math.isfinite(a_max)):
        raise ValueError("non-finite value")
    if a_min > a_max:
        raise ValueError("a_min > a_max")
    if a_min < 0.0 or a_max > 1.0 + SOFTMAX_TOL:
        raise ValueError("not a post-softmax activation")
    eps = cfg.epsilon
    if a_max + eps <= 0.0:
        raise ValueError("a_max + epsilon must be positive")
    qmax = cfg.qmax
    log_min = math.log2(a_min + eps)
    log_max = math.log2(a_max + eps)
    if log_min == log_max:
        c = log_min
        if c == 0.0:
            return LogParams(TINY, 0, log_min, log_max, a_min, a_max, eps, cfg.bits,
                             degenerate=True)
        delta = abs(c) / qmax
        zero_point = qmax if c < 0 else 0
        return LogParams(delta, zero_point, log_min, log_max, a_min, a_max, eps, cfg.bits,
                         degenerate=True)
    delta = (log_max - log_min) / qmax
    if delta == 0.0:
        return LogParams(TINY, 0, log_min, log_max, a_min, a_max, eps, cfg.bits,
                         degenerate=True)
    zero_point = int(round_half_away(-log_min / delta))
    return LogParams(delta, zero_point, log_min, log_max, a_min, a_max, eps, cfg.bits)


def quantize_log2(a, p: LogParams) -> QuantTensor:
    """Map post-softmax activations to log-domain integer codes.

    Values must lie in [0, 1] (small tolerance above 1); values inside that
    range but outside the calibrated [a_min, a_max] saturate via the clamp.
    """
    arr = as_tensor(a)
    if float(arr.min()) < 0.0 or float(arr.max()) > 1.0 + SOFTMAX_TOL:
        raise ValueError("not a post-softmax activation")
    logs = np.log2(arr.astype(np.float64) + p.epsilon)
    q = round_half_away(logs / p.delta) + p.zero_point
    q = np.clip(q, 0, p.qmax)
    return QuantTensor(q.astype(np.uint8), p)


def dequantize_log2(q: QuantTensor) -> np.ndarray:
    """Invert log2 quantization: 2^((code - Z) * delta)."""
    if not isinstance(q.params, LogParams):
        raise ValueError("tensor does not carry log2 parameters")
    p = q.params
    return np.exp2((q.codes.astype(np.float64) - p.zero_point) * p.delta).astype(np.float32)


def params_to_json(p: Params) -> dict:
    """Serialize parameters to the manifest `quant` block schema."""
    if isinstance(p, AffineParams):
        return {
            "scheme": "uniform",
            "bits": p.bits,
            "delta": p.delta,
            "zero_point": p.zero_point,
            "min": p.w_min,
            "max": p.w_max,
        }
    if isinstance(p, LogParams):
        return {
            "scheme": "log2",
            "bits": p.bits,
            "delta": p.delta,
            "zero_point": p.zero_point,
            "min": p.a_min,
            "max": p.a_max,
            "epsilon": p.epsilon,
        }
    raise TypeError(f"unsupported params type {type(p)!r}")


def params_from_json(d: dict) -> Params:
    """Rebuild parameters from a manifest `quant` block."""
    scheme = d.get("scheme")
    if scheme == "uniform":
        return AffineParams(
            delta=float(d["delta"]),
            zero_point=int(d["zero_point"]),
            w_min=float(d["min"]),
            w_max=float(d["max"]),
            bits=int(d["bits"]),
            degenerate=float(d["min"]) == float(d["max"]),
        )
    if scheme == "log2":
        eps = float(d["epsilon"])
        a_min, a_max = float(d["min"]), float(d["max"])
        return LogParams(
            delta=float(d["delta"]),
            zero_point=int(d["zero_point"]),
            log_min=math.log2(a_min + eps),
            log_max=math.log2(a_max + eps),
            a_min=a_min,
            a_max=a_max,
            epsilon=eps,
            bits=int(d["bits"]),
            degenerate=a_min == a_max,
        )
    raise ValueError(f"unknown quantization scheme {scheme!r}")
