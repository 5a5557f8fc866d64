"""sklearn-style estimator wrappers around the quantization core.

fit() calibrates parameters from data, transform() emits integer codes, and
inverse_transform() reconstructs floats, so the quantizers compose with
sklearn pipelines and clone()/get_params() tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .quantizers import (
    QuantConfig,
    QuantTensor,
    affine_params,
    dequantize_log2,
    dequantize_uniform,
    log2_params,
    quantize_log2,
    quantize_uniform,
)
from .tensor import as_tensor, min_max


class UniformWeightQuantizer(TransformerMixin, BaseEstimator):
    """Affine b-bit quantizer calibrated to the min/max of the fit data."""

    def __init__(self, bits: int = 8):
        self.bits = bits

    def fit(self, X, y=None):
        X = as_tensor(X)
        lo, hi = min_max(X)
        self.params_ = affine_params(lo, hi, QuantConfig(bits=self.bits))
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return quantize_uniform(as_tensor(X), self.params_).codes

    def inverse_transform(self, codes):
        check_is_fitted(self, "params_")
        codes = np.asarray(codes, dtype=np.uint8)
        return dequantize_uniform(QuantTensor(codes, self.params_))


class Log2ActivationQuantizer(TransformerMixin, BaseEstimator):
    """log2-domain b-bit quantizer for post-softmax activations in [0, 1]."""

    def __init__(self, bits: int = 8, epsilon: float = 1e-5):
        self.bits = bits
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = as_tensor(X)
        lo, hi = min_max(X)
        self.params_ = log2_params(lo, hi, QuantConfig(bits=self.bits, epsilon=self.epsilon))
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return quantize_log2(as_tensor(X), self.params_).codes

    def inverse_transform(self, codes):
        check_is_fitted(self, "params_")
        codes = np.asarray(codes, dtype=np.uint8)
        return dequantize_log2(QuantTensor(codes, self.params_))
