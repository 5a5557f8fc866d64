"""Structure-aware post-training quantization for hybrid CNN/transformer models."""

from .blocks import BlockPartition, identify_blocks, visit_count
from .calibration import (
    CalibStats,
    calibrate_activations,
    calibrate_weights,
    execute,
    record_traces,
)
from .estimators import Log2ActivationQuantizer, UniformWeightQuantizer
from .package import (
    ModelPackage,
    ModuleNode,
    PackageError,
    TensorRecord,
    TracePackage,
    load_package,
    load_traces,
    package_from_arrays,
    save_package,
    save_traces,
    traces_from_arrays,
)
from .pipeline import PipelineConfig, derive_report, distribution_report, quantize_model
from .quantizers import (
    AffineParams,
    LogParams,
    QuantConfig,
    QuantTensor,
    affine_params,
    dequantize_log2,
    dequantize_uniform,
    log2_params,
    quantize_log2,
    quantize_uniform,
)
from .tensor import as_tensor, error_metrics, min_max

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "BlockPartition",
    "CalibStats",
    "Log2ActivationQuantizer",
    "LogParams",
    "ModelPackage",
    "ModuleNode",
    "PackageError",
    "PipelineConfig",
    "QuantConfig",
    "QuantTensor",
    "TensorRecord",
    "TracePackage",
    "UniformWeightQuantizer",
    "affine_params",
    "as_tensor",
    "calibrate_activations",
    "calibrate_weights",
    "dequantize_log2",
    "dequantize_uniform",
    "derive_report",
    "distribution_report",
    "error_metrics",
    "execute",
    "identify_blocks",
    "load_package",
    "load_traces",
    "log2_params",
    "min_max",
    "package_from_arrays",
    "quantize_log2",
    "quantize_model",
    "quantize_uniform",
    "record_traces",
    "save_package",
    "save_traces",
    "traces_from_arrays",
    "visit_count",
]
