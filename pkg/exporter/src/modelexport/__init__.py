"""Export PyTorch checkpoints and softmax traces to the interchange format."""

from .export import (
    ExportError,
    export_model,
    export_traces,
    load_checkpoint,
    load_inputs,
    sanitize,
    softmax_site_paths,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "export_model",
    "export_traces",
    "load_checkpoint",
    "load_inputs",
    "sanitize",
    "softmax_site_paths",
]
