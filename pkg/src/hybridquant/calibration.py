"""Calibration statistics and a minimal toy-graph executor.

Weight bounds are static per-conv-module min/max; activation bounds are a
running min/max over recorded post-softmax traces. The executor handles only
sequential compositions of Conv2d / Linear / ReLU / Softmax / Flatten so the
toolkit can generate traces and run fp32-vs-simulated comparisons without an
external ML framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockPartition, covered_by
from .package import ModelPackage, ModuleNode, TracePackage, traces_from_arrays
from .quantizers import SOFTMAX_TOL, QuantTensor, dequantize_log2, dequantize_uniform, quantize_log2
from .tensor import min_max

EXEC_KINDS = frozenset({"Conv2d", "Linear", "ReLU", "Softmax", "Flatten"})

TRACE_SUFFIX = ":post_softmax"


@dataclass
class CalibStats:
    weight_bounds: dict = field(default_factory=dict)
    activation_bounds: dict = field(default_factory=dict)
    n_samples: int = 0


def calibrate_weights(pkg: ModelPackage, part: BlockPartition) -> dict:
    """Per-conv-node (w_min, w_max); container entries without weights are skipped."""
    bounds = {}
    for path in part.cnn:
        try:
            node = pkg.get_node(path)
        except KeyError:
            raise ValueError(f"cnn entry {path!r} not found in graph") from None
        rec = node.tensors.get("weight")
        if rec is None:
            continue
        bounds[path] = min_max(pkg.tensor_data(rec))
    return bounds


def calibrate_activations(traces: TracePackage, part: BlockPartition) -> dict:
    """Per-site (a_min, a_max) running min/max across all samples."""
    if not traces.sites:
        raise ValueError("no sites")
    bounds = {}
    for site in sorted(traces.sites):
        if not site.endswith(TRACE_SUFFIX):
            raise ValueError(f"malformed site id {site!r}")
        path = site[: -len(TRACE_SUFFIX)]
        if not covered_by(path, part.transformer):
            raise ValueError(f"unpartitioned site: {site}")
        lo, hi = np.inf, -np.inf
        for sample in traces.samples(site):
            if not np.all(np.isfinite(sample)):
                raise ValueError(f"non-finite value in traces for {site}")
            lo = min(lo, float(sample.min()))
            hi = max(hi, float(sample.max()))
        if lo < 0.0 or hi > 1.0 + SOFTMAX_TOL:
            raise ValueError(f"trace values for {site} outside [0, 1]")
        bounds[site] = (lo, hi)
    return bounds


def softmax_sites(pkg: ModelPackage, part: BlockPartition) -> list[str]:
    """Site ids of all Softmax nodes beneath transformer-list entries."""
    sites = []
    for path, node in pkg.iter_nodes():
        if node.kind == "Softmax" and covered_by(path, part.transformer):
            sites.append(path + TRACE_SUFFIX)
    return sites


# ---------------------------------------------------------------------------
# toy executor


@dataclass(frozen=True)
class Step:
    path: str
    kind: str
    node: ModuleNode


def build_plan(pkg: ModelPackage) -> list[Step]:
    """Flatten the tree into sequential executable steps, in declaration order."""
    steps: list[Step] = []

    def walk(node: ModuleNode, path: str):
        for child in node.children:
            full = f"{path}.{child.name}"
            if child.kind == "Container":
                walk(child, full)
            elif child.kind in EXEC_KINDS:
                steps.append(Step(full, child.kind, child))
            else:
                raise ValueError(f"non-executable layer kind {child.kind!r} at {full}")

    walk(pkg.root, pkg.root.name)
    if not steps:
        raise ValueError("graph has no executable steps")
    return steps


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted, dtype=np.float32)
    return e / e.sum(axis=-1, keepdims=True)


def _conv2d(x: np.ndarray, w: np.ndarray, b, stride: int, padding: int) -> np.ndarray:
    if x.ndim != 3:
        raise ValueError(f"Conv2d expects (C, H, W) input, got shape {x.shape}")
    out_c, in_c, kh, kw = w.shape
    if x.shape[0] != in_c:
        raise ValueError(f"Conv2d channel mismatch: input {x.shape[0]}, weight {in_c}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError("Conv2d input smaller than kernel")
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, H', W', kh, kw)
    out = np.einsum("cijkl,ockl->oij", win, w, dtype=np.float32)
    if b is not None:
        out = out + b[:, None, None]
    return out.astype(np.float32)


def _step_weight(step: Step, pkg: ModelPackage, quant: ModelPackage | None) -> tuple:
    """(weight, bias) for a compute step; quantized weights are dequantized."""
    source = pkg
    node = step.node
    if quant is not None:
        try:
            node = quant.get_node(step.path)
            source = quant
        except KeyError:
            raise ValueError(f"missing quant params: node {step.path} absent from quantized package")
    w_rec = node.tensors["weight"]
    w = source.tensor_data(w_rec)
    if w_rec.dtype == "u8":
        w = dequantize_uniform(QuantTensor(w, w_rec.quant))
    b = None
    if "bias" in node.tensors:
        b = source.tensor_data(node.tensors["bias"]).astype(np.float32)
    return w.astype(np.float32), b


def execute(pkg: ModelPackage, input_tensor, mode: str = "fp32",
            quant: ModelPackage | None = None) -> tuple[np.ndarray, dict]:
    """Run a sequential graph; returns (output, captured post-softmax tensors).

    fp32 mode is the exact single-precision forward. simulated_quant mode
    dequantizes u8 conv weights from the quantized package before use and
    fake-quantizes (quantize + dequantize) each post-softmax tensor that
    carries log2 parameters.
    """
    if mode not in ("fp32", "simulated_quant"):
        raise ValueError(f"unknown mode {mode!r}")
    simulated = mode == "simulated_quant"
    if simulated and quant is None:
        raise ValueError("missing quant params: simulated_quant mode needs a quantized package")
    h = np.ascontiguousarray(input_tensor, dtype=np.float32)
    captured: dict[str, np.ndarray] = {}
    for step in build_plan(pkg):
        if step.kind == "Conv2d":
            w, b = _step_weight(step, pkg, quant if simulated else None)
            stride = step.node.attrs.get("stride", 1)
            padding = step.node.attrs.get("padding", 0)
            h = _conv2d(h, w, b, stride, padding)
        elif step.kind == "Linear":
            w, b = _step_weight(step, pkg, quant if simulated else None)
            if h.ndim != 1 or w.shape[1] != h.shape[0]:
                raise ValueError(
                    f"Linear shape mismatch at {step.path}: input {h.shape}, weight {w.shape}"
                )
            h = w @ h
            if b is not None:
                h = h + b
            h = h.astype(np.float32)
        elif step.kind == "ReLU":
            h = np.maximum(h, 0.0).astype(np.float32)
        elif step.kind == "Flatten":
            h = h.reshape(-1)
        elif step.kind == "Softmax":
            h = _softmax(h)
            if simulated:
                qnode = quant.get_node(step.path)
                if qnode.quant_act is not None:
                    h = dequantize_log2(quantize_log2(h, qnode.quant_act)).reshape(h.shape)
            captured[step.path + TRACE_SUFFIX] = h.copy()
    return h, captured


def record_traces(pkg: ModelPackage, inputs) -> TracePackage:
    """Run fp32 forwards and package the captured post-softmax tensors."""
    site_arrays: dict[str, list] = {}
    for i, x in enumerate(inputs):
        _, captured = execute(pkg, x, mode="fp32")
        if i == 0:
            site_arrays = {site: [] for site in captured}
        if set(captured) != set(site_arrays):
            raise ValueError("softmax site set changed between inputs")
        for site, value in captured.items():
            site_arrays[site].append(value)
    return traces_from_arrays(site_arrays)
