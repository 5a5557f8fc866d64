"""End-to-end quantization pipeline: identify, calibrate, quantize, report.

Convolutional weights become u8 codes with affine parameters (weights only;
biases stay f32). Calibrated softmax sites are annotated with log2
parameters for deployment-time activation quantization; activations are not
stored. The report carries per-tensor round-trip error, distribution
diagnostics, and compression accounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .blocks import identify_blocks
from .calibration import (
    TRACE_SUFFIX,
    calibrate_activations,
    calibrate_weights,
    softmax_sites,
)
from .package import ModelPackage, ModuleNode, TracePackage, package_from_arrays
from .quantizers import (
    QuantConfig,
    affine_params,
    dequantize_log2,
    dequantize_uniform,
    log2_params,
    params_to_json,
    quantize_log2,
    quantize_uniform,
)
from .tensor import error_metrics

REPORT_VERSION = 1
GRANULARITIES = ("per-module", "per-group")
HIST_BINS = 64


@dataclass(frozen=True)
class PipelineConfig:
    bits: int = 8
    epsilon: float = 1e-5
    granularity: str = "per-module"
    allow_uncalibrated: bool = False

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        QuantConfig(self.bits, self.epsilon)  # delegate numeric validation

    @property
    def quant_config(self) -> QuantConfig:
        return QuantConfig(self.bits, self.epsilon)


def distribution_report(t) -> dict:
    """64-bin histogram plus shape diagnostics for one tensor."""
    arr = np.asarray(t, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("empty tensor")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        counts = [int(arr.size)] + [0] * (HIST_BINS - 1)
        edges = [lo] * (HIST_BINS + 1)
        kurtosis = None
    else:
        counts_arr, edges_arr = np.histogram(arr, bins=HIST_BINS, range=(lo, hi))
        counts = [int(c) for c in counts_arr]
        edges = [float(e) for e in edges_arr]
        mean = float(arr.mean())
        centered = arr - mean
        m2 = float(np.mean(centered**2))
        m4 = float(np.mean(centered**4))
        kurtosis = m4 / (m2 * m2) - 3.0 if m2 > 0 else None
    return {
        "histogram": {"edges": edges, "counts": counts},
        "excess_kurtosis": kurtosis,
        "mass_below_0.01": float(np.mean(arr < 0.01)),
    }


def _group_key(path: str) -> str:
    # shared-range group = the root-level block the conv node lives under
    parts = path.split(".")
    return ".".join(parts[:2]) if len(parts) > 1 else path


def _overhead_bytes(params) -> int:
    return len(json.dumps(params_to_json(params), sort_keys=True,
                          separators=(",", ":")).encode("utf-8"))


def quantize_model(pkg: ModelPackage, traces: TracePackage | None,
                   cfg: PipelineConfig = PipelineConfig()) -> tuple[ModelPackage, dict]:
    """Quantize conv weights and annotate softmax sites; returns (package, report)."""
    for path, node in pkg.iter_nodes():
        if node.quant_act is not None:
            raise ValueError(f"already quantized: {path} carries activation params")
        for slot, rec in node.tensors.items():
            if rec.quant is not None:
                raise ValueError(f"already quantized: {path}:{slot} carries a quant block")

    qcfg = cfg.quant_config
    partition = identify_blocks(pkg)
    weight_bounds = calibrate_weights(pkg, partition)
    if cfg.granularity == "per-group" and weight_bounds:
        grouped: dict[str, tuple[float, float]] = {}
        for path, (lo, hi) in weight_bounds.items():
            key = _group_key(path)
            cur = grouped.get(key, (lo, hi))
            grouped[key] = (min(cur[0], lo), max(cur[1], hi))
        weight_bounds = {path: grouped[_group_key(path)] for path in weight_bounds}

    sites = softmax_sites(pkg, partition)
    activation_bounds: dict[str, tuple[float, float]] = {}
    if sites:
        if traces is not None and traces.sites:
            activation_bounds = calibrate_activations(traces, partition)
        missing = sorted(set(sites) - set(activation_bounds))
        if missing and not cfg.allow_uncalibrated:
            raise ValueError(f"uncalibrated softmax sites: {', '.join(missing)}")

    entries = []
    warnings = []
    overhead = 0
    fp32_bytes = 0

    def rebuild(node: ModuleNode, path: str) -> ModuleNode:
        nonlocal overhead, fp32_bytes
        tensors = {}
        for slot, rec in node.tensors.items():
            arr = pkg.tensor_data(rec)
            fp32_bytes += rec.count * 4
            if slot == "weight" and path in weight_bounds:
                params = affine_params(*weight_bounds[path], qcfg)
                qt = quantize_uniform(arr, params)
                recon = dequantize_uniform(qt)
                metrics = error_metrics(arr, recon)
                entries.append({
                    "path": path,
                    "slot": slot,
                    "scheme": "uniform",
                    "params": params_to_json(params),
                    "mse": metrics["mse"],
                    "max_abs_err": metrics["max_abs_err"],
                    "degenerate_range": params.degenerate,
                    "diagnostics": distribution_report(arr),
                })
                overhead += _overhead_bytes(params)
                tensors[slot] = qt
            else:
                tensors[slot] = arr
        quant_act = None
        site = path + TRACE_SUFFIX
        if node.kind == "Softmax" and site in activation_bounds:
            quant_act = log2_params(*activation_bounds[site], qcfg)
            samples = np.concatenate([s.ravel() for s in traces.samples(site)])
            recon = dequantize_log2(quantize_log2(samples, quant_act))
            metrics = error_metrics(samples, recon)
            entries.append({
                "path": path,
                "slot": None,
                "scheme": "log2",
                "params": params_to_json(quant_act),
                "mse": metrics["mse"],
                "max_abs_err": metrics["max_abs_err"],
                "degenerate_range": quant_act.degenerate,
                "diagnostics": distribution_report(samples),
            })
            overhead += _overhead_bytes(quant_act)
        return ModuleNode(
            name=node.name,
            kind=node.kind,
            children=[rebuild(c, f"{path}.{c.name}") for c in node.children],
            tensors=tensors,
            attrs=dict(node.attrs),
            quant_act=quant_act,
        )

    new_root = rebuild(pkg.root, pkg.root.name)
    if not entries:
        warnings.append("nothing quantized")

    quantized = package_from_arrays(new_root, metadata=dict(pkg.metadata))
    quant_bytes = sum(
        rec.nbytes for _, node in quantized.iter_nodes() for rec in node.tensors.values()
    ) + overhead
    report = {
        "report_version": REPORT_VERSION,
        "partition": partition.to_json(),
        "tensors": entries,
        "totals": {
            "fp32_bytes": fp32_bytes,
            "quant_bytes": quant_bytes,
            "param_overhead_bytes": overhead,
            "compression_ratio": fp32_bytes / quant_bytes if quant_bytes else 1.0,
        },
        "config": {
            "bits": cfg.bits,
            "epsilon": cfg.epsilon,
            "granularity": cfg.granularity,
        },
        "warnings": warnings,
    }
    quantized.metadata["quant_report"] = report
    return quantized, report


def derive_report(pkg: ModelPackage) -> dict:
    """Rebuild a report from a quantized package on disk.

    Structural fields and compression totals are recomputed from the records;
    error metrics are taken from the report embedded at quantization time
    (they need the original tensors, which the quantized package no longer
    holds).
    """
    stored = pkg.metadata.get("quant_report")
    stored_entries = {}
    if stored:
        stored_entries = {(e["path"], e["slot"]): e for e in stored.get("tensors", [])}

    partition = identify_blocks(pkg)
    entries = []
    fp32_bytes = 0
    quant_bytes = 0
    overhead = 0
    for path, node in pkg.iter_nodes():
        for slot, rec in node.tensors.items():
            fp32_bytes += rec.count * 4
            quant_bytes += rec.nbytes
            if rec.quant is not None:
                entry = {
                    "path": path,
                    "slot": slot,
                    "scheme": params_to_json(rec.quant)["scheme"],
                    "params": params_to_json(rec.quant),
                }
                overhead += _overhead_bytes(rec.quant)
                old = stored_entries.get((path, slot))
                if old:
                    entry.update({k: old[k] for k in ("mse", "max_abs_err", "diagnostics")
                                  if k in old})
                entries.append(entry)
        if node.quant_act is not None:
            entry = {
                "path": path,
                "slot": None,
                "scheme": "log2",
                "params": params_to_json(node.quant_act),
            }
            overhead += _overhead_bytes(node.quant_act)
            old = stored_entries.get((path, None))
            if old:
                entry.update({k: old[k] for k in ("mse", "max_abs_err", "diagnostics")
                              if k in old})
            entries.append(entry)
    quant_bytes += overhead
    report = {
        "report_version": REPORT_VERSION,
        "partition": partition.to_json(),
        "tensors": entries,
        "totals": {
            "fp32_bytes": fp32_bytes,
            "quant_bytes": quant_bytes,
            "param_overhead_bytes": overhead,
            "compression_ratio": fp32_bytes / quant_bytes if quant_bytes else 1.0,
        },
        "warnings": [] if entries else ["nothing quantized"],
    }
    return report
