"""Convert a PyTorch module tree into the interchange format.

The output is the same `manifest.json` + `tensors.bin` pair the primary
toolkit reads: a JSON module tree with per-tensor records pointing into a
little-endian f32 blob. This module writes the format directly; it never
imports the primary package.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"
TRACE_SUFFIX = ":post_softmax"

KIND_MAP = (
    (nn.Conv2d, "Conv2d"),
    (nn.Linear, "Linear"),
    (nn.ReLU, "ReLU"),
    (nn.Softmax, "Softmax"),
    (nn.Flatten, "Flatten"),
)

ROOT_NAME = "model"


class ExportError(ValueError):
    pass


def load_checkpoint(path) -> nn.Module:
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"checkpoint not found: {path}")
    obj = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(obj, nn.Module):
        raise ExportError(f"checkpoint {path} does not contain a module tree")
    obj.eval()
    return obj


def sanitize(name: str) -> str:
    # '.' is the path separator in the interchange format
    return name.replace(".", "_")


def _kind_of(module: nn.Module) -> str:
    for cls, kind in KIND_MAP:
        if isinstance(module, cls):
            return kind
    if list(module.children()):
        return "Container"
    return type(module).__name__  # unknown leaf kind, kept by name


def _attrs_of(module: nn.Module) -> dict:
    attrs = {}
    if isinstance(module, nn.Conv2d):
        stride = module.stride[0] if isinstance(module.stride, tuple) else module.stride
        padding = module.padding[0] if isinstance(module.padding, tuple) else module.padding
        attrs["stride"] = int(stride)
        attrs["padding"] = int(padding)
    elif isinstance(module, nn.Softmax):
        attrs["axis"] = int(module.dim if module.dim is not None else -1)
    return attrs


def _param_array(tensor: torch.Tensor, where: str) -> np.ndarray:
    if tensor.dtype != torch.float32:
        raise ExportError(f"unknown tensor dtype {tensor.dtype} at {where}")
    return tensor.detach().cpu().contiguous().numpy().astype("<f4", copy=False)


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, arr: np.ndarray) -> dict:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        rec = {
            "dtype": "f32",
            "shape": list(arr.shape),
            "offset": self.offset,
            "nbytes": len(raw),
        }
        self.chunks.append(raw)
        self.offset += len(raw)
        return rec

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def module_to_node(module: nn.Module, source_path: str, name: str, blob: _BlobWriter) -> dict:
    kind = _kind_of(module)
    if kind not in {k for _, k in KIND_MAP} and kind != "Container":
        log.warning("unknown layer kind %s at %s, exported as-is", kind, source_path or "<root>")
    tensors = {}
    direct_params = dict(module.named_parameters(recurse=False))
    if kind == "Container":
        if direct_params:
            log.warning(
                "container %s carries direct parameters %s; the interchange format "
                "forbids tensors on containers, skipping them",
                source_path or "<root>", sorted(direct_params),
            )
    else:
        for slot in sorted(direct_params):
            tensors[slot] = blob.add(_param_array(direct_params[slot],
                                                  f"{source_path}.{slot}"))

    children = []
    seen: dict[str, str] = {}
    for child_name, child in module.named_children():
        clean = sanitize(child_name)
        child_source = f"{source_path}.{child_name}" if source_path else child_name
        if clean in seen:
            raise ExportError(
                f"name collision after sanitization: {seen[clean]!r} and "
                f"{child_source!r} both map to {clean!r}"
            )
        seen[clean] = child_source
        children.append(module_to_node(child, child_source, clean, blob))

    return {
        "name": name,
        "kind": kind,
        "attrs": _attrs_of(module),
        "tensors": tensors,
        "children": children,
    }


def export_model(checkpoint, out_dir) -> dict:
    """Write a checkpoint as an interchange package; returns the manifest."""
    model = checkpoint if isinstance(checkpoint, nn.Module) else load_checkpoint(checkpoint)
    blob = _BlobWriter()
    root = module_to_node(model, "", ROOT_NAME, blob)
    manifest = {"format_version": FORMAT_VERSION, "metadata": {}, "root": root}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / BLOB_NAME).write_bytes(blob.bytes())
    (out_dir / MANIFEST_NAME).write_bytes(
        (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    return manifest


def softmax_site_paths(model: nn.Module) -> dict:
    """Map interchange full paths of Softmax modules to the modules themselves."""
    sites = {}

    def walk(module: nn.Module, path: str):
        for child_name, child in module.named_children():
            full = f"{path}.{sanitize(child_name)}"
            if isinstance(child, nn.Softmax):
                sites[full] = child
            walk(child, full)

    walk(model, ROOT_NAME)
    return sites


def export_traces(checkpoint, inputs, out_dir) -> dict:
    """Run calibration inputs through the model, capturing every softmax output.

    Capture uses forward hooks on nn.Softmax modules; models that call the
    functional softmax must be patched to use the module form first.
    Returns the trace manifest.
    """
    model = checkpoint if isinstance(checkpoint, nn.Module) else load_checkpoint(checkpoint)
    sites = softmax_site_paths(model)
    if not sites:
        raise ExportError("zero softmax sites found; nothing to trace")

    captured: dict[str, list[np.ndarray]] = {path + TRACE_SUFFIX: [] for path in sites}
    handles = []

    def make_hook(site_id):
        def hook(_module, _inputs, output):
            # stored exactly as observed, fp32, no downcasting
            captured[site_id].append(
                output.detach().cpu().contiguous().numpy().astype("<f4", copy=False).copy()
            )
        return hook

    for path, module in sites.items():
        handles.append(module.register_forward_hook(make_hook(path + TRACE_SUFFIX)))
    try:
        with torch.no_grad():
            for x in inputs:
                model(torch.as_tensor(np.asarray(x, dtype=np.float32)))
    finally:
        for h in handles:
            h.remove()

    n_samples = len(list(inputs))
    blob = _BlobWriter()
    sites_json = {}
    for site_id in sorted(captured):
        samples = captured[site_id]
        if len(samples) != n_samples:
            raise ExportError(
                f"site {site_id} fired {len(samples)} times for {n_samples} inputs; "
                "per-forward multi-invocation is not supported"
            )
        sites_json[site_id] = [blob.add(s) for s in samples]
    manifest = {"format_version": FORMAT_VERSION, "n_samples": n_samples, "sites": sites_json}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / BLOB_NAME).write_bytes(blob.bytes())
    (out_dir / MANIFEST_NAME).write_bytes(
        (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    return manifest


def load_inputs(path) -> list[np.ndarray]:
    """Read the executor input file format: JSON header line + raw f32 payload."""
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"input file not found: {path}")
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        count = int(header["count"])
        shape = tuple(int(d) for d in header["shape"])
        payload = f.read()
    per = int(np.prod(shape)) * 4
    if len(payload) != count * per:
        raise ExportError(f"input payload size mismatch in {path}")
    return [
        np.frombuffer(payload[i * per : (i + 1) * per], dtype="<f4").reshape(shape).copy()
        for i in range(count)
    ]
