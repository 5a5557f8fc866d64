"""On-disk model interchange format.

A package is a directory holding `manifest.json` (UTF-8, keys sorted on
save) plus `tensors.bin` (little-endian f32 or raw u8 payloads concatenated
at byte-addressed offsets, no padding). Trace packages reuse the same pair
of files with a sites map instead of a module tree.

Node names may not contain '.' because '.' joins full paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .quantizers import LogParams, Params, QuantTensor, params_from_json, params_to_json

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"

KNOWN_KINDS = frozenset(
    {"Conv2d", "Linear", "ReLU", "Softmax", "Attention", "Flatten", "Container"}
)
WEIGHTED_KINDS = frozenset({"Conv2d", "Linear"})

DTYPE_SIZE = {"f32": 4, "u8": 1}
DTYPE_NUMPY = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


class PackageError(ValueError):
    """Format violation with a stable error code."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass
class TensorRecord:
    dtype: str
    shape: tuple[int, ...]
    offset: int
    nbytes: int
    quant: Optional[Params] = None

    @property
    def count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass
class ModuleNode:
    name: str
    kind: str
    children: list["ModuleNode"] = field(default_factory=list)
    tensors: dict = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)
    quant_act: Optional[LogParams] = None

    def child(self, name: str) -> "ModuleNode":
        for c in self.children:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass
class ModelPackage:
    root: ModuleNode
    blob: bytes
    metadata: dict = field(default_factory=dict)

    def iter_nodes(self) -> Iterator[tuple[str, ModuleNode]]:
        """Yield (full_path, node) in depth-first declaration order."""

        def walk(node, path):
            yield path, node
            for c in node.children:
                yield from walk(c, f"{path}.{c.name}")

        yield from walk(self.root, self.root.name)

    def get_node(self, path: str) -> ModuleNode:
        parts = path.split(".")
        if parts[0] != self.root.name:
            raise KeyError(path)
        node = self.root
        for part in parts[1:]:
            node = node.child(part)
        return node

    def tensor_data(self, rec: TensorRecord) -> np.ndarray:
        raw = self.blob[rec.offset : rec.offset + rec.nbytes]
        arr = np.frombuffer(raw, dtype=DTYPE_NUMPY[rec.dtype])
        return arr.reshape(rec.shape).copy()


@dataclass
class TracePackage:
    """Per-site calibration samples: one f32 record per sample per site."""

    sites: dict[str, list[TensorRecord]]
    n_samples: int
    blob: bytes

    def samples(self, site: str) -> list[np.ndarray]:
        out = []
        for rec in self.sites[site]:
            raw = self.blob[rec.offset : rec.offset + rec.nbytes]
            out.append(np.frombuffer(raw, dtype=DTYPE_NUMPY["f32"]).reshape(rec.shape).copy())
        return out


# ---------------------------------------------------------------------------
# construction helpers


def package_from_arrays(root: ModuleNode, metadata: Optional[dict] = None) -> ModelPackage:
    """Build a package from a tree whose tensor slots hold numpy arrays.

    Slot values may be float arrays (stored f32) or QuantTensor (stored u8
    with its quant block). The tree is rebuilt with TensorRecords.
    """
    chunks: list[bytes] = []
    offset = 0

    def convert(node: ModuleNode) -> ModuleNode:
        nonlocal offset
        tensors = {}
        for slot in sorted(node.tensors):
            value = node.tensors[slot]
            if isinstance(value, TensorRecord):
                raise TypeError("package_from_arrays expects arrays, not records")
            if isinstance(value, QuantTensor):
                raw = np.ascontiguousarray(value.codes, dtype=np.uint8).tobytes()
                rec = TensorRecord("u8", tuple(value.codes.shape), offset, len(raw),
                                   quant=value.params)
            else:
                arr = np.ascontiguousarray(value, dtype="<f4")
                raw = arr.tobytes()
                rec = TensorRecord("f32", tuple(arr.shape), offset, len(raw))
            chunks.append(raw)
            offset += len(raw)
            tensors[slot] = rec
        return ModuleNode(
            name=node.name,
            kind=node.kind,
            children=[convert(c) for c in node.children],
            tensors=tensors,
            attrs=dict(node.attrs),
            quant_act=node.quant_act,
        )

    pkg = ModelPackage(convert(root), b"".join(chunks), dict(metadata or {}))
    _validate_package(pkg)
    return pkg


def traces_from_arrays(site_arrays: dict[str, list], ) -> TracePackage:
    """Build a trace package from {site_id: [sample arrays]}."""
    counts = {len(v) for v in site_arrays.values()}
    if len(counts) > 1:
        raise PackageError("sample_count_mismatch", "sites disagree on sample count")
    n_samples = counts.pop() if counts else 0
    chunks: list[bytes] = []
    offset = 0
    sites: dict[str, list[TensorRecord]] = {}
    for site in sorted(site_arrays):
        recs = []
        for sample in site_arrays[site]:
            arr = np.ascontiguousarray(sample, dtype="<f4")
            raw = arr.tobytes()
            recs.append(TensorRecord("f32", tuple(arr.shape), offset, len(raw)))
            chunks.append(raw)
            offset += len(raw)
        sites[site] = recs
    tp = TracePackage(sites, n_samples, b"".join(chunks))
    _validate_traces(tp)
    return tp


# ---------------------------------------------------------------------------
# validation


def _validate_name(name, where: str):
    if not isinstance(name, str) or not name:
        raise PackageError("bad_name", f"empty node name under {where}")
    if "." in name:
        raise PackageError("bad_name", f"node name {name!r} contains '.'")


def _validate_record(rec: TensorRecord, blob_len: int, where: str):
    if rec.dtype not in DTYPE_SIZE:
        raise PackageError("bad_record", f"unknown dtype {rec.dtype!r} at {where}")
    if any(d < 1 for d in rec.shape):
        raise PackageError("bad_record", f"non-positive dim in shape at {where}")
    if rec.nbytes != rec.count * DTYPE_SIZE[rec.dtype]:
        raise PackageError("bad_record", f"nbytes/shape mismatch at {where}")
    if rec.offset < 0 or rec.offset + rec.nbytes > blob_len:
        raise PackageError("record_out_of_range", f"record out of range at {where}")
    if rec.dtype == "u8" and rec.quant is None:
        raise PackageError("dtype_quant_mismatch", f"u8 record without quant at {where}")
    if rec.dtype == "f32" and rec.quant is not None:
        raise PackageError("dtype_quant_mismatch", f"f32 record with quant at {where}")


def _validate_package(pkg: ModelPackage):
    blob_len = len(pkg.blob)
    spans = []
    for path, node in pkg.iter_nodes():
        _validate_name(node.name, path)
        seen = set()
        for c in node.children:
            if c.name in seen:
                raise PackageError("duplicate_name", f"duplicate child {c.name!r} in {path}")
            seen.add(c.name)
        if node.kind in WEIGHTED_KINDS and "weight" not in node.tensors:
            raise PackageError("bad_record", f"{node.kind} node {path} has no weight slot")
        if node.kind == "Container" and node.tensors:
            raise PackageError("bad_record", f"Container node {path} carries tensors")
        for slot, rec in node.tensors.items():
            _validate_record(rec, blob_len, f"{path}:{slot}")
            spans.append((rec.offset, rec.offset + rec.nbytes, f"{path}:{slot}"))
    spans.sort()
    for (s0, e0, w0), (s1, e1, w1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise PackageError("record_overlap", f"records overlap: {w0} and {w1}")


def _validate_traces(tp: TracePackage):
    blob_len = len(tp.blob)
    for site, recs in tp.sites.items():
        if len(recs) != tp.n_samples:
            raise PackageError(
                "sample_count_mismatch",
                f"site {site!r} has {len(recs)} of {tp.n_samples} samples",
            )
        shapes = {rec.shape for rec in recs}
        if len(shapes) > 1:
            raise PackageError("bad_record", f"site {site!r} mixes sample shapes")
        for i, rec in enumerate(recs):
            if rec.dtype != "f32":
                raise PackageError("bad_record", f"trace record must be f32 at {site}[{i}]")
            _validate_record(rec, blob_len, f"{site}[{i}]")


# ---------------------------------------------------------------------------
# JSON (de)serialization


def _record_to_json(rec: TensorRecord) -> dict:
    d = {
        "dtype": rec.dtype,
        "shape": list(rec.shape),
        "offset": rec.offset,
        "nbytes": rec.nbytes,
    }
    if rec.quant is not None:
        d["quant"] = params_to_json(rec.quant)
    return d


def _record_from_json(d: dict, where: str) -> TensorRecord:
    try:
        quant = params_from_json(d["quant"]) if "quant" in d else None
        return TensorRecord(
            dtype=d["dtype"],
            shape=tuple(int(x) for x in d["shape"]),
            offset=int(d["offset"]),
            nbytes=int(d["nbytes"]),
            quant=quant,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PackageError("bad_record", f"malformed record at {where}: {exc}") from exc


def _node_to_json(node: ModuleNode) -> dict:
    d = {
        "name": node.name,
        "kind": node.kind,
        "attrs": dict(node.attrs),
        "tensors": {slot: _record_to_json(rec) for slot, rec in node.tensors.items()},
        "children": [_node_to_json(c) for c in node.children],
    }
    if node.quant_act is not None:
        d["quant_act"] = params_to_json(node.quant_act)
    return d


def _node_from_json(d: dict, where: str) -> ModuleNode:
    if not isinstance(d, dict):
        raise PackageError("malformed_json", f"node is not an object at {where}")
    name = d.get("name")
    _validate_name(name, where)
    kind = d.get("kind")
    if not isinstance(kind, str) or not kind:
        raise PackageError("malformed_json", f"missing kind at {where}/{name}")
    quant_act = None
    if "quant_act" in d:
        p = params_from_json(d["quant_act"])
        if not isinstance(p, LogParams):
            raise PackageError("dtype_quant_mismatch", f"quant_act must be log2 at {where}/{name}")
        quant_act = p
    return ModuleNode(
        name=name,
        kind=kind,
        attrs={k: int(v) for k, v in d.get("attrs", {}).items()},
        tensors={
            slot: _record_from_json(rec, f"{where}/{name}:{slot}")
            for slot, rec in d.get("tensors", {}).items()
        },
        children=[_node_from_json(c, f"{where}/{name}") for c in d.get("children", [])],
        quant_act=quant_act,
    )


def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _read_manifest(path: Path) -> dict:
    manifest_path = path / MANIFEST_NAME
    blob_path = path / BLOB_NAME
    for p in (manifest_path, blob_path):
        if not p.is_file():
            raise PackageError("missing_file", str(p))
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PackageError("malformed_json", f"{manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise PackageError("malformed_json", f"{manifest_path}: top level is not an object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise PackageError("unknown_version", f"format_version {version!r}")
    return manifest


# ---------------------------------------------------------------------------
# load / save


def load_package(path) -> ModelPackage:
    path = Path(path)
    manifest = _read_manifest(path)
    if "root" not in manifest:
        raise PackageError("malformed_json", "manifest has no root")
    root = _node_from_json(manifest["root"], "")
    blob = (path / BLOB_NAME).read_bytes()
    pkg = ModelPackage(root, blob, dict(manifest.get("metadata", {})))
    _validate_package(pkg)
    return pkg


def save_package(pkg: ModelPackage, path) -> None:
    """Write manifest + blob; payloads are re-packed in traversal order."""
    _validate_package(pkg)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    chunks: list[bytes] = []
    offset = 0

    def repack(node: ModuleNode) -> ModuleNode:
        nonlocal offset
        tensors = {}
        for slot in sorted(node.tensors):
            rec = node.tensors[slot]
            raw = pkg.blob[rec.offset : rec.offset + rec.nbytes]
            tensors[slot] = TensorRecord(rec.dtype, rec.shape, offset, rec.nbytes, rec.quant)
            chunks.append(raw)
            offset += rec.nbytes
        return ModuleNode(node.name, node.kind, [repack(c) for c in node.children],
                          tensors, dict(node.attrs), node.quant_act)

    root = repack(pkg.root)
    manifest = {
        "format_version": FORMAT_VERSION,
        "metadata": pkg.metadata,
        "root": _node_to_json(root),
    }
    (path / BLOB_NAME).write_bytes(b"".join(chunks))
    (path / MANIFEST_NAME).write_bytes(_canonical_json(manifest))


def load_traces(path) -> TracePackage:
    path = Path(path)
    manifest = _read_manifest(path)
    sites_json = manifest.get("sites")
    if not isinstance(sites_json, dict):
        raise PackageError("malformed_json", "trace manifest has no sites map")
    n_samples = int(manifest.get("n_samples", 0))
    sites = {
        site: [_record_from_json(rec, f"{site}[{i}]") for i, rec in enumerate(recs)]
        for site, recs in sites_json.items()
    }
    blob = (path / BLOB_NAME).read_bytes()
    tp = TracePackage(sites, n_samples, blob)
    _validate_traces(tp)
    return tp


def save_traces(tp: TracePackage, path) -> None:
    _validate_traces(tp)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    chunks: list[bytes] = []
    offset = 0
    sites = {}
    for site in sorted(tp.sites):
        recs = []
        for rec in tp.sites[site]:
            raw = tp.blob[rec.offset : rec.offset + rec.nbytes]
            recs.append(TensorRecord(rec.dtype, rec.shape, offset, rec.nbytes))
            chunks.append(raw)
            offset += rec.nbytes
        sites[site] = recs
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_samples": tp.n_samples,
        "sites": {site: [_record_to_json(r) for r in recs] for site, recs in sites.items()},
    }
    (path / BLOB_NAME).write_bytes(b"".join(chunks))
    (path / MANIFEST_NAME).write_bytes(_canonical_json(manifest))
