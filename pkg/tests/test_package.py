import json
import os

import numpy as np
import pytest

from conftest import random_package
from hybridquant.package import (
    BLOB_NAME,
    MANIFEST_NAME,
    ModuleNode,
    PackageError,
    load_package,
    load_traces,
    package_from_arrays,
    save_package,
    save_traces,
    traces_from_arrays,
)
from hybridquant.tensor import min_max


def minimal_package():
    return package_from_arrays(ModuleNode("m", "Container"))


def test_minimal_package_round_trip(tmp_path):
    pkg = minimal_package()
    save_package(pkg, tmp_path / "pkg")
    loaded = load_package(tmp_path / "pkg")
    assert len(list(loaded.iter_nodes())) == 1
    assert loaded.root.name == "m"
    assert loaded.blob == b""


def test_conv_weight_round_trip(tmp_path):
    w = np.arange(18, dtype=np.float32).reshape(2, 3, 3) - 5.0
    pkg = package_from_arrays(ModuleNode("m", "Container", children=[
        ModuleNode("conv", "Conv2d", tensors={"weight": w}),
    ]))
    save_package(pkg, tmp_path / "pkg")
    loaded = load_package(tmp_path / "pkg")
    rec = loaded.get_node("m.conv").tensors["weight"]
    assert rec.nbytes == 72
    assert min_max(loaded.tensor_data(rec)) == (-5.0, 12.0)
    np.testing.assert_array_equal(loaded.tensor_data(rec), w)


def test_truncated_blob_rejected(tmp_path):
    w = np.zeros((2, 3, 3), dtype=np.float32)
    pkg = package_from_arrays(ModuleNode("m", "Container", children=[
        ModuleNode("conv", "Conv2d", tensors={"weight": w}),
    ]))
    save_package(pkg, tmp_path / "pkg")
    blob = (tmp_path / "pkg" / BLOB_NAME).read_bytes()
    (tmp_path / "pkg" / BLOB_NAME).write_bytes(blob[:-1])
    with pytest.raises(PackageError, match="record_out_of_range"):
        load_package(tmp_path / "pkg")


def test_missing_manifest(tmp_path):
    with pytest.raises(PackageError, match="missing_file"):
        load_package(tmp_path / "nope")


def test_malformed_json(tmp_path):
    d = tmp_path / "pkg"
    d.mkdir()
    (d / MANIFEST_NAME).write_text("{not json")
    (d / BLOB_NAME).write_bytes(b"")
    with pytest.raises(PackageError, match="malformed_json"):
        load_package(d)


def test_unknown_format_version(tmp_path):
    pkg = minimal_package()
    save_package(pkg, tmp_path / "pkg")
    manifest = json.loads((tmp_path / "pkg" / MANIFEST_NAME).read_text())
    manifest["format_version"] = 99
    (tmp_path / "pkg" / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(PackageError, match="unknown_version"):
        load_package(tmp_path / "pkg")


def test_duplicate_sibling_name():
    root = ModuleNode("m", "Container", children=[
        ModuleNode("a", "ReLU"), ModuleNode("a", "ReLU"),
    ])
    with pytest.raises(PackageError, match="duplicate_name"):
        package_from_arrays(root)


def test_dot_in_name_rejected():
    with pytest.raises(PackageError, match="bad_name"):
        package_from_arrays(ModuleNode("m.x", "Container"))


def test_dtype_quant_mismatch(tmp_path):
    w = np.zeros(4, dtype=np.float32)
    pkg = package_from_arrays(ModuleNode("m", "Container", children=[
        ModuleNode("lin", "Linear", tensors={"weight": w}),
    ]))
    save_package(pkg, tmp_path / "pkg")
    manifest = json.loads((tmp_path / "pkg" / MANIFEST_NAME).read_text())
    rec = manifest["root"]["children"][0]["tensors"]["weight"]
    rec["dtype"] = "u8"
    rec["nbytes"] = 4
    (tmp_path / "pkg" / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(PackageError, match="dtype_quant_mismatch"):
        load_package(tmp_path / "pkg")


def test_weighted_leaf_requires_weight_slot():
    with pytest.raises(PackageError, match="no weight slot"):
        package_from_arrays(ModuleNode("m", "Container", children=[
            ModuleNode("conv", "Conv2d"),
        ]))


def test_randomized_round_trip(tmp_path):
    rng = np.random.default_rng(42)
    for i in range(10):
        pkg = random_package(rng, max_nodes=50)
        d = tmp_path / f"pkg{i}"
        save_package(pkg, d)
        loaded = load_package(d)
        assert [p for p, _ in loaded.iter_nodes()] == [p for p, _ in pkg.iter_nodes()]
        for (p1, n1), (p2, n2) in zip(pkg.iter_nodes(), loaded.iter_nodes()):
            assert n1.kind == n2.kind and n1.attrs == n2.attrs
            assert set(n1.tensors) == set(n2.tensors)
            for slot in n1.tensors:
                np.testing.assert_array_equal(
                    pkg.tensor_data(n1.tensors[slot]), loaded.tensor_data(n2.tensors[slot])
                )


def test_save_load_save_idempotent(tmp_path):
    rng = np.random.default_rng(7)
    pkg = random_package(rng, max_nodes=40)
    save_package(pkg, tmp_path / "a")
    loaded = load_package(tmp_path / "a")
    save_package(loaded, tmp_path / "b")
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
    assert (tmp_path / "a" / BLOB_NAME).read_bytes() == (tmp_path / "b" / BLOB_NAME).read_bytes()


def test_save_to_read_only_location(tmp_path):
    if os.geteuid() == 0:
        pytest.skip("root ignores directory permissions")
    pkg = minimal_package()
    target = tmp_path / "ro"
    target.mkdir()
    target.chmod(0o500)
    try:
        with pytest.raises(OSError):
            save_package(pkg, target / "pkg")
    finally:
        target.chmod(0o700)


# --- traces ----------------------------------------------------------------


def test_traces_round_trip(tmp_path):
    site = "m.attn.sm:post_softmax"
    samples = [np.array([0.1, 0.2, 0.3, 0.4], dtype=np.float32),
               np.array([0.25, 0.25, 0.25, 0.25], dtype=np.float32)]
    tp = traces_from_arrays({site: samples})
    save_traces(tp, tmp_path / "tr")
    loaded = load_traces(tmp_path / "tr")
    assert loaded.n_samples == 2
    for got, want in zip(loaded.samples(site), samples):
        np.testing.assert_array_equal(got, want)


def test_traces_sample_count_mismatch(tmp_path):
    site = "m.sm:post_softmax"
    tp = traces_from_arrays({site: [np.array([0.5, 0.5], dtype=np.float32)] * 2})
    save_traces(tp, tmp_path / "tr")
    manifest = json.loads((tmp_path / "tr" / MANIFEST_NAME).read_text())
    manifest["sites"][site] = manifest["sites"][site][:1]
    (tmp_path / "tr" / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(PackageError, match="sample_count_mismatch"):
        load_traces(tmp_path / "tr")


def test_traces_empty_sites_valid(tmp_path):
    tp = traces_from_arrays({})
    save_traces(tp, tmp_path / "tr")
    loaded = load_traces(tmp_path / "tr")
    assert loaded.sites == {}
