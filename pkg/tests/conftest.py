"""Shared fixture generators: random module trees and packages."""

from __future__ import annotations

import numpy as np

from hybridquant.package import ModelPackage, ModuleNode, package_from_arrays

KIND_POOL = ["Conv2d", "Linear", "ReLU", "Softmax", "Attention", "Flatten",
             "Container", "BatchNorm", "Dropout"]
NAME_POOL = ["conv", "stem", "attn", "attention", "transformer", "block",
             "layer", "proj", "sm", "head", "mix", "ATTN", "TransformerEnc"]


def random_tree(rng: np.random.Generator, max_nodes: int = 500, max_depth: int = 6,
                with_tensors: bool = False) -> ModuleNode:
    """Random module tree with unique sibling names and randomized kinds."""
    budget = int(rng.integers(1, max_nodes))
    made = 0

    def make(depth: int) -> ModuleNode:
        nonlocal made
        made += 1
        kind = str(rng.choice(KIND_POOL))
        name = f"{rng.choice(NAME_POOL)}{made}"
        tensors = {}
        if with_tensors:
            if kind in ("Conv2d", "Linear"):
                shape = tuple(int(d) for d in rng.integers(1, 5, size=2))
                tensors["weight"] = rng.standard_normal(shape).astype(np.float32)
                if rng.random() < 0.5:
                    tensors["bias"] = rng.standard_normal(shape[0]).astype(np.float32)
            elif kind != "Container" and rng.random() < 0.2:
                tensors["stats"] = rng.standard_normal(3).astype(np.float32)
        node = ModuleNode(name, kind, tensors=tensors)
        if depth < max_depth:
            n_children = int(rng.integers(0, 4))
            for _ in range(n_children):
                if made >= budget:
                    break
                node.children.append(make(depth + 1))
        return node

    root = ModuleNode(f"root{rng.integers(1000)}", "Container")
    while made < budget:
        root.children.append(make(1))
    return root


def random_package(rng: np.random.Generator, max_nodes: int = 50) -> ModelPackage:
    root = random_tree(rng, max_nodes=max_nodes, with_tensors=True)
    return package_from_arrays(root)


def tree_package(root: ModuleNode) -> ModelPackage:
    """Wrap a bare tree (no tensors) as an in-memory package for traversal tests."""
    return ModelPackage(root, b"")
