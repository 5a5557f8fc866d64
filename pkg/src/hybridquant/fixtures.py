"""Generator-produced demo and test fixtures.

All fixtures are built in memory with seeded RNGs so tests and CLI demos are
reproducible without shipping binary files.
"""

from __future__ import annotations

import numpy as np

from .package import ModelPackage, ModuleNode, package_from_arrays


def example_tree_package() -> ModelPackage:
    """Tiny hybrid tree: one conv stem plus a transformer block.

    Partition is known by hand: cnn = [m.conv1],
    transformer = [m.transformer_block, m.transformer_block.qkv].
    """
    rng = np.random.default_rng(7)
    root = ModuleNode("m", "Container", children=[
        ModuleNode("conv1", "Conv2d",
                   tensors={"weight": rng.standard_normal((2, 3, 3, 3), dtype=np.float32)},
                   attrs={"stride": 1, "padding": 1}),
        ModuleNode("transformer_block", "Container", children=[
            ModuleNode("qkv", "Linear",
                       tensors={"weight": rng.standard_normal((4, 8), dtype=np.float32)}),
            ModuleNode("sm", "Softmax", attrs={"axis": -1}),
        ]),
    ])
    return package_from_arrays(root)


def toy_hybrid_package(seed: int = 0) -> ModelPackage:
    """Executable hybrid model: 2 conv stages, an attention stub, a head.

    Input shape (3, 8, 8); output is a 10-way score vector. The attention
    stub is Linear -> Softmax -> Linear inside a container named "attn".
    """
    rng = np.random.default_rng(seed)

    def w(*shape):
        fan_in = int(np.prod(shape[1:]))
        return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)

    root = ModuleNode("m", "Container", children=[
        ModuleNode("conv1", "Conv2d",
                   tensors={"weight": w(8, 3, 3, 3), "bias": w(8, 1).ravel()},
                   attrs={"stride": 1, "padding": 1}),
        ModuleNode("relu1", "ReLU"),
        ModuleNode("conv2", "Conv2d",
                   tensors={"weight": w(8, 8, 3, 3), "bias": w(8, 1).ravel()},
                   attrs={"stride": 2, "padding": 1}),
        ModuleNode("relu2", "ReLU"),
        ModuleNode("flatten", "Flatten"),
        ModuleNode("attn", "Container", children=[
            ModuleNode("q_proj", "Linear",
                       tensors={"weight": w(32, 128), "bias": w(32, 1).ravel()}),
            ModuleNode("sm", "Softmax", attrs={"axis": -1}),
            ModuleNode("out_proj", "Linear",
                       tensors={"weight": w(32, 32), "bias": w(32, 1).ravel()}),
        ]),
        ModuleNode("head", "Linear",
                   tensors={"weight": w(10, 32), "bias": w(10, 1).ravel()}),
    ])
    return package_from_arrays(root)


TOY_INPUT_SHAPE = (3, 8, 8)


def conv_heavy_package(seed: int = 1) -> ModelPackage:
    """Fixture whose parameter bytes are overwhelmingly conv weights.

    Used for compression accounting: no softmax sites, no biases, one small
    linear head.
    """
    rng = np.random.default_rng(seed)
    root = ModuleNode("m", "Container", children=[
        ModuleNode("conv1", "Conv2d",
                   tensors={"weight": rng.standard_normal((32, 16, 3, 3)).astype(np.float32)},
                   attrs={"stride": 1, "padding": 1}),
        ModuleNode("conv2", "Conv2d",
                   tensors={"weight": rng.standard_normal((64, 64, 3, 3)).astype(np.float32)},
                   attrs={"stride": 1, "padding": 1}),
        ModuleNode("head", "Linear",
                   tensors={"weight": rng.standard_normal((4, 16)).astype(np.float32)}),
    ])
    return package_from_arrays(root)


def random_inputs(n: int, shape=TOY_INPUT_SHAPE, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(shape).astype(np.float32) for _ in range(n)]
