"""Structure-aware partitioning of a module tree into CNN and transformer blocks.

Traversal is depth-first over an explicit LIFO worklist: pop a node, classify
each child, push each child. Each node is popped exactly once, so the walk is
linear in the node count. Classification is first-match: Conv2d wins over any
name marker; otherwise Linear kind or a name containing one of the attention
markers (case-insensitive) lands in the transformer list. Containers whose
names match stay in the list; downstream stages only act on entries that
carry quantizable payloads.
"""

from __future__ import annotations

from dataclasses import dataclass

from .package import ModelPackage

NAME_MARKERS = ("attn", "attention", "transformer")


@dataclass(frozen=True)
class BlockPartition:
    cnn: tuple[str, ...]
    transformer: tuple[str, ...]

    def to_json(self) -> dict:
        return {"cnn": list(self.cnn), "transformer": list(self.transformer)}


def _matches_marker(name: str) -> bool:
    lowered = name.lower()
    return any(marker in lowered for marker in NAME_MARKERS)


def _traverse(pkg: ModelPackage) -> tuple[BlockPartition, int]:
    cnn: list[str] = []
    transformer: list[str] = []
    worklist = [(pkg.root, pkg.root.name)]
    pops = 0
    while worklist:
        node, path = worklist.pop()
        pops += 1
        for child in node.children:
            full = f"{path}.{child.name}"
            if child.kind == "Conv2d":
                cnn.append(full)
            elif child.kind == "Linear" or _matches_marker(child.name):
                transformer.append(full)
            worklist.append((child, full))
    return BlockPartition(tuple(cnn), tuple(transformer)), pops


def identify_blocks(pkg: ModelPackage) -> BlockPartition:
    """Partition the graph into CNN and transformer entries."""
    partition, _ = _traverse(pkg)
    return partition


def visit_count(pkg: ModelPackage) -> int:
    """Number of worklist pops during identification; equals the node count."""
    _, pops = _traverse(pkg)
    return pops


def covered_by(path: str, entries) -> bool:
    """True if path equals or lies beneath any entry path."""
    return any(path == e or path.startswith(e + ".") for e in entries)
