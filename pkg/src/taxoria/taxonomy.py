"""Canonical in-memory taxonomy model: JSON (de)serialization, traversal, stats.

The canonical document format is one JSON object per node with keys
``name`` (required string), ``source`` (optional, one of the two provenance
literals, default ``original-taxonomy``), ``children`` (optional array of
node objects) and ``metadata`` (optional string-to-string object). Strict
mode rejects unknown keys; lenient mode preserves them verbatim.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Sequence

from .errors import EmptyDocument, MalformedDocument, PathNotFound, SchemaViolation

KNOWN_NODE_KEYS = {"name", "source", "children", "metadata"}


class SourceKey(str, Enum):
    """Provenance origin of a node. Serialized as the two literal strings."""

    ORIGINAL = "original-taxonomy"
    LLM = "llm-generated"


def name_key(name: str) -> str:
    """Normalization used for all name comparisons: trim + casefold."""
    return name.strip().casefold()


@dataclass
class TaxonomyNode:
    """A named tree node with provenance and ordered children.

    ``extra`` holds unknown document keys preserved by lenient-mode parsing;
    it is ignored by all comparison and merge logic.
    """

    name: str
    source: SourceKey = SourceKey.ORIGINAL
    children: list[TaxonomyNode] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def find_child(self, name: str) -> TaxonomyNode | None:
        """Case-insensitive, trimmed lookup among direct children."""
        key = name_key(name)
        for child in self.children:
            if name_key(child.name) == key:
                return child
        return None

    def copy(self) -> TaxonomyNode:
        """Deep copy of this subtree."""
        return TaxonomyNode(
            name=self.name,
            source=self.source,
            children=[c.copy() for c in self.children],
            metadata=dict(self.metadata),
            extra=dict(self.extra),
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "source": self.source.value}
        if self.metadata:
            d["metadata"] = dict(self.metadata)
        d["children"] = [c.to_dict() for c in self.children]
        d.update(self.extra)
        return d


@dataclass
class Taxonomy:
    """A rooted tree plus derived statistics (node count, max edge depth)."""

    root: TaxonomyNode
    class_count: int
    max_depth: int

    @classmethod
    def from_root(cls, root: TaxonomyNode) -> Taxonomy:
        """Wrap a validated node tree, computing stats."""
        validate_tree(root)
        count, depth = compute_node_stats(root)
        return cls(root=root, class_count=count, max_depth=depth)

    def refresh_stats(self) -> None:
        """Recompute class_count and max_depth after external mutation."""
        self.class_count, self.max_depth = compute_node_stats(self.root)

    def copy(self) -> Taxonomy:
        return Taxonomy(root=self.root.copy(), class_count=self.class_count, max_depth=self.max_depth)


def validate_tree(root: TaxonomyNode) -> None:
    """Check node invariants over a whole subtree.

    Raises SchemaViolation for empty names or duplicate sibling names
    (case-insensitive after trimming).
    """
    stack = [root]
    while stack:
        node = stack.pop()
        if not isinstance(node.name, str) or not node.name.strip():
            raise SchemaViolation("node name must be a non-empty string")
        seen: set[str] = set()
        for child in node.children:
            if not isinstance(child.name, str) or not child.name.strip():
                raise SchemaViolation("node name must be a non-empty string")
            key = name_key(child.name)
            if key in seen:
                raise SchemaViolation(
                    f"duplicate sibling name {child.name!r} under {node.name!r}"
                )
            seen.add(key)
            stack.append(child)


def _node_from_obj(obj: Any, strict: bool) -> TaxonomyNode:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"node must be a JSON object, got {type(obj).__name__}")
    if "name" not in obj:
        raise SchemaViolation("node is missing required key 'name'")
    name = obj["name"]
    if not isinstance(name, str) or not name.strip():
        raise SchemaViolation("node 'name' must be a non-empty string")

    source_raw = obj.get("source", SourceKey.ORIGINAL.value)
    try:
        source = SourceKey(source_raw)
    except ValueError:
        raise SchemaViolation(
            f"invalid source {source_raw!r}; expected one of "
            f"{[s.value for s in SourceKey]}"
        ) from None

    children_raw = obj.get("children", [])
    if not isinstance(children_raw, list):
        raise SchemaViolation(f"'children' of {name!r} must be an array")

    metadata_raw = obj.get("metadata", {})
    if not isinstance(metadata_raw, dict):
        raise SchemaViolation(f"'metadata' of {name!r} must be an object")
    metadata: dict[str, str] = {}
    for k, v in metadata_raw.items():
        if not isinstance(v, str):
            if strict:
                raise SchemaViolation(f"metadata value for {k!r} must be a string")
            v = json.dumps(v) if not isinstance(v, (int, float, bool)) else str(v)
        metadata[str(k)] = v

    extra: dict[str, Any] = {}
    unknown = [k for k in obj if k not in KNOWN_NODE_KEYS]
    if unknown:
        if strict:
            raise SchemaViolation(f"unknown key {unknown[0]!r} on node {name!r}")
        extra = {k: obj[k] for k in unknown}

    node = TaxonomyNode(name=name, source=source, metadata=metadata, extra=extra)
    seen: set[str] = set()
    for child_obj in children_raw:
        child = _node_from_obj(child_obj, strict)
        key = name_key(child.name)
        if key in seen:
            raise SchemaViolation(
                f"duplicate sibling name {child.name!r} under {name!r}"
            )
        seen.add(key)
        node.children.append(child)
    return node


def parse_taxonomy(document: str, strict: bool = True) -> Taxonomy:
    """Parse canonical taxonomy JSON text into a Taxonomy.

    Nodes without a ``source`` default to ``original-taxonomy``. Raises
    EmptyDocument, MalformedDocument, or SchemaViolation.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    if not document or not document.strip():
        raise EmptyDocument("document is empty")
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"invalid JSON: {e}") from e
    root = _node_from_obj(obj, strict=strict)
    count, depth = compute_node_stats(root)
    return Taxonomy(root=root, class_count=count, max_depth=depth)


def serialize_taxonomy(t: Taxonomy, indent: int | None = 2) -> str:
    """Emit the canonical JSON format; round-trips through parse_taxonomy."""
    return json.dumps(t.root.to_dict(), indent=indent, ensure_ascii=False)


def bfs_order(t: Taxonomy) -> list[tuple[TaxonomyNode, int]]:
    """Level order: root first, then each level in child order."""
    out: list[tuple[TaxonomyNode, int]] = []
    queue: deque[tuple[TaxonomyNode, int]] = deque([(t.root, 0)])
    while queue:
        node, depth = queue.popleft()
        out.append((node, depth))
        for child in node.children:
            queue.append((child, depth + 1))
    return out


def dfs_order(t: Taxonomy) -> list[tuple[TaxonomyNode, int]]:
    """Pre-order depth first, respecting child order."""
    out: list[tuple[TaxonomyNode, int]] = []
    stack: list[tuple[TaxonomyNode, int]] = [(t.root, 0)]
    while stack:
        node, depth = stack.pop()
        out.append((node, depth))
        for child in reversed(node.children):
            stack.append((child, depth + 1))
    return out


def iter_paths(t: Taxonomy) -> Iterator[tuple[tuple[str, ...], TaxonomyNode, int]]:
    """Yield (name path, node, depth) in pre-order."""
    stack: list[tuple[tuple[str, ...], TaxonomyNode, int]] = [((t.root.name,), t.root, 0)]
    while stack:
        path, node, depth = stack.pop()
        yield path, node, depth
        for child in reversed(node.children):
            stack.append((path + (child.name,), child, depth + 1))


def path_set(t: Taxonomy) -> set[tuple[str, ...]]:
    """All normalized name paths of the taxonomy (trim + casefold per segment)."""
    return {tuple(name_key(seg) for seg in path) for path, _, _ in iter_paths(t)}


def node_at_path(t: Taxonomy, path: Sequence[str]) -> TaxonomyNode:
    """Resolve a name path (root name first) case-insensitively.

    Raises PathNotFound carrying the first unmatched segment.
    """
    if not path:
        raise PathNotFound("", "empty path")
    if name_key(path[0]) != name_key(t.root.name):
        raise PathNotFound(path[0])
    node = t.root
    for segment in path[1:]:
        child = node.find_child(segment)
        if child is None:
            raise PathNotFound(segment)
        node = child
    return node


def compute_node_stats(root: TaxonomyNode) -> tuple[int, int]:
    """Return (node count, max edge depth) for a subtree rooted at depth 0."""
    count = 0
    max_depth = 0
    stack: list[tuple[TaxonomyNode, int]] = [(root, 0)]
    while stack:
        node, depth = stack.pop()
        count += 1
        if depth > max_depth:
            max_depth = depth
        for child in node.children:
            stack.append((child, depth + 1))
    return count, max_depth


def compute_stats(t: Taxonomy) -> tuple[int, int]:
    """Return (class_count, max_depth) recomputed from the node graph."""
    return compute_node_stats(t.root)
