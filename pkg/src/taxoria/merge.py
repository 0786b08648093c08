"""Merge engine: integrate candidate nodes into a taxonomy, merge two taxonomies.

Match key is the case-insensitive trimmed node name among siblings only.
On a name match the existing node is kept (source key and name untouched),
existing metadata wins, and the candidate's children are merged recursively;
otherwise the candidate subtree is appended after the existing children.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import InvariantViolation, RootMismatch
from .taxonomy import (
    Taxonomy,
    TaxonomyNode,
    compute_node_stats,
    iter_paths,
    name_key,
    node_at_path,
    path_set,
    validate_tree,
)


@dataclass
class MergeOutcome:
    """Counters for one merge: added_count always equals the class_count delta."""

    added_count: int = 0
    merged_count: int = 0
    skipped_duplicates: int = 0
    max_added_depth: int = 0  # deepest absolute depth among appended nodes


class MergeColor(str, Enum):
    """Origin of a node in a two-taxonomy merge report."""

    COMMON = "common"
    ONLY_LEFT = "only-left"
    ONLY_RIGHT = "only-right"


@dataclass
class MergeReportEntry:
    path: list[str]
    color: MergeColor

    def to_dict(self) -> dict:
        return {"path": list(self.path), "color": self.color.value}


def _merge_node(
    existing_parent: TaxonomyNode,
    candidate: TaxonomyNode,
    parent_depth: int,
    outcome: MergeOutcome,
) -> None:
    match = existing_parent.find_child(candidate.name)
    if match is None:
        copied = candidate.copy()
        count, sub_depth = compute_node_stats(copied)
        outcome.added_count += count
        outcome.max_added_depth = max(
            outcome.max_added_depth, parent_depth + 1 + sub_depth
        )
        existing_parent.children.append(copied)
        return

    outcome.merged_count += 1
    for k, v in candidate.metadata.items():
        match.metadata.setdefault(k, v)
    added_before = outcome.added_count
    for child in candidate.children:
        _merge_node(match, child, parent_depth + 1, outcome)
    if outcome.added_count == added_before:
        outcome.skipped_duplicates += 1


def merge_candidate(
    t: Taxonomy, parent_path: Sequence[str], candidate: TaxonomyNode
) -> MergeOutcome:
    """Merge one candidate subtree under the node at parent_path, in place.

    This is the only mutation path in the system. The candidate keeps its
    own source key (callers set ``llm-generated`` for enrichment candidates).
    Raises PathNotFound or InvariantViolation.
    """
    parent = node_at_path(t, parent_path)
    try:
        validate_tree(candidate)
    except Exception as e:
        raise InvariantViolation(f"candidate violates node invariants: {e}") from e

    outcome = MergeOutcome()
    _merge_node(parent, candidate, len(parent_path) - 1, outcome)
    t.class_count += outcome.added_count
    if outcome.added_count:
        t.max_depth = max(t.max_depth, outcome.max_added_depth)
    return outcome


def merge_taxonomies(
    left: Taxonomy, right: Taxonomy
) -> tuple[Taxonomy, list[MergeReportEntry]]:
    """Union of both trees keyed by name path; left child order wins.

    Nodes present in both trees keep left's name, source, and metadata
    (right fills only missing metadata keys); right-only subtrees are
    appended with their own source keys. The report colors every node of
    the result as common / only-left / only-right.
    """
    if name_key(left.root.name) != name_key(right.root.name):
        raise RootMismatch(
            f"root names differ: {left.root.name!r} vs {right.root.name!r}"
        )
    merged = left.copy()
    for k, v in right.root.metadata.items():
        merged.root.metadata.setdefault(k, v)
    for child in right.root.children:
        merge_candidate(merged, [merged.root.name], child)

    left_paths = path_set(left)
    right_paths = path_set(right)
    report: list[MergeReportEntry] = []
    for path, _node, _depth in iter_paths(merged):
        norm = tuple(name_key(seg) for seg in path)
        if norm in left_paths and norm in right_paths:
            color = MergeColor.COMMON
        elif norm in left_paths:
            color = MergeColor.ONLY_LEFT
        else:
            color = MergeColor.ONLY_RIGHT
        report.append(MergeReportEntry(path=list(path), color=color))
    return merged, report
