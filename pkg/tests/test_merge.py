from __future__ import annotations

import json
import random

import pytest

from taxoria.errors import InvariantViolation, PathNotFound, RootMismatch
from taxoria.merge import MergeColor, merge_candidate, merge_taxonomies
from taxoria.taxonomy import SourceKey, TaxonomyNode, compute_stats, path_set

from helpers import random_tree_doc, taxonomy_from
from oracles import paths_oracle


def llm_node(name: str, children: list[TaxonomyNode] | None = None) -> TaxonomyNode:
    return TaxonomyNode(name=name, source=SourceKey.LLM, children=children or [])


def test_merge_candidate_appends_new_node(store_doc):
    t = taxonomy_from(store_doc)
    outcome = merge_candidate(t, ["Store"], llm_node("Pop-up Store"))
    assert outcome.added_count == 1
    assert outcome.merged_count == 0
    assert t.root.children[-1].name == "Pop-up Store"
    assert t.root.children[-1].source is SourceKey.LLM
    assert (t.class_count, t.max_depth) == (6, 2)


def test_merge_candidate_appends_after_existing_children(store_doc):
    t = taxonomy_from(store_doc)
    merge_candidate(t, ["Store"], llm_node("Warehouse Store"))
    assert [c.name for c in t.root.children] == [
        "E-commerce Store",
        "Retail Store",
        "Warehouse Store",
    ]


def test_merge_candidate_name_match_keeps_existing(store_doc):
    t = taxonomy_from(store_doc)
    candidate = llm_node(" E-COMMERCE STORE ")
    candidate.metadata = {"similarity": "0.97", "model": "m"}
    outcome = merge_candidate(t, ["Store"], candidate)
    assert outcome.added_count == 0
    assert outcome.merged_count == 1
    assert outcome.skipped_duplicates == 1
    kept = t.root.children[0]
    assert kept.name == "E-commerce Store"
    assert kept.source is SourceKey.ORIGINAL
    # existing metadata wins; missing keys are filled from the candidate
    assert kept.metadata["similarity"] == "0.97"


def test_merge_candidate_existing_metadata_wins(store_doc):
    t = taxonomy_from(store_doc)
    t.root.children[0].metadata["similarity"] = "1.0"
    candidate = llm_node("E-commerce Store")
    candidate.metadata = {"similarity": "0.5", "model": "m"}
    merge_candidate(t, ["Store"], candidate)
    assert t.root.children[0].metadata == {"similarity": "1.0", "model": "m"}


def test_merge_candidate_recurses_into_matched_subtree(store_doc):
    t = taxonomy_from(store_doc)
    candidate = llm_node(
        "E-commerce Store",
        [llm_node("Dropshipping Store"), llm_node("Marketplace Store")],
    )
    outcome = merge_candidate(t, ["Store"], candidate)
    assert outcome.added_count == 1
    assert outcome.merged_count == 2  # e-commerce + dropshipping matches
    names = [c.name for c in t.root.children[0].children]
    assert names == ["Subscription-based Store", "Dropshipping Store", "Marketplace Store"]


def test_merge_candidate_updates_stats_incrementally(store_doc):
    t = taxonomy_from(store_doc)
    deep = llm_node("Retail Store", [llm_node("Department Store", [llm_node("Discount Department Store")])])
    merge_candidate(t, ["Store"], deep)
    assert (t.class_count, t.max_depth) == (7, 3)
    assert compute_stats(t) == (7, 3)


def test_merge_candidate_bad_path(store_doc):
    t = taxonomy_from(store_doc)
    with pytest.raises(PathNotFound):
        merge_candidate(t, ["Store", "Bakery"], llm_node("X"))


def test_merge_candidate_rejects_invalid_subtree(store_doc):
    t = taxonomy_from(store_doc)
    bad = llm_node("New", [llm_node("dup"), llm_node("DUP")])
    with pytest.raises(InvariantViolation):
        merge_candidate(t, ["Store"], bad)


def test_merge_taxonomies_root_mismatch():
    a = taxonomy_from({"name": "Store"})
    b = taxonomy_from({"name": "Shop"})
    with pytest.raises(RootMismatch):
        merge_taxonomies(a, b)


def test_merge_taxonomies_left_untouched(store_doc):
    left = taxonomy_from(store_doc)
    right = taxonomy_from({"name": "Store", "children": [{"name": "Kiosk"}]})
    before = json.dumps(store_doc)
    merged, _ = merge_taxonomies(left, right)
    assert json.dumps(store_doc) == before
    assert left.class_count == 5
    assert merged.class_count == 6


def test_merge_taxonomies_colors(store_doc):
    left = taxonomy_from(store_doc)
    right = taxonomy_from(
        {
            "name": "Store",
            "children": [
                {"name": "E-commerce Store", "children": [{"name": "Auction Store"}]},
                {"name": "Kiosk"},
            ],
        }
    )
    merged, report = merge_taxonomies(left, right)
    by_path = {tuple(e.path): e.color for e in report}
    assert by_path[("Store",)] is MergeColor.COMMON
    assert by_path[("Store", "E-commerce Store")] is MergeColor.COMMON
    assert by_path[("Store", "Retail Store")] is MergeColor.ONLY_LEFT
    assert by_path[("Store", "E-commerce Store", "Auction Store")] is MergeColor.ONLY_RIGHT
    assert by_path[("Store", "Kiosk")] is MergeColor.ONLY_RIGHT
    assert len(report) == merged.class_count


def test_merge_with_self_all_common(store_doc):
    t = taxonomy_from(store_doc)
    merged, report = merge_taxonomies(t, taxonomy_from(store_doc))
    assert merged.class_count == t.class_count
    assert all(e.color is MergeColor.COMMON for e in report)


def test_merge_idempotence_and_union_random():
    rng = random.Random(2024)
    for _ in range(120):
        doc_a = random_tree_doc(rng, max_nodes=40)
        doc_b = dict(random_tree_doc(rng, max_nodes=40), name=doc_a["name"])
        a, b = taxonomy_from(doc_a), taxonomy_from(doc_b)

        self_merged, _ = merge_taxonomies(a, taxonomy_from(doc_a))
        assert self_merged.class_count == a.class_count

        merged, report = merge_taxonomies(a, b)
        assert path_set(merged) == paths_oracle(doc_a) | paths_oracle(doc_b)
        assert len(report) == merged.class_count
        color_of = {tuple(e.path): e.color for e in report}
        assert len(color_of) == len(report)  # paths unique
