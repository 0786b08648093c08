from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from taxoria.errors import (
    EmptyDocument,
    MalformedDocument,
    PathNotFound,
    SchemaViolation,
)
from taxoria.taxonomy import (
    SourceKey,
    TaxonomyNode,
    bfs_order,
    compute_stats,
    dfs_order,
    name_key,
    node_at_path,
    parse_taxonomy,
    path_set,
    serialize_taxonomy,
)

from helpers import random_tree_doc, taxonomy_from
from oracles import bfs_oracle, count_oracle, depth_oracle, dfs_oracle, paths_oracle


def test_parse_minimal_defaults():
    t = parse_taxonomy('{"name": "Thing"}')
    assert t.root.name == "Thing"
    assert t.root.source is SourceKey.ORIGINAL
    assert t.root.children == []
    assert t.root.metadata == {}
    assert (t.class_count, t.max_depth) == (1, 0)


def test_parse_full_document(store_json):
    t = parse_taxonomy(store_json)
    assert (t.class_count, t.max_depth) == (5, 2)
    ecommerce = t.root.children[0]
    assert ecommerce.name == "E-commerce Store"
    assert [c.name for c in ecommerce.children] == [
        "Subscription-based Store",
        "Dropshipping Store",
    ]


def test_source_literals_round_trip():
    doc = {
        "name": "Store",
        "source": "original-taxonomy",
        "children": [{"name": "Pop-up Store", "source": "llm-generated"}],
    }
    t = parse_taxonomy(json.dumps(doc))
    assert t.root.children[0].source is SourceKey.LLM
    out = serialize_taxonomy(t)
    assert '"original-taxonomy"' in out
    assert '"llm-generated"' in out


def test_parse_rejects_bad_source():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"name": "A", "source": "hand-written"}')


def test_parse_rejects_missing_name():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"children": []}')


def test_parse_rejects_blank_name():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"name": "   "}')


def test_parse_rejects_non_object_node():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"name": "A", "children": ["B"]}')


def test_parse_rejects_duplicate_siblings_case_insensitive():
    doc = {"name": "A", "children": [{"name": "Shoes"}, {"name": " shoes "}]}
    with pytest.raises(SchemaViolation):
        parse_taxonomy(json.dumps(doc))


def test_parse_empty_and_malformed():
    with pytest.raises(EmptyDocument):
        parse_taxonomy("   ")
    with pytest.raises(MalformedDocument):
        parse_taxonomy('{"name": "A"')


def test_strict_rejects_unknown_keys():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"name": "A", "wikidata_id": "Q1"}')


def test_lenient_preserves_unknown_keys():
    raw = '{"name": "A", "wikidata_id": "Q1", "children": []}'
    t = parse_taxonomy(raw, strict=False)
    assert t.root.extra == {"wikidata_id": "Q1"}
    round_tripped = json.loads(serialize_taxonomy(t))
    assert round_tripped["wikidata_id"] == "Q1"


def test_metadata_must_be_strings_in_strict_mode():
    with pytest.raises(SchemaViolation):
        parse_taxonomy('{"name": "A", "metadata": {"votes": 3}}')
    t = parse_taxonomy('{"name": "A", "metadata": {"votes": 3}}', strict=False)
    assert t.root.metadata["votes"] == "3"


def test_serialize_parse_round_trip(store_json):
    t = parse_taxonomy(store_json)
    again = parse_taxonomy(serialize_taxonomy(t))
    assert serialize_taxonomy(again) == serialize_taxonomy(t)
    assert (again.class_count, again.max_depth) == (t.class_count, t.max_depth)


def test_find_child_trims_and_folds_case(store_json):
    t = parse_taxonomy(store_json)
    assert t.root.find_child("  RETAIL STORE ").name == "Retail Store"
    assert t.root.find_child("Warehouse") is None


def test_node_at_path(store_json):
    t = parse_taxonomy(store_json)
    node = node_at_path(t, ["store", "e-commerce store", "Dropshipping Store"])
    assert node.name == "Dropshipping Store"
    with pytest.raises(PathNotFound) as err:
        node_at_path(t, ["Store", "Mall"])
    assert err.value.segment == "Mall"
    with pytest.raises(PathNotFound):
        node_at_path(t, ["Shop"])


def test_copy_is_deep(store_json):
    t = parse_taxonomy(store_json)
    dup = t.copy()
    dup.root.children[0].children.append(TaxonomyNode(name="Outlet"))
    assert len(t.root.children[0].children) == 2


def test_stats_against_oracles_random_trees():
    rng = random.Random(4821)
    for _ in range(200):
        doc = random_tree_doc(rng)
        t = taxonomy_from(doc)
        assert t.class_count == count_oracle(doc)
        assert t.max_depth == depth_oracle(doc)
        assert compute_stats(t) == (t.class_count, t.max_depth)


def test_traversals_match_oracles_random_trees():
    rng = random.Random(90125)
    for _ in range(200):
        doc = random_tree_doc(rng)
        t = taxonomy_from(doc)
        assert [(n.name, d) for n, d in bfs_order(t)] == bfs_oracle(doc)
        assert [(n.name, d) for n, d in dfs_order(t)] == dfs_oracle(doc)


def test_bfs_depth_monotone():
    rng = random.Random(7)
    for _ in range(50):
        t = taxonomy_from(random_tree_doc(rng))
        depths = [d for _, d in bfs_order(t)]
        assert depths == sorted(depths)


def test_path_set_matches_oracle():
    rng = random.Random(31)
    for _ in range(100):
        doc = random_tree_doc(rng)
        assert path_set(taxonomy_from(doc)) == paths_oracle(doc)


@given(st.text())
def test_name_key_idempotent(raw: str):
    assert name_key(name_key(raw)) == name_key(raw)


def test_serialization_key_order(store_json):
    t = parse_taxonomy(store_json)
    obj = json.loads(serialize_taxonomy(t))
    assert list(obj.keys())[:2] == ["name", "source"]
    assert "children" in obj
