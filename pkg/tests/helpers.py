"""Shared fakes and builders for the test suite."""

from __future__ import annotations

import json
import random
import re
from collections import deque
from pathlib import Path

import numpy as np
import requests

from taxoria.embeddings import TermVector
from taxoria.generation import MAX_CANDIDATES, build_prompt, prompt_key
from taxoria.taxonomy import Taxonomy, name_key, parse_taxonomy


def taxonomy_from(doc: dict) -> Taxonomy:
    return parse_taxonomy(json.dumps(doc))


def chain_doc(names: list[str]) -> dict:
    """Single-path taxonomy: names[0] -> names[1] -> ..."""
    node: dict = {"name": names[-1]}
    for name in reversed(names[:-1]):
        node = {"name": name, "children": [node]}
    return node


class ConstEmbedder:
    """Every term maps to the same vector: cosine is always exactly 1."""

    def __init__(self, dimension: int = 4):
        self.vector = np.ones(dimension, dtype=np.float64)
        self.calls: list[str] = []

    def embed(self, term: str) -> TermVector:
        self.calls.append(term)
        return TermVector(term=term, vector=self.vector.copy(), coverage=1.0)


class MapEmbedder:
    """Explicit per-term vectors; unknown terms raise like a real provider."""

    def __init__(self, table: dict[str, list[float]]):
        self.table = {name_key(k): np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def embed(self, term: str) -> TermVector:
        from taxoria.errors import OutOfVocabulary

        key = name_key(term)
        if key not in self.table:
            raise OutOfVocabulary(f"no vector for {term!r}")
        return TermVector(term=term, vector=self.table[key].copy(), coverage=1.0)


_PATH_RE = re.compile(r"^Category path from the root: (.*)$", re.MULTILINE)


def path_of_prompt(prompt: str) -> tuple[str, ...]:
    match = _PATH_RE.search(prompt)
    if not match:
        raise AssertionError(f"not a child-generation prompt:\n{prompt}")
    return tuple(match.group(1).split(" > "))


class ScriptedLlm:
    """Child-generation client driven by a path -> raw-response callable."""

    def __init__(self, respond, model_id: str = "scripted"):
        self.respond = respond
        self.model_id = model_id
        self.prompts: list[str] = []

    def generate(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.respond(path_of_prompt(prompt))

    def list_models(self) -> list[str]:
        return [self.model_id]


class ScriptedJudge:
    """Judge client returning a fixed raw response per (parent, candidate)."""

    def __init__(self, table: dict[tuple[str, str], str], default: str = "95"):
        self.table = table
        self.default = default
        self.model_id = "scripted-judge"
        self.calls: list[tuple[str, str]] = []

    def generate(self, prompt: str) -> str:
        parent = re.search(r'Parent category: "(.*)"', prompt).group(1)
        candidate = re.search(r'Proposed subclass: "(.*)"', prompt).group(1)
        self.calls.append((parent, candidate))
        return self.table.get((parent, candidate), self.default)


def _mirror_parse(names: list[str]) -> list[str]:
    """Trim + case-insensitive dedup (parser) + top-3 cap (batch builder)."""
    out, seen = [], set()
    for raw in names:
        name = raw.strip()
        if not name or name.casefold() in seen:
            continue
        seen.add(name.casefold())
        out.append(name)
    return out[:MAX_CANDIDATES]


def write_replay_fixtures(
    fixture_dir: str | Path,
    seed: Taxonomy,
    children_for,
    max_extra_depth: int = 1,
    models: tuple[str, ...] = ("replay-model",),
) -> dict[tuple[str, ...], list[str]]:
    """Record a response file for every node an all-accepting run would prompt.

    children_for(path) -> list of candidate names for that node. The walk
    assumes every candidate is accepted, so the fixture set is a superset of
    what any filtered run will request. Returns the prompted-path map.
    """
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    boundary = seed.max_depth + max_extra_depth
    prompted: dict[tuple[str, ...], list[str]] = {}

    seed_children: dict[tuple[str, ...], list[str]] = {}

    def index(node, path):
        seed_children[path] = [c.name for c in node.children]
        for child in node.children:
            index(child, path + (name_key(child.name),))

    index(seed.root, (name_key(seed.root.name),))

    queue = deque([((seed.root.name,), 0)])
    while queue:
        path, depth = queue.popleft()
        if depth >= boundary:
            continue
        names = _mirror_parse(list(children_for(path)))
        prompted[path] = names
        prompt = build_prompt(path[-1], path)
        (fixture_dir / f"{prompt_key(prompt)}.txt").write_text(
            json.dumps({"children": list(children_for(path))}), encoding="utf-8"
        )
        norm_path = tuple(name_key(p) for p in path)
        child_names = list(seed_children.get(norm_path, []))
        existing = {name_key(n) for n in child_names}
        for name in names:
            if name_key(name) not in existing:
                existing.add(name_key(name))
                child_names.append(name)
        for name in child_names:
            queue.append((path + (name,), depth + 1))

    (fixture_dir / "models.json").write_text(json.dumps(list(models)), encoding="utf-8")
    return prompted


def canned_kg(labels_to_entity: dict, instances: set, fail: bool = False):
    """http_get fake modeling a SPARQL endpoint with a fixed dataset."""

    class R:
        def __init__(self, payload):
            self.payload = payload

        def raise_for_status(self):
            pass

        def json(self):
            return self.payload

    def http_get(endpoint, params=None, headers=None, timeout=None):
        if fail:
            raise requests.ConnectTimeout("endpoint timed out")
        assert headers["Accept"] == "application/sparql-results+json"
        query = params["query"]
        if query.startswith("PREFIX") and "ASK" in query:
            uri = query.split("<")[2].split(">")[0]
            return R({"boolean": uri in instances})
        # label resolution: exact-match query quotes the label verbatim,
        # the fallback lowercases it inside LCASE
        for label, uri in labels_to_entity.items():
            if f'"{label}"@en' in query or f'= "{label.lower()}"' in query:
                return R({"results": {"bindings": [{"item": {"value": uri}}]}})
        return R({"results": {"bindings": []}})

    return http_get


NAME_POOL = [f"n{i}" for i in range(18)]


def random_tree_doc(rng: random.Random, max_nodes: int = 60, pool=None) -> dict:
    """Random taxonomy dict with sibling-unique names drawn from a shared pool.

    The small pool makes independently generated trees overlap, which is
    what merge tests need. Casing is jittered to exercise case-insensitive
    matching.
    """
    pool = list(pool or NAME_POOL)

    def jitter(name: str) -> str:
        return name.upper() if rng.random() < 0.25 else name

    budget = rng.randint(1, max_nodes)
    root = {"name": jitter(rng.choice(pool)), "children": []}
    nodes = [root]
    count = 1
    while count < budget:
        parent = rng.choice(nodes)
        used = {name_key(c["name"]) for c in parent["children"]}
        free = [n for n in pool if name_key(n) not in used]
        if not free:
            continue
        child = {"name": jitter(rng.choice(free)), "children": []}
        parent["children"].append(child)
        nodes.append(child)
        count += 1
    return root
