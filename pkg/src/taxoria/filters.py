"""Over-generation mitigation chain: depth gate, similarity threshold,
optional LLM judge, optional knowledge-graph instance check.

Cheap structural checks always run before network-dependent ones; the first
rejection short-circuits. Every evaluated candidate yields exactly one
FilterDecision carrying all scores that were computed.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import requests

from .embeddings import cosine, embed_pair
from .errors import (
    ConfigError,
    EndpointUnreachable,
    KgUnreachable,
    NoMeasurableEdges,
    OutOfVocabulary,
    UnparseableResponse,
    ZeroVector,
)
from .generation import JUDGE_TEMPLATE_VERSION, load_template, render_template
from .taxonomy import Taxonomy, TaxonomyNode

logger = logging.getLogger(__name__)

DEFAULT_KG_ENDPOINT = "https://query.wikidata.org/sparql"

REASONS = (
    "passed",
    "depth-exceeded",
    "below-threshold",
    "oov",
    "judge-below-baseline",
    "kg-instance",
    "duplicate-sibling",
    "unparseable",
)


@dataclass
class FilterDecision:
    """Per-candidate verdict; outcome is 'accepted' iff reason is 'passed'."""

    candidate: str
    parent_path: tuple[str, ...]
    outcome: str
    reason: str
    similarity: float | None = None
    judge_score: float | None = None
    kg_entity: str | None = None

    def __post_init__(self):
        if self.reason not in REASONS:
            raise ValueError(f"unknown reason {self.reason!r}")
        if (self.outcome == "accepted") != (self.reason == "passed"):
            raise ValueError("outcome 'accepted' must pair with reason 'passed'")

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate,
            "parent_path": list(self.parent_path),
            "outcome": self.outcome,
            "reason": self.reason,
            "similarity": self.similarity,
            "judge_score": self.judge_score,
            "kg_entity": self.kg_entity,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> FilterDecision:
        return cls(
            candidate=d["candidate"],
            parent_path=tuple(d["parent_path"]),
            outcome=d["outcome"],
            reason=d["reason"],
            similarity=d.get("similarity"),
            judge_score=d.get("judge_score"),
            kg_entity=d.get("kg_entity"),
        )


def _accepted(candidate: str, parent_path: Sequence[str], **scores) -> FilterDecision:
    return FilterDecision(candidate, tuple(parent_path), "accepted", "passed", **scores)


def _rejected(candidate: str, parent_path: Sequence[str], reason: str, **scores) -> FilterDecision:
    return FilterDecision(candidate, tuple(parent_path), "rejected", reason, **scores)


@dataclass
class FilterConfig:
    """Thresholds and toggles for the mitigation chain.

    Judge and KG check default off: they are analysis-grade strategies, not
    part of the default pipeline.
    """

    rho: float = 0.9
    max_extra_depth: int = 1
    judge_enabled: bool = False
    kg_check_enabled: bool = False
    kg_endpoint: str = DEFAULT_KG_ENDPOINT

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if self.max_extra_depth < 0:
            raise ConfigError(f"max_extra_depth must be >= 0, got {self.max_extra_depth}")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "max_extra_depth": self.max_extra_depth,
            "judge_enabled": self.judge_enabled,
            "kg_check_enabled": self.kg_check_enabled,
            "kg_endpoint": self.kg_endpoint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FilterConfig:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def depth_gate(candidate_depth: int, original_max_depth: int, cfg: FilterConfig) -> bool:
    """True iff the candidate stays within the seed depth plus the allowed extra.

    original_max_depth is the seed taxonomy's depth, frozen at run start.
    """
    return candidate_depth <= original_max_depth + cfg.max_extra_depth


def similarity_filter(
    candidate: str, parent: str, provider, cfg: FilterConfig,
    parent_path: Sequence[str] = (),
) -> FilterDecision:
    """Accept iff cosine(candidate, parent) >= rho (boundary inclusive).

    OOV or zero-vector terms never raise: the decision is rejected/oov.
    """
    try:
        cv, pv = embed_pair(provider, candidate, parent)
        sim = cosine(cv.vector, pv.vector)
    except (OutOfVocabulary, ZeroVector, EndpointUnreachable):
        return _rejected(candidate, parent_path, "oov")
    if sim >= cfg.rho:
        return _accepted(candidate, parent_path, similarity=sim)
    return _rejected(candidate, parent_path, "below-threshold", similarity=sim)


def original_mean_similarity(t: Taxonomy, provider) -> float:
    """Mean parent-child cosine over all measurable edges of the seed taxonomy.

    Edges with an OOV or zero-vector endpoint are excluded. Raises
    NoMeasurableEdges when nothing is measurable. Callers cache the result
    per run.
    """
    total = 0.0
    edges = 0
    stack: list[TaxonomyNode] = [t.root]
    while stack:
        node = stack.pop()
        for child in node.children:
            stack.append(child)
            try:
                pv, cv = embed_pair(provider, node.name, child.name)
                total += cosine(pv.vector, cv.vector)
                edges += 1
            except (OutOfVocabulary, ZeroVector, EndpointUnreachable):
                continue
    if edges == 0:
        raise NoMeasurableEdges("every seed edge has an unmeasurable endpoint")
    return total / edges


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def judge_relevance(client, candidate: str, parent: str, template: str | None = None) -> float:
    """Ask a judge model to rate subclass plausibility; returns score / 100.

    The first number in the response is taken as the 0-100 rating; anything
    outside that range counts as garbage. Raises UnparseableResponse.
    """
    if template is None:
        template = load_template(JUDGE_TEMPLATE_VERSION)
    prompt = render_template(template, candidate=candidate, parent=parent)
    raw = client.generate(prompt)
    match = _NUMBER_RE.search(raw)
    if not match:
        raise UnparseableResponse(f"no numeric rating in judge response: {raw!r}")
    value = float(match.group(0))
    if not 0.0 <= value <= 100.0:
        raise UnparseableResponse(f"judge rating out of range: {value}")
    return value / 100.0


class KgVerdict(str, Enum):
    IS_INSTANCE = "is_instance"
    IS_CLASS_LIKE = "is_class_like"
    NOT_FOUND = "not_found"


def _sparql_escape(label: str) -> str:
    return label.replace("\\", "\\\\").replace('"', '\\"')


class KgClient:
    """SPARQL client for the instance-of (P31) existence check.

    Label resolution: exact English label, case-sensitive first with a
    case-insensitive fallback; the most-linked entity wins ties. The
    http_get callable is injectable so tests can serve canned responses.
    """

    def __init__(
        self,
        endpoint: str = DEFAULT_KG_ENDPOINT,
        timeout: float = 30.0,
        http_get: Callable | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self._http_get = http_get or requests.get

    def query(self, sparql: str) -> dict:
        try:
            resp = self._http_get(
                self.endpoint,
                params={"query": sparql, "format": "json"},
                headers={"Accept": "application/sparql-results+json"},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as e:
            raise KgUnreachable(f"SPARQL query failed: {e}") from e

    def resolve_label(self, label: str) -> str | None:
        """Entity URI for an English label, or None when nothing matches."""
        escaped = _sparql_escape(label.strip())
        exact = f"""SELECT ?item ?links WHERE {{
  ?item rdfs:label "{escaped}"@en .
  OPTIONAL {{ ?item wikibase:sitelinks ?links }}
}} ORDER BY DESC(?links) LIMIT 1"""
        folded = f"""SELECT ?item ?links WHERE {{
  ?item rdfs:label ?label .
  FILTER(LANG(?label) = "en" && LCASE(STR(?label)) = "{_sparql_escape(label.strip().lower())}")
  OPTIONAL {{ ?item wikibase:sitelinks ?links }}
}} ORDER BY DESC(?links) LIMIT 1"""
        for sparql in (exact, folded):
            bindings = self.query(sparql).get("results", {}).get("bindings", [])
            if bindings:
                return bindings[0]["item"]["value"]
        return None

    def has_instance_of(self, entity_uri: str) -> bool:
        """True iff the entity carries at least one P31 statement."""
        sparql = (
            "PREFIX wdt: <http://www.wikidata.org/prop/direct/> "
            f"ASK {{ <{entity_uri}> wdt:P31 ?o }}"
        )
        return bool(self.query(sparql).get("boolean", False))

    def instance_check(self, label: str) -> tuple[KgVerdict, str | None]:
        """Classify a label: instance (has P31), class-like, or not found."""
        entity = self.resolve_label(label)
        if entity is None:
            return KgVerdict.NOT_FOUND, None
        if self.has_instance_of(entity):
            return KgVerdict.IS_INSTANCE, entity
        return KgVerdict.IS_CLASS_LIKE, entity


def kg_instance_check(
    endpoint: str, label: str, http_get: Callable | None = None
) -> tuple[KgVerdict, str | None]:
    """One-shot instance-of check against a SPARQL endpoint."""
    return KgClient(endpoint, http_get=http_get).instance_check(label)


class FilterChain:
    """Stateless composition of all enabled strategies for one run.

    Order: sibling-duplicate check, depth gate, similarity threshold, judge
    (if enabled), KG instance check (if enabled). judge_baseline must be
    supplied when the judge is enabled (mean seed-edge similarity); KG
    network failures retain the candidate with a warning.
    """

    def __init__(
        self,
        cfg: FilterConfig,
        embedder,
        judge_client=None,
        kg_client: KgClient | None = None,
        judge_baseline: float | None = None,
    ):
        self.cfg = cfg
        self.embedder = embedder
        self.judge_client = judge_client
        self.kg_client = kg_client
        self.judge_baseline = judge_baseline
        if cfg.judge_enabled and judge_client is None:
            raise ConfigError("judge enabled but no judge client configured")
        if cfg.judge_enabled and judge_baseline is None:
            raise ConfigError("judge enabled but no baseline similarity supplied")
        if cfg.kg_check_enabled and kg_client is None:
            self.kg_client = KgClient(cfg.kg_endpoint)

    def evaluate(
        self,
        candidate: str,
        parent_node: TaxonomyNode,
        parent_path: Sequence[str],
        candidate_depth: int,
        original_max_depth: int,
    ) -> FilterDecision:
        """Run the chain for one candidate; first rejection short-circuits."""
        if parent_node.find_child(candidate) is not None:
            return _rejected(candidate, parent_path, "duplicate-sibling")

        if not depth_gate(candidate_depth, original_max_depth, self.cfg):
            return _rejected(candidate, parent_path, "depth-exceeded")

        decision = similarity_filter(
            candidate, parent_node.name, self.embedder, self.cfg, parent_path=parent_path
        )
        if decision.outcome == "rejected":
            return decision
        similarity = decision.similarity

        judge_score: float | None = None
        if self.cfg.judge_enabled:
            try:
                judge_score = judge_relevance(self.judge_client, candidate, parent_node.name)
            except UnparseableResponse:
                return _rejected(
                    candidate, parent_path, "unparseable", similarity=similarity
                )
            if judge_score < self.judge_baseline:
                return _rejected(
                    candidate,
                    parent_path,
                    "judge-below-baseline",
                    similarity=similarity,
                    judge_score=judge_score,
                )

        kg_entity: str | None = None
        if self.cfg.kg_check_enabled:
            try:
                verdict, kg_entity = self.kg_client.instance_check(candidate)
            except KgUnreachable as e:
                logger.warning("KG check unavailable for %r, retaining: %s", candidate, e)
                verdict = None
            if verdict is KgVerdict.IS_INSTANCE:
                return _rejected(
                    candidate,
                    parent_path,
                    "kg-instance",
                    similarity=similarity,
                    judge_score=judge_score,
                    kg_entity=kg_entity,
                )

        return _accepted(
            candidate,
            parent_path,
            similarity=similarity,
            judge_score=judge_score,
            kg_entity=kg_entity,
        )
