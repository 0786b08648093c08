"""Taxonomy enrichment with LLM-generated subclasses, filtered and merged."""

from .errors import TaxoriaError
from .filters import FilterConfig, FilterDecision
from .merge import MergeColor, MergeOutcome, merge_candidate, merge_taxonomies
from .orchestrator import EnrichmentResult, RunConfig, RunReport, RunState, enrich
from .taxonomy import (
    SourceKey,
    Taxonomy,
    TaxonomyNode,
    parse_taxonomy,
    serialize_taxonomy,
)

__version__ = "0.1.0"

__all__ = [
    "EnrichmentResult",
    "FilterConfig",
    "FilterDecision",
    "MergeColor",
    "MergeOutcome",
    "RunConfig",
    "RunReport",
    "RunState",
    "SourceKey",
    "Taxonomy",
    "TaxonomyNode",
    "TaxoriaError",
    "enrich",
    "merge_candidate",
    "merge_taxonomies",
    "parse_taxonomy",
    "serialize_taxonomy",
    "__version__",
]
