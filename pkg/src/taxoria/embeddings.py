"""Term vectors and cosine similarity for the semantic filter.

Two provider kinds: a static word-vector file (one token + floats per line,
optional ``<count> <dimension>`` header) and a contextual HTTP embedding
endpoint on the same inference server as generation. Multi-word and
compound terms embed as the mean of their token vectors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np
import requests

from .errors import (
    ConfigError,
    DimensionMismatch,
    EndpointUnreachable,
    FormatError,
    OutOfVocabulary,
    ZeroVector,
)


class EmbeddingKind(str, Enum):
    STATIC = "static-word-vectors"
    CONTEXTUAL = "contextual-endpoint"


@dataclass
class TermVector:
    """Embedded term: coverage is the fraction of its tokens found in vocabulary."""

    term: str
    vector: np.ndarray
    coverage: float


# camel-case segmentation: "OnlineStore" -> Online, Store; "HTTPServer" -> HTTP, Server
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize_term(term: str) -> list[str]:
    """Lowercased tokens: split on whitespace/hyphens, then camel-case segments."""
    tokens: list[str] = []
    for piece in re.split(r"[\s\-_/]+", term):
        for segment in _CAMEL_RE.findall(piece):
            tokens.append(segment.lower())
    return tokens


def cosine(u: Iterable[float], v: Iterable[float]) -> float:
    """dot(u,v) / (|u|*|v|), clamped to [-1, 1].

    Raises DimensionMismatch or ZeroVector.
    """
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.shape != va.shape:
        raise DimensionMismatch(f"dimensions differ: {ua.shape} vs {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    value = float(np.dot(ua, va)) / (nu * nv)
    return max(-1.0, min(1.0, value))


class StaticVectorProvider:
    """Immutable in-memory word-vector table; fully shareable across threads."""

    kind = EmbeddingKind.STATIC

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self._vectors = vectors
        self.dimension = dimension

    @property
    def vocabulary_size(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def lookup(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token)

    @classmethod
    def from_mapping(cls, mapping: dict[str, Iterable[float]]) -> StaticVectorProvider:
        """Build a provider from an in-memory token -> vector mapping."""
        vectors = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")
        dimension = dims.pop() if dims else 0
        return cls(vectors, dimension)

    def embed(self, term: str) -> TermVector:
        """Mean of found token vectors; raises OutOfVocabulary at coverage 0."""
        tokens = tokenize_term(term)
        found = [self._vectors[t] for t in tokens if t in self._vectors]
        if not tokens or not found:
            raise OutOfVocabulary(f"no token of {term!r} is in the vocabulary")
        vector = np.mean(found, axis=0)
        return TermVector(term=term, vector=vector, coverage=len(found) / len(tokens))


def load_static_vectors(
    path: str | Path, limit: int | None = None
) -> StaticVectorProvider:
    """Parse a word-vector text file (entries are conventionally frequency-sorted).

    Raises FileNotFoundError or FormatError with the offending line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"vector file not found: {path}")

    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                # optional "<count> <dimension>" header
                try:
                    dimension = int(parts[1])
                    int(parts[0])
                    continue
                except ValueError:
                    pass
            token, raw_values = parts[0], parts[1:]
            if not raw_values:
                raise FormatError(f"no vector components for token {token!r}", lineno)
            try:
                values = np.array([float(x) for x in raw_values], dtype=np.float64)
            except ValueError:
                raise FormatError(f"non-numeric component for token {token!r}", lineno) from None
            if not np.all(np.isfinite(values)):
                raise FormatError(f"non-finite component for token {token!r}", lineno)
            if dimension is None:
                dimension = values.shape[0]
            elif values.shape[0] != dimension:
                raise FormatError(
                    f"expected {dimension} components, got {values.shape[0]}", lineno
                )
            if token not in vectors:
                vectors[token] = values
            if limit is not None and len(vectors) >= limit:
                break
    return StaticVectorProvider(vectors, dimension or 0)


class ContextualEndpointProvider:
    """Embeds raw terms through the inference server's embedding route."""

    kind = EmbeddingKind.CONTEXTUAL

    def __init__(
        self,
        base_url: str,
        model_id: str,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.timeout = timeout
        self.dimension = 0  # discovered on first call
        self._session = session or requests.Session()

    def embed(self, term: str) -> TermVector:
        try:
            resp = self._session.post(
                f"{self.base_url}/api/embeddings",
                json={"model": self.model_id, "prompt": term},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            raw = resp.json().get("embedding", [])
        except (requests.RequestException, ValueError) as e:
            raise EndpointUnreachable(f"embedding call failed: {e}") from e
        vector = np.asarray(raw, dtype=np.float64)
        if vector.ndim != 1 or vector.shape[0] == 0 or not np.all(np.isfinite(vector)):
            raise EndpointUnreachable("endpoint returned an unusable embedding")
        if self.dimension == 0:
            self.dimension = int(vector.shape[0])
        return TermVector(term=term, vector=vector, coverage=1.0)


class FallbackEmbedder:
    """Static vectors first; OOV terms fall through to the contextual endpoint.

    With no contextual provider configured this is equivalent to static-only.
    The two backends produce vectors of different dimensions, so a term pair
    is never mixed: embed_pair falls back for both terms as soon as either
    one is static-OOV.
    """

    def __init__(self, static: StaticVectorProvider | None, contextual=None):
        if static is None and contextual is None:
            raise ValueError("at least one provider is required")
        self.static = static
        self.contextual = contextual
        self.kind = (static or contextual).kind

    def embed(self, term: str) -> TermVector:
        if self.static is not None:
            try:
                return self.static.embed(term)
            except OutOfVocabulary:
                if self.contextual is None:
                    raise
        return self.contextual.embed(term)

    def embed_pair(self, a: str, b: str) -> tuple[TermVector, TermVector]:
        if self.static is not None:
            try:
                return self.static.embed(a), self.static.embed(b)
            except OutOfVocabulary:
                if self.contextual is None:
                    raise
        return self.contextual.embed(a), self.contextual.embed(b)


def embed_pair(provider, a: str, b: str) -> tuple[TermVector, TermVector]:
    """Embed two terms through one backend so their vectors are comparable."""
    pair = getattr(provider, "embed_pair", None)
    if pair is not None:
        return pair(a, b)
    return provider.embed(a), provider.embed(b)


EMBEDDING_MODES = ("static-only", "contextual-only", "static-with-fallback")


def build_embedder(
    mode: str,
    vectors_path: str | Path | None = None,
    endpoint_url: str | None = None,
    model_id: str | None = None,
):
    """Assemble the configured embedding backend combination."""
    if mode not in EMBEDDING_MODES:
        raise ConfigError(f"embedding mode must be one of {EMBEDDING_MODES}, got {mode!r}")
    static = None
    contextual = None
    if mode in ("static-only", "static-with-fallback"):
        if not vectors_path:
            raise ConfigError(f"embedding mode {mode!r} requires a word-vector file")
        static = load_static_vectors(vectors_path)
    if mode in ("contextual-only", "static-with-fallback"):
        if not endpoint_url or not model_id:
            raise ConfigError(f"embedding mode {mode!r} requires an endpoint URL and model id")
        contextual = ContextualEndpointProvider(endpoint_url, model_id)
    if mode == "static-only":
        return static
    if mode == "contextual-only":
        return contextual
    return FallbackEmbedder(static, contextual)
