"""Prompt construction, LLM HTTP clients, and constrained-JSON response parsing.

Clients speak the completion API of a local inference server:
POST ``{base_url}/api/generate`` with ``{"model", "prompt", "stream": false,
"format": "json"}``, reading the ``response`` string field. A replay client
serves recorded responses from a directory keyed by prompt hash, making
whole enrichment runs reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import requests

from .errors import EmptyBatch, LlmUnreachable, UnparseableResponse

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE_VERSION = "children_v1"
JUDGE_TEMPLATE_VERSION = "judge_v1"

REPAIR_INSTRUCTION = (
    "\n\nYour previous reply could not be parsed. Respond with ONLY a JSON "
    'object of the exact shape {"children": ["...", "...", "..."]} and '
    "nothing else: no prose, no code fences."
)

MAX_CANDIDATES = 3


@lru_cache(maxsize=None)
def load_template(version: str) -> str:
    """Load a versioned prompt template shipped with the package."""
    return resources.files("taxoria.prompts").joinpath(f"{version}.txt").read_text("utf-8")


def render_template(template: str, **values: str) -> str:
    """Substitute ``{{key}}`` placeholders; unknown placeholders are left as-is."""
    out = template
    for key, value in values.items():
        out = out.replace("{{" + key + "}}", value)
    return out


def build_prompt(
    node_name: str, ancestor_path: Sequence[str], template: str | None = None
) -> str:
    """Render the zero-shot child-generation prompt for one taxonomy node."""
    if not node_name or not node_name.strip():
        raise ValueError("node_name must be non-empty")
    if template is None:
        template = load_template(PROMPT_TEMPLATE_VERSION)
    return render_template(template, node=node_name, path=" > ".join(ancestor_path))


def prompt_key(prompt: str) -> str:
    """Stable fixture-file key for a prompt (sha256 hex of its UTF-8 bytes)."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass
class CandidateBatch:
    """One parsed LLM response for a single parent node."""

    parent_path: tuple[str, ...]
    parent_depth: int
    raw_response: str
    candidates: list[str] = field(default_factory=list)
    model_id: str = ""


def _extract_children(obj) -> list[str] | None:
    if not isinstance(obj, dict):
        return None
    children = None
    for key, value in obj.items():
        if isinstance(key, str) and key.strip().casefold() == "children":
            children = value
            break
    if not isinstance(children, list):
        return None
    return [x for x in children if isinstance(x, str)]


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _end = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = text.find("{", idx + 1)
    return None


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*$", re.MULTILINE)


def _strip_code_fences(text: str) -> str:
    return _FENCE_RE.sub("", text)


def _dedup_names(names: Sequence[str]) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for raw in names:
        name = raw.strip()
        if not name:
            continue
        key = name.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(name)
    return out


def parse_children_json(raw: str) -> list[str]:
    """Extract the ``children`` string array from a (possibly messy) response.

    Repair ladder, first rung that yields a children list wins:
      1. strict JSON parse of the whole response;
      2. strict parse of the first balanced ``{...}`` substring;
      3. strip code-fence markers, then retry 1-2;
      4. line-based extraction of quoted strings following a ``children`` token.

    Names are trimmed and case-insensitively deduplicated keeping the first.
    Raises UnparseableResponse when every rung fails. Total over arbitrary
    input: never raises anything else.
    """
    if not isinstance(raw, str):
        raw = str(raw)

    for text in (raw, _strip_code_fences(raw)):
        # rung 1 (and its fence-stripped retry)
        try:
            names = _extract_children(json.loads(text))
        except (json.JSONDecodeError, RecursionError, ValueError):
            names = None
        if names is not None:
            return _dedup_names(names)
        # rung 2 (and its fence-stripped retry)
        obj = _first_json_object(text)
        if obj is not None:
            names = _extract_children(obj)
            if names is not None:
                return _dedup_names(names)

    # rung 4: quoted strings after a `children` token, stopping at a closing
    # bracket so trailing prose is not swept in
    match = re.search(r"children", raw, re.IGNORECASE)
    if match:
        tail = raw[match.end():]
        # drop key residue (closing quote, colon, opening bracket) so the
        # key's own quote cannot pair with the first element's quote
        tail = re.sub(r"^[\"']?\s*[:=]?\s*\[?", "", tail, count=1)
        bracket = tail.find("]")
        if bracket != -1:
            tail = tail[:bracket]
        quoted = re.findall(r'"((?:[^"\\]|\\.)*)"|\'((?:[^\'\\]|\\.)*)\'', tail)
        names = [a or b for a, b in quoted]
        if names:
            return _dedup_names(names)

    raise UnparseableResponse("no children array found in response")


class HttpLlmClient:
    """Live client for an HTTP inference server's completion API."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        timeout: float = 120.0,
        max_retries: int = 2,
        temperature: float = 0.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.temperature = temperature
        self._session = session or requests.Session()

    def generate(self, prompt: str) -> str:
        """POST the prompt, return the raw ``response`` string."""
        body = {
            "model": self.model_id,
            "prompt": prompt,
            "stream": False,
            "format": "json",
            "options": {"temperature": self.temperature},
        }
        last_error: Exception | None = None
        for _attempt in range(self.max_retries + 1):
            try:
                resp = self._session.post(
                    f"{self.base_url}/api/generate", json=body, timeout=self.timeout
                )
                resp.raise_for_status()
                return str(resp.json().get("response", ""))
            except (requests.RequestException, ValueError) as e:
                last_error = e
        raise LlmUnreachable(f"generate failed after retries: {last_error}")

    def list_models(self) -> list[str]:
        """Return the server's available model identifiers."""
        try:
            resp = self._session.get(f"{self.base_url}/api/tags", timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
        except (requests.RequestException, ValueError) as e:
            raise LlmUnreachable(f"model listing failed: {e}") from e
        models = data.get("models", [])
        return [m["name"] for m in models if isinstance(m, dict) and "name" in m]


class ReplayLlmClient:
    """Deterministic client serving recorded responses from a fixture directory.

    Files are named ``<sha256(prompt)>.txt``; an optional ``models.json``
    (JSON array of strings) backs list_models.
    """

    def __init__(self, fixture_dir: str | Path, model_id: str = "replay"):
        self.fixture_dir = Path(fixture_dir)
        self.model_id = model_id
        if not self.fixture_dir.is_dir():
            raise FileNotFoundError(f"replay directory not found: {fixture_dir}")

    def generate(self, prompt: str) -> str:
        path = self.fixture_dir / f"{prompt_key(prompt)}.txt"
        if not path.is_file():
            raise LlmUnreachable(
                f"no replay fixture for prompt hash {prompt_key(prompt)[:16]}..."
            )
        return path.read_text("utf-8")

    def list_models(self) -> list[str]:
        manifest = self.fixture_dir / "models.json"
        if manifest.is_file():
            return list(json.loads(manifest.read_text("utf-8")))
        return [self.model_id]


class RecordingLlmClient:
    """Wraps a live client, teeing every response into a replay fixture dir."""

    def __init__(self, inner, fixture_dir: str | Path):
        self.inner = inner
        self.model_id = inner.model_id
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    def generate(self, prompt: str) -> str:
        response = self.inner.generate(prompt)
        (self.fixture_dir / f"{prompt_key(prompt)}.txt").write_text(response, "utf-8")
        return response

    def list_models(self) -> list[str]:
        models = self.inner.list_models()
        (self.fixture_dir / "models.json").write_text(json.dumps(models), "utf-8")
        return models


def generate_children(
    client,
    node_name: str,
    ancestor_path: Sequence[str],
    template: str | None = None,
    max_format_retries: int = 2,
) -> CandidateBatch:
    """Prompt for direct subclasses of one node and parse the response.

    On an unparseable response the prompt is re-sent with a corrective
    instruction appended, up to max_format_retries times. The batch keeps at
    most the first 3 valid candidates and records the raw response verbatim.
    Raises EmptyBatch (soft, carries the batch) when zero names survive.
    """
    prompt = build_prompt(node_name, ancestor_path, template=template)
    raw = client.generate(prompt)
    names: list[str] | None = None
    for attempt in range(max_format_retries + 1):
        try:
            names = parse_children_json(raw)
            break
        except UnparseableResponse:
            if attempt == max_format_retries:
                raise
            logger.warning(
                "unparseable response for node %r, retrying with corrective instruction",
                node_name,
            )
            raw = client.generate(prompt + REPAIR_INSTRUCTION)

    batch = CandidateBatch(
        parent_path=tuple(ancestor_path),
        parent_depth=max(len(ancestor_path) - 1, 0),
        raw_response=raw,
        candidates=(names or [])[:MAX_CANDIDATES],
        model_id=getattr(client, "model_id", ""),
    )
    if not batch.candidates:
        raise EmptyBatch(f"no usable candidate names for node {node_name!r}", batch=batch)
    return batch


def list_models(client) -> list[str]:
    """Available model ids on the client's inference server."""
    return client.list_models()
