"""Drive a full enrichment run: traverse, generate, filter, merge, checkpoint.

Traversal expands seed nodes in BFS or DFS order; accepted candidates are
merged with source ``llm-generated`` and join the frontier while they stay
below the depth boundary (seed max depth + allowed extra levels). Nodes at
the boundary are never prompted: their children would violate the depth
gate. With a replay client a run is bit-reproducible end to end.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import uuid
from collections import Counter, deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigError,
    CorruptCheckpoint,
    EmptyBatch,
    LlmUnreachable,
    NoMeasurableEdges,
    RunNotFound,
    UnparseableResponse,
)
from .filters import FilterChain, FilterConfig, FilterDecision, original_mean_similarity
from .generation import generate_children, load_template, PROMPT_TEMPLATE_VERSION
from .merge import merge_candidate
from .taxonomy import (
    SourceKey,
    Taxonomy,
    TaxonomyNode,
    node_at_path,
    parse_taxonomy,
    serialize_taxonomy,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("bfs", "dfs")
PHASES = ("pending", "running", "completed", "cancelled", "failed")
_TRANSITIONS = {
    "pending": {"running"},
    "running": {"completed", "cancelled", "failed"},
    "completed": set(),
    "cancelled": set(),
    "failed": set(),
}

DEFAULT_CHECKPOINT_EVERY = 25

CHECKPOINT_FILES = ("taxonomy.json", "frontier.json", "state.json", "decisions.jsonl")


@dataclass
class RunConfig:
    """Parameters of one enrichment run (one run = one model)."""

    model_id: str
    strategy: str = "bfs"
    filter: FilterConfig = field(default_factory=FilterConfig)
    parallelism: int = 4
    seed_taxonomy_id: str = ""
    frontier_limit: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.frontier_limit is not None and self.frontier_limit < 0:
            raise ConfigError(f"frontier_limit must be >= 0, got {self.frontier_limit}")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "strategy": self.strategy,
            "filter": self.filter.to_dict(),
            "parallelism": self.parallelism,
            "seed_taxonomy_id": self.seed_taxonomy_id,
            "frontier_limit": self.frontier_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return cls(
            model_id=d["model_id"],
            strategy=d.get("strategy", "bfs"),
            filter=FilterConfig.from_dict(d.get("filter", {})),
            parallelism=d.get("parallelism", 4),
            seed_taxonomy_id=d.get("seed_taxonomy_id", ""),
            frontier_limit=d.get("frontier_limit"),
        )


@dataclass
class RunReport:
    """Run statistics in the shape: classes / depth / new classes / new depth."""

    original_class_count: int
    original_max_depth: int
    new_class_count: int
    new_max_depth: int
    per_model: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "original_class_count": self.original_class_count,
            "original_max_depth": self.original_max_depth,
            "new_class_count": self.new_class_count,
            "new_max_depth": self.new_max_depth,
            "per_model": dict(self.per_model),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(
            original_class_count=d["original_class_count"],
            original_max_depth=d["original_max_depth"],
            new_class_count=d["new_class_count"],
            new_max_depth=d["new_max_depth"],
            per_model=dict(d.get("per_model", {})),
        )


def build_report(
    original_stats: tuple[int, int],
    enriched_stats: tuple[int, int],
    added_count: int,
    model_id: str,
) -> RunReport:
    """Assemble the final report; added nodes must explain the count delta."""
    original_count, original_depth = original_stats
    enriched_count, enriched_depth = enriched_stats
    if original_count + added_count != enriched_count:
        raise ConfigError(
            f"accounting mismatch: {original_count} + {added_count} != {enriched_count}"
        )
    return RunReport(
        original_class_count=original_count,
        original_max_depth=original_depth,
        new_class_count=added_count,
        new_max_depth=enriched_depth,
        per_model={model_id: added_count} if model_id else {},
    )


class RunState:
    """Mutable run status with thread-safe counters and phase transitions."""

    def __init__(self, run_id: str | None = None):
        self.run_id = run_id or uuid.uuid4().hex[:12]
        self._lock = threading.Lock()
        self.phase = "pending"
        self.nodes_prompted = 0
        self.candidates_generated = 0
        self.candidates_accepted = 0
        self.rejected_by_reason: Counter[str] = Counter()
        self.added_nodes = 0
        self.current_max_depth = 0
        self.started_at: str | None = None
        self.finished_at: str | None = None
        self.error: str | None = None

    def transition(self, phase: str) -> None:
        with self._lock:
            if phase not in _TRANSITIONS.get(self.phase, set()):
                raise ConfigError(f"illegal phase transition {self.phase} -> {phase}")
            self.phase = phase
            now = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            if phase == "running":
                self.started_at = now
            elif phase in ("completed", "cancelled", "failed"):
                self.finished_at = now

    def note_prompted(self) -> None:
        with self._lock:
            self.nodes_prompted += 1

    def note_decision(self, decision: FilterDecision) -> None:
        with self._lock:
            self.candidates_generated += 1
            if decision.outcome == "accepted":
                self.candidates_accepted += 1
            else:
                self.rejected_by_reason[decision.reason] += 1

    def note_merge(self, added: int, max_depth: int) -> None:
        with self._lock:
            self.added_nodes += added
            self.current_max_depth = max_depth

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "run_id": self.run_id,
                "phase": self.phase,
                "nodes_prompted": self.nodes_prompted,
                "candidates_generated": self.candidates_generated,
                "candidates_accepted": self.candidates_accepted,
                "candidates_rejected_by_reason": dict(self.rejected_by_reason),
                "added_nodes": self.added_nodes,
                "current_max_depth": self.current_max_depth,
                "started_at": self.started_at,
                "finished_at": self.finished_at,
                "error": self.error,
            }

    def load_counters(self, doc: dict) -> None:
        with self._lock:
            self.nodes_prompted = doc.get("nodes_prompted", 0)
            self.candidates_generated = doc.get("candidates_generated", 0)
            self.candidates_accepted = doc.get("candidates_accepted", 0)
            self.rejected_by_reason = Counter(doc.get("candidates_rejected_by_reason", {}))
            self.added_nodes = doc.get("added_nodes", 0)
            self.current_max_depth = doc.get("current_max_depth", 0)


class Frontier:
    """Pending (path, depth) entries in strategy order.

    BFS keeps per-depth FIFO buckets so every promptable node at depth d is
    expanded before any node at depth d+1, including freshly merged ones;
    DFS is a plain stack giving pre-order branch expansion.
    """

    def __init__(self, strategy: str):
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self._buckets: dict[int, deque] = {}
        self._stack: list[tuple[tuple[str, ...], int]] = []
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, path: tuple[str, ...], depth: int) -> None:
        if self.strategy == "bfs":
            self._buckets.setdefault(depth, deque()).append((path, depth))
        else:
            self._stack.append((path, depth))
        self._size += 1

    def pop(self) -> tuple[tuple[str, ...], int] | None:
        if self._size == 0:
            return None
        self._size -= 1
        if self.strategy == "bfs":
            for depth in sorted(self._buckets):
                bucket = self._buckets[depth]
                if bucket:
                    entry = bucket.popleft()
                    if not bucket:
                        del self._buckets[depth]
                    return entry
            return None
        return self._stack.pop()

    def peek_bucket(self, depth: int) -> list[tuple[tuple[str, ...], int]]:
        """Remaining entries at one BFS depth (fixed once that depth starts)."""
        return list(self._buckets.get(depth, ()))

    def snapshot(self) -> dict:
        """Entries in pop order, restorable by from_snapshot."""
        if self.strategy == "bfs":
            entries = [e for d in sorted(self._buckets) for e in self._buckets[d]]
        else:
            entries = list(reversed(self._stack))
        return {
            "strategy": self.strategy,
            "entries": [{"path": list(p), "depth": d} for p, d in entries],
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> Frontier:
        frontier = cls(doc["strategy"])
        entries = [(tuple(e["path"]), int(e["depth"])) for e in doc["entries"]]
        if frontier.strategy == "dfs":
            entries = list(reversed(entries))
        for path, depth in entries:
            frontier.push(path, depth)
        return frontier


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    tmp.replace(path)


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_hash_sidecar(path: Path) -> None:
    digest = _sha256_bytes(path.read_bytes())
    _write_atomic(path.with_name(path.name + ".sha256"), digest + "\n")


def _verify_hash(path: Path) -> None:
    sidecar = path.with_name(path.name + ".sha256")
    if not path.is_file() or not sidecar.is_file():
        raise CorruptCheckpoint(f"missing checkpoint file or hash: {path.name}")
    expected = sidecar.read_text("utf-8").strip()
    actual = _sha256_bytes(path.read_bytes())
    if actual != expected:
        raise CorruptCheckpoint(f"hash mismatch for {path.name}")


@dataclass
class EnrichmentResult:
    taxonomy: Taxonomy
    report: RunReport
    decisions: list[FilterDecision]
    state: RunState


class EnrichmentEngine:
    """Single-writer enrichment loop with optional checkpointing.

    Generation for a BFS level is prefetched concurrently up to the
    configured parallelism (level membership is final once the previous
    level completes); filtering and merging stay sequential in frontier
    order so runs are deterministic. DFS runs fully sequentially because
    its frontier changes with every merge.
    """

    def __init__(
        self,
        seed: Taxonomy,
        cfg: RunConfig,
        client,
        embedder,
        judge_client=None,
        kg_client=None,
        run_dir: str | Path | None = None,
        checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
        cancel_event: threading.Event | None = None,
        state: RunState | None = None,
        stop_after: int | None = None,
    ):
        self.cfg = cfg
        self.client = client
        self.embedder = embedder
        self.judge_client = judge_client
        self.kg_client = kg_client
        self.run_dir = Path(run_dir) if run_dir else None
        self.checkpoint_every = checkpoint_every
        self.cancel_event = cancel_event or threading.Event()
        self.state = state or RunState()
        self.stop_after = stop_after

        self.taxonomy = seed.copy()
        self.original_class_count = seed.class_count
        self.original_max_depth = seed.max_depth
        self.state.current_max_depth = seed.max_depth
        self.boundary = seed.max_depth + cfg.filter.max_extra_depth
        self.added_total = 0
        self.expansions = 0
        self.decisions: list[FilterDecision] = []
        self._template = load_template(PROMPT_TEMPLATE_VERSION)

        judge_baseline = None
        if cfg.filter.judge_enabled:
            try:
                judge_baseline = original_mean_similarity(seed, embedder)
            except NoMeasurableEdges:
                # single-node seeds have no edges; fall back to the threshold
                judge_baseline = cfg.filter.rho
        self.judge_baseline = judge_baseline
        self.chain = FilterChain(
            cfg.filter,
            embedder,
            judge_client=judge_client,
            kg_client=kg_client,
            judge_baseline=judge_baseline,
        )

        self.frontier = Frontier(cfg.strategy)
        if 0 < self.boundary:
            self.frontier.push((self.taxonomy.root.name,), 0)

        self._decisions_fh = None
        self._executor: ThreadPoolExecutor | None = None
        self._pending: dict[tuple[str, ...], Future] = {}
        self._prefetched_depth = -1

    # --- checkpoint plumbing ---

    def _open_decisions(self, append: bool) -> None:
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if append else "w"
        self._decisions_fh = open(self.run_dir / "decisions.jsonl", mode, encoding="utf-8")

    def _record_decision(self, decision: FilterDecision) -> None:
        self.decisions.append(decision)
        self.state.note_decision(decision)
        if self._decisions_fh is not None:
            self._decisions_fh.write(decision.to_json_line() + "\n")
            self._decisions_fh.flush()

    def _state_doc(self) -> dict:
        doc = self.state.snapshot()
        doc.update(
            {
                "config": self.cfg.to_dict(),
                "original_class_count": self.original_class_count,
                "original_max_depth": self.original_max_depth,
                "judge_baseline": self.judge_baseline,
                "expansions": self.expansions,
                "decisions_count": len(self.decisions),
            }
        )
        return doc

    def checkpoint(self) -> None:
        """Atomically persist taxonomy, frontier, state, and decision log hashes."""
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if self._decisions_fh is not None:
            self._decisions_fh.flush()
        elif not (self.run_dir / "decisions.jsonl").exists():
            (self.run_dir / "decisions.jsonl").write_text("", encoding="utf-8")
        _write_atomic(self.run_dir / "taxonomy.json", serialize_taxonomy(self.taxonomy))
        _write_atomic(
            self.run_dir / "frontier.json",
            json.dumps(self.frontier.snapshot(), ensure_ascii=False, indent=2),
        )
        _write_atomic(
            self.run_dir / "state.json",
            json.dumps(self._state_doc(), ensure_ascii=False, indent=2),
        )
        for name in CHECKPOINT_FILES:
            _write_hash_sidecar(self.run_dir / name)

    # --- generation prefetch ---

    def _generate(self, path: tuple[str, ...]):
        return generate_children(self.client, path[-1], path, template=self._template)

    def _maybe_prefetch(self, depth: int) -> None:
        if self._executor is None or self.cfg.strategy != "bfs":
            return
        if depth == self._prefetched_depth:
            return
        self._prefetched_depth = depth
        budget = None
        if self.cfg.frontier_limit is not None:
            budget = max(self.cfg.frontier_limit - self.state.nodes_prompted - 1, 0)
        entries = self.frontier.peek_bucket(depth)
        if budget is not None:
            entries = entries[:budget]
        for path, _d in entries:
            if path not in self._pending:
                self._pending[path] = self._executor.submit(self._generate, path)

    def _get_batch(self, path: tuple[str, ...]):
        future = self._pending.pop(path, None)
        if future is not None:
            return future.result()
        return self._generate(path)

    # --- main loop ---

    def _expand(self, path: tuple[str, ...], depth: int) -> None:
        self.state.note_prompted()
        node = node_at_path(self.taxonomy, path)
        try:
            batch = self._get_batch(path)
        except EmptyBatch as e:
            logger.info("empty candidate batch for %r", node.name)
            batch = e.batch
        except UnparseableResponse:
            logger.warning("skipping node %r: response unparseable after retries", node.name)
            batch = None

        if batch is not None:
            for candidate in batch.candidates:
                decision = self.chain.evaluate(
                    candidate, node, path, depth + 1, self.original_max_depth
                )
                self._record_decision(decision)
                if decision.outcome != "accepted":
                    continue
                metadata = {"model": self.cfg.model_id}
                if decision.similarity is not None:
                    metadata["similarity"] = f"{decision.similarity:.6f}"
                if decision.judge_score is not None:
                    metadata["judge_score"] = f"{decision.judge_score:.6f}"
                child = TaxonomyNode(
                    name=candidate, source=SourceKey.LLM, metadata=metadata
                )
                outcome = merge_candidate(self.taxonomy, path, child)
                self.added_total += outcome.added_count
                self.state.note_merge(outcome.added_count, self.taxonomy.max_depth)

        if depth + 1 < self.boundary:
            children = node.children
            if self.cfg.strategy == "dfs":
                # stack order: reverse so the first child is expanded first
                children = list(reversed(children))
            for child in children:
                self.frontier.push(path + (child.name,), depth + 1)
        elif depth + 1 == self.boundary:
            pass  # children sit on the boundary: present, never prompted

    def run(self) -> EnrichmentResult:
        """Execute until the frontier drains, the limit hits, or cancellation."""
        if self.state.phase == "pending":
            self.state.transition("running")
        self._open_decisions(append=self.expansions > 0)
        if self.cfg.parallelism > 1 and self.cfg.strategy == "bfs":
            self._executor = ThreadPoolExecutor(max_workers=self.cfg.parallelism)
        try:
            while True:
                if self.cancel_event.is_set():
                    self.state.transition("cancelled")
                    self.checkpoint()
                    return self._result()
                if (
                    self.cfg.frontier_limit is not None
                    and self.state.nodes_prompted >= self.cfg.frontier_limit
                ):
                    break
                entry = self.frontier.pop()
                if entry is None:
                    break
                path, depth = entry
                self._maybe_prefetch(depth)
                self._expand(path, depth)
                self.expansions += 1
                if self.stop_after is not None and self.expansions >= self.stop_after:
                    self.checkpoint()
                    return self._result()
                if self.run_dir is not None and self.expansions % self.checkpoint_every == 0:
                    self.checkpoint()
            self.state.transition("completed")
            self.checkpoint()
            return self._result()
        except Exception as e:
            self.state.error = str(e)
            if self.state.phase == "running":
                self.state.transition("failed")
            try:
                self.checkpoint()
            except OSError:
                logger.exception("failed to write failure checkpoint")
            raise
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True, cancel_futures=True)
                self._executor = None
            if self._decisions_fh is not None:
                self._decisions_fh.close()
                self._decisions_fh = None

    def _result(self) -> EnrichmentResult:
        self.taxonomy.refresh_stats()
        report = build_report(
            (self.original_class_count, self.original_max_depth),
            (self.taxonomy.class_count, self.taxonomy.max_depth),
            self.added_total,
            self.cfg.model_id,
        )
        return EnrichmentResult(
            taxonomy=self.taxonomy,
            report=report,
            decisions=list(self.decisions),
            state=self.state,
        )


def enrich(
    seed: Taxonomy,
    cfg: RunConfig,
    client,
    embedder,
    judge_client=None,
    kg_client=None,
    run_dir: str | Path | None = None,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
    cancel_event: threading.Event | None = None,
    state: RunState | None = None,
) -> EnrichmentResult:
    """Run one full enrichment over a seed taxonomy."""
    engine = EnrichmentEngine(
        seed,
        cfg,
        client,
        embedder,
        judge_client=judge_client,
        kg_client=kg_client,
        run_dir=run_dir,
        checkpoint_every=checkpoint_every,
        cancel_event=cancel_event,
        state=state,
    )
    return engine.run()


def _truncate_decisions(path: Path, count: int) -> None:
    if not path.exists():
        if count:
            raise CorruptCheckpoint("decision log missing but checkpoint expects entries")
        path.write_text("", encoding="utf-8")
        return
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if len(lines) < count:
        raise CorruptCheckpoint(
            f"decision log has {len(lines)} lines, checkpoint expects {count}"
        )
    if len(lines) > count:
        _write_atomic(path, "".join(lines[:count]))


def restore_engine(
    run_dir: str | Path,
    client,
    embedder,
    judge_client=None,
    kg_client=None,
    cancel_event: threading.Event | None = None,
    state: RunState | None = None,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
    stop_after: int | None = None,
) -> EnrichmentEngine:
    """Rebuild an engine from its last checkpoint.

    Raises RunNotFound when no checkpoint exists and CorruptCheckpoint when
    any file fails its content-hash check. Extra decision-log lines written
    after the last checkpoint are truncated so the resumed run replays them
    deterministically.
    """
    run_dir = Path(run_dir)
    state_path = run_dir / "state.json"
    if not run_dir.is_dir() or not state_path.is_file():
        raise RunNotFound(f"no checkpoint under {run_dir}")

    _verify_hash(state_path)
    doc = json.loads(state_path.read_text("utf-8"))
    _truncate_decisions(run_dir / "decisions.jsonl", doc["decisions_count"])
    for name in CHECKPOINT_FILES:
        _verify_hash(run_dir / name)

    cfg = RunConfig.from_dict(doc["config"])
    taxonomy = parse_taxonomy((run_dir / "taxonomy.json").read_text("utf-8"))
    frontier = Frontier.from_snapshot(
        json.loads((run_dir / "frontier.json").read_text("utf-8"))
    )

    engine = EnrichmentEngine.__new__(EnrichmentEngine)
    engine.cfg = cfg
    engine.client = client
    engine.embedder = embedder
    engine.judge_client = judge_client
    engine.kg_client = kg_client
    engine.run_dir = run_dir
    engine.checkpoint_every = checkpoint_every
    engine.cancel_event = cancel_event or threading.Event()
    engine.stop_after = stop_after
    engine.state = state or RunState(run_id=doc.get("run_id"))
    engine.state.load_counters(doc)
    if engine.state.phase == "pending":
        engine.state.transition("running")

    engine.taxonomy = taxonomy
    engine.original_class_count = doc["original_class_count"]
    engine.original_max_depth = doc["original_max_depth"]
    engine.boundary = engine.original_max_depth + cfg.filter.max_extra_depth
    engine.added_total = taxonomy.class_count - engine.original_class_count
    engine.expansions = doc["expansions"]
    engine._template = load_template(PROMPT_TEMPLATE_VERSION)
    engine.judge_baseline = doc.get("judge_baseline")
    engine.chain = FilterChain(
        cfg.filter,
        embedder,
        judge_client=judge_client,
        kg_client=kg_client,
        judge_baseline=engine.judge_baseline,
    )
    engine.frontier = frontier
    engine.decisions = [
        FilterDecision.from_dict(json.loads(line))
        for line in (run_dir / "decisions.jsonl").read_text("utf-8").splitlines()
        if line.strip()
    ]
    engine._decisions_fh = None
    engine._executor = None
    engine._pending = {}
    engine._prefetched_depth = -1
    return engine
